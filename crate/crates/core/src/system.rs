//! The stacked linear system relating bin-constant spectra to decay rates.

use crate::error::{QnsError, Result};
use crate::filter::{BinIntegrals, BinQuadrature, FilterFunction, FilterModel, FrequencyGrid};
use crate::noise::SpectrumTable;
use crate::plan::{Combo, ExperimentPlan, Setting};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

/// Which decay exponent a measured quantity is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    /// `chi_{1,1;12,12}`: qubit-1 coherence, single-qubit control.
    Qubit1Crosstalk,
    /// `chi_{2,2;12,12}`.
    Qubit2Crosstalk,
    /// `chi_{1,1;2,2}`: summed local dephasing seen by two-qubit correlators.
    LocalSum,
    /// `chi_{1,2}`: cross-correlation term.
    Cross,
}

impl DecayKind {
    pub fn label(self) -> &'static str {
        match self {
            DecayKind::Qubit1Crosstalk => "chi_11_1212",
            DecayKind::Qubit2Crosstalk => "chi_22_1212",
            DecayKind::LocalSum => "chi_11_22",
            DecayKind::Cross => "chi_12",
        }
    }

    /// Kinds produced by a setting of `combo`.
    pub fn for_combo(combo: Combo) -> &'static [DecayKind] {
        match combo {
            Combo::CosFree => &[DecayKind::Qubit1Crosstalk],
            Combo::FreeCos => &[DecayKind::Qubit2Crosstalk],
            Combo::CosCos | Combo::CosSin => &[DecayKind::LocalSum, DecayKind::Cross],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowTag {
    pub combo: Combo,
    pub k: usize,
    pub kind: DecayKind,
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "combo{}/k{}/{}", self.combo.number(), self.k, self.kind.label())
    }
}

/// Unknown blocks, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    S11,
    S22,
    S1212,
    ReS12,
    ImS12,
}

impl Block {
    pub const ALL: [Block; 5] = [Block::S11, Block::S22, Block::S1212, Block::ReS12, Block::ImS12];

    pub fn name(self) -> &'static str {
        match self {
            Block::S11 => "S11",
            Block::S22 => "S22",
            Block::S1212 => "S1212",
            Block::ReS12 => "ReS12",
            Block::ImS12 => "ImS12",
        }
    }
}

/// Column positions: four blocks of `n` bins and `Im S12` on bins `1..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub n_bins: usize,
}

impl ColumnLayout {
    pub fn n_cols(&self) -> usize {
        5 * self.n_bins - 1
    }

    /// Column of `block` at bin `j`, or `None` for the pinned `Im S12(0)`.
    pub fn col(&self, block: Block, j: usize) -> Option<usize> {
        let n = self.n_bins;
        debug_assert!(j < n);
        match block {
            Block::S11 => Some(j),
            Block::S22 => Some(n + j),
            Block::S1212 => Some(2 * n + j),
            Block::ReS12 => Some(3 * n + j),
            Block::ImS12 => (j > 0).then(|| 4 * n + j - 1),
        }
    }

    pub fn block_of(&self, col: usize) -> (Block, usize) {
        let n = self.n_bins;
        match col / n {
            0 => (Block::S11, col),
            1 => (Block::S22, col - n),
            2 => (Block::S1212, col - 2 * n),
            3 => (Block::ReS12, col - 3 * n),
            _ => (Block::ImS12, col - 4 * n + 1),
        }
    }

    /// Flattens bin-centre spectra into the unknown vector.
    pub fn to_vector(&self, t: &SpectrumTable) -> Vec<f64> {
        let mut x = vec![0.0; self.n_cols()];
        for j in 0..self.n_bins {
            x[j] = t.s11[j];
            x[self.n_bins + j] = t.s22[j];
            x[2 * self.n_bins + j] = t.s1212[j];
            x[3 * self.n_bins + j] = t.re_s12[j];
            if let Some(c) = self.col(Block::ImS12, j) {
                x[c] = t.im_s12[j];
            }
        }
        x
    }

    pub fn from_vector(&self, x: &[f64], omega: Vec<f64>) -> SpectrumTable {
        let n = self.n_bins;
        SpectrumTable {
            omega,
            s11: x[..n].to_vec(),
            s22: x[n..2 * n].to_vec(),
            s1212: x[2 * n..3 * n].to_vec(),
            re_s12: x[3 * n..4 * n].to_vec(),
            im_s12: (0..n).map(|j| self.col(Block::ImS12, j).map_or(0.0, |c| x[c])).collect(),
        }
    }
}

/// `chi = A s` for bin-constant spectra `s`.
#[derive(Debug, Clone)]
pub struct ReconstructionSystem {
    pub grid: FrequencyGrid,
    pub model: FilterModel,
    pub layout: ColumnLayout,
    pub tags: Vec<RowTag>,
    pub matrix: DMatrix<f64>,
    /// Ratio of extreme singular values at build time.
    pub condition_number: f64,
}

/// Matrix rows contributed by one setting.
fn setting_rows(setting: &Setting, bins: &BinIntegrals, layout: &ColumnLayout) -> Vec<(RowTag, Vec<f64>)> {
    let n = layout.n_bins;
    let self_pref = 2.0 / PI;
    let cross_pref = 4.0 / PI;
    DecayKind::for_combo(setting.combo)
        .iter()
        .map(|&kind| {
            let mut row = vec![0.0; layout.n_cols()];
            for j in 0..n {
                let mut put = |b: Block, v: f64| {
                    if let Some(c) = layout.col(b, j) {
                        row[c] += v;
                    }
                };
                match kind {
                    DecayKind::Qubit1Crosstalk => {
                        put(Block::S11, self_pref * bins.g11[j]);
                        put(Block::S1212, self_pref * bins.g1212[j]);
                    }
                    DecayKind::Qubit2Crosstalk => {
                        put(Block::S22, self_pref * bins.g22[j]);
                        put(Block::S1212, self_pref * bins.g1212[j]);
                    }
                    DecayKind::LocalSum => {
                        put(Block::S11, self_pref * bins.g11[j]);
                        put(Block::S22, self_pref * bins.g22[j]);
                    }
                    DecayKind::Cross => {
                        put(Block::ReS12, cross_pref * bins.re_g12[j]);
                        put(Block::ImS12, -cross_pref * bins.im_g12[j]);
                    }
                }
            }
            (RowTag { combo: setting.combo, k: setting.k, kind }, row)
        })
        .collect()
}

/// Assembles the system for every decay-producing setting of `plan`.
pub fn build_reconstruction_system(
    plan: &ExperimentPlan,
    grid: &FrequencyGrid,
    model: FilterModel,
) -> Result<ReconstructionSystem> {
    let needed: &[Combo] = if grid.n_bins > 1 { &Combo::ALL } else { &Combo::ALL[..3] };
    for c in needed {
        if !plan.settings.iter().any(|s| s.combo == *c) {
            return Err(QnsError::MissingData(format!("plan has no combo {} settings", c.number())));
        }
    }
    if let Some(limit) = model.band_limit() {
        if grid.upper_edge() > limit * (1.0 + 1e-9) {
            return Err(QnsError::param(
                "n_bins",
                format!("grid reaches {:e} rad/s, beyond the sampled band limit {:e} rad/s", grid.upper_edge(), limit),
            ));
        }
    }
    let layout = ColumnLayout { n_bins: grid.n_bins };
    let quad = BinQuadrature::for_duration(grid, plan.total_time());
    let per_setting: Vec<Result<Vec<(RowTag, Vec<f64>)>>> = plan
        .settings
        .par_iter()
        .map(|s| {
            let ff = FilterFunction::from_sequences(&s.sequences[0], &s.sequences[1], model)?;
            let bins = BinIntegrals::compute(&ff, grid, &quad);
            Ok(setting_rows(s, &bins, &layout))
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_setting {
        rows.extend(r?);
    }
    rows.sort_by_key(|(t, _)| *t);
    for (tag, row) in &rows {
        if row.iter().all(|&v| v == 0.0) {
            return Err(QnsError::Numerical(format!("row {tag} is identically zero")));
        }
    }
    let n_cols = layout.n_cols();
    let matrix = DMatrix::from_fn(rows.len(), n_cols, |i, j| rows[i].1[j]);
    let sv = matrix.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition_number = if rows.len() < n_cols || smin == 0.0 { f64::INFINITY } else { smax / smin };
    Ok(ReconstructionSystem {
        grid: *grid,
        model,
        layout,
        tags: rows.into_iter().map(|(t, _)| t).collect(),
        matrix,
        condition_number,
    })
}

impl ReconstructionSystem {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row_index(&self, tag: &RowTag) -> Option<usize> {
        self.tags.binary_search(tag).ok()
    }

    /// `A s` for bin-centre spectra `s`.
    pub fn forward(&self, spectra: &SpectrumTable) -> Vec<f64> {
        let x = nalgebra::DVector::from_vec(self.layout.to_vector(spectra));
        (&self.matrix * x).iter().copied().collect()
    }

    pub fn write_matrix_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.n_cols())
            .map(|c| {
                let (b, j) = self.layout.block_of(c);
                format!("{}_{j}", b.name())
            })
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n_rows() {
            let row: Vec<String> = self.matrix.row(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_tags_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,combo,k,kind")?;
        for (i, t) in self.tags.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", t.combo.number(), t.k, t.kind.label())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::build_plan;

    #[test]
    fn row_count_and_shape() {
        let t = 1e-6;
        let plan = build_plan(8, 6, t / 128.0, 1).unwrap();
        let grid = FrequencyGrid::new(t, 8).unwrap();
        let sys = build_reconstruction_system(&plan, &grid, FilterModel::Continuous).unwrap();
        assert_eq!(sys.n_rows(), 2 * 8 + 2 * 8 + 2 * 7);
        assert_eq!(sys.n_cols(), 5 * 8 - 1);
        assert!(sys.condition_number.is_finite());
    }

    #[test]
    fn layout_round_trip() {
        let l = ColumnLayout { n_bins: 4 };
        for c in 0..l.n_cols() {
            let (b, j) = l.block_of(c);
            assert_eq!(l.col(b, j), Some(c));
        }
        assert_eq!(l.col(Block::ImS12, 0), None);
    }

    #[test]
    fn missing_combo_is_reported() {
        let t = 1e-6;
        let mut plan = build_plan(4, 4, t / 32.0, 1).unwrap();
        plan.settings.retain(|s| s.combo != Combo::CosSin);
        let grid = FrequencyGrid::new(t, 4).unwrap();
        assert!(matches!(
            build_reconstruction_system(&plan, &grid, FilterModel::Continuous),
            Err(QnsError::MissingData(_))
        ));
    }
}
