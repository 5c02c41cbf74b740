//! From measurement records to decay rates, statics and spectra.

use crate::error::{QnsError, Result};
use crate::filter::{FilterModel, FrequencyGrid};
use crate::noise::SpectrumTable;
use crate::plan::{Basis, Combo, ExperimentPlan, Pauli};
use crate::records::{Distribution, Expectations, ReadoutModel, RecordSet, SettingRecord};
use crate::rng::{self, Domain};
use crate::system::{build_reconstruction_system, Block, DecayKind, ReconstructionSystem, RowTag};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

/// Default ceiling on extracted decay exponents.
pub const CHI_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEntry {
    pub tag: RowTag,
    pub value: f64,
    pub std_error: f64,
    /// The log argument fell below `exp(-chi_max)` and was floored.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecayRateVector {
    pub entries: Vec<DecayEntry>,
}

impl DecayRateVector {
    pub fn get(&self, tag: &RowTag) -> Option<&DecayEntry> {
        self.entries.iter().find(|e| e.tag == *tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub chi_max: f64,
    /// Undo this confusion model before extracting.
    #[serde(default)]
    pub mitigate: Option<ReadoutModel>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { chi_max: CHI_MAX, mitigate: None }
    }
}

const XZ: Basis = Basis::new(Pauli::X, Pauli::Z);
const YZ: Basis = Basis::new(Pauli::Y, Pauli::Z);
const ZX: Basis = Basis::new(Pauli::Z, Pauli::X);
const ZY: Basis = Basis::new(Pauli::Z, Pauli::Y);
const XX: Basis = Basis::new(Pauli::X, Pauli::X);
const YY: Basis = Basis::new(Pauli::Y, Pauli::Y);
const XY: Basis = Basis::new(Pauli::X, Pauli::Y);
const YX: Basis = Basis::new(Pauli::Y, Pauli::X);

fn bases_for(combo: Combo) -> &'static [Basis] {
    match combo {
        Combo::CosFree => &[XZ, YZ],
        Combo::FreeCos => &[ZX, ZY],
        Combo::CosCos | Combo::CosSin => &[XX, YY, XY, YX],
    }
}

/// The scalar inputs each decay formula reads from its bases.
fn inputs(combo: Combo, e: &[Expectations]) -> Vec<f64> {
    match combo {
        Combo::CosFree => vec![e[0].q1, e[1].q1],
        Combo::FreeCos => vec![e[0].q2, e[1].q2],
        Combo::CosCos | Combo::CosSin => e.iter().map(|x| x.q12).collect(),
    }
}

/// `-ln(v) / 2` with `v` floored at `exp(-2 chi_max)`.
fn half_neg_log(v: f64, chi_max: f64) -> (f64, bool) {
    let floor = (-2.0 * chi_max).exp();
    if v < floor || !v.is_finite() {
        (chi_max, true)
    } else {
        (-0.5 * v.ln(), false)
    }
}

/// Decay exponents of a combo from its formula inputs.
fn decays(combo: Combo, x: &[f64], chi_max: f64) -> Vec<(DecayKind, f64, bool)> {
    match combo {
        Combo::CosFree | Combo::FreeCos => {
            let kind = if combo == Combo::CosFree { DecayKind::Qubit1Crosstalk } else { DecayKind::Qubit2Crosstalk };
            let (v, c) = half_neg_log(x[0] * x[0] + x[1] * x[1], chi_max);
            vec![(kind, v, c)]
        }
        Combo::CosCos | Combo::CosSin => {
            let (xx, yy, xy, yx) = (x[0], x[1], x[2], x[3]);
            let g = [xx + yy, xx - yy, xy + yx, yx - xy];
            // Gamma1^2 + Gamma4^2 = e^{-2(chi_11_22 - chi12)}, Gamma2^2 + Gamma3^2 = e^{-2(chi_11_22 + chi12)}.
            let (u, cu) = half_neg_log(g[0] * g[0] + g[3] * g[3], chi_max);
            let (v, cv) = half_neg_log(g[1] * g[1] + g[2] * g[2], chi_max);
            vec![(DecayKind::LocalSum, 0.5 * (u + v), cu || cv), (DecayKind::Cross, 0.5 * (v - u), cu || cv)]
        }
    }
}

fn setting_expectations(
    records: &RecordSet,
    s: &SettingRecord,
    idx: Option<&[usize]>,
    mitigate: Option<&ReadoutModel>,
) -> Result<Vec<(Expectations, Expectations)>> {
    bases_for(s.combo)
        .iter()
        .map(|&b| {
            let rec = s
                .basis(b)
                .ok_or_else(|| QnsError::MissingData(format!("{} lacks basis {}", s.tag(), b.label())))?;
            match idx {
                None => records.basis_expectations(rec, mitigate),
                Some(_) => {
                    let p: Distribution = records.basis_distribution(rec, idx, mitigate)?;
                    Ok((Expectations::from_distribution(&p), Expectations::default()))
                }
            }
        })
        .collect()
}

fn setting_decays(
    records: &RecordSet,
    s: &SettingRecord,
    opts: &ExtractOptions,
    idx: Option<&[usize]>,
) -> Result<Vec<DecayEntry>> {
    let ex = setting_expectations(records, s, idx, opts.mitigate.as_ref())?;
    let values: Vec<Expectations> = ex.iter().map(|e| e.0).collect();
    let x = inputs(s.combo, &values);
    let base = decays(s.combo, &x, opts.chi_max);
    // Delta-method standard errors, inputs treated as independent.
    let se_in = inputs(s.combo, &ex.iter().map(|e| e.1).collect::<Vec<_>>());
    let mut var = vec![0.0; base.len()];
    if idx.is_none() {
        for i in 0..x.len() {
            if se_in[i] == 0.0 {
                continue;
            }
            let h = 1e-6_f64.max(1e-4 * se_in[i]);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let (dp, dm) = (decays(s.combo, &xp, opts.chi_max), decays(s.combo, &xm, opts.chi_max));
            for r in 0..base.len() {
                let d = (dp[r].1 - dm[r].1) / (2.0 * h);
                var[r] += (d * se_in[i]).powi(2);
            }
        }
    }
    Ok(base
        .into_iter()
        .zip(var)
        .map(|((kind, value, clamped), v)| DecayEntry {
            tag: RowTag { combo: s.combo, k: s.k, kind },
            value,
            std_error: if clamped { f64::INFINITY } else { v.sqrt() },
            clamped,
        })
        .collect())
}

/// Decay exponents of every setting in `records`.
///
/// Combos 1/2: `chi = -ln(E[X]^2 + E[Y]^2) / 2`. Combos 3/4:
/// `chi_11_22 = -ln[(G1^2 + G4^2)(G2^2 + G3^2)] / 4` and
/// `chi12 = ln[(G1^2 + G4^2) / (G2^2 + G3^2)] / 4` from the correlator
/// combinations `G1 = XX+YY`, `G2 = XX-YY`, `G3 = XY+YX`, `G4 = YX-XY`.
pub fn extract_decay_rates(records: &RecordSet, opts: &ExtractOptions) -> Result<DecayRateVector> {
    let mut entries = Vec::new();
    for s in &records.settings {
        entries.extend(setting_decays(records, s, opts, None)?);
    }
    entries.sort_by_key(|e| e.tag);
    Ok(DecayRateVector { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StaticsEstimate {
    pub delta1: f64,
    pub delta2: f64,
    pub j: f64,
    pub wrap_delta1: bool,
    pub wrap_delta2: bool,
    pub wrap_j: bool,
    /// The amplitude ratio left [-1, 1] and was clamped.
    pub j_clamped: bool,
}

fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Principal `atan(y / x)` in `(-pi/2, pi/2]`.
fn half_angle(y: f64, x: f64) -> f64 {
    let a = y.atan2(x);
    if a > FRAC_PI_2 {
        a - PI
    } else if a <= -FRAC_PI_2 {
        a + PI
    } else {
        a
    }
}

struct QubitStatics {
    theta: f64,
    theta12: Option<f64>,
    clamped: bool,
}

/// `z_xx`: qubit coherence `E[X] + i E[Y]` with both qubits prepared along X;
/// `z_single`: the same with the partner prepared along Z.
fn qubit_statics(z_xx: (f64, f64), z_single: (f64, f64)) -> QubitStatics {
    let theta = half_angle(z_xx.1, z_xx.0);
    let amp = z_single.0.hypot(z_single.1);
    if !(amp > 1e-12) {
        return QubitStatics { theta, theta12: None, clamped: false };
    }
    // Signed amplitude ratio: e^{-chi} cos(theta12) / e^{-chi}.
    let ratio = (z_xx.0 * theta.cos() + z_xx.1 * theta.sin()) / amp;
    let clamped = !(-1.0..=1.0).contains(&ratio);
    let alpha = ratio.clamp(-1.0, 1.0).acos();
    let psi = z_single.1.atan2(z_single.0);
    let theta12 = if (psi - theta).sin() < 0.0 { 2.0 * PI - alpha } else { alpha };
    QubitStatics { theta, theta12: Some(theta12), clamped }
}

fn mean_q(recs: &[(&SettingRecord, Basis, bool)], records: &RecordSet, mitigate: Option<&ReadoutModel>) -> Result<f64> {
    let mut acc = 0.0;
    for (s, b, first) in recs {
        let rec = s
            .basis(*b)
            .ok_or_else(|| QnsError::MissingData(format!("{} lacks basis {}", s.tag(), b.label())))?;
        let e = records.basis_expectations(rec, mitigate)?.0;
        acc += if *first { e.q1 } else { e.q2 };
    }
    Ok(acc / recs.len() as f64)
}

/// Static detunings and coupling from the free-evolution settings.
///
/// `2 T Delta_n` is the principal `atan(E_XX[Y_n] / E_XX[X_n])`, so the
/// unambiguous window is `|2 T Delta_n| < pi/2`: a shift of both
/// `2 T Delta_n` and `2 T J` by `pi` leaves every free-evolution expectation
/// unchanged. `2 T J` in `[0, 2 pi)` comes from the signed amplitude ratio
/// `A^{XX} / A^{XZ}` with the half-plane fixed by the phase of the
/// partner-along-Z coherence. Qubit 2 supplies `J`; qubit 1 provides a
/// consistency check that raises the wrap flags.
pub fn estimate_statics(records: &RecordSet, mitigate: Option<&ReadoutModel>) -> Result<StaticsEstimate> {
    let need = |c: Combo| {
        records
            .find(c, 0)
            .ok_or_else(|| QnsError::MissingData(format!("free-evolution setting combo{}/k0 missing", c.number())))
    };
    let (c1, c2, c3) = (need(Combo::CosFree)?, need(Combo::FreeCos)?, need(Combo::CosCos)?);
    let t = records.base_period() * records.repetitions as f64;
    let q = |v: &[(&SettingRecord, Basis, bool)]| mean_q(v, records, mitigate);
    let xx_x1 = q(&[(c3, XX, true), (c3, XY, true)])?;
    let xx_y1 = q(&[(c3, YY, true), (c3, YX, true)])?;
    let xx_x2 = q(&[(c3, XX, false), (c3, YX, false)])?;
    let xx_y2 = q(&[(c3, YY, false), (c3, XY, false)])?;
    let q1 = qubit_statics((xx_x1, xx_y1), (q(&[(c1, XZ, true)])?, q(&[(c1, YZ, true)])?));
    let q2 = qubit_statics((xx_x2, xx_y2), (q(&[(c2, ZX, false)])?, q(&[(c2, ZY, false)])?));
    let theta12 = q2.theta12.or(q1.theta12).ok_or_else(|| {
        QnsError::Numerical("partner-along-Z amplitude vanished; J is unestimable".into())
    })?;
    let inconsistent = match (q1.theta12, q2.theta12) {
        (Some(a), Some(b)) => wrap_pi(a - b).abs() > FRAC_PI_2,
        _ => true,
    };
    let edge = |th: f64| th.abs() > 0.95 * FRAC_PI_2;
    Ok(StaticsEstimate {
        delta1: q1.theta / (2.0 * t),
        delta2: q2.theta / (2.0 * t),
        j: theta12 / (2.0 * t),
        wrap_delta1: inconsistent || edge(q1.theta),
        wrap_delta2: inconsistent || edge(q2.theta),
        wrap_j: inconsistent || q2.clamped,
        j_clamped: q2.clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    /// Constrain the three self-spectra to be non-negative.
    #[serde(default)]
    pub nonnegative: bool,
    /// Weight rows by inverse standard error.
    #[serde(default)]
    pub weighted: bool,
    /// Drop rows whose decay was floored.
    #[serde(default)]
    pub drop_clamped: bool,
    /// Singular values below `rank_tol * s_max` count as zero.
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
}

fn default_rank_tol() -> f64 {
    1e-12
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self { nonnegative: false, weighted: false, drop_clamped: false, rank_tol: default_rank_tol() }
    }
}

/// Percentile bounds for every spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiBounds {
    pub lo: SpectrumTable,
    pub hi: SpectrumTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    /// Bin centres (rad/s) and the estimated bin values.
    pub spectra: SpectrumTable,
    #[serde(default)]
    pub ci: Option<CiBounds>,
    #[serde(default)]
    pub statics: Option<StaticsEstimate>,
    pub condition_number: f64,
    pub rank: usize,
    pub residual_norm: f64,
    /// Rows whose decays were floored.
    #[serde(default)]
    pub clamped_rows: Vec<String>,
}

/// Column-equilibrated, optionally row-weighted least-squares problem.
struct Prepared {
    a: DMatrix<f64>,
    col_scale: Vec<f64>,
    row_weight: Vec<f64>,
    rows: Vec<usize>,
}

fn prepare(system: &ReconstructionSystem, chi: &DecayRateVector, opts: &InversionOptions) -> Result<(Prepared, DVector<f64>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut b = Vec::new();
    let mut w = Vec::new();
    let mut clamped = Vec::new();
    for (i, tag) in system.tags.iter().enumerate() {
        let e = chi
            .get(tag)
            .ok_or_else(|| QnsError::MissingData(format!("no measured decay for combo {} k {} ({})", tag.combo.number(), tag.k, tag.kind.label())))?;
        if e.clamped {
            clamped.push(tag.to_string());
            if opts.drop_clamped {
                continue;
            }
        }
        let weight = if opts.weighted && e.std_error.is_finite() && e.std_error > 0.0 { 1.0 / e.std_error } else { 1.0 };
        rows.push(i);
        b.push(e.value * weight);
        w.push(weight);
    }
    let n = system.n_cols();
    let mut a = DMatrix::from_fn(rows.len(), n, |r, c| system.matrix[(rows[r], c)] * w[r]);
    let col_scale: Vec<f64> = (0..n)
        .map(|c| {
            let norm = a.column(c).norm();
            if norm > 0.0 {
                1.0 / norm
            } else {
                1.0
            }
        })
        .collect();
    for (c, s) in col_scale.iter().enumerate() {
        a.column_mut(c).scale_mut(*s);
    }
    Ok((Prepared { a, col_scale, row_weight: w, rows }, DVector::from_vec(b), clamped))
}

/// Pseudo-inverse of the prepared matrix, or a rank-deficiency error naming
/// the block that dominates the weakest direction.
fn pseudo_inverse(p: &Prepared, system: &ReconstructionSystem, tol: f64) -> Result<(DMatrix<f64>, usize, f64)> {
    let svd = p.a.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let n = p.a.ncols();
    let rank = s.iter().filter(|&&v| v > tol * smax).count();
    if rank < n {
        let v_t = svd.v_t.as_ref().expect("requested");
        let (imin, _) = s.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let null = if imin < v_t.nrows() { v_t.row(imin).transpose() } else { DVector::zeros(n) };
        let mut energy = [0.0; 5];
        for c in 0..n {
            let (blk, _) = system.layout.block_of(c);
            let bi = Block::ALL.iter().position(|x| *x == blk).expect("known block");
            energy[bi] += null.get(c).copied().unwrap_or(0.0).powi(2);
        }
        let top = (0..5).fold(0, |m, i| if energy[i] > energy[m] { i } else { m });
        return Err(QnsError::RankDeficient { rank, cols: n, block: Block::ALL[top].name().to_string() });
    }
    let smin = s.min();
    let pinv = svd.pseudo_inverse(tol * smax).map_err(|e| QnsError::Numerical(e.to_string()))?;
    Ok((pinv, rank, smax / smin))
}

/// Least squares on the columns in `cols` only; others fixed at zero.
fn subset_ls(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> DVector<f64> {
    let sub = DMatrix::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])]);
    let svd = sub.svd(true, true);
    let tol = 1e-13 * svd.singular_values.max();
    let z = svd.solve(b, tol).expect("SVD was computed with U and V");
    let mut x = DVector::zeros(a.ncols());
    for (i, &c) in cols.iter().enumerate() {
        x[c] = z[i];
    }
    x
}

/// Lawson–Hanson active set with non-negativity only on `constrained`.
fn nnls_partial(a: &DMatrix<f64>, b: &DVector<f64>, constrained: &[bool]) -> DVector<f64> {
    let n = a.ncols();
    let mut passive: Vec<bool> = constrained.iter().map(|c| !c).collect();
    let cols = |p: &[bool]| (0..n).filter(|&i| p[i]).collect::<Vec<_>>();
    let mut x = subset_ls(a, b, &cols(&passive));
    let tol = 1e-12 * (a.norm() * b.norm()).max(1e-300);
    for _outer in 0..(3 * n) {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n).filter(|&i| constrained[i] && !passive[i]).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = cand else { break };
        if w[t] <= tol {
            break;
        }
        passive[t] = true;
        for _inner in 0..(3 * n) {
            let z = subset_ls(a, b, &cols(&passive));
            let bad: Vec<usize> = (0..n).filter(|&i| constrained[i] && passive[i] && z[i] <= 0.0).collect();
            if bad.is_empty() {
                x = z;
                break;
            }
            let alpha = bad
                .iter()
                .map(|&i| {
                    let d = x[i] - z[i];
                    if d > 0.0 {
                        x[i] / d
                    } else {
                        0.0
                    }
                })
                .fold(f64::INFINITY, f64::min)
                .clamp(0.0, 1.0);
            x += (z - &x) * alpha;
            for i in 0..n {
                if constrained[i] && passive[i] && x[i] <= 1e-15 * x.amax().max(1e-300) {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

fn is_self_block(system: &ReconstructionSystem) -> Vec<bool> {
    (0..system.n_cols())
        .map(|c| matches!(system.layout.block_of(c).0, Block::S11 | Block::S22 | Block::S1212))
        .collect()
}

fn unscale(x: &DVector<f64>, p: &Prepared) -> Vec<f64> {
    x.iter().zip(&p.col_scale).map(|(v, s)| v * s).collect()
}

/// Solves `A s = chi` for bin-constant spectra.
pub fn invert_spectra(chi: &DecayRateVector, system: &ReconstructionSystem, opts: &InversionOptions) -> Result<SpectrumEstimate> {
    let (p, b, clamped_rows) = prepare(system, chi, opts)?;
    let (pinv, rank, cond) = pseudo_inverse(&p, system, opts.rank_tol)?;
    let y = if opts.nonnegative { nnls_partial(&p.a, &b, &is_self_block(system)) } else { &pinv * &b };
    let residual_norm = (&p.a * &y - &b).norm();
    let x = unscale(&y, &p);
    Ok(SpectrumEstimate {
        spectra: system.layout.from_vector(&x, system.grid.centers()),
        ci: None,
        statics: None,
        condition_number: cond,
        rank,
        residual_norm,
        clamped_rows,
    })
}

/// Percentile bootstrap over trajectories.
///
/// Each resample draws trajectory indices with replacement (the same draw for
/// every setting, since one trajectory feeds all settings), re-extracts the
/// decays and re-solves. Returns `None` when `n_resamples == 0`.
pub fn bootstrap_ci(
    records: &RecordSet,
    system: &ReconstructionSystem,
    n_resamples: usize,
    seed: u64,
    extract: &ExtractOptions,
    opts: &InversionOptions,
) -> Result<Option<CiBounds>> {
    if n_resamples == 0 {
        return Ok(None);
    }
    if records.n_trajectories < 2 || !records.has_trajectories() {
        return Err(QnsError::MissingData("bootstrap needs per-trajectory data from at least 2 trajectories".into()));
    }
    let full = extract_decay_rates(records, extract)?;
    let (p, _, _) = prepare(system, &full, opts)?;
    let (pinv, _, _) = pseudo_inverse(&p, system, opts.rank_tol)?;
    let constrained = is_self_block(system);
    let n_traj = records.n_trajectories;
    let samples: Vec<Result<Vec<f64>>> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, Domain::Bootstrap, r);
            let idx: Vec<usize> = (0..n_traj).map(|_| rng.random_range(0..n_traj)).collect();
            let mut entries = Vec::new();
            for s in &records.settings {
                entries.extend(setting_decays(records, s, extract, Some(&idx))?);
            }
            let chi = DecayRateVector { entries };
            let b = DVector::from_iterator(
                p.rows.len(),
                p.rows.iter().zip(&p.row_weight).map(|(&i, w)| {
                    let tag = &system.tags[i];
                    chi.get(tag).map_or(0.0, |e| e.value) * w
                }),
            );
            let y = if opts.nonnegative { nnls_partial(&p.a, &b, &constrained) } else { &pinv * &b };
            Ok(unscale(&y, &p))
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let n = system.n_cols();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for c in 0..n {
        let mut v: Vec<f64> = samples.iter().map(|s| s[c]).collect();
        v.sort_by(f64::total_cmp);
        lo[c] = percentile(&v, 0.025);
        hi[c] = percentile(&v, 0.975);
    }
    let centers = system.grid.centers();
    Ok(Some(CiBounds {
        lo: system.layout.from_vector(&lo, centers.clone()),
        hi: system.layout.from_vector(&hi, centers),
    }))
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub model: FilterModel,
    #[serde(default)]
    pub extract: ExtractOptions,
    #[serde(default)]
    pub inversion: InversionOptions,
    #[serde(default)]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub bootstrap_seed: u64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            model: FilterModel::Continuous,
            extract: ExtractOptions::default(),
            inversion: InversionOptions::default(),
            bootstrap_resamples: 0,
            bootstrap_seed: 0,
        }
    }
}

/// Checks that `records` covers every setting of `plan`.
pub fn check_coverage(records: &RecordSet, plan: &ExperimentPlan) -> Result<()> {
    let missing: Vec<String> = plan
        .settings
        .iter()
        .filter(|s| records.find(s.combo, s.k).is_none())
        .map(|s| format!("(combo {}, k {})", s.combo.number(), s.k))
        .collect();
    if !missing.is_empty() {
        return Err(QnsError::MissingData(format!("records lack settings {}", missing.join(", "))));
    }
    Ok(())
}

/// Full pipeline: system, decays, inversion, statics and optional bootstrap.
pub fn reconstruct(records: &RecordSet, plan: &ExperimentPlan, opts: &ReconstructOptions) -> Result<(SpectrumEstimate, ReconstructionSystem)> {
    check_coverage(records, plan)?;
    let grid = FrequencyGrid::new(plan.base_period(), plan.k_max)?;
    let system = build_reconstruction_system(plan, &grid, opts.model)?;
    let chi = extract_decay_rates(records, &opts.extract)?;
    let mut est = invert_spectra(&chi, &system, &opts.inversion)?;
    est.statics = Some(estimate_statics(records, opts.extract.mitigate.as_ref())?);
    est.ci = bootstrap_ci(records, &system, opts.bootstrap_resamples, opts.bootstrap_seed, &opts.extract, &opts.inversion)?;
    Ok((est, system))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeRow {
    pub spectrum: String,
    pub mae: f64,
    /// MAE as a percentage of the reference's range over the band.
    pub percent_of_range: f64,
}

/// Mean absolute error of `estimate` against `reference` over `band`.
pub fn mae(estimate: &[f64], reference: &[f64], band: std::ops::Range<usize>) -> Result<(f64, f64)> {
    if band.is_empty() || band.end > estimate.len() || band.end > reference.len() {
        return Err(QnsError::param("band", "empty or out of range"));
    }
    let n = band.len() as f64;
    let err: f64 = band.clone().map(|i| (estimate[i] - reference[i]).abs()).sum::<f64>() / n;
    let r = &reference[band];
    let range = r.iter().copied().fold(f64::NEG_INFINITY, f64::max) - r.iter().copied().fold(f64::INFINITY, f64::min);
    let pct = if range > 0.0 { 100.0 * err / range } else { f64::INFINITY };
    Ok((err, pct))
}

/// MAE rows for all five spectra.
pub fn mae_table(estimate: &SpectrumTable, reference: &SpectrumTable, band: std::ops::Range<usize>) -> Result<Vec<MaeRow>> {
    if estimate.len() != reference.len() {
        return Err(QnsError::param("reference", "grid length differs from the estimate"));
    }
    let pairs: [(&str, &[f64], &[f64]); 5] = [
        ("s11", &estimate.s11, &reference.s11),
        ("s22", &estimate.s22, &reference.s22),
        ("re_s12", &estimate.re_s12, &reference.re_s12),
        ("im_s12", &estimate.im_s12, &reference.im_s12),
        ("s1212", &estimate.s1212, &reference.s1212),
    ];
    pairs
        .iter()
        .map(|(name, e, r)| {
            let (m, p) = mae(e, r, band.clone())?;
            Ok(MaeRow { spectrum: name.to_string(), mae: m, percent_of_range: p })
        })
        .collect()
}

fn zip_tables(a: &SpectrumTable, b: &SpectrumTable, f: impl Fn(f64, f64) -> f64) -> SpectrumTable {
    let z = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect::<Vec<_>>();
    SpectrumTable {
        omega: a.omega.clone(),
        s11: z(&a.s11, &b.s11),
        s22: z(&a.s22, &b.s22),
        re_s12: z(&a.re_s12, &b.re_s12),
        im_s12: z(&a.im_s12, &b.im_s12),
        s1212: z(&a.s1212, &b.s1212),
    }
}

/// `S_injected+native - S_native`, CI half-widths added in quadrature.
pub fn background_subtract(total: &SpectrumEstimate, native: &SpectrumEstimate) -> Result<SpectrumEstimate> {
    let (a, b) = (&total.spectra, &native.spectra);
    if a.omega.len() != b.omega.len() || a.omega.iter().zip(&b.omega).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0)) {
        return Err(QnsError::param("grid", "the two estimates use different frequency grids"));
    }
    let diff = zip_tables(a, b, |x, y| x - y);
    let width = |e: &SpectrumEstimate, lower: bool| -> SpectrumTable {
        match &e.ci {
            Some(ci) => zip_tables(&e.spectra, if lower { &ci.lo } else { &ci.hi }, |p, q| (p - q).abs()),
            None => zip_tables(&e.spectra, &e.spectra, |_, _| 0.0),
        }
    };
    let ci = if total.ci.is_some() || native.ci.is_some() {
        let quad = |lower: bool| zip_tables(&width(total, lower), &width(native, lower), |x, y| x.hypot(y));
        let (wl, wh) = (quad(true), quad(false));
        Some(CiBounds { lo: zip_tables(&diff, &wl, |d, w| d - w), hi: zip_tables(&diff, &wh, |d, w| d + w) })
    } else {
        None
    };
    Ok(SpectrumEstimate {
        spectra: diff,
        ci,
        statics: None,
        condition_number: total.condition_number.max(native.condition_number),
        rank: total.rank.min(native.rank),
        residual_norm: total.residual_norm.hypot(native.residual_norm),
        clamped_rows: total.clamped_rows.iter().chain(&native.clamped_rows).cloned().collect(),
    })
}

impl SpectrumEstimate {
    /// `omega_rad_s,s11,s22,re_s12,im_s12,s1212` then `<col>_ci_lo,<col>_ci_hi`
    /// for each spectrum (empty without a bootstrap).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names = ["s11", "s22", "re_s12", "im_s12", "s1212"];
        let mut header = vec!["omega_rad_s".to_string()];
        header.extend(names.iter().map(|n| n.to_string()));
        for n in names {
            header.push(format!("{n}_ci_lo"));
            header.push(format!("{n}_ci_hi"));
        }
        writeln!(w, "{}", header.join(","))?;
        let cols = |t: &SpectrumTable| -> [Vec<f64>; 5] {
            [t.s11.clone(), t.s22.clone(), t.re_s12.clone(), t.im_s12.clone(), t.s1212.clone()]
        };
        let main = cols(&self.spectra);
        let ci = self.ci.as_ref().map(|c| (cols(&c.lo), cols(&c.hi)));
        for i in 0..self.spectra.len() {
            let mut row = vec![format!("{:e}", self.spectra.omega[i])];
            row.extend(main.iter().map(|c| format!("{:e}", c[i])));
            for s in 0..5 {
                match &ci {
                    Some((lo, hi)) => {
                        row.push(format!("{:e}", lo[s][i]));
                        row.push(format!("{:e}", hi[s][i]));
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_qubit_decay_inverts() {
        let x = [(-0.5f64).exp() * 0.3f64.cos(), (-0.5f64).exp() * 0.3f64.sin()];
        let d = decays(Combo::CosFree, &x, CHI_MAX);
        assert!((d[0].1 - 0.5).abs() < 1e-14);
        assert!(!d[0].2);
    }

    #[test]
    fn gamma_decay_inverts() {
        let (l, c) = (0.4f64, 0.1f64);
        let g1 = (-l + c).exp();
        let g2 = (-l - c).exp();
        // XX = (G1 + G2)/2, YY = (G1 - G2)/2, XY = YX = 0.
        let x = [0.5 * (g1 + g2), 0.5 * (g1 - g2), 0.0, 0.0];
        let d = decays(Combo::CosCos, &x, CHI_MAX);
        assert!((d[0].1 - 0.4).abs() < 1e-14);
        assert!((d[1].1 - 0.1).abs() < 1e-14);
    }

    #[test]
    fn floor_clamps() {
        let d = decays(Combo::FreeCos, &[0.0, 0.0], CHI_MAX);
        assert_eq!(d[0].1, CHI_MAX);
        assert!(d[0].2);
    }

    #[test]
    fn statics_window() {
        for &(th, th12) in &[(0.2 * PI, 0.6 * PI), (-1.3, 4.0), (1.5, 0.1), (0.0, 5.9)] {
            let amp = 0.7;
            let zxx = (amp * th12.cos() * f64::cos(th), amp * th12.cos() * f64::sin(th));
            let zs = (amp * (th + th12).cos(), amp * (th + th12).sin());
            let q = qubit_statics(zxx, zs);
            assert!((q.theta - th).abs() < 1e-12);
            assert!((q.theta12.unwrap() - th12).abs() < 1e-9, "{th12} vs {:?}", q.theta12);
        }
    }

    #[test]
    fn mae_basics() {
        let r = [1.0, 3.0, 5.0];
        assert_eq!(mae(&r, &r, 0..3).unwrap().0, 0.0);
        let e = [1.5, 3.5, 5.5];
        let (m, p) = mae(&e, &r, 0..3).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!((p - 12.5).abs() < 1e-12);
        assert!(mae(&e, &r, 0..0).is_err());
    }

    #[test]
    fn nnls_respects_constraint() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![-1.0, 2.0, 1.0]);
        let x = nnls_partial(&a, &b, &[true, false]);
        assert!(x[0] >= 0.0);
        assert!(x[0].abs() < 1e-12);
        assert!((x[1] - 1.5).abs() < 1e-12);
        let free = nnls_partial(&a, &b, &[false, false]);
        assert!(free[0] < 0.0);
    }
}
