//! Noise-averaged expectations from the first two cumulants.
//!
//! For Gaussian noise the accumulated phases `A`, `B`, `C` multiplying `Z1`,
//! `Z2`, `Z1 Z2` are jointly Gaussian, so every expectation is a finite sum of
//! characteristic-function values. Means come from the static angles, the
//! covariances from filter-function overlaps with the spectra.

use crate::error::{QnsError, Result};
use crate::filter::{FilterFunction, FilterModel, FrequencyGrid};
use crate::noise::{SpectraPoint, SpectralDensity};
use crate::plan::{Basis, ExperimentPlan, Pauli, Setting};
use crate::pulses::SwitchingFunction;
use crate::quadrature::GaussLegendre;
use crate::records::{BasisRecord, Expectations, Provenance, ReadoutModel, RecordSet, RecordSource, SettingRecord, SCHEMA_VERSION};
use crate::simulator::{prep_state, StaticParams};
use crate::system::DecayKind;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// First-cumulant angles and second-cumulant exponents of one setting.
///
/// `chi11 = 2 Var(A)`, `chi22 = 2 Var(B)`, `chi1212 = 2 Var(C)`,
/// `chi12 = 4 Cov(A, B)`; `theta* = 2 E[.]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DecayAngles {
    pub theta1: f64,
    pub theta2: f64,
    pub theta12: f64,
    pub chi11: f64,
    pub chi22: f64,
    pub chi1212: f64,
    pub chi12: f64,
}

impl DecayAngles {
    pub fn chi_11_1212(&self) -> f64 {
        self.chi11 + self.chi1212
    }

    pub fn chi_22_1212(&self) -> f64 {
        self.chi22 + self.chi1212
    }

    pub fn chi_11_22(&self) -> f64 {
        self.chi11 + self.chi22
    }

    pub fn decay(&self, kind: DecayKind) -> f64 {
        match kind {
            DecayKind::Qubit1Crosstalk => self.chi_11_1212(),
            DecayKind::Qubit2Crosstalk => self.chi_22_1212(),
            DecayKind::LocalSum => self.chi_11_22(),
            DecayKind::Cross => self.chi12,
        }
    }
}

/// `theta_n = 2 Delta_n int y_n`, `theta_12 = 2 J int y1 y2`.
pub fn static_angles(y1: &SwitchingFunction, y2: &SwitchingFunction, statics: &StaticParams) -> Result<(f64, f64, f64)> {
    let y12 = y1.product(y2)?;
    Ok((2.0 * statics.delta1 * y1.integral(), 2.0 * statics.delta2 * y2.integral(), 2.0 * statics.j * y12.integral()))
}

/// Quadrature control for the overlap integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapQuadrature {
    /// Upper limit for the continuous filter model (rad/s). Defaults to
    /// `8 pi` over the shortest switching segment, where the neglected tail
    /// of a Lorentzian overlap is below `1e-4` of typical exponents.
    pub cutoff: Option<f64>,
    /// Panels per `pi / (2 T_total)` of frequency.
    pub density: f64,
}

impl Default for OverlapQuadrature {
    fn default() -> Self {
        Self { cutoff: None, density: 1.0 }
    }
}

/// `(chi11, chi22, chi1212, chi12)` of filter `ff` against `spectra`:
/// `chi_nn = (2/pi) int_0^inf G_nn S_nn`,
/// `chi12 = (4/pi) int_0^inf (Re G12 Re S12 - Im G12 Im S12)`.
pub fn decay_exponents(spectra: &dyn SpectralDensity, ff: &FilterFunction, quad: &OverlapQuadrature) -> Result<[f64; 4]> {
    let upper = match ff.model {
        FilterModel::Sampled { dt } => PI / dt,
        FilterModel::Continuous => quad.cutoff.unwrap_or_else(|| {
            let min_seg = [&ff.y1, &ff.y2, &ff.y12]
                .iter()
                .flat_map(|y| y.segments().map(|(a, b, _)| b - a))
                .fold(f64::INFINITY, f64::min);
            8.0 * PI / min_seg
        }),
    };
    let upper = spectra.support().map_or(upper, |s| s.min(upper));
    let mut cuts = vec![0.0];
    cuts.extend(spectra.breakpoints().into_iter().filter(|&b| b > 0.0 && b < upper));
    cuts.push(upper);
    let mut step = PI / (2.0 * ff.total_time() * quad.density);
    if let Some(w) = spectra.feature_width() {
        step = step.min(0.25 * w);
    }
    let gl = GaussLegendre::new(16);
    let mut acc = [0.0; 4];
    let mut negative = None;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let panels = ((b - a) / step).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        let part: Vec<[f64; 5]> = (0..panels)
            .into_par_iter()
            .map(|p| {
                let lo = a + h * p as f64;
                let mut s = [0.0; 5];
                for (x, wt) in gl.points(lo, lo + h) {
                    let g = ff.eval(x);
                    let SpectraPoint { s11, s22, s12, s1212 } = spectra.at(x);
                    if s11 < 0.0 || s22 < 0.0 || s1212 < 0.0 {
                        s[4] = x;
                    }
                    s[0] += wt * g.g11 * s11;
                    s[1] += wt * g.g22 * s22;
                    s[2] += wt * g.g1212 * s1212;
                    s[3] += wt * (g.g12.re * s12.re - g.g12.im * s12.im);
                }
                s
            })
            .collect();
        for s in part {
            for i in 0..4 {
                acc[i] += s[i];
            }
            if s[4] != 0.0 {
                negative = Some(s[4]);
            }
        }
    }
    if let Some(x) = negative {
        return Err(QnsError::param("spectra", format!("negative self-spectrum near {x:e} rad/s")));
    }
    Ok([2.0 / PI * acc[0], 2.0 / PI * acc[1], 2.0 / PI * acc[2], 4.0 / PI * acc[3]])
}

/// All angles for one setting.
pub fn setting_angles(
    setting: &Setting,
    spectra: &dyn SpectralDensity,
    statics: &StaticParams,
    model: FilterModel,
    quad: &OverlapQuadrature,
) -> Result<DecayAngles> {
    let ff = FilterFunction::from_sequences(&setting.sequences[0], &setting.sequences[1], model)?;
    let (theta1, theta2, theta12) = static_angles(&ff.y1, &ff.y2, statics)?;
    let [chi11, chi22, chi1212, chi12] = decay_exponents(spectra, &ff, quad)?;
    Ok(DecayAngles { theta1, theta2, theta12, chi11, chi22, chi1212, chi12 })
}

fn pauli_matrix(p: Option<Pauli>) -> [[Complex64; 2]; 2] {
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match p {
        None => [[l, o], [o, l]],
        Some(Pauli::X) => [[o, l], [l, o]],
        Some(Pauli::Y) => [[o, -i], [i, o]],
        Some(Pauli::Z) => [[l, o], [o, -l]],
    }
}

/// `E <O1 (x) O2>` for the given preparation (`None` = identity).
pub fn expectation(prep: [Pauli; 2], op1: Option<Pauli>, op2: Option<Pauli>, a: &DecayAngles) -> f64 {
    let psi = prep_state(prep);
    let (m1, m2) = (pauli_matrix(op1), pauli_matrix(op2));
    let z = |i: usize| if i == 0 { 1.0 } else { -1.0 };
    let (mu_a, mu_b, mu_c) = (0.5 * a.theta1, 0.5 * a.theta2, 0.5 * a.theta12);
    let (va, vb, vc, cab) = (0.5 * a.chi11, 0.5 * a.chi22, 0.5 * a.chi1212, 0.25 * a.chi12);
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..4 {
        for c in 0..4 {
            let o = m1[r >> 1][c >> 1] * m2[r & 1][c & 1];
            if o == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (z1, z2, w1, w2) = (z(r >> 1), z(r & 1), z(c >> 1), z(c & 1));
            let al = z1 - w1;
            let be = z2 - w2;
            let ga = z1 * z2 - w1 * w2;
            let phase = al * mu_a + be * mu_b + ga * mu_c;
            let var = al * al * va + be * be * vb + 2.0 * al * be * cab + ga * ga * vc;
            acc += psi[r].conj() * o * psi[c] * Complex64::from_polar((-0.5 * var).exp(), phase);
        }
    }
    acc.re
}

/// Expectations of one measurement basis.
pub fn basis_expectations(prep: [Pauli; 2], basis: Basis, a: &DecayAngles) -> Expectations {
    Expectations {
        q1: expectation(prep, Some(basis.q1), None, a),
        q2: expectation(prep, None, Some(basis.q2), a),
        q12: expectation(prep, Some(basis.q1), Some(basis.q2), a),
    }
}

/// The protocol's named expectations for one set of angles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservableSet {
    /// `E_{XZ}[X1]`, `E_{XZ}[Y1]`.
    pub xz_x1: f64,
    pub xz_y1: f64,
    /// `E_{ZX}[X2]`, `E_{ZX}[Y2]`.
    pub zx_x2: f64,
    pub zx_y2: f64,
    /// Single-qubit marginals with both prepared along X.
    pub xx_x1: f64,
    pub xx_y1: f64,
    pub xx_x2: f64,
    pub xx_y2: f64,
    /// `<X1X2>`, `<Y1Y2>`, `<X1Y2>`, `<Y1X2>` with both prepared along X.
    pub xx_xx: f64,
    pub xx_yy: f64,
    pub xx_xy: f64,
    pub xx_yx: f64,
    /// `XX+YY`, `XX-YY`, `XY+YX`, `YX-XY`.
    pub gamma: [f64; 4],
}

pub fn expected_observables(a: &DecayAngles) -> ObservableSet {
    use Pauli::{X, Y, Z};
    let xx = [X, X];
    let e = |prep, o1, o2| expectation(prep, o1, o2, a);
    let (pxx, pyy, pxy, pyx) = (e(xx, Some(X), Some(X)), e(xx, Some(Y), Some(Y)), e(xx, Some(X), Some(Y)), e(xx, Some(Y), Some(X)));
    ObservableSet {
        xz_x1: e([X, Z], Some(X), None),
        xz_y1: e([X, Z], Some(Y), None),
        zx_x2: e([Z, X], None, Some(X)),
        zx_y2: e([Z, X], None, Some(Y)),
        xx_x1: e(xx, Some(X), None),
        xx_y1: e(xx, Some(Y), None),
        xx_x2: e(xx, None, Some(X)),
        xx_y2: e(xx, None, Some(Y)),
        xx_xx: pxx,
        xx_yy: pyy,
        xx_xy: pxy,
        xx_yx: pyx,
        gamma: [pxx + pyy, pxx - pyy, pxy + pyx, pyx - pxy],
    }
}

/// Exact (infinite-trajectory, infinite-shot) records for every setting.
pub fn oracle_records(
    plan: &ExperimentPlan,
    spectra: &dyn SpectralDensity,
    statics: &StaticParams,
    model: FilterModel,
    readout: &ReadoutModel,
) -> Result<RecordSet> {
    plan.validate()?;
    readout.validate()?;
    let quad = OverlapQuadrature::default();
    let settings = plan
        .settings
        .iter()
        .map(|s| {
            let a = setting_angles(s, spectra, statics, model, &quad)?;
            let bases = s
                .bases
                .iter()
                .map(|&b| {
                    let p = readout.apply(&basis_expectations(s.prep, b, &a).to_distribution());
                    let expectations = Expectations::from_distribution(&p);
                    BasisRecord { basis: b, distribution: p, expectations, std_errors: Expectations::default(), per_trajectory: vec![] }
                })
                .collect();
            Ok(SettingRecord { combo: s.combo, k: s.k, prep: s.prep, statics: s.statics, bases })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecordSet {
        schema_version: SCHEMA_VERSION,
        source: RecordSource::Oracle,
        provenance: Provenance::default(),
        m: plan.m,
        tau_pi: plan.tau_pi,
        repetitions: plan.repetitions,
        k_max: plan.k_max,
        shots: None,
        n_trajectories: 0,
        readout: (!readout.is_ideal()).then(|| readout.clone()),
        settings,
    })
}

/// Piecewise-constant spectra on a grid, zero beyond its last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSpectra {
    pub grid: FrequencyGrid,
    pub values: crate::noise::SpectrumTable,
}

impl BinnedSpectra {
    pub fn new(grid: FrequencyGrid, values: crate::noise::SpectrumTable) -> Result<Self> {
        if values.len() != grid.n_bins {
            return Err(QnsError::param("values", format!("{} entries for {} bins", values.len(), grid.n_bins)));
        }
        Ok(Self { grid, values })
    }
}

impl SpectralDensity for BinnedSpectra {
    fn at(&self, omega: f64) -> SpectraPoint {
        match self.grid.bin_of(omega) {
            None => SpectraPoint::default(),
            Some(j) => {
                let v = &self.values;
                let im = if j == 0 { 0.0 } else { v.im_s12[j] * omega.signum() };
                SpectraPoint { s11: v.s11[j], s22: v.s22[j], s12: Complex64::new(v.re_s12[j], im), s1212: v.s1212[j] }
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        (0..self.grid.n_bins).map(|j| self.grid.edges(j).1).collect()
    }

    fn support(&self) -> Option<f64> {
        Some(self.grid.upper_edge())
    }
}
