//! Measurement records, readout error model and mitigation.

use crate::error::{QnsError, Result};
use crate::plan::{Basis, Combo, Pauli};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Outcome distribution over `index = 2 b1 + b2`, bit 0 meaning eigenvalue +1.
pub type Distribution = [f64; 4];

/// `<O1>`, `<O2>`, `<O1 O2>` of one measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Expectations {
    pub q1: f64,
    pub q2: f64,
    pub q12: f64,
}

impl Expectations {
    pub fn from_distribution(p: &Distribution) -> Self {
        Self {
            q1: p[0] + p[1] - p[2] - p[3],
            q2: p[0] - p[1] + p[2] - p[3],
            q12: p[0] - p[1] - p[2] + p[3],
        }
    }

    pub fn to_distribution(&self) -> Distribution {
        std::array::from_fn(|i| {
            let s1 = if i & 2 == 0 { 1.0 } else { -1.0 };
            let s2 = if i & 1 == 0 { 1.0 } else { -1.0 };
            0.25 * (1.0 + s1 * self.q1 + s2 * self.q2 + s1 * s2 * self.q12)
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.q1, self.q2, self.q12]
    }
}

/// Classical readout errors: `P(read r | true a)` per qubit, or a joint
/// 4x4 matrix that overrides them when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    /// `per_qubit[q][r][a]`.
    pub per_qubit: [[[f64; 2]; 2]; 2],
    #[serde(default)]
    pub joint: Option<[[f64; 4]; 4]>,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl ReadoutModel {
    pub fn ideal() -> Self {
        Self::symmetric(0.0, 0.0)
    }

    /// Independent symmetric bit flips with probabilities `p1`, `p2`.
    pub fn symmetric(p1: f64, p2: f64) -> Self {
        let c = |p: f64| [[1.0 - p, p], [p, 1.0 - p]];
        Self { per_qubit: [c(p1), c(p2)], joint: None }
    }

    /// Independent flips `0 -> 1` with `p01` and `1 -> 0` with `p10` per qubit.
    pub fn asymmetric(p01: [f64; 2], p10: [f64; 2]) -> Self {
        let c = |a: f64, b: f64| [[1.0 - a, b], [a, 1.0 - b]];
        Self { per_qubit: [c(p01[0], p10[0]), c(p01[1], p10[1])], joint: None }
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        if let Some(j) = &self.joint {
            return Matrix4::from_fn(|r, a| j[r][a]);
        }
        let [c1, c2] = &self.per_qubit;
        Matrix4::from_fn(|r, a| c1[r >> 1][a >> 1] * c2[r & 1][a & 1])
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.matrix();
        for a in 0..4 {
            let col = m.column(a);
            if col.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (col.sum() - 1.0).abs() > 1e-9 {
                return Err(QnsError::param("readout", format!("column {a} is not a probability distribution")));
            }
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.matrix() == Matrix4::identity()
    }

    pub fn apply(&self, p: &Distribution) -> Distribution {
        let v = self.matrix() * Vector4::from_column_slice(p);
        [v[0], v[1], v[2], v[3]]
    }

    fn inverse(&self) -> Result<Matrix4<f64>> {
        let m = self.matrix();
        let sv = m.singular_values();
        let cond = sv.max() / sv.min();
        if !cond.is_finite() || cond > 1e8 {
            return Err(QnsError::SingularConfusion { condition: cond });
        }
        m.try_inverse().ok_or(QnsError::SingularConfusion { condition: cond })
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &Distribution) -> Distribution {
    let mut u = *v;
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    v.map(|x| (x - tau).max(0.0))
}

/// Inverts the confusion channel on an outcome distribution (counts or
/// probabilities) and projects back onto the simplex. Returns probabilities.
pub fn mitigate_readout(tallies: &Distribution, model: &ReadoutModel) -> Result<Distribution> {
    let total: f64 = tallies.iter().sum();
    if !(total > 0.0) {
        return Err(QnsError::MalformedRecord("empty tally".into()));
    }
    if model.is_ideal() {
        return Ok(tallies.map(|v| v / total));
    }
    let inv = model.inverse()?;
    let q = inv * Vector4::from_column_slice(tallies) / total;
    Ok(project_to_simplex(&[q[0], q[1], q[2], q[3]]))
}

/// Propagates standard errors of raw expectations through the inverse
/// confusion matrix (delta method, ignoring the simplex projection).
fn mitigated_std_errors(se: &Expectations, model: &ReadoutModel) -> Result<Expectations> {
    // Expectations are linear in the distribution: e = E p, p = E^+ e + 1/4.
    let e = Matrix4::<f64>::from_fn(|r, i| {
        let s1 = if i & 2 == 0 { 1.0 } else { -1.0 };
        let s2 = if i & 1 == 0 { 1.0 } else { -1.0 };
        [1.0, s1, s2, s1 * s2][r]
    });
    let inv = model.inverse()?;
    // Map raw (1, q1, q2, q12) -> mitigated (1, q1, q2, q12).
    let t = e * inv * e.try_inverse().expect("Hadamard-like matrix is invertible");
    let raw = [0.0, se.q1, se.q2, se.q12];
    let out: Vec<f64> = (1..4)
        .map(|r| (1..4).map(|c| (t[(r, c)] * raw[c]).powi(2)).sum::<f64>().sqrt())
        .collect();
    Ok(Expectations { q1: out[0], q2: out[1], q12: out[2] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisRecord {
    pub basis: Basis,
    /// Mean outcome distribution over trajectories.
    pub distribution: Distribution,
    pub expectations: Expectations,
    /// Standard errors of the expectations across trajectories (and shots).
    pub std_errors: Expectations,
    /// Per trajectory: outcome probabilities in infinite-shot mode, raw
    /// counts otherwise. May be empty for externally aggregated data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_trajectory: Vec<Distribution>,
}

impl BasisRecord {
    /// Aggregates per-trajectory data, restricted to trajectory indices `idx`
    /// (all when `None`). `shots` normalizes counts.
    pub fn from_trajectories(basis: Basis, per_trajectory: Vec<Distribution>, shots: Option<u64>) -> Self {
        let (distribution, expectations, std_errors) = aggregate(&per_trajectory, None, shots);
        Self { basis, distribution, expectations, std_errors, per_trajectory }
    }

    /// Outcome distribution averaged over the trajectories in `idx`.
    pub fn distribution_over(&self, idx: &[usize], shots: Option<u64>) -> Distribution {
        aggregate(&self.per_trajectory, Some(idx), shots).0
    }
}

fn aggregate(per: &[Distribution], idx: Option<&[usize]>, shots: Option<u64>) -> (Distribution, Expectations, Expectations) {
    let norm = shots.map_or(1.0, |s| 1.0 / s as f64);
    let rows: Vec<&Distribution> = match idx {
        Some(ix) => ix.iter().map(|&i| &per[i]).collect(),
        None => per.iter().collect(),
    };
    let n = rows.len() as f64;
    let mut mean = [0.0; 4];
    let mut ex = [0.0; 3];
    let mut ex2 = [0.0; 3];
    for r in &rows {
        let p = r.map(|v| v * norm);
        for i in 0..4 {
            mean[i] += p[i];
        }
        let e = Expectations::from_distribution(&p).as_array();
        for i in 0..3 {
            ex[i] += e[i];
            ex2[i] += e[i] * e[i];
        }
    }
    let mean = mean.map(|v| v / n);
    let exp = Expectations::from_distribution(&mean);
    let se: Vec<f64> = (0..3)
        .map(|i| {
            let m = ex[i] / n;
            let var_traj = if n > 1.0 { ((ex2[i] - n * m * m) / (n - 1.0)).max(0.0) } else { 0.0 };
            (var_traj / n).sqrt()
        })
        .collect();
    let mut se = Expectations { q1: se[0], q2: se[1], q12: se[2] };
    // With one trajectory and finite shots, fall back to binomial error.
    if n == 1.0 {
        if let Some(s) = shots {
            let f = |e: f64| ((1.0 - e * e).max(0.0) / s as f64).sqrt();
            se = Expectations { q1: f(exp.q1), q2: f(exp.q2), q12: f(exp.q12) };
        }
    }
    (mean, exp, se)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRecord {
    pub combo: Combo,
    pub k: usize,
    pub prep: [Pauli; 2],
    #[serde(default)]
    pub statics: bool,
    pub bases: Vec<BasisRecord>,
}

impl SettingRecord {
    pub fn tag(&self) -> String {
        format!("combo{}/k{}", self.combo.number(), self.k)
    }

    pub fn basis(&self, b: Basis) -> Option<&BasisRecord> {
        self.bases.iter().find(|r| r.basis == b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Simulation,
    Oracle,
    External,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// Everything measured in one run of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSet {
    pub schema_version: u32,
    pub source: RecordSource,
    #[serde(default)]
    pub provenance: Provenance,
    pub m: u32,
    pub tau_pi: f64,
    pub repetitions: usize,
    pub k_max: usize,
    /// `None` means exact outcome probabilities (infinite shots).
    pub shots: Option<u64>,
    pub n_trajectories: usize,
    /// Readout channel the raw data went through, if known.
    #[serde(default)]
    pub readout: Option<ReadoutModel>,
    pub settings: Vec<SettingRecord>,
}

impl RecordSet {
    pub fn find(&self, combo: Combo, k: usize) -> Option<&SettingRecord> {
        self.settings.iter().find(|s| s.combo == combo && s.k == k)
    }

    pub fn base_period(&self) -> f64 {
        (1usize << (self.m + 1)) as f64 * self.tau_pi
    }

    /// Consistency checks for records read from outside.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(QnsError::MalformedRecord(format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.tau_pi > 0.0) || self.repetitions == 0 || self.k_max == 0 {
            return Err(QnsError::MalformedRecord("grid parameters must be positive".into()));
        }
        if let Some(r) = &self.readout {
            r.validate().map_err(|e| QnsError::MalformedRecord(e.to_string()))?;
        }
        for s in &self.settings {
            for b in &s.bases {
                let ctx = format!("{} basis {}", s.tag(), b.basis.label());
                for v in b.expectations.as_array() {
                    if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&v) {
                        return Err(QnsError::MalformedRecord(format!("{ctx}: expectation {v} outside [-1, 1]")));
                    }
                }
                if b.distribution.iter().any(|&p| !(-1e-9..=1.0 + 1e-9).contains(&p)) {
                    return Err(QnsError::MalformedRecord(format!("{ctx}: distribution entry outside [0, 1]")));
                }
                if !b.per_trajectory.is_empty() && b.per_trajectory.len() != self.n_trajectories {
                    return Err(QnsError::MalformedRecord(format!(
                        "{ctx}: {} trajectories recorded, header says {}",
                        b.per_trajectory.len(),
                        self.n_trajectories
                    )));
                }
                let expect = self.shots.map_or(1.0, |s| s as f64);
                for t in &b.per_trajectory {
                    let sum: f64 = t.iter().sum();
                    if (sum - expect).abs() > 1e-6 * expect.max(1.0) || t.iter().any(|&v| v < 0.0) {
                        return Err(QnsError::MalformedRecord(format!("{ctx}: tallies sum to {sum}, expected {expect}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn has_trajectories(&self) -> bool {
        self.settings.iter().all(|s| s.bases.iter().all(|b| b.per_trajectory.len() == self.n_trajectories))
            && self.n_trajectories > 0
    }

    /// Aggregated distribution of `basis`, optionally over a trajectory subset,
    /// and optionally readout-mitigated.
    pub fn basis_distribution(&self, b: &BasisRecord, idx: Option<&[usize]>, mitigate: Option<&ReadoutModel>) -> Result<Distribution> {
        let p = match idx {
            Some(ix) => b.distribution_over(ix, self.shots),
            None => b.distribution,
        };
        match mitigate {
            Some(m) => mitigate_readout(&p, m),
            None => Ok(p),
        }
    }

    /// Expectations and their standard errors, mitigated if requested.
    pub fn basis_expectations(&self, b: &BasisRecord, mitigate: Option<&ReadoutModel>) -> Result<(Expectations, Expectations)> {
        match mitigate {
            None => Ok((b.expectations, b.std_errors)),
            Some(m) => {
                let p = mitigate_readout(&b.distribution, m)?;
                Ok((Expectations::from_distribution(&p), mitigated_std_errors(&b.std_errors, m)?))
            }
        }
    }
}
