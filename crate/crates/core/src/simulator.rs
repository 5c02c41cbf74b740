//! Monte-Carlo evolution of the two-qubit state under sampled noise.
//!
//! Basis index `2 b1 + b2`, bit 0 being the `Z = +1` state. A slot applies its
//! gate first, then the diagonal error `exp(-i (phi1 Z1 + phi2 Z2 + phi12 Z1 Z2))`
//! with `phi` the noise angle plus the static rate times `dt`.

use crate::error::{QnsError, Result};
use crate::noise::{NoiseModel, NoiseSynth, Realization};
use crate::plan::{Basis, ExperimentPlan, Pauli, Setting};
use crate::records::{BasisRecord, Distribution, Provenance, ReadoutModel, RecordSet, RecordSource, SettingRecord, SCHEMA_VERSION};
use crate::rng::{self, Domain};
use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution as _};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub type State = [Complex64; 4];

/// Static detunings and ZZ coupling, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StaticParams {
    pub delta1: f64,
    pub delta2: f64,
    pub j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PulseModel {
    #[default]
    Instantaneous,
    /// Square pi-pulses of `width` seconds starting at their slot, split into
    /// `substeps` propagator steps.
    FiniteWidth {
        width: f64,
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
}

fn default_substeps() -> usize {
    8
}

impl PulseModel {
    pub fn finite(width: f64) -> Self {
        PulseModel::FiniteWidth { width, substeps: default_substeps() }
    }
}

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn single(p: Pauli) -> [Complex64; 2] {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    match p {
        Pauli::X => [h, h],
        Pauli::Y => [h, h * I],
        Pauli::Z => [C1, C0],
    }
}

/// Product of `+1` eigenstates of the two prep operators.
pub fn prep_state(prep: [Pauli; 2]) -> State {
    let (a, b) = (single(prep[0]), single(prep[1]));
    std::array::from_fn(|i| a[i >> 1] * b[i & 1])
}

fn z_sign(bit: usize) -> f64 {
    if bit == 0 {
        1.0
    } else {
        -1.0
    }
}

fn apply_phases(state: &mut State, phi: [f64; 3]) {
    for (i, a) in state.iter_mut().enumerate() {
        let z1 = z_sign(i >> 1);
        let z2 = z_sign(i & 1);
        *a *= Complex64::from_polar(1.0, -(phi[0] * z1 + phi[1] * z2 + phi[2] * z1 * z2));
    }
}

/// `exp(-i sign pi X_q / 2) = -i sign X_q`.
fn apply_pi(state: &mut State, qubit: usize, sign: f64) {
    let mask = if qubit == 0 { 2 } else { 1 };
    let f = Complex64::new(0.0, -sign);
    let old = *state;
    for i in 0..4 {
        state[i] = f * old[i ^ mask];
    }
}

/// Per slot, the drive sign on each qubit if it is pulsed there.
fn pulse_schedule(setting: &Setting) -> Vec<[Option<f64>; 2]> {
    let mut sched = vec![[None, None]; setting.n_slots()];
    for (q, seq) in setting.sequences.iter().enumerate() {
        for (i, &s) in seq.pulse_slots.iter().enumerate() {
            sched[s][q] = Some(seq.pulse_sign(i));
        }
    }
    sched
}

fn check_length(setting: &Setting, traj: &Realization) -> Result<()> {
    if traj.len() != setting.n_slots() {
        return Err(QnsError::TrajectoryLength { expected: setting.n_slots(), got: traj.len() });
    }
    Ok(())
}

fn slot_angles(traj: &Realization, statics: &StaticParams, dt: f64, s: usize) -> [f64; 3] {
    [
        traj.phi[0][s] + statics.delta1 * dt,
        traj.phi[1][s] + statics.delta2 * dt,
        traj.phi[2][s] + statics.j * dt,
    ]
}

/// Final state of `setting` under one noise trajectory.
pub fn evolve_one(setting: &Setting, traj: &Realization, statics: &StaticParams, pulse_model: &PulseModel) -> Result<State> {
    match *pulse_model {
        PulseModel::Instantaneous => evolve_instantaneous(setting, traj, statics),
        PulseModel::FiniteWidth { width, substeps } => evolve_one_finite_width(setting, traj, statics, width, substeps),
    }
}

fn evolve_instantaneous(setting: &Setting, traj: &Realization, statics: &StaticParams) -> Result<State> {
    check_length(setting, traj)?;
    let dt = setting.sequences[0].tau_pi;
    let mut state = prep_state(setting.prep);
    for (s, pulses) in pulse_schedule(setting).into_iter().enumerate() {
        for (q, p) in pulses.iter().enumerate() {
            if let Some(sign) = p {
                apply_pi(&mut state, q, *sign);
            }
        }
        apply_phases(&mut state, slot_angles(traj, statics, dt, s));
    }
    Ok(state)
}

fn x_on(qubit: usize) -> Matrix4<Complex64> {
    let mask = if qubit == 0 { 2 } else { 1 };
    Matrix4::from_fn(|r, c| if r == c ^ mask { C1 } else { C0 })
}

/// As [`evolve_one`] with square pulses of `width` seconds. During a pulse the
/// Hamiltonian is the slot's dephasing rates plus `sign (pi / width) X_q / 2`
/// on every pulsed qubit; it is propagated in `substeps` equal steps.
pub fn evolve_one_finite_width(
    setting: &Setting,
    traj: &Realization,
    statics: &StaticParams,
    width: f64,
    substeps: usize,
) -> Result<State> {
    check_length(setting, traj)?;
    let dt = setting.sequences[0].tau_pi;
    if !(width >= 0.0) || width > dt * (1.0 + 1e-12) {
        return Err(QnsError::param("pulse.width", format!("width {width:e} s must lie in [0, slot {dt:e} s]")));
    }
    if substeps < 8 {
        return Err(QnsError::param("pulse.substeps", "need at least 8 substeps per pulse"));
    }
    if width == 0.0 {
        return evolve_instantaneous(setting, traj, statics);
    }
    let x = [x_on(0), x_on(1)];
    let h = width / substeps as f64;
    let rest = 1.0 - width / dt;
    let mut state = prep_state(setting.prep);
    for (s, pulses) in pulse_schedule(setting).into_iter().enumerate() {
        let phi = slot_angles(traj, statics, dt, s);
        if pulses.iter().all(Option::is_none) {
            apply_phases(&mut state, phi);
            continue;
        }
        let mut ham = Matrix4::<Complex64>::zeros();
        for i in 0..4 {
            let z1 = z_sign(i >> 1);
            let z2 = z_sign(i & 1);
            ham[(i, i)] = Complex64::new((phi[0] * z1 + phi[1] * z2 + phi[2] * z1 * z2) / dt, 0.0);
        }
        for (q, p) in pulses.iter().enumerate() {
            if let Some(sign) = p {
                ham += x[q] * Complex64::new(sign * 0.5 * PI / width, 0.0);
            }
        }
        let step = (ham * Complex64::new(0.0, -h)).exp();
        let mut v = nalgebra::Vector4::from_column_slice(&state);
        for _ in 0..substeps {
            v = step * v;
        }
        state = [v[0], v[1], v[2], v[3]];
        if rest > 0.0 {
            apply_phases(&mut state, phi.map(|a| a * rest));
        }
    }
    Ok(state)
}

/// Rotation taking the `+1` / `-1` eigenstates of `p` to `|0>` / `|1>`.
fn basis_change(p: Pauli) -> [[Complex64; 2]; 2] {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    match p {
        Pauli::X => [[h, h], [h, -h]],
        Pauli::Y => [[h, -h * I], [h, h * I]],
        Pauli::Z => [[C1, C0], [C0, C1]],
    }
}

/// Exact outcome probabilities of measuring `basis` on `state`.
pub fn outcome_probabilities(state: &State, basis: Basis) -> Distribution {
    let (u1, u2) = (basis_change(basis.q1), basis_change(basis.q2));
    std::array::from_fn(|r| {
        let mut amp = C0;
        for (c, &a) in state.iter().enumerate() {
            amp += u1[r >> 1][c >> 1] * u2[r & 1][c & 1] * a;
        }
        amp.norm_sqr()
    })
}

/// Multinomial draw of `shots` outcomes from `p`.
pub fn sample_counts<R: Rng + ?Sized>(p: &Distribution, shots: u64, rng: &mut R) -> Distribution {
    let mut out = [0.0; 4];
    let mut left = shots;
    let mut mass = 1.0;
    for i in 0..3 {
        if left == 0 {
            break;
        }
        let q = if mass > 0.0 { (p[i] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let n = Binomial::new(left, q).expect("probability in [0, 1]").sample(rng);
        out[i] = n as f64;
        left -= n;
        mass -= p[i];
    }
    out[3] = left as f64;
    out
}

/// Born-rule readout of `basis`, passed through the confusion channel.
/// `shots = None` returns the exact distribution instead of counts.
pub fn measure<R: Rng + ?Sized>(
    basis: Basis,
    state: &State,
    shots: Option<u64>,
    readout: &ReadoutModel,
    rng: &mut R,
) -> Distribution {
    let p = readout.apply(&outcome_probabilities(state, basis));
    match shots {
        None => p,
        Some(n) => sample_counts(&p, n, rng),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub n_trajectories: usize,
    /// `None`: exact probabilities per trajectory.
    pub shots: Option<u64>,
    #[serde(default)]
    pub readout: ReadoutModel,
    #[serde(default)]
    pub pulse_model: PulseModel,
    pub master_seed: u64,
}

/// Runs every setting of `plan` against `n_trajectories` noise realizations.
/// Each realization is applied to all settings; shot sampling for
/// realization `r` draws from its own stream, so results do not depend on
/// scheduling.
pub fn run_plan(plan: &ExperimentPlan, noise: &NoiseModel, statics: &StaticParams, opts: &SimOptions) -> Result<RecordSet> {
    plan.validate()?;
    opts.readout.validate()?;
    if opts.n_trajectories == 0 {
        return Err(QnsError::param("n_trajectories", "must be positive"));
    }
    if opts.shots == Some(0) {
        return Err(QnsError::param("shots", "must be positive"));
    }
    let synth = NoiseSynth::new(noise, plan.tau_pi)?;
    let n_slots = plan.n_slots();
    let seed = opts.master_seed;
    let per_traj: Vec<Result<Vec<Distribution>>> = (0..opts.n_trajectories as u64)
        .into_par_iter()
        .map(|r| {
            let traj = synth.realize(n_slots, seed, r);
            let mut rng = rng::stream(seed, Domain::Shots, r);
            let mut out = Vec::new();
            for s in &plan.settings {
                let state = evolve_one(s, &traj, statics, &opts.pulse_model)?;
                for &b in &s.bases {
                    out.push(measure(b, &state, opts.shots, &opts.readout, &mut rng));
                }
            }
            Ok(out)
        })
        .collect();
    let per_traj = per_traj.into_iter().collect::<Result<Vec<_>>>()?;
    let mut col = 0;
    let settings = plan
        .settings
        .iter()
        .map(|s| {
            let bases = s
                .bases
                .iter()
                .map(|&b| {
                    let data: Vec<Distribution> = per_traj.iter().map(|t| t[col]).collect();
                    col += 1;
                    BasisRecord::from_trajectories(b, data, opts.shots)
                })
                .collect();
            SettingRecord { combo: s.combo, k: s.k, prep: s.prep, statics: s.statics, bases }
        })
        .collect();
    Ok(RecordSet {
        schema_version: SCHEMA_VERSION,
        source: RecordSource::Simulation,
        provenance: Provenance { master_seed: Some(seed), config_hash: None },
        m: plan.m,
        tau_pi: plan.tau_pi,
        repetitions: plan.repetitions,
        k_max: plan.k_max,
        shots: opts.shots,
        n_trajectories: opts.n_trajectories,
        readout: (!opts.readout.is_ideal()).then(|| opts.readout.clone()),
        settings,
    })
}
