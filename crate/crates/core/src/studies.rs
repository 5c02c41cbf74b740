//! Ready-made noise scenarios and the comparison studies built on them.

use crate::error::{QnsError, Result};
use crate::estimation::{mae, reconstruct, ExtractOptions, MaeRow, ReconstructOptions, SpectrumEstimate};
use crate::filter::{FilterModel, FrequencyGrid};
use crate::noise::{
    target_spectra, ArmaSpec, BandpassSpec, Generator, NoiseModel, NoiseSynth, OuSpec, ProcessLabel, RealizedSpectra,
    SpectralDensity, SpectrumTable, Term,
};
use crate::oracle::oracle_records;
use crate::plan::{build_plan, build_plan_with, Combo, ExperimentPlan, PlanOptions};
use crate::pulses::WaveformSign;
use crate::quadrature::GaussLegendre;
use crate::records::{BasisRecord, Expectations, ReadoutModel, RecordSet, RecordSource};
use crate::rng::{self, Domain};
use crate::simulator::{evolve_one, evolve_one_finite_width, run_plan, sample_counts, PulseModel, SimOptions, StaticParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Parameters of the two-qubit benchmark: Lorentzian local noise with a
/// shared delayed component, and Lorentzian-plus-bandpass crosstalk. All
/// rates are given in units of `1/T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkNoise {
    pub sigma: [f64; 3],
    pub theta: [f64; 3],
    pub sigma_xt: f64,
    pub theta_xt: f64,
    pub bandpass_amplitude: f64,
    pub bandpass_low: f64,
    pub bandpass_high: f64,
    /// Delay of the shared component on qubit 2, in units of `T`.
    pub delay: f64,
    /// `2 T Delta_n` and `2 T J`.
    pub rotation: f64,
    pub coupling_rotation: f64,
}

impl Default for BenchmarkNoise {
    fn default() -> Self {
        Self {
            sigma: [1.05, 0.99, 0.62],
            theta: [22.5, 27.5, 20.0],
            sigma_xt: 0.65,
            theta_xt: 24.0,
            bandpass_amplitude: 0.0125,
            bandpass_low: 100.0,
            bandpass_high: 150.0,
            delay: 1.0 / 20.0,
            rotation: 0.2 * PI,
            coupling_rotation: 0.6 * PI,
        }
    }
}

impl BenchmarkNoise {
    /// Noise model for base period `t` on a time step `dt`. The delay is
    /// rounded to the nearest whole step.
    pub fn model(&self, t: f64, dt: f64) -> Result<NoiseModel> {
        if !(t > 0.0 && dt > 0.0) {
            return Err(QnsError::param("t/dt", "must be positive"));
        }
        let ou = |s: f64, th: f64| OuSpec::new(s / t, th / t).map(Generator::Ou);
        let delay = (self.delay * t / dt).round() * dt;
        Ok(NoiseModel::new()
            .with_component("eta1", ou(self.sigma[0], self.theta[0])?)
            .with_component("eta2", ou(self.sigma[1], self.theta[1])?)
            .with_component("eta3", ou(self.sigma[2], self.theta[2])?)
            .with_component("eta12", ou(self.sigma_xt, self.theta_xt)?)
            .with_component(
                "bandpass",
                Generator::Bandpass(BandpassSpec {
                    amplitude: self.bandpass_amplitude / t,
                    omega_low: self.bandpass_low / t,
                    omega_high: self.bandpass_high / t,
                }),
            )
            .with_term(ProcessLabel::Qubit1, Term::new("eta1", 1.0, 0.0))
            .with_term(ProcessLabel::Qubit1, Term::new("eta3", 1.0, 0.0))
            .with_term(ProcessLabel::Qubit2, Term::new("eta2", 1.0, 0.0))
            .with_term(ProcessLabel::Qubit2, Term::new("eta3", 1.0, delay))
            .with_term(ProcessLabel::Crosstalk, Term::new("eta12", 1.0, 0.0))
            .with_term(ProcessLabel::Crosstalk, Term::new("bandpass", 1.0, 0.0)))
    }

    /// Static parameters for total evolution time `t`.
    pub fn statics(&self, t: f64) -> StaticParams {
        StaticParams {
            delta1: self.rotation / (2.0 * t),
            delta2: self.rotation / (2.0 * t),
            j: self.coupling_rotation / (2.0 * t),
        }
    }
}

/// Slot duration for an `m`-level plan of base period `t`.
pub fn slot_time(t: f64, m: u32) -> f64 {
    t / (1u64 << (m + 1)) as f64
}

/// Bin averages of `density` over `grid`, split at the density's
/// breakpoints and refined to its narrowest feature.
pub fn bin_average(density: &dyn SpectralDensity, grid: &FrequencyGrid) -> SpectrumTable {
    let gl = GaussLegendre::new(16);
    let bps = density.breakpoints();
    let width = density.feature_width().unwrap_or(f64::INFINITY);
    let n = grid.n_bins;
    let mut out = SpectrumTable {
        omega: grid.centers(),
        s11: vec![0.0; n],
        s22: vec![0.0; n],
        re_s12: vec![0.0; n],
        im_s12: vec![0.0; n],
        s1212: vec![0.0; n],
    };
    for j in 0..n {
        let (a, b) = grid.edges(j);
        let mut cuts = vec![a];
        cuts.extend(bps.iter().copied().filter(|&x| x > a && x < b));
        cuts.push(b);
        let mut acc = [0.0; 5];
        for w in cuts.windows(2) {
            let panels = (((w[1] - w[0]) / (0.25 * width)).ceil() as usize).clamp(4, 4096);
            let h = (w[1] - w[0]) / panels as f64;
            for p in 0..panels {
                let lo = w[0] + h * p as f64;
                for (x, wt) in gl.points(lo, lo + h) {
                    let v = density.at(x);
                    acc[0] += wt * v.s11;
                    acc[1] += wt * v.s22;
                    acc[2] += wt * v.s12.re;
                    acc[3] += wt * v.s12.im;
                    acc[4] += wt * v.s1212;
                }
            }
        }
        let len = b - a;
        out.s11[j] = acc[0] / len;
        out.s22[j] = acc[1] / len;
        out.re_s12[j] = acc[2] / len;
        out.im_s12[j] = if j == 0 { 0.0 } else { acc[3] / len };
        out.s1212[j] = acc[4] / len;
    }
    out
}

/// Delay that best explains the oscillation of `Re S12`: the maximum over
/// `(0, t_max]` of the cosine transform `sum_j Re S12(w_j) cos(w_j t)`,
/// which for a delayed shared process peaks at the delay.
pub fn fit_delay(omega: &[f64], re_s12: &[f64], t_max: f64) -> f64 {
    let n = 4096;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 1..=n {
        let t = t_max * i as f64 / n as f64;
        let v: f64 = omega.iter().zip(re_s12).map(|(&w, &s)| s * (w * t).cos()).sum();
        if v > best.1 {
            best = (t, v);
        }
    }
    best.0
}

fn simulate(plan: &ExperimentPlan, model: &NoiseModel, statics: &StaticParams, n_trajectories: usize, shots: Option<u64>, seed: u64) -> Result<RecordSet> {
    run_plan(
        plan,
        model,
        statics,
        &SimOptions { n_trajectories, shots, readout: ReadoutModel::ideal(), pulse_model: PulseModel::Instantaneous, master_seed: seed },
    )
}

fn mae_row(name: &str, est: &[f64], reference: &[f64]) -> Result<MaeRow> {
    let (m, p) = mae(est, reference, 0..reference.len())?;
    Ok(MaeRow { spectrum: name.to_string(), mae: m, percent_of_range: p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelaySweepConfig {
    /// Base period (s).
    pub t: f64,
    pub m: u32,
    pub k_max: usize,
    /// Delays as fractions of `t`.
    pub delays: Vec<f64>,
    pub noise: BenchmarkNoise,
    pub n_trajectories: usize,
    pub shots: Option<u64>,
    pub seed: u64,
    pub model: FilterModel,
}

impl Default for DelaySweepConfig {
    fn default() -> Self {
        let m = 6;
        Self {
            t: 10e-6,
            m,
            k_max: 64,
            delays: vec![1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0],
            noise: BenchmarkNoise::default(),
            n_trajectories: 1000,
            shots: None,
            seed: 1,
            model: FilterModel::Sampled { dt: slot_time(10e-6, m) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayCase {
    /// Applied delay (s), after rounding to the slot grid.
    pub delay: f64,
    pub estimate: SpectrumEstimate,
    pub engineered: SpectrumTable,
    pub mae_re: MaeRow,
    pub mae_im: MaeRow,
    pub fitted_delay: f64,
    /// `2 pi / fitted_delay`: oscillation period of `Re S12` in rad/s.
    pub fitted_period: f64,
}

/// Benchmark noise reconstructed at several delays of the shared component.
pub fn delay_sweep(cfg: &DelaySweepConfig) -> Result<Vec<DelayCase>> {
    let dt = slot_time(cfg.t, cfg.m);
    let plan = build_plan(cfg.k_max, cfg.m, dt, 1)?;
    let grid = FrequencyGrid::new(cfg.t, cfg.k_max)?;
    let opts = ReconstructOptions { model: cfg.model, ..Default::default() };
    cfg.delays
        .iter()
        .map(|&d| {
            let noise = BenchmarkNoise { delay: d, ..cfg.noise };
            let model = noise.model(cfg.t, dt)?;
            let delay = (d * cfg.t / dt).round() * dt;
            let records = simulate(&plan, &model, &noise.statics(cfg.t), cfg.n_trajectories, cfg.shots, cfg.seed)?;
            let (estimate, _) = reconstruct(&records, &plan, &opts)?;
            let engineered = target_spectra(&model, &grid.centers());
            let mae_re = mae_row("re_s12", &estimate.spectra.re_s12, &engineered.re_s12)?;
            let mae_im = mae_row("im_s12", &estimate.spectra.im_s12, &engineered.im_s12)?;
            let fitted_delay = fit_delay(&estimate.spectra.omega, &estimate.spectra.re_s12, 0.5 * cfg.t);
            Ok(DelayCase { delay, estimate, engineered, mae_re, mae_im, fitted_delay, fitted_period: 2.0 * PI / fitted_delay })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombConfig {
    pub t: f64,
    pub m: u32,
    pub k_max: usize,
    /// Noise peaks at `omega = 2 pi alpha / t`.
    pub alphas: Vec<f64>,
    /// Repetitions of the comb variant.
    pub repetitions: usize,
    /// Stationary std of the narrowband rate, in units of `1/t`.
    pub sigma: f64,
    /// Half-width of the resonance, in units of `1/t`.
    pub half_width: f64,
    /// Scale of the shared process on each qubit.
    pub scale: f64,
    pub n_trajectories: usize,
    pub shots: Option<u64>,
    pub seed: u64,
    pub model: FilterModel,
}

impl Default for CombConfig {
    fn default() -> Self {
        let (t, m) = (4.096e-6, 6);
        Self {
            t,
            m,
            k_max: 16,
            alphas: vec![6.0, 6.5, 7.0],
            repetitions: 4,
            sigma: 1.0,
            half_width: 0.5,
            scale: 0.8,
            n_trajectories: 50,
            shots: Some(100),
            seed: 1,
            model: FilterModel::Sampled { dt: slot_time(t, m) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombCase {
    pub alpha: f64,
    /// Bin-averaged engineered spectra, the target of a bin-constant fit.
    pub engineered: SpectrumTable,
    pub single: SpectrumEstimate,
    pub comb: SpectrumEstimate,
    /// MAE of `Re S12` for the single-period and repeated sequences.
    pub mae_single: MaeRow,
    pub mae_comb: MaeRow,
}

/// Shared narrowband noise on both qubits, no crosstalk.
pub fn narrowband_model(cfg: &CombConfig, alpha: f64) -> Result<NoiseModel> {
    let dt = slot_time(cfg.t, cfg.m);
    let arma = ArmaSpec::resonant(2.0 * PI * alpha / cfg.t, cfg.half_width / cfg.t, cfg.sigma / cfg.t, dt)?;
    Ok(NoiseModel::new()
        .with_component("narrow", Generator::Arma(arma))
        .with_term(ProcessLabel::Qubit1, Term::new("narrow", cfg.scale, 0.0))
        .with_term(ProcessLabel::Qubit2, Term::new("narrow", cfg.scale, 0.0)))
}

/// Single-period sequences against their `repetitions`-fold repetition on
/// narrowband noise placed on and between the grid frequencies.
pub fn comb_compare(cfg: &CombConfig) -> Result<Vec<CombCase>> {
    let dt = slot_time(cfg.t, cfg.m);
    let grid = FrequencyGrid::new(cfg.t, cfg.k_max)?;
    let single_plan = build_plan(cfg.k_max, cfg.m, dt, 1)?;
    let comb_plan = build_plan(cfg.k_max, cfg.m, dt, cfg.repetitions)?;
    let opts = ReconstructOptions { model: cfg.model, ..Default::default() };
    cfg.alphas
        .iter()
        .map(|&alpha| {
            let model = narrowband_model(cfg, alpha)?;
            let statics = StaticParams::default();
            let engineered = bin_average(&RealizedSpectra::new(&model, dt)?, &grid);
            let run = |plan: &ExperimentPlan| -> Result<SpectrumEstimate> {
                let records = simulate(plan, &model, &statics, cfg.n_trajectories, cfg.shots, cfg.seed)?;
                Ok(reconstruct(&records, plan, &opts)?.0)
            };
            let single = run(&single_plan)?;
            let comb = run(&comb_plan)?;
            let mae_single = mae_row("re_s12", &single.spectra.re_s12, &engineered.re_s12)?;
            let mae_comb = mae_row("re_s12", &comb.spectra.re_s12, &engineered.re_s12)?;
            Ok(CombCase { alpha, engineered, single, comb, mae_single, mae_comb })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseWidthConfig {
    pub t: f64,
    pub m: u32,
    pub k_max: usize,
    /// Square pulse duration (s).
    pub width: f64,
    pub substeps: usize,
    pub noise: BenchmarkNoise,
    pub n_trajectories: usize,
    pub seeds: Vec<u64>,
}

impl Default for PulseWidthConfig {
    fn default() -> Self {
        Self {
            t: 4.096e-6,
            m: 6,
            k_max: 16,
            width: 32e-9,
            substeps: 16,
            noise: BenchmarkNoise::default(),
            n_trajectories: 20,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseWidthRow {
    pub seed: u64,
    /// Mean infidelity against instantaneous pulses, same-sign waveform.
    pub same: f64,
    pub alternating: f64,
}

/// Residual state error of finite-width pulses under single-qubit control
/// (cosine sequence on one qubit, free evolution on the other).
///
/// For each trajectory and setting the final state with square pulses is
/// compared with the instantaneous-pulse state on the same noise; the error
/// is `1 - |<ideal|actual>|^2`, averaged over trajectories and settings.
pub fn pulse_width_study(cfg: &PulseWidthConfig) -> Result<Vec<PulseWidthRow>> {
    let dt = slot_time(cfg.t, cfg.m);
    let model = cfg.noise.model(cfg.t, dt)?;
    let statics = cfg.noise.statics(cfg.t);
    let synth = NoiseSynth::new(&model, dt)?;
    let plan_for = |sign: WaveformSign| {
        build_plan_with(cfg.k_max, cfg.m, dt, 1, &PlanOptions { single_sign: sign, ..Default::default() })
    };
    let plans = [plan_for(WaveformSign::Same)?, plan_for(WaveformSign::Alternating)?];
    let n_slots = plans[0].n_slots();
    cfg.seeds
        .iter()
        .map(|&seed| {
            let errs: Vec<Result<[f64; 2]>> = (0..cfg.n_trajectories as u64)
                .into_par_iter()
                .map(|r| {
                    let traj = synth.realize(n_slots, seed, r);
                    let mut acc = [0.0; 2];
                    for (i, plan) in plans.iter().enumerate() {
                        for s in plan.settings.iter().filter(|s| matches!(s.combo, Combo::CosFree | Combo::FreeCos) && s.k > 0) {
                            let ideal = evolve_one(s, &traj, &statics, &PulseModel::Instantaneous)?;
                            let real = evolve_one_finite_width(s, &traj, &statics, cfg.width, cfg.substeps)?;
                            let overlap: num_complex::Complex64 = ideal.iter().zip(&real).map(|(a, b)| a.conj() * b).sum();
                            acc[i] += 1.0 - overlap.norm_sqr();
                        }
                    }
                    Ok(acc)
                })
                .collect();
            let mut total = [0.0; 2];
            for e in errs {
                let e = e?;
                total[0] += e[0];
                total[1] += e[1];
            }
            let n_settings = plans[0].settings.iter().filter(|s| matches!(s.combo, Combo::CosFree | Combo::FreeCos) && s.k > 0).count();
            let norm = (cfg.n_trajectories * n_settings.max(1)) as f64;
            Ok(PulseWidthRow { seed, same: total[0] / norm, alternating: total[1] / norm })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitigationConfig {
    pub t: f64,
    pub m: u32,
    pub k_max: usize,
    pub noise: BenchmarkNoise,
    pub readout: ReadoutModel,
    pub shots: u64,
    pub seed: u64,
    pub model: FilterModel,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        let (t, m) = (5e-6, 6);
        Self {
            t,
            m,
            k_max: 8,
            noise: BenchmarkNoise::default(),
            readout: ReadoutModel::symmetric(0.03, 0.08),
            shots: 10_000,
            seed: 1,
            model: FilterModel::Sampled { dt: slot_time(t, m) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    /// Expectations compared against the oracle.
    pub n_checked: usize,
    /// Mitigated expectations more than three standard errors from the oracle.
    pub n_outside: usize,
    pub max_abs_z: f64,
    pub raw: SpectrumEstimate,
    pub mitigated: SpectrumEstimate,
    /// `raw - mitigated`.
    pub difference: SpectrumTable,
    /// Largest `|raw - mitigated|` over the self and crosstalk spectra.
    pub max_diff_self: f64,
    /// Largest `|raw - mitigated|` over `Re S12` and `Im S12`.
    pub max_diff_cross: f64,
}

/// Draws `shots` outcomes per basis from exact (single-trajectory) records.
pub fn shot_sample(records: &RecordSet, shots: u64, seed: u64) -> Result<RecordSet> {
    if shots == 0 {
        return Err(QnsError::param("shots", "must be positive"));
    }
    let mut out = records.clone();
    out.shots = Some(shots);
    out.n_trajectories = 1;
    out.source = RecordSource::Simulation;
    let mut idx = 0u64;
    for s in out.settings.iter_mut() {
        for b in s.bases.iter_mut() {
            let mut rng = rng::stream(seed, Domain::Shots, idx);
            idx += 1;
            let counts = sample_counts(&b.distribution, shots, &mut rng);
            *b = BasisRecord::from_trajectories(b.basis, vec![counts], Some(shots));
        }
    }
    Ok(out)
}

/// Raw against mitigated readout on oracle statistics with a known confusion
/// channel.
pub fn mitigation_compare(cfg: &MitigationConfig) -> Result<MitigationReport> {
    let dt = slot_time(cfg.t, cfg.m);
    let plan = build_plan(cfg.k_max, cfg.m, dt, 1)?;
    let model = cfg.noise.model(cfg.t, dt)?;
    let spectra = RealizedSpectra::new(&model, dt)?;
    let statics = cfg.noise.statics(cfg.t);
    let exact = oracle_records(&plan, &spectra, &statics, cfg.model, &ReadoutModel::ideal())?;
    let noisy = oracle_records(&plan, &spectra, &statics, cfg.model, &cfg.readout)?;
    let sampled = shot_sample(&noisy, cfg.shots, cfg.seed)?;

    let (mut n_checked, mut n_outside, mut max_abs_z) = (0, 0, 0.0f64);
    for (s, e) in sampled.settings.iter().zip(&exact.settings) {
        for (b, eb) in s.bases.iter().zip(&e.bases) {
            let (v, se): (Expectations, Expectations) = sampled.basis_expectations(b, Some(&cfg.readout))?;
            for ((x, err), truth) in v.as_array().iter().zip(se.as_array()).zip(eb.expectations.as_array()) {
                if err == 0.0 {
                    continue;
                }
                let z = (x - truth) / err;
                n_checked += 1;
                if z.abs() > 3.0 {
                    n_outside += 1;
                }
                max_abs_z = max_abs_z.max(z.abs());
            }
        }
    }

    let raw_opts = ReconstructOptions { model: cfg.model, ..Default::default() };
    let mit_opts = ReconstructOptions {
        model: cfg.model,
        extract: ExtractOptions { mitigate: Some(cfg.readout.clone()), ..Default::default() },
        ..Default::default()
    };
    let (raw, _) = reconstruct(&sampled, &plan, &raw_opts)?;
    let (mitigated, _) = reconstruct(&sampled, &plan, &mit_opts)?;
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let (r, m) = (&raw.spectra, &mitigated.spectra);
    let difference = SpectrumTable {
        omega: r.omega.clone(),
        s11: d(&r.s11, &m.s11),
        s22: d(&r.s22, &m.s22),
        re_s12: d(&r.re_s12, &m.re_s12),
        im_s12: d(&r.im_s12, &m.im_s12),
        s1212: d(&r.s1212, &m.s1212),
    };
    let amax = |v: &[&[f64]]| v.iter().flat_map(|x| x.iter()).fold(0.0f64, |a, &b| a.max(b.abs()));
    let max_diff_self = amax(&[&difference.s11, &difference.s22, &difference.s1212]);
    let max_diff_cross = amax(&[&difference.re_s12, &difference.im_s12]);
    Ok(MitigationReport { n_checked, n_outside, max_abs_z, raw, mitigated, difference, max_diff_self, max_diff_cross })
}
