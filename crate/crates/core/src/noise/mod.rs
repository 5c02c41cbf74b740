//! Stationary Gaussian dephasing and crosstalk noise.
//!
//! Noise is described declaratively: a set of named generator components
//! (Ornstein–Uhlenbeck, general ARMA, ideal bandpass) and, for each of the
//! three processes (qubit 1, qubit 2, crosstalk), a list of scaled and delayed
//! references to those components. Referencing one component from both qubit
//! processes induces spatial correlation; giving the references different
//! delays makes the cross-spectrum complex.
//!
//! Synthesized trajectories are per-step accumulated phase angles
//! `phi = beta * dt`, which the simulator consumes directly.

mod fir;
mod spectra;
mod synth;

pub use fir::design_bandpass_fir;
pub use spectra::{
    realized_spectra, target_spectra, AnalyticSpectra, RealizedSpectra, SpectraPoint, SpectralDensity, SpectrumTable,
};
pub use synth::{generate_realization, generate_trajectories, NoiseSynth, Realization, TrajectorySet};

use crate::error::{QnsError, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Ornstein–Uhlenbeck process: stationary std `sigma` (rad/s), inverse
/// correlation time `theta` (1/s) and mean `mu` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuSpec {
    pub sigma: f64,
    pub theta: f64,
    #[serde(default)]
    pub mu: f64,
}

impl OuSpec {
    pub fn new(sigma: f64, theta: f64) -> Result<Self> {
        let s = Self { sigma, theta, mu: 0.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(QnsError::param("sigma", "must be finite and non-negative"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(QnsError::param("theta", "must be finite and positive"));
        }
        if !self.mu.is_finite() {
            return Err(QnsError::param("mu", "must be finite"));
        }
        Ok(())
    }

    /// Two-sided Lorentzian PSD.
    pub fn psd(&self, omega: f64) -> f64 {
        lorentzian_psd(self, omega)
    }
}

/// `S_L(w) = 2 theta sigma^2 / (theta^2 + w^2)`.
pub fn lorentzian_psd(spec: &OuSpec, omega: f64) -> f64 {
    2.0 * spec.theta * spec.sigma * spec.sigma / (spec.theta * spec.theta + omega * omega)
}

/// Discrete ARMA filter `y_k = sum_i ar[i] y_{k-1-i} + sum_j ma[j] w_{k-j}`
/// driven by unit-variance white Gaussian `w`, sampled every `dt` seconds.
///
/// Used directly as a component, `y` is a rate in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaSpec {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub dt: f64,
}

impl ArmaSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(QnsError::param("dt", "must be finite and positive"));
        }
        if self.ma.is_empty() {
            return Err(QnsError::param("ma", "needs at least one coefficient"));
        }
        if self.ar.iter().chain(&self.ma).any(|c| !c.is_finite()) {
            return Err(QnsError::param("ar/ma", "coefficients must be finite"));
        }
        check_stability(&self.ar)
    }

    /// White noise with per-sample std `sigma` (rad/s).
    pub fn white(sigma: f64, dt: f64) -> Self {
        Self { ar: vec![], ma: vec![sigma], dt }
    }

    /// Narrowband AR(2) with a conjugate pole pair at `center` (rad/s),
    /// half-width `half_width` (rad/s) and stationary std `sigma`.
    pub fn resonant(center: f64, half_width: f64, sigma: f64, dt: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(QnsError::param("half_width", "must be positive"));
        }
        if !(center >= 0.0 && center * dt < PI) {
            return Err(QnsError::param("center", "must lie in [0, Nyquist)"));
        }
        let r = (-half_width * dt).exp();
        let a1 = 2.0 * r * (center * dt).cos();
        let a2 = -r * r;
        let var = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
        let spec = Self { ar: vec![a1, a2], ma: vec![sigma / var.sqrt()], dt };
        spec.validate()?;
        Ok(spec)
    }

    /// `B(e^{-i nu}) / A(e^{-i nu})` at normalized frequency `nu = omega dt`.
    pub fn transfer(&self, nu: f64) -> Complex64 {
        let num: Complex64 = self
            .ma
            .iter()
            .enumerate()
            .map(|(j, &b)| b * Complex64::from_polar(1.0, -(j as f64) * nu))
            .sum();
        let den: Complex64 = Complex64::new(1.0, 0.0)
            - self
                .ar
                .iter()
                .enumerate()
                .map(|(i, &a)| a * Complex64::from_polar(1.0, -((i + 1) as f64) * nu))
                .sum::<Complex64>();
        num / den
    }

    /// Continuous-equivalent two-sided PSD of the output, `dt |B/A|^2`.
    /// Periodic in `omega` with period `2 pi / dt`.
    pub fn psd(&self, omega: f64) -> f64 {
        self.dt * self.transfer(omega * self.dt).norm_sqr()
    }

    /// Largest pole modulus (0 for a pure MA filter).
    pub fn pole_radius(&self) -> f64 {
        let p = self.ar.len();
        if p == 0 {
            return 0.0;
        }
        if p == 1 {
            return self.ar[0].abs();
        }
        let mut companion = nalgebra::DMatrix::<f64>::zeros(p, p);
        for (i, &a) in self.ar.iter().enumerate() {
            companion[(0, i)] = a;
        }
        for i in 1..p {
            companion[(i, i - 1)] = 1.0;
        }
        companion
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Samples discarded before output so the zero initial state has decayed
    /// through at least ten correlation times.
    pub fn warmup_steps(&self) -> usize {
        let rho = self.pole_radius();
        let mem = if rho > 0.0 { (10.0 / -rho.ln()).ceil() as usize } else { 0 };
        mem + self.ma.len()
    }

    /// Stationary output variance, summed from the impulse response.
    pub fn stationary_variance(&self) -> f64 {
        let n = 50 * self.warmup_steps().max(1) + 64;
        let mut y = vec![0.0; n];
        let mut acc = 0.0;
        for k in 0..n {
            let mut v = self.ma.get(k).copied().unwrap_or(0.0);
            for (i, &a) in self.ar.iter().enumerate() {
                if k > i {
                    v += a * y[k - 1 - i];
                }
            }
            y[k] = v;
            acc += v * v;
        }
        acc
    }
}

/// Schur–Cohn step-down test on `A(z) = 1 - sum a_i z^-i`.
fn check_stability(ar: &[f64]) -> Result<()> {
    let mut c: Vec<f64> = ar.iter().map(|a| -a).collect();
    while let Some(&k) = c.last() {
        if !(k.abs() < 1.0) {
            return Err(QnsError::Unstable(format!(
                "reflection coefficient {k} has modulus >= 1 (pole on or outside the unit circle)"
            )));
        }
        let p = c.len();
        let denom = 1.0 - k * k;
        let next: Vec<f64> = (0..p - 1).map(|i| (c[i] - k * c[p - 2 - i]) / denom).collect();
        c = next;
    }
    Ok(())
}

/// Ideal two-sided bandpass: `amplitude` for `omega_low < |omega| < omega_high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    pub amplitude: f64,
    pub omega_low: f64,
    pub omega_high: f64,
}

impl BandpassSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(QnsError::param("amplitude", "must be finite and non-negative"));
        }
        if !(self.omega_low >= 0.0 && self.omega_low < self.omega_high && self.omega_high.is_finite()) {
            return Err(QnsError::param("omega_low/omega_high", "need 0 <= omega_low < omega_high"));
        }
        Ok(())
    }

    pub fn psd(&self, omega: f64) -> f64 {
        bandpass_psd(self, omega)
    }
}

pub fn bandpass_psd(spec: &BandpassSpec, omega: f64) -> f64 {
    let w = omega.abs();
    if w > spec.omega_low && w < spec.omega_high {
        spec.amplitude
    } else {
        0.0
    }
}

/// AR(1) equivalent of an OU process sampled every `dt`.
///
/// Returns pole `zeta1 = exp(-theta dt)` and input gain `sqrt(zeta2)` with
/// `zeta2 = sigma^2 (1 - zeta1^2) / (2 theta)`. Driven by unit white noise the
/// output variance is `zeta2 / (1 - zeta1^2) = sigma^2 / (2 theta)`; the
/// synthesizer multiplies by [`ou_rate_gain`] so the emitted rate has
/// variance `sigma^2` and PSD `S_L`.
pub fn ou_to_ar1(spec: &OuSpec, dt: f64) -> Result<ArmaSpec> {
    spec.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(QnsError::param("dt", "must be finite and positive"));
    }
    let zeta1 = (-spec.theta * dt).exp();
    if zeta1 == 0.0 {
        return Err(QnsError::param(
            "theta",
            format!("theta*dt = {} leaves no correlation between steps; noise is grossly under-resolved", spec.theta * dt),
        ));
    }
    let zeta2 = spec.sigma * spec.sigma * (1.0 - zeta1 * zeta1) / (2.0 * spec.theta);
    Ok(ArmaSpec { ar: vec![zeta1], ma: vec![zeta2.sqrt()], dt })
}

/// Gain applied on top of [`ou_to_ar1`]: `sqrt(2 theta)`.
pub fn ou_rate_gain(spec: &OuSpec) -> f64 {
    (2.0 * spec.theta).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Ou(OuSpec),
    Arma(ArmaSpec),
    Bandpass(BandpassSpec),
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Generator::Ou(s) => s.validate(),
            Generator::Arma(s) => s.validate(),
            Generator::Bandpass(s) => s.validate(),
        }
    }

    /// Analytic PSD of the generator as specified. An ARMA component has no
    /// continuous-time form, so its discrete PSD stands in.
    pub fn target_psd(&self, omega: f64) -> f64 {
        match self {
            Generator::Ou(s) => s.psd(omega),
            Generator::Arma(s) => s.psd(omega),
            Generator::Bandpass(s) => s.psd(omega),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Generator::Ou(s) => s.mu,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseComponent {
    pub name: String,
    pub generator: Generator,
}

/// One scaled, delayed reference to a named component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub component: String,
    #[serde(default = "one")]
    pub scale: f64,
    /// Delay in seconds; must sit on the step grid.
    #[serde(default)]
    pub delay: f64,
}

fn one() -> f64 {
    1.0
}

impl Term {
    pub fn new(component: impl Into<String>, scale: f64, delay: f64) -> Self {
        Self { component: component.into(), scale, delay }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessLabel {
    Qubit1,
    Qubit2,
    Crosstalk,
}

impl ProcessLabel {
    pub const ALL: [ProcessLabel; 3] = [ProcessLabel::Qubit1, ProcessLabel::Qubit2, ProcessLabel::Crosstalk];

    pub fn index(self) -> usize {
        match self {
            ProcessLabel::Qubit1 => 0,
            ProcessLabel::Qubit2 => 1,
            ProcessLabel::Crosstalk => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProcessSpec {
    pub label: ProcessLabel,
    pub terms: Vec<Term>,
}

/// Complete noise description for the two-qubit system.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub components: Vec<NoiseComponent>,
    pub processes: Vec<NoiseProcessSpec>,
}

impl NoiseModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_component(mut self, name: impl Into<String>, generator: Generator) -> Self {
        self.components.push(NoiseComponent { name: name.into(), generator });
        self
    }

    pub fn with_term(mut self, label: ProcessLabel, term: Term) -> Self {
        match self.processes.iter_mut().find(|p| p.label == label) {
            Some(p) => p.terms.push(term),
            None => self.processes.push(NoiseProcessSpec { label, terms: vec![term] }),
        }
        self
    }

    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }

    pub fn terms(&self, label: ProcessLabel) -> impl Iterator<Item = &Term> {
        self.processes.iter().filter(move |p| p.label == label).flat_map(|p| p.terms.iter())
    }

    /// Structural checks plus grid checks against step `dt`.
    pub fn validate(&self, dt: f64) -> Result<()> {
        for (i, c) in self.components.iter().enumerate() {
            c.generator.validate().map_err(|e| prefix(e, &format!("noise.components[{i}]")))?;
            if self.components[..i].iter().any(|o| o.name == c.name) {
                return Err(QnsError::param(format!("noise.components[{i}].name"), format!("duplicate name `{}`", c.name)));
            }
            if let Generator::Arma(a) = &c.generator {
                if (a.dt - dt).abs() > 1e-9 * dt {
                    return Err(QnsError::param(
                        format!("noise.components[{i}].dt"),
                        format!("ARMA step {:e} s differs from the pulse grid {:e} s", a.dt, dt),
                    ));
                }
            }
        }
        for (p, proc_) in self.processes.iter().enumerate() {
            if self.processes[..p].iter().any(|o| o.label == proc_.label) {
                return Err(QnsError::param(format!("noise.processes[{p}].label"), "duplicate process label"));
            }
            for (t, term) in proc_.terms.iter().enumerate() {
                let path = format!("noise.processes[{p}].terms[{t}]");
                if self.component_index(&term.component).is_none() {
                    return Err(QnsError::param(format!("{path}.component"), format!("unknown component `{}`", term.component)));
                }
                if !term.scale.is_finite() {
                    return Err(QnsError::param(format!("{path}.scale"), "must be finite"));
                }
                delay_steps(term.delay, dt)?;
            }
        }
        // Crosstalk fluctuations are independent of single-qubit dephasing.
        for c in self.terms(ProcessLabel::Crosstalk) {
            let shared = self
                .terms(ProcessLabel::Qubit1)
                .chain(self.terms(ProcessLabel::Qubit2))
                .any(|t| t.component == c.component);
            if shared {
                return Err(QnsError::param(
                    "noise.processes",
                    format!("component `{}` is shared between crosstalk and a qubit process", c.component),
                ));
            }
        }
        Ok(())
    }

    /// Mean rates (rad/s) of the three processes; they act like static terms.
    pub fn mean_rates(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for label in ProcessLabel::ALL {
            out[label.index()] = self
                .terms(label)
                .filter_map(|t| self.component_index(&t.component).map(|i| t.scale * self.components[i].generator.mean()))
                .sum();
        }
        out
    }
}

fn prefix(e: QnsError, path: &str) -> QnsError {
    match e {
        QnsError::InvalidParameter { field, reason } => QnsError::InvalidParameter { field: format!("{path}.{field}"), reason },
        QnsError::Unstable(r) => QnsError::InvalidParameter { field: path.to_string(), reason: format!("unstable filter: {r}") },
        other => other,
    }
}

/// Converts a delay in seconds to whole steps, rejecting off-grid values.
pub fn delay_steps(delay: f64, dt: f64) -> Result<usize> {
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(QnsError::DelayOffGrid { delay_s: delay, dt_s: dt });
    }
    let steps = delay / dt;
    let rounded = steps.round();
    if (steps - rounded).abs() > 1e-6 {
        return Err(QnsError::DelayOffGrid { delay_s: delay, dt_s: dt });
    }
    Ok(rounded as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzian_at_zero_and_symmetry() {
        let s = OuSpec::new(3.0, 2.0).unwrap();
        assert_eq!(s.psd(0.0), 2.0 * 9.0 / 2.0);
        assert_eq!(s.psd(1.7), s.psd(-1.7));
        assert!(s.psd(1.0) > s.psd(2.0));
    }

    #[test]
    fn lorentzian_with_simulation_parameters() {
        // sigma_3 T = 0.62, theta_3 T = 20, T = 5 us
        let t = 5e-6;
        let s = OuSpec::new(0.62 / t, 20.0 / t).unwrap();
        // 2 sigma^2 / theta = 2 * 0.62^2 / 20 * T, evaluated by hand: 0.03844 * 5e-6 / 1e-12 ...
        let expected = 2.0 * 0.62f64.powi(2) / 20.0 / t;
        assert!((s.psd(0.0) - expected).abs() <= 1e-12 * expected);
        assert!((s.psd(0.0) - 7688.0).abs() < 1e-9);
    }

    #[test]
    fn bandpass_profile() {
        let t = 5e-6;
        let b = BandpassSpec { amplitude: 0.0125 / t, omega_low: 100.0 / t, omega_high: 150.0 / t };
        b.validate().unwrap();
        assert_eq!(b.psd(125.0 / t), 2500.0);
        assert_eq!(b.psd(-125.0 / t), 2500.0);
        assert_eq!(b.psd(0.0), 0.0);
        assert_eq!(b.psd(99.0 / t), 0.0);
        assert_eq!(b.psd(151.0 / t), 0.0);
    }

    #[test]
    fn ou_to_ar1_pole_matches_exponential() {
        let t = 5e-6;
        let ou = OuSpec::new(1.0 / t, 22.5 / t).unwrap();
        let dt = 40e-9;
        let ar = ou_to_ar1(&ou, dt).unwrap();
        // theta dt = 4.5e6 * 4e-8 = 0.18
        assert!((ar.ar[0] - (-0.18f64).exp()).abs() < 1e-15);
        let tiny = ou_to_ar1(&OuSpec::new(1.0, 1e-9).unwrap(), 1e-9).unwrap();
        assert!((tiny.ar[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ou_to_ar1_rejects_underflow() {
        let ou = OuSpec::new(1.0, 1e6).unwrap();
        assert!(ou_to_ar1(&ou, 1.0).is_err());
    }

    #[test]
    fn stability_check() {
        assert!(check_stability(&[0.5]).is_ok());
        assert!(check_stability(&[1.0]).is_err());
        assert!(check_stability(&[1.5, -0.7]).is_ok());
        assert!(check_stability(&[0.5, 0.6]).is_err());
        let r = ArmaSpec::resonant(1e6, 1e4, 1.0, 1e-8).unwrap();
        assert!((r.pole_radius() - (-1e-4f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn resonant_variance_matches_target() {
        let r = ArmaSpec::resonant(2e7, 2e5, 3.0, 4e-8).unwrap();
        assert!((r.stationary_variance() - 9.0).abs() < 1e-6);
    }

    #[test]
    fn delay_grid() {
        assert_eq!(delay_steps(250e-9, 25e-9).unwrap(), 10);
        assert!(delay_steps(260e-9, 25e-9).is_err());
        assert!(delay_steps(-1e-9, 25e-9).is_err());
    }

    #[test]
    fn crosstalk_sharing_rejected() {
        let m = NoiseModel::new()
            .with_component("a", Generator::Ou(OuSpec::new(1.0, 1.0).unwrap()))
            .with_term(ProcessLabel::Qubit1, Term::new("a", 1.0, 0.0))
            .with_term(ProcessLabel::Crosstalk, Term::new("a", 1.0, 0.0));
        assert!(m.validate(0.1).is_err());
    }
}
