//! Filter functions of piecewise-constant switching functions.

use crate::error::{QnsError, Result};
use crate::pulses::{PulseSequence, SwitchingFunction};
use crate::quadrature::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `sin(x) / x`, series near zero.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `int_0^T y(t) e^{i omega t} dt`, exact for a piecewise-constant `y`.
///
/// Each segment contributes `s (b - a) e^{i omega (a + b)/2} sinc(omega (b - a)/2)`,
/// algebraically equal to `s (e^{i omega b} - e^{i omega a}) / (i omega)` but
/// free of cancellation at small `omega`.
pub fn fourier_segment_sum(y: &SwitchingFunction, omega: f64) -> Complex64 {
    y.segments()
        .map(|(a, b, s)| {
            let h = b - a;
            s * h * sinc(0.5 * omega * h) * Complex64::from_polar(1.0, 0.5 * omega * (a + b))
        })
        .sum()
}

/// How the Fourier transform of a switching function is formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterModel {
    /// Continuous-time integral, the textbook definition.
    Continuous,
    /// `dt * sum_j y_j e^{i omega j dt}` for step-sampled noise: the exact
    /// response of a simulator that applies one phase kick per step. Only
    /// meaningful below the Nyquist frequency `pi / dt`.
    Sampled { dt: f64 },
}

impl Default for FilterModel {
    fn default() -> Self {
        FilterModel::Continuous
    }
}

impl FilterModel {
    pub fn transform(&self, y: &SwitchingFunction, omega: f64) -> Complex64 {
        self.from_continuous(fourier_segment_sum(y, omega), omega)
    }

    fn from_continuous(&self, f: Complex64, omega: f64) -> Complex64 {
        match *self {
            FilterModel::Continuous => f,
            FilterModel::Sampled { dt } => f * Complex64::from_polar(1.0 / sinc(0.5 * omega * dt), -0.5 * omega * dt),
        }
    }

    /// Upper end of the frequency axis the model covers.
    pub fn band_limit(&self) -> Option<f64> {
        match *self {
            FilterModel::Continuous => None,
            FilterModel::Sampled { dt } => Some(PI / dt),
        }
    }
}

/// `G_{m,m'}(omega) = F_m(omega) conj(F_m'(omega))`.
pub fn filter_function(y_m: &SwitchingFunction, y_mp: &SwitchingFunction, omega: f64) -> Result<Complex64> {
    check_same_duration(y_m, y_mp)?;
    Ok(fourier_segment_sum(y_m, omega) * fourier_segment_sum(y_mp, omega).conj())
}

fn check_same_duration(a: &SwitchingFunction, b: &SwitchingFunction) -> Result<()> {
    let (ta, tb) = (a.total_time(), b.total_time());
    if (ta - tb).abs() > 1e-12 * ta.max(tb) {
        return Err(QnsError::MismatchedDuration(ta, tb));
    }
    Ok(())
}

/// Switching functions resampled on a uniform grid that contains every
/// boundary, so transforms become phasor sums.
#[derive(Debug, Clone)]
struct SlotGrid {
    step: f64,
    signs: [Vec<f64>; 3],
}

impl SlotGrid {
    const MAX_SLOTS: usize = 1 << 20;

    fn detect(ys: [&SwitchingFunction; 3]) -> Option<Self> {
        let total = ys[0].total_time();
        let min_seg = ys.iter().flat_map(|y| y.segments().map(|(a, b, _)| b - a)).fold(f64::INFINITY, f64::min);
        (1..=8).find_map(|d| {
            let step = min_seg / d as f64;
            let n = (total / step).round();
            if n < 1.0 || n > Self::MAX_SLOTS as f64 {
                return None;
            }
            let step = total / n;
            let on_grid = |t: f64| ((t / step).round() * step - t).abs() <= 1e-9 * step;
            if !ys.iter().all(|y| y.boundaries.iter().all(|&t| on_grid(t))) {
                return None;
            }
            let n = n as usize;
            let signs = ys.map(|y| {
                let mut v = Vec::with_capacity(n);
                for (a, b, s) in y.segments() {
                    let len = ((b - a) / step).round() as usize;
                    v.extend(std::iter::repeat_n(s, len));
                }
                v
            });
            Some(Self { step, signs })
        })
    }

    /// Continuous-time transforms of the three functions.
    fn transforms(&self, omega: f64) -> [Complex64; 3] {
        const ANCHOR: usize = 64;
        let x = omega * self.step;
        let rot = Complex64::from_polar(1.0, x);
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        let mut p = Complex64::new(1.0, 0.0);
        let n = self.signs[0].len();
        for j in 0..n {
            if j % ANCHOR == 0 {
                p = Complex64::from_polar(1.0, x * j as f64);
            }
            for (a, s) in acc.iter_mut().zip(&self.signs) {
                *a += p * s[j];
            }
            p *= rot;
        }
        let slot = self.step * sinc(0.5 * x) * Complex64::from_polar(1.0, 0.5 * x);
        acc.map(|a| a * slot)
    }
}

/// The three switching functions of a two-qubit setting and their filters.
#[derive(Debug, Clone)]
pub struct FilterFunction {
    pub y1: SwitchingFunction,
    pub y2: SwitchingFunction,
    pub y12: SwitchingFunction,
    pub model: FilterModel,
    grid: Option<SlotGrid>,
}

/// All filter entries at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterValues {
    pub g11: f64,
    pub g22: f64,
    pub g1212: f64,
    pub g12: Complex64,
}

impl FilterFunction {
    pub fn new(y1: SwitchingFunction, y2: SwitchingFunction, model: FilterModel) -> Result<Self> {
        let y12 = y1.product(&y2)?;
        let grid = SlotGrid::detect([&y1, &y2, &y12]);
        Ok(Self { y1, y2, y12, model, grid })
    }

    pub fn from_sequences(s1: &PulseSequence, s2: &PulseSequence, model: FilterModel) -> Result<Self> {
        Self::new(crate::pulses::switching_function(s1), crate::pulses::switching_function(s2), model)
    }

    pub fn total_time(&self) -> f64 {
        self.y1.total_time()
    }

    pub fn eval(&self, omega: f64) -> FilterValues {
        let [f1, f2, f12] = match &self.grid {
            Some(g) => g.transforms(omega).map(|f| self.model.from_continuous(f, omega)),
            None => [&self.y1, &self.y2, &self.y12].map(|y| self.model.transform(y, omega)),
        };
        FilterValues { g11: f1.norm_sqr(), g22: f2.norm_sqr(), g1212: f12.norm_sqr(), g12: f1 * f2.conj() }
    }
}

/// Energies of the even and odd parts of `Y(t) = y(t + T/2)` about `t = 0`.
pub fn parity_split(seq: &PulseSequence) -> (f64, f64) {
    let y = seq.slot_signs();
    let n = y.len();
    let dt = seq.tau_pi;
    let mut even = 0.0;
    let mut odd = 0.0;
    for i in 0..n {
        let r = y[n - 1 - i];
        even += (0.5 * (y[i] + r)).powi(2) * dt;
        odd += (0.5 * (y[i] - r)).powi(2) * dt;
    }
    (even, odd)
}

/// Frequency bins `j = 0..n_bins` centred on `2 pi j / T`. Bin 0 is the
/// half-bin `[0, pi/T]`; bin `j >= 1` spans `[(2j-1) pi/T, (2j+1) pi/T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub period: f64,
    pub n_bins: usize,
}

impl FrequencyGrid {
    pub fn new(period: f64, n_bins: usize) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(QnsError::param("period", "must be finite and positive"));
        }
        if n_bins == 0 {
            return Err(QnsError::param("n_bins", "must be positive"));
        }
        Ok(Self { period, n_bins })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn center(&self, j: usize) -> f64 {
        self.spacing() * j as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|j| self.center(j)).collect()
    }

    pub fn edges(&self, j: usize) -> (f64, f64) {
        let h = PI / self.period;
        if j == 0 {
            (0.0, h)
        } else {
            ((2 * j - 1) as f64 * h, (2 * j + 1) as f64 * h)
        }
    }

    pub fn upper_edge(&self) -> f64 {
        self.edges(self.n_bins - 1).1
    }

    pub fn bin_of(&self, omega: f64) -> Option<usize> {
        let w = omega.abs();
        let j = ((w / (PI / self.period) + 1.0) / 2.0).floor() as usize;
        (j < self.n_bins).then_some(j)
    }
}

/// Gauss–Legendre nodes covering the grid: `(bin, omega, weight)`.
///
/// A filter over total time `T_tot` varies on the scale `2 pi / T_tot`, so
/// `panels_per_bin` panels of a 16-point rule per bin of width `2 pi / T`
/// resolve it to near machine precision as long as
/// `panels_per_bin >= T_tot / T`.
#[derive(Debug, Clone)]
pub struct BinQuadrature {
    pub nodes: Vec<(usize, f64, f64)>,
}

impl BinQuadrature {
    pub const ORDER: usize = 16;

    pub fn new(grid: &FrequencyGrid, panels_per_bin: usize) -> Self {
        let gl = GaussLegendre::new(Self::ORDER);
        let mut nodes = Vec::new();
        for j in 0..grid.n_bins {
            let (a, b) = grid.edges(j);
            let panels = if j == 0 { panels_per_bin.div_ceil(2) } else { panels_per_bin };
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + h * p as f64;
                nodes.extend(gl.points(lo, lo + h).map(|(x, w)| (j, x, w)));
            }
        }
        Self { nodes }
    }

    /// Default resolution for filters spanning `total_time`.
    pub fn for_duration(grid: &FrequencyGrid, total_time: f64) -> Self {
        let ratio = (total_time / grid.period).ceil().max(1.0) as usize;
        Self::new(grid, 4 * ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Real,
    Imag,
}

/// Which filter entry to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entry {
    G11,
    G22,
    G1212,
    G12,
}

impl FilterValues {
    pub fn get(&self, entry: Entry, part: Part) -> f64 {
        let z = match entry {
            Entry::G11 => Complex64::new(self.g11, 0.0),
            Entry::G22 => Complex64::new(self.g22, 0.0),
            Entry::G1212 => Complex64::new(self.g1212, 0.0),
            Entry::G12 => self.g12,
        };
        match part {
            Part::Real => z.re,
            Part::Imag => z.im,
        }
    }
}

/// Per-bin integrals of every filter entry of one setting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinIntegrals {
    pub g11: Vec<f64>,
    pub g22: Vec<f64>,
    pub g1212: Vec<f64>,
    pub re_g12: Vec<f64>,
    pub im_g12: Vec<f64>,
}

impl BinIntegrals {
    pub fn compute(ff: &FilterFunction, grid: &FrequencyGrid, quad: &BinQuadrature) -> Self {
        let n = grid.n_bins;
        let mut out = BinIntegrals {
            g11: vec![0.0; n],
            g22: vec![0.0; n],
            g1212: vec![0.0; n],
            re_g12: vec![0.0; n],
            im_g12: vec![0.0; n],
        };
        for &(j, w, wt) in &quad.nodes {
            let v = ff.eval(w);
            out.g11[j] += wt * v.g11;
            out.g22[j] += wt * v.g22;
            out.g1212[j] += wt * v.g1212;
            out.re_g12[j] += wt * v.g12.re;
            out.im_g12[j] += wt * v.g12.im;
        }
        out
    }

    pub fn entry(&self, entry: Entry, part: Part) -> &[f64] {
        match (entry, part) {
            (Entry::G11, _) => &self.g11,
            (Entry::G22, _) => &self.g22,
            (Entry::G1212, _) => &self.g1212,
            (Entry::G12, Part::Real) => &self.re_g12,
            (Entry::G12, Part::Imag) => &self.im_g12,
        }
    }
}

/// Per-bin integrals of one entry/part of `ff` over `grid`.
pub fn bin_integrate(ff: &FilterFunction, grid: &FrequencyGrid, entry: Entry, part: Part) -> Vec<f64> {
    let quad = BinQuadrature::for_duration(grid, ff.total_time());
    let mut out = vec![0.0; grid.n_bins];
    for &(j, w, wt) in &quad.nodes {
        out[j] += wt * ff.eval(w).get(entry, part);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::{cosine_fttps, free_evolution, sine_fttps, switching_function};

    #[test]
    fn free_evolution_dc() {
        let y = switching_function(&free_evolution(4, 0.25).unwrap());
        assert_eq!(fourier_segment_sum(&y, 0.0), Complex64::new(8.0, 0.0));
        assert!((filter_function(&y, &y, 0.0).unwrap().re - 64.0).abs() < 1e-12);
    }

    #[test]
    fn echo_cancels_at_dc() {
        let y = SwitchingFunction::new(vec![0.0, 1.0, 2.0], vec![1.0, -1.0]).unwrap();
        assert!(fourier_segment_sum(&y, 0.0).norm() < 1e-15);
        assert!(fourier_segment_sum(&y, 1e-9).norm() < 1e-8);
    }

    #[test]
    fn mismatched_duration_rejected() {
        let a = SwitchingFunction::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        let b = SwitchingFunction::new(vec![0.0, 2.0], vec![1.0]).unwrap();
        assert!(matches!(filter_function(&a, &b, 1.0), Err(QnsError::MismatchedDuration(..))));
    }

    #[test]
    fn parity_of_fttps() {
        for m in 2..=6 {
            for k in 1..(1usize << m) {
                let (e, o) = parity_split(&cosine_fttps(k, m, 1.0).unwrap());
                assert_eq!(o, 0.0, "cos k={k} m={m}");
                assert!(e > 0.0);
                let (e, o) = parity_split(&sine_fttps(k, m, 1.0).unwrap());
                assert_eq!(e, 0.0, "sin k={k} m={m}");
                assert!(o > 0.0);
            }
        }
    }

    #[test]
    fn cosine_peak_in_bin_k() {
        let t = 1.0;
        let grid = FrequencyGrid::new(t, 32).unwrap();
        for k in 1..32 {
            let s = cosine_fttps(k, 6, t / 128.0).unwrap();
            let ff = FilterFunction::from_sequences(&s, &free_evolution(6, t / 128.0).unwrap(), FilterModel::Continuous).unwrap();
            let b = bin_integrate(&ff, &grid, Entry::G11, Part::Real);
            let (arg, _) = b.iter().enumerate().fold((0, 0.0), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            assert_eq!(arg, k);
        }
    }

    #[test]
    fn grid_bins() {
        let g = FrequencyGrid::new(2.0 * PI, 4).unwrap();
        assert_eq!(g.edges(0), (0.0, 0.5));
        assert_eq!(g.edges(2), (1.5, 2.5));
        assert_eq!(g.bin_of(0.2), Some(0));
        assert_eq!(g.bin_of(2.1), Some(2));
        assert_eq!(g.bin_of(3.6), None);
    }
}
