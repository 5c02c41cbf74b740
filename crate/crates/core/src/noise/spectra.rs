//! Spectral-matrix evaluation for a noise model.

use super::{delay_steps, Generator, NoiseModel, NoiseSynth, ProcessLabel};
use crate::error::Result;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// The four independent entries of the spectral matrix at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectraPoint {
    pub s11: f64,
    pub s22: f64,
    pub s12: Complex64,
    pub s1212: f64,
}

/// Anything that can report the two-qubit spectral matrix at a frequency.
pub trait SpectralDensity: Sync {
    fn at(&self, omega: f64) -> SpectraPoint;

    /// Frequencies (rad/s, non-negative) where the density is discontinuous.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Narrowest spectral feature (rad/s), if any is narrow enough to need
    /// finer quadrature than the filter functions themselves.
    fn feature_width(&self) -> Option<f64> {
        None
    }

    /// Frequency (rad/s) above which the density vanishes identically.
    fn support(&self) -> Option<f64> {
        None
    }
}

fn arma_width(g: &Generator) -> Option<f64> {
    match g {
        Generator::Arma(a) if !a.ar.is_empty() => Some(-a.pole_radius().ln() / a.dt),
        _ => None,
    }
}

/// Combines per-component PSDs through the scale/delay structure:
/// `S_pq = sum_c S_c H_pc conj(H_qc)` with `H_pc = sum a e^{-i w d}`.
fn combine(
    omega: f64,
    n_comp: usize,
    terms: [&[(usize, f64, f64)]; 3],
    psd: impl Fn(usize, f64) -> f64,
) -> SpectraPoint {
    let mut out = SpectraPoint::default();
    for c in 0..n_comp {
        let h = |p: usize| -> Complex64 {
            terms[p]
                .iter()
                .filter(|t| t.0 == c)
                .map(|&(_, a, d)| a * Complex64::from_polar(1.0, -omega * d))
                .sum()
        };
        let (h1, h2, h3) = (h(0), h(1), h(2));
        if h1 == Complex64::default() && h2 == Complex64::default() && h3 == Complex64::default() {
            continue;
        }
        let s = psd(c, omega);
        out.s11 += s * h1.norm_sqr();
        out.s22 += s * h2.norm_sqr();
        out.s1212 += s * h3.norm_sqr();
        out.s12 += s * h1 * h2.conj();
    }
    out
}

fn model_terms(model: &NoiseModel) -> [Vec<(usize, f64, f64)>; 3] {
    std::array::from_fn(|p| {
        model
            .terms(ProcessLabel::ALL[p])
            .filter_map(|t| model.component_index(&t.component).map(|i| (i, t.scale, t.delay)))
            .collect()
    })
}

/// Analytic (engineered) spectra of a model.
#[derive(Debug, Clone)]
pub struct AnalyticSpectra {
    model: NoiseModel,
    terms: [Vec<(usize, f64, f64)>; 3],
}

impl AnalyticSpectra {
    pub fn new(model: &NoiseModel) -> Self {
        Self { model: model.clone(), terms: model_terms(model) }
    }
}

impl SpectralDensity for AnalyticSpectra {
    fn at(&self, omega: f64) -> SpectraPoint {
        let terms = [&self.terms[0][..], &self.terms[1][..], &self.terms[2][..]];
        combine(omega, self.model.components.len(), terms, |c, w| {
            self.model.components[c].generator.target_psd(w)
        })
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .model
            .components
            .iter()
            .filter_map(|c| match &c.generator {
                Generator::Bandpass(b) => Some([b.omega_low, b.omega_high]),
                _ => None,
            })
            .flatten()
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn feature_width(&self) -> Option<f64> {
        self.model.components.iter().filter_map(|c| arma_width(&c.generator)).reduce(f64::min)
    }
}

/// Spectra of the trajectories the synthesizer actually emits at step `dt`.
#[derive(Debug, Clone)]
pub struct RealizedSpectra {
    synth: NoiseSynth,
    width: Option<f64>,
    terms: [Vec<(usize, f64, f64)>; 3],
}

impl RealizedSpectra {
    pub fn new(model: &NoiseModel, dt: f64) -> Result<Self> {
        let synth = NoiseSynth::new(model, dt)?;
        let terms = std::array::from_fn(|p| {
            synth
                .process_terms(p)
                .iter()
                .map(|&(c, a, d)| (c, a, d as f64 * dt))
                .collect()
        });
        for p in ProcessLabel::ALL {
            for t in model.terms(p) {
                delay_steps(t.delay, dt)?;
            }
        }
        let width = model
            .components
            .iter()
            .filter_map(|c| match &c.generator {
                Generator::Ou(o) => Some(o.theta),
                g => arma_width(g),
            })
            .reduce(f64::min);
        Ok(Self { synth, width, terms })
    }
}

impl SpectralDensity for RealizedSpectra {
    fn at(&self, omega: f64) -> SpectraPoint {
        let terms = [&self.terms[0][..], &self.terms[1][..], &self.terms[2][..]];
        combine(omega, self.synth.n_components(), terms, |c, w| self.synth.component_psd(c, w))
    }

    fn feature_width(&self) -> Option<f64> {
        self.width
    }
}

/// Spectral matrix tabulated on a frequency grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub omega: Vec<f64>,
    pub s11: Vec<f64>,
    pub s22: Vec<f64>,
    pub re_s12: Vec<f64>,
    pub im_s12: Vec<f64>,
    pub s1212: Vec<f64>,
}

impl SpectrumTable {
    pub fn tabulate(density: &dyn SpectralDensity, omega: &[f64]) -> Self {
        let mut t = SpectrumTable { omega: omega.to_vec(), ..Default::default() };
        for &w in omega {
            let p = density.at(w);
            t.s11.push(p.s11);
            t.s22.push(p.s22);
            t.re_s12.push(p.s12.re);
            t.im_s12.push(p.s12.im);
            t.s1212.push(p.s1212);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "omega_rad_s,s11,s22,re_s12,im_s12,s1212")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                self.omega[i], self.s11[i], self.s22[i], self.re_s12[i], self.im_s12[i], self.s1212[i]
            )?;
        }
        Ok(())
    }
}

/// Engineered spectra of `model` on `omega`.
pub fn target_spectra(model: &NoiseModel, omega: &[f64]) -> SpectrumTable {
    SpectrumTable::tabulate(&AnalyticSpectra::new(model), omega)
}

/// Spectra of the synthesized trajectories (discretization included).
pub fn realized_spectra(model: &NoiseModel, dt: f64, omega: &[f64]) -> Result<SpectrumTable> {
    Ok(SpectrumTable::tabulate(&RealizedSpectra::new(model, dt)?, omega))
}
