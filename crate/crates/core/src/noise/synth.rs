//! Trajectory synthesis.

use super::fir::{design_bandpass_fir, fir_response};
use super::{delay_steps, ou_rate_gain, ou_to_ar1, ArmaSpec, Generator, NoiseModel, ProcessLabel};
use crate::error::{QnsError, Result};
use crate::rng::{self, Domain};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

impl ArmaSpec {
    /// Runs the recurrence on fresh unit white noise, discarding
    /// [`ArmaSpec::warmup_steps`] samples first, and returns `n` outputs.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let warm = self.warmup_steps();
        let q = self.ma.len();
        let p = self.ar.len();
        let total = warm + n;
        let mut w = vec![0.0; q];
        let mut y = vec![0.0; p.max(1)];
        let mut out = Vec::with_capacity(n);
        for k in 0..total {
            w.rotate_right(1);
            w[0] = rng.sample::<f64, _>(StandardNormal);
            let mut v: f64 = self.ma.iter().zip(&w).map(|(b, x)| b * x).sum();
            v += self.ar.iter().zip(&y).map(|(a, x)| a * x).sum::<f64>();
            if p > 0 {
                y.rotate_right(1);
                y[0] = v;
            }
            if k >= warm {
                out.push(v);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Filter {
    Arma(ArmaSpec),
    Fir(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Compiled {
    filter: Filter,
    gain: f64,
    mean: f64,
    max_delay: usize,
    used: bool,
}

/// A [`NoiseModel`] bound to a step size, ready to draw realizations.
#[derive(Debug, Clone)]
pub struct NoiseSynth {
    dt: f64,
    comps: Vec<Compiled>,
    terms: [Vec<(usize, f64, usize)>; 3],
}

impl NoiseSynth {
    pub fn new(model: &NoiseModel, dt: f64) -> Result<Self> {
        model.validate(dt)?;
        let mut comps = Vec::with_capacity(model.components.len());
        for c in &model.components {
            let (filter, gain, mean) = match &c.generator {
                Generator::Ou(s) => (Filter::Arma(ou_to_ar1(s, dt)?), ou_rate_gain(s), s.mu),
                Generator::Arma(a) => (Filter::Arma(a.clone()), 1.0, 0.0),
                Generator::Bandpass(b) => {
                    if b.amplitude == 0.0 {
                        (Filter::Fir(vec![0.0]), 0.0, 0.0)
                    } else {
                        (Filter::Fir(design_bandpass_fir(b, dt)?), (b.amplitude / dt).sqrt(), 0.0)
                    }
                }
            };
            comps.push(Compiled { filter, gain, mean, max_delay: 0, used: false });
        }
        let mut terms: [Vec<(usize, f64, usize)>; 3] = Default::default();
        for label in ProcessLabel::ALL {
            for t in model.terms(label) {
                let idx = model.component_index(&t.component).expect("validated");
                let d = delay_steps(t.delay, dt)?;
                comps[idx].max_delay = comps[idx].max_delay.max(d);
                comps[idx].used = true;
                terms[label.index()].push((idx, t.scale, d));
            }
        }
        Ok(Self { dt, comps, terms })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// PSD (rad^2/s) of component `c` as actually synthesized, including
    /// discretization. Periodic with period `2 pi / dt`.
    pub fn component_psd(&self, c: usize, omega: f64) -> f64 {
        let comp = &self.comps[c];
        let nu = omega * self.dt;
        let h2 = match &comp.filter {
            Filter::Arma(a) => a.transfer(nu).norm_sqr(),
            Filter::Fir(taps) => fir_response(taps, nu).norm_sqr(),
        };
        self.dt * comp.gain * comp.gain * h2
    }

    pub(crate) fn n_components(&self) -> usize {
        self.comps.len()
    }

    pub(crate) fn process_terms(&self, p: usize) -> &[(usize, f64, usize)] {
        &self.terms[p]
    }

    /// Draws realization `index` under `master_seed`: three angle sequences
    /// of `n_steps` entries each.
    pub fn realize(&self, n_steps: usize, master_seed: u64, index: u64) -> Realization {
        let mut series: Vec<Option<Vec<f64>>> = vec![None; self.comps.len()];
        for (c, comp) in self.comps.iter().enumerate() {
            if !comp.used {
                continue;
            }
            let n = n_steps + comp.max_delay;
            let mut rng = rng::stream(master_seed, Domain::Noise, (index << 16) | c as u64);
            let raw = match &comp.filter {
                Filter::Arma(a) => a.generate(n, &mut rng),
                Filter::Fir(taps) => {
                    let l = taps.len();
                    let w: Vec<f64> = (0..n + l - 1).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    (0..n)
                        .map(|k| taps.iter().enumerate().map(|(j, h)| h * w[k + l - 1 - j]).sum())
                        .collect()
                }
            };
            series[c] = Some(raw.into_iter().map(|v| comp.gain * v + comp.mean).collect());
        }
        let dt = self.dt;
        let phi = std::array::from_fn(|p| {
            let mut out = vec![0.0; n_steps];
            for &(c, scale, d) in &self.terms[p] {
                let s = series[c].as_ref().expect("referenced component generated");
                let off = self.comps[c].max_delay - d;
                for (j, o) in out.iter_mut().enumerate() {
                    *o += scale * s[off + j];
                }
            }
            out.iter_mut().for_each(|v| *v *= dt);
            out
        });
        Realization { phi }
    }
}

/// Per-step accumulated angles (rad) for one noise realization, indexed by
/// [`ProcessLabel::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub phi: [Vec<f64>; 3],
}

impl Realization {
    pub fn zeros(n_steps: usize) -> Self {
        Self { phi: std::array::from_fn(|_| vec![0.0; n_steps]) }
    }

    pub fn len(&self) -> usize {
        self.phi[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub dt: f64,
    pub master_seed: u64,
    pub realizations: Vec<Realization>,
}

impl TrajectorySet {
    pub fn n_steps(&self) -> usize {
        self.realizations.first().map_or(0, Realization::len)
    }

    /// Debug dump: `step,realization,phi1,phi2,phi12`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,realization,phi1,phi2,phi12")?;
        for (r, real) in self.realizations.iter().enumerate() {
            for j in 0..real.len() {
                writeln!(w, "{j},{r},{:e},{:e},{:e}", real.phi[0][j], real.phi[1][j], real.phi[2][j])?;
            }
        }
        Ok(())
    }
}

pub fn generate_realization(model: &NoiseModel, dt: f64, n_steps: usize, master_seed: u64, index: u64) -> Result<Realization> {
    Ok(NoiseSynth::new(model, dt)?.realize(n_steps, master_seed, index))
}

/// Draws `n_realizations` independent realizations in parallel. The result
/// depends only on the arguments, not on thread count or scheduling.
pub fn generate_trajectories(
    model: &NoiseModel,
    dt: f64,
    n_steps: usize,
    n_realizations: usize,
    master_seed: u64,
) -> Result<TrajectorySet> {
    if n_steps == 0 {
        return Err(QnsError::param("n_steps", "must be positive"));
    }
    let synth = NoiseSynth::new(model, dt)?;
    let realizations = (0..n_realizations as u64)
        .into_par_iter()
        .map(|i| synth.realize(n_steps, master_seed, i))
        .collect();
    Ok(TrajectorySet { dt, master_seed, realizations })
}
