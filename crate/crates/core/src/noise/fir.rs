//! FIR realization of the ideal bandpass spectrum.

use super::BandpassSpec;
use crate::error::{QnsError, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

const MAX_TAPS: usize = 1 << 16;

/// Hamming-windowed sinc bandpass for step `dt`, normalized to unit passband
/// gain. The length is chosen so each transition band is at most 10% of the
/// band width; the design is then checked on a dense grid: `|H|^2` lies in
/// `[0.9, 1.1]` inside the band and below `0.1` outside, transition zones
/// excepted.
pub fn design_bandpass_fir(spec: &BandpassSpec, dt: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    let nu_l = spec.omega_low * dt;
    let nu_h = spec.omega_high * dt;
    if nu_h >= PI {
        return Err(QnsError::param(
            "omega_high",
            format!("upper cutoff {:e} rad/s is at or above Nyquist {:e} rad/s", spec.omega_high, PI / dt),
        ));
    }
    let delta = 0.1 * (nu_h - nu_l);
    let mut half = ((3.3 * PI / delta).ceil() as usize).max(4);
    loop {
        let taps = windowed_sinc(nu_l, nu_h, half);
        if meets_profile(&taps, nu_l, nu_h, delta) {
            return Ok(taps);
        }
        half = half + half / 4 + 1;
        if 2 * half + 1 > MAX_TAPS {
            return Err(QnsError::Numerical(format!(
                "bandpass FIR for [{nu_l:.4}, {nu_h:.4}] rad/sample did not converge within {MAX_TAPS} taps"
            )));
        }
    }
}

fn windowed_sinc(nu_l: f64, nu_h: f64, half: usize) -> Vec<f64> {
    let n = 2 * half + 1;
    (0..n)
        .map(|i| {
            let m = i as f64 - half as f64;
            let ideal = if i == half {
                (nu_h - nu_l) / PI
            } else {
                ((nu_h * m).sin() - (nu_l * m).sin()) / (PI * m)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            ideal * w
        })
        .collect()
}

/// `sum_n h_n e^{-i nu n}`.
pub(crate) fn fir_response(taps: &[f64], nu: f64) -> Complex64 {
    taps.iter().enumerate().map(|(n, &h)| h * Complex64::from_polar(1.0, -nu * n as f64)).sum()
}

fn meets_profile(taps: &[f64], nu_l: f64, nu_h: f64, delta: f64) -> bool {
    let n_grid = 4 * taps.len().max(256);
    (0..=n_grid).all(|i| {
        let nu = PI * i as f64 / n_grid as f64;
        let g = fir_response(taps, nu).norm_sqr();
        if nu > nu_l + delta && nu < nu_h - delta {
            (0.9..=1.1).contains(&g)
        } else if nu < nu_l - delta || nu > nu_h + delta {
            g <= 0.1
        } else {
            true
        }
    })
}
