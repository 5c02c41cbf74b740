//! Fixed-total-time pulse sequences and their switching functions.
//!
//! A sequence lives on a grid of `2^(m+1)` slots of width `tau_pi`. A pulse in
//! slot `s` is applied at time `s * tau_pi` and flips the toggling-frame sign
//! of the qubit's Z operator from that instant on.

use crate::error::{QnsError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Cosine,
    Sine,
    Free,
}

/// Sign pattern of the drive waveform; only matters for finite-width pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformSign {
    #[default]
    Same,
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub kind: SequenceKind,
    pub k: usize,
    pub m: u32,
    pub tau_pi: f64,
    pub pulse_slots: Vec<usize>,
    #[serde(default)]
    pub waveform_sign: WaveformSign,
    /// Number of times the base period is tiled.
    #[serde(default = "one")]
    pub repetitions: usize,
}

fn one() -> usize {
    1
}

fn check_grid(m: u32, tau_pi: f64) -> Result<()> {
    if m == 0 || m > 24 {
        return Err(QnsError::param("m", "grid exponent must be in 1..=24"));
    }
    if !(tau_pi > 0.0 && tau_pi.is_finite()) {
        return Err(QnsError::param("tau_pi", "must be finite and positive"));
    }
    Ok(())
}

/// `floor(num / den + 1/2)` in exact integer arithmetic.
fn round_half_up(num: usize, den: usize) -> usize {
    (2 * num + den) / (2 * den)
}

/// Cosine FTTPS of order `k`: pulses at the `2k` zeros of `cos(2 pi k t / T)`
/// rounded to the slot grid. `k = 0` is free evolution.
pub fn cosine_fttps(k: usize, m: u32, tau_pi: f64) -> Result<PulseSequence> {
    check_grid(m, tau_pi)?;
    let half = 1usize << m;
    if k >= half {
        return Err(QnsError::OrderOutOfRange { k, min: 0, max: half - 1 });
    }
    // Zero l sits at (2l + 1) T / (4k) = (2l + 1) 2^(m-1) / k slots.
    let pulse_slots = (0..2 * k).map(|l| round_half_up((2 * l + 1) * (half / 2), k)).collect();
    let kind = if k == 0 { SequenceKind::Free } else { SequenceKind::Cosine };
    Ok(PulseSequence { kind, k, m, tau_pi, pulse_slots, waveform_sign: WaveformSign::Same, repetitions: 1 })
}

/// Sine FTTPS of order `k >= 1`: pulses at the first `2k` zeros of
/// `sin(2 pi k t / T)` in `[0, T)`, the zero at `t = 0` included.
pub fn sine_fttps(k: usize, m: u32, tau_pi: f64) -> Result<PulseSequence> {
    check_grid(m, tau_pi)?;
    let half = 1usize << m;
    if k == 0 || k >= half {
        return Err(QnsError::OrderOutOfRange { k, min: 1, max: half - 1 });
    }
    let pulse_slots = (0..2 * k).map(|l| round_half_up(l * half, k)).collect();
    Ok(PulseSequence { kind: SequenceKind::Sine, k, m, tau_pi, pulse_slots, waveform_sign: WaveformSign::Same, repetitions: 1 })
}

pub fn free_evolution(m: u32, tau_pi: f64) -> Result<PulseSequence> {
    cosine_fttps(0, m, tau_pi)
}

/// Tiles `seq` `reps` times back to back.
pub fn repeat_sequence(seq: &PulseSequence, reps: usize) -> Result<PulseSequence> {
    if reps == 0 {
        return Err(QnsError::param("repetitions", "must be at least 1"));
    }
    let n = seq.n_slots();
    let pulse_slots = (0..reps).flat_map(|r| seq.pulse_slots.iter().map(move |&s| s + r * n)).collect();
    Ok(PulseSequence { pulse_slots, repetitions: seq.repetitions * reps, ..seq.clone() })
}

impl PulseSequence {
    /// Slots in one base period, `2^(m+1)`.
    pub fn base_slots(&self) -> usize {
        1usize << (self.m + 1)
    }

    pub fn n_slots(&self) -> usize {
        self.base_slots() * self.repetitions
    }

    pub fn base_period(&self) -> f64 {
        self.base_slots() as f64 * self.tau_pi
    }

    pub fn total_time(&self) -> f64 {
        self.n_slots() as f64 * self.tau_pi
    }

    pub fn pulse_count(&self) -> usize {
        self.pulse_slots.len()
    }

    pub fn with_sign(mut self, sign: WaveformSign) -> Self {
        self.waveform_sign = sign;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_grid(self.m, self.tau_pi)?;
        if self.repetitions == 0 {
            return Err(QnsError::param("repetitions", "must be at least 1"));
        }
        if self.pulse_slots.len() % 2 != 0 {
            return Err(QnsError::param("pulse_slots", "pulse count must be even"));
        }
        if self.kind == SequenceKind::Free && !self.pulse_slots.is_empty() {
            return Err(QnsError::param("pulse_slots", "free evolution has no pulses"));
        }
        let n = self.n_slots();
        if self.pulse_slots.windows(2).any(|w| w[0] >= w[1]) || self.pulse_slots.last().is_some_and(|&s| s >= n) {
            return Err(QnsError::param("pulse_slots", format!("must be strictly increasing and below {n}")));
        }
        Ok(())
    }

    /// Sign of the drive for the `i`th pulse: +1, or alternating +1/-1.
    pub fn pulse_sign(&self, i: usize) -> f64 {
        match self.waveform_sign {
            WaveformSign::Same => 1.0,
            WaveformSign::Alternating if i % 2 == 0 => 1.0,
            WaveformSign::Alternating => -1.0,
        }
    }

    /// Toggling-frame sign in each slot.
    pub fn slot_signs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_slots());
        let mut next = self.pulse_slots.iter().peekable();
        let mut s = 1.0;
        for slot in 0..self.n_slots() {
            while next.next_if(|&&p| p == slot).is_some() {
                s = -s;
            }
            out.push(s);
        }
        out
    }

    /// Smallest gap between consecutive pulses in slots (`None` for < 2 pulses).
    pub fn min_gap(&self) -> Option<usize> {
        self.pulse_slots.windows(2).map(|w| w[1] - w[0]).min()
    }
}

/// Piecewise-constant +-1 function on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingFunction {
    /// `n + 1` increasing times from 0 to T.
    pub boundaries: Vec<f64>,
    /// `n` segment values, each +1 or -1.
    pub signs: Vec<f64>,
}

impl SwitchingFunction {
    pub fn new(boundaries: Vec<f64>, signs: Vec<f64>) -> Result<Self> {
        if boundaries.len() != signs.len() + 1 || signs.is_empty() {
            return Err(QnsError::param("boundaries", "need one more boundary than segments"));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) || boundaries[0] != 0.0 {
            return Err(QnsError::param("boundaries", "must start at 0 and increase strictly"));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(QnsError::param("signs", "must be +1 or -1"));
        }
        Ok(Self { boundaries, signs })
    }

    pub fn total_time(&self) -> f64 {
        *self.boundaries.last().expect("non-empty")
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.boundaries.partition_point(|&b| b <= t).clamp(1, self.signs.len());
        self.signs[i - 1]
    }

    /// `int_0^T y dt`.
    pub fn integral(&self) -> f64 {
        self.segments().map(|(a, b, s)| s * (b - a)).sum()
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.boundaries.windows(2).zip(&self.signs).map(|(w, &s)| (w[0], w[1], s))
    }

    /// Pointwise product, e.g. `y12 = y1 y2`.
    pub fn product(&self, other: &SwitchingFunction) -> Result<SwitchingFunction> {
        let (ta, tb) = (self.total_time(), other.total_time());
        if (ta - tb).abs() > 1e-12 * ta.max(tb) {
            return Err(QnsError::MismatchedDuration(ta, tb));
        }
        let mut cuts: Vec<f64> = self.boundaries.iter().chain(&other.boundaries[..other.boundaries.len() - 1]).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * ta);
        *cuts.last_mut().expect("non-empty") = ta;
        let signs = cuts.windows(2).map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            self.eval(mid) * other.eval(mid)
        });
        let signs: Vec<f64> = signs.collect();
        Ok(merge(cuts, signs))
    }
}

/// Drops boundaries between equal-sign segments.
fn merge(bounds: Vec<f64>, signs: Vec<f64>) -> SwitchingFunction {
    let mut b = vec![bounds[0]];
    let mut s: Vec<f64> = Vec::new();
    for (i, &v) in signs.iter().enumerate() {
        if s.last() == Some(&v) {
            *b.last_mut().expect("non-empty") = bounds[i + 1];
        } else {
            s.push(v);
            b.push(bounds[i + 1]);
        }
    }
    SwitchingFunction { boundaries: b, signs: s }
}

pub fn switching_function(seq: &PulseSequence) -> SwitchingFunction {
    let dt = seq.tau_pi;
    let signs = seq.slot_signs();
    let bounds = (0..=signs.len()).map(|i| i as f64 * dt).collect();
    merge(bounds, signs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_k1_m3() {
        let s = cosine_fttps(1, 3, 1.0).unwrap();
        assert_eq!(s.pulse_slots, vec![4, 12]);
        assert_eq!(s.total_time(), 16.0);
    }

    #[test]
    fn sine_k1_m3() {
        let s = sine_fttps(1, 3, 1.0).unwrap();
        assert_eq!(s.pulse_slots, vec![0, 8]);
        let y = switching_function(&s);
        assert_eq!(y.signs, vec![-1.0, 1.0]);
        assert_eq!(y.boundaries, vec![0.0, 8.0, 16.0]);
    }

    #[test]
    fn order_ranges() {
        assert!(cosine_fttps(0, 6, 1.0).unwrap().pulse_slots.is_empty());
        assert!(cosine_fttps(63, 6, 1.0).is_ok());
        assert!(matches!(cosine_fttps(64, 6, 1.0), Err(QnsError::OrderOutOfRange { .. })));
        assert!(sine_fttps(0, 6, 1.0).is_err());
        assert_eq!(cosine_fttps(63, 6, 1.0).unwrap().pulse_count(), 126);
    }

    #[test]
    fn all_orders_valid_and_distinct() {
        for m in 1..=7 {
            for k in 0..(1usize << m) {
                let c = cosine_fttps(k, m, 1.0).unwrap();
                c.validate().unwrap();
                assert_eq!(c.pulse_count(), 2 * k);
                if k > 0 {
                    let s = sine_fttps(k, m, 1.0).unwrap();
                    s.validate().unwrap();
                    assert_eq!(s.pulse_count(), 2 * k);
                }
            }
        }
    }

    #[test]
    fn free_switching_and_single_flip() {
        let f = switching_function(&free_evolution(3, 1.0).unwrap());
        assert_eq!(f.signs, vec![1.0]);
        assert_eq!(f.integral(), 16.0);
        let one = SwitchingFunction::new(vec![0.0, 8.0, 16.0], vec![1.0, -1.0]).unwrap();
        assert_eq!(one.eval(4.0), 1.0);
        assert_eq!(one.eval(12.0), -1.0);
    }

    #[test]
    fn product_with_free_is_identity() {
        let c = switching_function(&cosine_fttps(3, 4, 0.5).unwrap());
        let f = switching_function(&free_evolution(4, 0.5).unwrap());
        assert_eq!(c.product(&f).unwrap(), c);
    }

    #[test]
    fn repetition() {
        let c = cosine_fttps(1, 3, 1.0).unwrap();
        assert_eq!(repeat_sequence(&c, 1).unwrap(), c);
        let r = repeat_sequence(&c, 4).unwrap();
        assert_eq!(r.pulse_count(), 8);
        assert_eq!(r.total_time(), 64.0);
        let y = r.slot_signs();
        for i in 0..48 {
            assert_eq!(y[i], y[i + 16]);
        }
    }
}
