//! Enumeration of preparations, sequence pairs and measurement bases.

use crate::error::{QnsError, Result};
use crate::pulses::{cosine_fttps, free_evolution, repeat_sequence, sine_fttps, PulseSequence, WaveformSign};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Local measurement axes for the two qubits. Every basis yields a joint
/// outcome distribution, so `<O1>`, `<O2>` and `<O1 O2>` all come out of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Basis {
    pub q1: Pauli,
    pub q2: Pauli,
}

impl Basis {
    pub const fn new(q1: Pauli, q2: Pauli) -> Self {
        Self { q1, q2 }
    }

    pub fn label(&self) -> String {
        format!("{:?}{:?}", self.q1, self.q2)
    }
}

/// The four sequence combinations of the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combo {
    /// Cosine FTTPS on qubit 1, free evolution on qubit 2.
    CosFree,
    /// Free evolution on qubit 1, cosine FTTPS on qubit 2.
    FreeCos,
    /// Cosine FTTPS on both.
    CosCos,
    /// Cosine on qubit 1, sine on qubit 2.
    CosSin,
}

impl Combo {
    pub const ALL: [Combo; 4] = [Combo::CosFree, Combo::FreeCos, Combo::CosCos, Combo::CosSin];

    pub fn number(self) -> u8 {
        match self {
            Combo::CosFree => 1,
            Combo::FreeCos => 2,
            Combo::CosCos => 3,
            Combo::CosSin => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub combo: Combo,
    pub k: usize,
    pub prep: [Pauli; 2],
    pub sequences: [PulseSequence; 2],
    pub bases: Vec<Basis>,
    /// Free-evolution setting whose records also feed static estimation.
    pub statics: bool,
}

impl Setting {
    pub fn tag(&self) -> String {
        format!("combo{}/k{}", self.combo.number(), self.k)
    }

    pub fn n_slots(&self) -> usize {
        self.sequences[0].n_slots()
    }

    pub fn total_time(&self) -> f64 {
        self.sequences[0].total_time()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    /// Drop settings whose sequences place two pulses closer than this many
    /// slots (hardware fast-pulse limit). `None` keeps everything.
    #[serde(default)]
    pub min_pulse_gap: Option<usize>,
    /// Waveform for single-qubit control (combos 1, 2).
    #[serde(default)]
    pub single_sign: WaveformSign,
    /// Waveforms on (qubit 1, qubit 2) for combo 3.
    #[serde(default)]
    pub cos_cos_signs: [WaveformSign; 2],
    /// Waveforms on (qubit 1, qubit 2) for combo 4.
    #[serde(default)]
    pub cos_sin_signs: [WaveformSign; 2],
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            min_pulse_gap: None,
            single_sign: WaveformSign::Same,
            cos_cos_signs: [WaveformSign::Same; 2],
            cos_sin_signs: [WaveformSign::Same; 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Number of frequency bins; orders run over `0..k_max`.
    pub k_max: usize,
    pub m: u32,
    pub tau_pi: f64,
    pub repetitions: usize,
    pub settings: Vec<Setting>,
}

impl ExperimentPlan {
    /// Duration of one base period, which sets the frequency grid.
    pub fn base_period(&self) -> f64 {
        (1usize << (self.m + 1)) as f64 * self.tau_pi
    }

    pub fn total_time(&self) -> f64 {
        self.base_period() * self.repetitions as f64
    }

    pub fn n_slots(&self) -> usize {
        (1usize << (self.m + 1)) * self.repetitions
    }

    pub fn find(&self, combo: Combo, k: usize) -> Option<&Setting> {
        self.settings.iter().find(|s| s.combo == combo && s.k == k)
    }

    pub fn max_pulse_count(&self) -> usize {
        self.settings
            .iter()
            .flat_map(|s| s.sequences.iter().map(|q| q.pulse_count() / q.repetitions))
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.settings {
            for q in &s.sequences {
                q.validate()?;
            }
            let (a, b) = (s.sequences[0].total_time(), s.sequences[1].total_time());
            if a != b {
                return Err(QnsError::MismatchedDuration(a, b));
            }
            if s.n_slots() != self.n_slots() {
                return Err(QnsError::param("settings", format!("{} does not span the plan grid", s.tag())));
            }
        }
        Ok(())
    }
}

pub fn build_plan(k_max: usize, m: u32, tau_pi: f64, repetitions: usize) -> Result<ExperimentPlan> {
    build_plan_with(k_max, m, tau_pi, repetitions, &PlanOptions::default())
}

const SINGLE_Q1: [Basis; 2] = [Basis::new(Pauli::X, Pauli::Z), Basis::new(Pauli::Y, Pauli::Z)];
const SINGLE_Q2: [Basis; 2] = [Basis::new(Pauli::Z, Pauli::X), Basis::new(Pauli::Z, Pauli::Y)];
const PAIR: [Basis; 4] = [
    Basis::new(Pauli::X, Pauli::X),
    Basis::new(Pauli::Y, Pauli::Y),
    Basis::new(Pauli::X, Pauli::Y),
    Basis::new(Pauli::Y, Pauli::X),
];

/// Builds the full setting list for orders `0..k_max` on a `2^(m+1)` grid,
/// each sequence tiled `repetitions` times.
///
/// Combos 1-3 run `k = 0..k_max`, combo 4 `k = 1..k_max`. The `k = 0`
/// settings of combos 1-3 are the free-evolution runs that also serve the
/// static estimates, so they are not duplicated.
pub fn build_plan_with(
    k_max: usize,
    m: u32,
    tau_pi: f64,
    repetitions: usize,
    opts: &PlanOptions,
) -> Result<ExperimentPlan> {
    let half = 1usize << m.min(24);
    if k_max == 0 || k_max > half {
        return Err(QnsError::OrderOutOfRange { k: k_max, min: 1, max: half });
    }
    if repetitions == 0 {
        return Err(QnsError::param("repetitions", "must be at least 1"));
    }
    let tile = |s: PulseSequence, sign: WaveformSign| -> Result<PulseSequence> {
        repeat_sequence(&s.with_sign(sign), repetitions)
    };
    let free = || tile(free_evolution(m, tau_pi)?, WaveformSign::Same);
    let mut settings = Vec::new();
    for k in 0..k_max {
        let c = || cosine_fttps(k, m, tau_pi);
        settings.push(Setting {
            combo: Combo::CosFree,
            k,
            prep: [Pauli::X, Pauli::Z],
            sequences: [tile(c()?, opts.single_sign)?, free()?],
            bases: SINGLE_Q1.to_vec(),
            statics: k == 0,
        });
        settings.push(Setting {
            combo: Combo::FreeCos,
            k,
            prep: [Pauli::Z, Pauli::X],
            sequences: [free()?, tile(c()?, opts.single_sign)?],
            bases: SINGLE_Q2.to_vec(),
            statics: k == 0,
        });
        settings.push(Setting {
            combo: Combo::CosCos,
            k,
            prep: [Pauli::X, Pauli::X],
            sequences: [tile(c()?, opts.cos_cos_signs[0])?, tile(c()?, opts.cos_cos_signs[1])?],
            bases: PAIR.to_vec(),
            statics: k == 0,
        });
        if k >= 1 {
            settings.push(Setting {
                combo: Combo::CosSin,
                k,
                prep: [Pauli::X, Pauli::X],
                sequences: [tile(c()?, opts.cos_sin_signs[0])?, tile(sine_fttps(k, m, tau_pi)?, opts.cos_sin_signs[1])?],
                bases: PAIR.to_vec(),
                statics: false,
            });
        }
    }
    if let Some(gap) = opts.min_pulse_gap {
        settings.retain(|s| s.sequences.iter().all(|q| q.min_gap().is_none_or(|g| g >= gap)));
    }
    settings.sort_by_key(|s| (s.combo, s.k));
    let plan = ExperimentPlan { k_max, m, tau_pi, repetitions, settings };
    plan.validate()?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let p = build_plan(8, 6, 1e-9, 1).unwrap();
        assert_eq!(p.settings.len(), 4 * 8 - 1);
        assert_eq!(p.settings.iter().filter(|s| s.statics).count(), 3);
        let k1 = build_plan(1, 6, 1e-9, 1).unwrap();
        assert!(k1.settings.iter().all(|s| s.combo != Combo::CosSin));
        assert!(build_plan(65, 6, 1e-9, 1).is_err());
        assert!(build_plan(0, 6, 1e-9, 1).is_err());
    }

    #[test]
    fn max_pulses_for_full_grid() {
        let p = build_plan(64, 6, 1e-9, 1).unwrap();
        assert_eq!(p.max_pulse_count(), 126);
        assert_eq!(p.n_slots(), 128);
    }

    #[test]
    fn gap_filter_drops_dense_sequences() {
        let opts = PlanOptions { min_pulse_gap: Some(3), ..Default::default() };
        let p = build_plan_with(64, 6, 1e-9, 1, &opts).unwrap();
        assert!(p.settings.len() < 4 * 64 - 1);
        assert!(p.settings.iter().all(|s| s.sequences.iter().all(|q| q.min_gap().is_none_or(|g| g >= 3))));
    }
}
