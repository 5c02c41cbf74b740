//! Run configuration: one JSON document per run.

use qns_core::estimation::{ExtractOptions, InversionOptions, ReconstructOptions, CHI_MAX};
use qns_core::filter::FilterModel;
use qns_core::noise::NoiseModel;
use qns_core::plan::{build_plan_with, ExperimentPlan, PlanOptions};
use qns_core::records::ReadoutModel;
use qns_core::simulator::{PulseModel, SimOptions, StaticParams};
use qns_core::studies::{BenchmarkNoise, CombConfig, DelaySweepConfig, MitigationConfig, PulseWidthConfig};
use qns_core::QnsError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub noise: NoiseSection,
    /// Static detunings and coupling (rad/s). Benchmark noise supplies its
    /// own when absent.
    #[serde(default)]
    pub statics: Option<StaticParams>,
    pub plan: PlanSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub studies: StudiesSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("qns-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSection {
    /// The built-in two-qubit benchmark, rates in units of the base period.
    Benchmark(BenchmarkNoise),
    Model(NoiseModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    /// Number of frequency bins; orders `0..k_max`.
    pub k_max: usize,
    pub m: u32,
    /// Base period `T` (s). Give this or `tau_pi`.
    #[serde(default)]
    pub period: Option<f64>,
    /// Slot duration (s).
    #[serde(default)]
    pub tau_pi: Option<f64>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub options: PlanOptions,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n_trajectories: usize,
    /// Shots per trajectory and basis; `null` for exact probabilities.
    pub shots: Option<u64>,
    pub seed: u64,
    #[serde(default)]
    pub pulse_model: PulseModel,
    #[serde(default = "ReadoutModel::ideal")]
    pub readout: ReadoutModel,
    /// Keep per-trajectory tallies in `records.json` (needed for bootstrap
    /// intervals; large for long runs).
    #[serde(default)]
    pub keep_trajectories: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_trajectories: 100,
            shots: None,
            seed: 1,
            pulse_model: PulseModel::Instantaneous,
            readout: ReadoutModel::ideal(),
            keep_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterChoice {
    /// Step-sampled transforms matching the simulator's phase kicks.
    #[default]
    Sampled,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    #[serde(default)]
    pub filter_model: FilterChoice,
    #[serde(default = "default_chi_max")]
    pub chi_max: f64,
    /// Undo the readout channel recorded with the data.
    #[serde(default)]
    pub mitigate: bool,
    #[serde(default)]
    pub nonnegative: bool,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default)]
    pub drop_clamped: bool,
    #[serde(default)]
    pub bootstrap_resamples: usize,
    /// Bin range `[start, end)` for MAE; all bins when absent.
    #[serde(default)]
    pub mae_band: Option<[usize; 2]>,
}

fn default_chi_max() -> f64 {
    CHI_MAX
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self {
            filter_model: FilterChoice::Sampled,
            chi_max: CHI_MAX,
            mitigate: false,
            nonnegative: false,
            weighted: false,
            drop_clamped: false,
            bootstrap_resamples: 0,
            mae_band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudiesSection {
    #[serde(default)]
    pub delay_sweep: DelaySweepConfig,
    #[serde(default)]
    pub comb_compare: CombConfig,
    #[serde(default)]
    pub pulse_width: PulseWidthConfig,
    #[serde(default)]
    pub mitigation_compare: MitigationConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: at `{field}`: {message}")]
    Parse { path: String, field: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(#[from] QnsError),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), QnsError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(QnsError::InvalidParameter {
                field: "schema_version".into(),
                reason: format!("{} is not supported (expected {CONFIG_SCHEMA_VERSION})", self.schema_version),
            });
        }
        let plan = self.plan()?;
        self.noise_model()?.validate(plan.tau_pi)?;
        if self.simulation.n_trajectories == 0 {
            return Err(QnsError::InvalidParameter { field: "simulation.n_trajectories".into(), reason: "must be positive".into() });
        }
        if self.simulation.shots == Some(0) {
            return Err(QnsError::InvalidParameter { field: "simulation.shots".into(), reason: "must be positive or null".into() });
        }
        self.simulation.readout.validate().map_err(|e| prefix(e, "simulation.readout"))?;
        if !(self.estimation.chi_max > 0.0) {
            return Err(QnsError::InvalidParameter { field: "estimation.chi_max".into(), reason: "must be positive".into() });
        }
        if self.estimation.bootstrap_resamples > 0 && !self.simulation.keep_trajectories {
            return Err(QnsError::InvalidParameter {
                field: "estimation.bootstrap_resamples".into(),
                reason: "bootstrap needs simulation.keep_trajectories = true".into(),
            });
        }
        if let Some([a, b]) = self.estimation.mae_band {
            if a >= b || b > self.plan.k_max {
                return Err(QnsError::InvalidParameter {
                    field: "estimation.mae_band".into(),
                    reason: format!("need start < end <= k_max ({})", self.plan.k_max),
                });
            }
        }
        Ok(())
    }

    pub fn tau_pi(&self) -> Result<f64, QnsError> {
        let slots = (1u64 << (self.plan.m.min(30) + 1)) as f64;
        match (self.plan.period, self.plan.tau_pi) {
            (Some(t), None) if t > 0.0 && t.is_finite() => Ok(t / slots),
            (None, Some(d)) if d > 0.0 && d.is_finite() => Ok(d),
            (Some(_), Some(_)) | (None, None) => Err(QnsError::InvalidParameter {
                field: "plan".into(),
                reason: "give exactly one of `period` and `tau_pi`".into(),
            }),
            _ => Err(QnsError::InvalidParameter { field: "plan.period/tau_pi".into(), reason: "must be finite and positive".into() }),
        }
    }

    pub fn plan(&self) -> Result<ExperimentPlan, QnsError> {
        let p = &self.plan;
        build_plan_with(p.k_max, p.m, self.tau_pi()?, p.repetitions, &p.options).map_err(|e| prefix(e, "plan"))
    }

    pub fn base_period(&self) -> Result<f64, QnsError> {
        Ok(self.tau_pi()? * (1u64 << (self.plan.m + 1)) as f64)
    }

    pub fn noise_model(&self) -> Result<NoiseModel, QnsError> {
        match &self.noise {
            NoiseSection::Benchmark(b) => b.model(self.base_period()?, self.tau_pi()?),
            NoiseSection::Model(m) => Ok(m.clone()),
        }
    }

    pub fn statics(&self) -> Result<StaticParams, QnsError> {
        match (&self.statics, &self.noise) {
            (Some(s), _) => Ok(*s),
            (None, NoiseSection::Benchmark(b)) => Ok(b.statics(self.base_period()? * self.plan.repetitions as f64)),
            (None, NoiseSection::Model(_)) => Ok(StaticParams::default()),
        }
    }

    pub fn filter_model(&self) -> Result<FilterModel, QnsError> {
        Ok(match self.estimation.filter_model {
            FilterChoice::Sampled => FilterModel::Sampled { dt: self.tau_pi()? },
            FilterChoice::Continuous => FilterModel::Continuous,
        })
    }

    pub fn sim_options(&self) -> SimOptions {
        let s = &self.simulation;
        SimOptions {
            n_trajectories: s.n_trajectories,
            shots: s.shots,
            readout: s.readout.clone(),
            pulse_model: s.pulse_model.clone(),
            master_seed: s.seed,
        }
    }

    /// Options for reconstruction; `readout` is the channel recorded with
    /// the data, used only when mitigation is enabled.
    pub fn reconstruct_options(&self, readout: Option<&ReadoutModel>) -> Result<ReconstructOptions, QnsError> {
        let e = &self.estimation;
        Ok(ReconstructOptions {
            model: self.filter_model()?,
            extract: ExtractOptions { chi_max: e.chi_max, mitigate: if e.mitigate { readout.cloned() } else { None } },
            inversion: InversionOptions {
                nonnegative: e.nonnegative,
                weighted: e.weighted,
                drop_clamped: e.drop_clamped,
                ..Default::default()
            },
            bootstrap_resamples: e.bootstrap_resamples,
            bootstrap_seed: self.simulation.seed,
        })
    }

    /// Replaces every seed in the document.
    pub fn override_seed(&mut self, seed: u64) {
        self.simulation.seed = seed;
        self.studies.delay_sweep.seed = seed;
        self.studies.comb_compare.seed = seed;
        self.studies.mitigation_compare.seed = seed;
    }

    /// SHA-256 of the canonical serialization, ignoring where output goes.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = Default::default();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn prefix(e: QnsError, path: &str) -> QnsError {
    match e {
        QnsError::InvalidParameter { field, reason } => QnsError::InvalidParameter { field: format!("{path}.{field}"), reason },
        other => other,
    }
}
