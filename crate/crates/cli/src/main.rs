use clap::{Parser, Subcommand, ValueEnum};
use qns_core::estimation::{background_subtract, mae_table, reconstruct, MaeRow, SpectrumEstimate, StaticsEstimate};
use qns_core::filter::{FilterModel, FrequencyGrid};
use qns_core::noise::{AnalyticSpectra, RealizedSpectra, SpectralDensity, SpectrumTable};
use qns_core::oracle::{oracle_records, setting_angles, OverlapQuadrature};
use qns_core::records::RecordSet;
use qns_core::simulator::{run_plan, StaticParams};
use qns_core::studies;
use qns_core::{ErrorKind, QnsError};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

mod config;
use config::{ConfigError, FilterChoice, RunConfig};

#[derive(Parser)]
#[command(name = "qns", version, about = "Two-qubit noise spectroscopy with FTTPS sequences")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the experiment plan and write plan.json.
    Plan,
    /// Generate measurement records (records.json) and the true spectra (truth.csv).
    Simulate {
        /// Exact outcome probabilities regardless of `simulation.shots`.
        #[arg(long)]
        infinite_shots: bool,
        /// Use the cumulant oracle instead of Monte Carlo.
        #[arg(long)]
        oracle: bool,
    },
    /// Reconstruct spectra from records.
    Reconstruct {
        #[arg(long)]
        /// Records file written by `simulate`.
        records: PathBuf,
        /// Records of the native background to subtract.
        #[arg(long)]
        subtract: Option<PathBuf>,
        /// Reference spectra CSV for the MAE table.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run one of the built-in studies.
    Study {
        #[arg(value_enum)]
        which: StudyKind,
    },
    /// Write the oracle's decay exponents and static angles per setting.
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    DelaySweep,
    Comb,
    PulseWidth,
    Mitigation,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] QnsError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {message}")]
    Input { path: String, message: String },
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigError::Invalid(e)) | CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            },
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Input { .. } | CliError::Output { .. } => 3,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    let path = cli.config.as_deref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.override_seed(s);
    }
    if let Some(d) = cli.out_dir {
        cfg.output_dir = d;
    }
    match cli.command {
        Command::Plan => cmd_plan(&cfg),
        Command::Simulate { infinite_shots, oracle } => cmd_simulate(&cfg, infinite_shots, oracle),
        Command::Reconstruct { records, subtract, truth } => cmd_reconstruct(&cfg, &records, subtract.as_deref(), truth.as_deref()),
        Command::Study { which } => cmd_study(&cfg, which),
        Command::Oracle => cmd_oracle(&cfg),
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> CliResult<PathBuf> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.display().to_string(), source })?;
    Ok(dir.join(name))
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> qns_core::Result<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).map_err(|source| CliError::Output { path: path.display().to_string(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, |w| Ok(serde_json::to_writer_pretty(w, value)?))
}

fn cmd_plan(cfg: &RunConfig) -> CliResult<()> {
    let plan = cfg.plan()?;
    let path = out_path(cfg, "plan.json")?;
    write_json(&path, &plan)?;
    println!("settings: {}", plan.settings.len());
    println!("max pulses per qubit: {}", plan.max_pulse_count());
    println!("total time: {:e} s", plan.total_time());
    println!("wrote {}", path.display());
    Ok(())
}

/// Spectra the forward model should use: the realized spectra of the
/// discrete generator with step-sampled filters, the continuous targets
/// otherwise.
fn model_spectra(cfg: &RunConfig) -> CliResult<Box<dyn SpectralDensity>> {
    let model = cfg.noise_model()?;
    Ok(match cfg.estimation.filter_model {
        FilterChoice::Sampled => Box::new(RealizedSpectra::new(&model, cfg.tau_pi()?)?),
        FilterChoice::Continuous => Box::new(AnalyticSpectra::new(&model)),
    })
}

fn grid(cfg: &RunConfig) -> CliResult<FrequencyGrid> {
    Ok(FrequencyGrid::new(cfg.base_period()?, cfg.plan.k_max)?)
}

fn cmd_simulate(cfg: &RunConfig, infinite_shots: bool, oracle: bool) -> CliResult<()> {
    let plan = cfg.plan()?;
    let statics = cfg.statics()?;
    let mut records = if oracle {
        oracle_records(&plan, model_spectra(cfg)?.as_ref(), &statics, cfg.filter_model()?, &cfg.simulation.readout)?
    } else {
        let mut opts = cfg.sim_options();
        if infinite_shots {
            opts.shots = None;
        }
        run_plan(&plan, &cfg.noise_model()?, &statics, &opts)?
    };
    if !cfg.simulation.keep_trajectories {
        for b in records.settings.iter_mut().flat_map(|s| s.bases.iter_mut()) {
            b.per_trajectory.clear();
        }
    }
    records.provenance.master_seed = (!oracle).then_some(cfg.simulation.seed);
    records.provenance.config_hash = Some(cfg.hash());

    let truth = SpectrumTable::tabulate(model_spectra(cfg)?.as_ref(), &grid(cfg)?.centers());
    let rec_path = out_path(cfg, "records.json")?;
    write_json(&rec_path, &records)?;
    let truth_path = out_path(cfg, "truth.csv")?;
    write_file(&truth_path, |w| truth.write_csv(w))?;
    println!("settings: {}, trajectories: {}", records.settings.len(), records.n_trajectories);
    println!("wrote {} and {}", rec_path.display(), truth_path.display());
    Ok(())
}

fn load_records(path: &Path) -> CliResult<RecordSet> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input { path: path.display().to_string(), message: e.to_string() })?;
    let records: RecordSet = serde_json::from_str(&text)
        .map_err(|e| CliError::Core(QnsError::MalformedRecord(format!("{}: {e}", path.display()))))?;
    records.validate()?;
    Ok(records)
}

/// Reads a spectra CSV with the columns written by `simulate`; lines
/// starting with `#` are skipped.
fn load_truth(path: &Path) -> CliResult<SpectrumTable> {
    let bad = |message: String| CliError::Input { path: path.display().to_string(), message };
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let names = ["omega_rad_s", "s11", "s22", "re_s12", "im_s12", "s1212"];
    let idx = names
        .iter()
        .map(|n| headers.iter().position(|h| h == *n).ok_or_else(|| bad(format!("missing column `{n}`"))))
        .collect::<CliResult<Vec<_>>>()?;
    let mut cols: [Vec<f64>; 6] = Default::default();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for (c, &i) in idx.iter().enumerate() {
            let v = rec.get(i).unwrap_or("").parse::<f64>().map_err(|e| bad(format!("row {}: `{}`: {e}", line + 1, names[c])))?;
            cols[c].push(v);
        }
    }
    let [omega, s11, s22, re_s12, im_s12, s1212] = cols;
    Ok(SpectrumTable { omega, s11, s22, re_s12, im_s12, s1212 })
}

#[derive(Serialize)]
struct Report<'a> {
    config_hash: String,
    seed: Option<u64>,
    n_trajectories: usize,
    shots: Option<u64>,
    statics: Option<StaticsEstimate>,
    statics_true: StaticParams,
    condition_number: f64,
    rank: usize,
    residual_norm: f64,
    clamped_rows: &'a [String],
    background_subtracted: bool,
    mae: Option<Vec<MaeRow>>,
}

fn cmd_reconstruct(cfg: &RunConfig, records_path: &Path, subtract: Option<&Path>, truth: Option<&Path>) -> CliResult<()> {
    let plan = cfg.plan()?;
    let records = load_records(records_path)?;
    if records.m != plan.m || records.k_max < plan.k_max || records.repetitions != plan.repetitions {
        return Err(CliError::Core(QnsError::MissingData(format!(
            "records (m={}, k_max={}, repetitions={}) do not cover the configured plan (m={}, k_max={}, repetitions={})",
            records.m, records.k_max, records.repetitions, plan.m, plan.k_max, plan.repetitions
        ))));
    }
    let mut opts = cfg.reconstruct_options(records.readout.as_ref())?;
    if opts.bootstrap_resamples > 0 && !records.has_trajectories() {
        eprintln!("warning: records carry no per-trajectory data; skipping bootstrap intervals");
        opts.bootstrap_resamples = 0;
    }
    let (mut estimate, _) = reconstruct(&records, &plan, &opts)?;
    if let Some(p) = subtract {
        let native = load_records(p)?;
        let mut bg_opts = cfg.reconstruct_options(native.readout.as_ref())?;
        if !native.has_trajectories() {
            bg_opts.bootstrap_resamples = 0;
        }
        let (bg, _) = reconstruct(&native, &plan, &bg_opts)?;
        let statics = estimate.statics;
        estimate = background_subtract(&estimate, &bg)?;
        estimate.statics = statics;
    }
    let mae = match truth {
        Some(p) => {
            let t = load_truth(p)?;
            let [a, b] = cfg.estimation.mae_band.unwrap_or([0, estimate.spectra.len()]);
            Some(mae_table(&estimate.spectra, &t, a..b)?)
        }
        None => None,
    };

    let seed = records.provenance.master_seed;
    let hash = cfg.hash();
    let spectra_path = out_path(cfg, "spectra.csv")?;
    write_file(&spectra_path, |w| {
        writeln!(w, "# config_hash={hash} seed={}", seed.map_or("none".to_string(), |s| s.to_string()))?;
        estimate.write_csv(w)
    })?;
    let report = Report {
        config_hash: hash,
        seed,
        n_trajectories: records.n_trajectories,
        shots: records.shots,
        statics: estimate.statics,
        statics_true: cfg.statics()?,
        condition_number: estimate.condition_number,
        rank: estimate.rank,
        residual_norm: estimate.residual_norm,
        clamped_rows: &estimate.clamped_rows,
        background_subtracted: subtract.is_some(),
        mae,
    };
    let report_path = out_path(cfg, "report.json")?;
    write_json(&report_path, &report)?;
    print_estimate_summary(&estimate, report.mae.as_deref());
    println!("wrote {} and {}", spectra_path.display(), report_path.display());
    Ok(())
}

fn print_estimate_summary(e: &SpectrumEstimate, mae: Option<&[MaeRow]>) {
    println!("condition number: {:.3}, rank: {}", e.condition_number, e.rank);
    if let Some(s) = &e.statics {
        println!("delta1 = {:.6e} rad/s, delta2 = {:.6e} rad/s, J = {:.6e} rad/s", s.delta1, s.delta2, s.j);
        if s.wrap_delta1 || s.wrap_delta2 || s.wrap_j || s.j_clamped {
            println!("warning: static estimates near the phase-wrap limit");
        }
    }
    if !e.clamped_rows.is_empty() {
        println!("warning: {} decay rows clamped", e.clamped_rows.len());
    }
    for r in mae.unwrap_or_default() {
        println!("MAE {:<7} {:.6e} ({:.2}% of range)", r.spectrum, r.mae, r.percent_of_range);
    }
}

fn cmd_oracle(cfg: &RunConfig) -> CliResult<()> {
    let plan = cfg.plan()?;
    let spectra = model_spectra(cfg)?;
    let statics = cfg.statics()?;
    let model: FilterModel = cfg.filter_model()?;
    let quad = OverlapQuadrature::default();
    let path = out_path(cfg, "oracle.csv")?;
    write_file(&path, |w| {
        writeln!(w, "# config_hash={}", cfg.hash())?;
        writeln!(w, "combo,k,theta1,theta2,theta12,chi11,chi22,chi1212,chi12,pulses1,pulses2")?;
        for s in &plan.settings {
            let a = setting_angles(s, spectra.as_ref(), &statics, model, &quad)?;
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                s.combo.number(),
                s.k,
                a.theta1,
                a.theta2,
                a.theta12,
                a.chi11,
                a.chi22,
                a.chi1212,
                a.chi12,
                s.sequences[0].pulse_count(),
                s.sequences[1].pulse_count()
            )?;
        }
        Ok(())
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_study(cfg: &RunConfig, which: StudyKind) -> CliResult<()> {
    let st = &cfg.studies;
    let hash = cfg.hash();
    match which {
        StudyKind::DelaySweep => {
            let cases = studies::delay_sweep(&st.delay_sweep)?;
            let path = out_path(cfg, "delay_sweep.csv")?;
            write_file(&path, |w| {
                writeln!(w, "# config_hash={hash} seed={}", st.delay_sweep.seed)?;
                writeln!(w, "delay_s,mae_re_pct,mae_im_pct,fitted_delay_s,fitted_period_rad_s")?;
                for c in &cases {
                    writeln!(w, "{:e},{:.4},{:.4},{:e},{:e}", c.delay, c.mae_re.percent_of_range, c.mae_im.percent_of_range, c.fitted_delay, c.fitted_period)?;
                }
                Ok(())
            })?;
            for (i, c) in cases.iter().enumerate() {
                let p = out_path(cfg, &format!("delay_sweep_{i}.csv"))?;
                write_file(&p, |w| c.estimate.write_csv(w))?;
                println!(
                    "delay {:.3e} s: Re MAE {:.2}%, Im MAE {:.2}%, fitted delay {:.3e} s",
                    c.delay, c.mae_re.percent_of_range, c.mae_im.percent_of_range, c.fitted_delay
                );
            }
            println!("wrote {}", path.display());
        }
        StudyKind::Comb => {
            let cases = studies::comb_compare(&st.comb_compare)?;
            let path = out_path(cfg, "comb_compare.csv")?;
            write_file(&path, |w| {
                writeln!(w, "# config_hash={hash} seed={}", st.comb_compare.seed)?;
                writeln!(w, "alpha,mae_single,mae_single_pct,mae_comb,mae_comb_pct")?;
                for c in &cases {
                    writeln!(
                        w,
                        "{},{:e},{:.4},{:e},{:.4}",
                        c.alpha, c.mae_single.mae, c.mae_single.percent_of_range, c.mae_comb.mae, c.mae_comb.percent_of_range
                    )?;
                }
                Ok(())
            })?;
            for c in &cases {
                println!(
                    "alpha {}: single-period MAE {:.2}%, repeated MAE {:.2}%",
                    c.alpha, c.mae_single.percent_of_range, c.mae_comb.percent_of_range
                );
            }
            println!("wrote {}", path.display());
        }
        StudyKind::PulseWidth => {
            let rows = studies::pulse_width_study(&st.pulse_width)?;
            let path = out_path(cfg, "pulse_width.csv")?;
            write_file(&path, |w| {
                writeln!(w, "# config_hash={hash}")?;
                writeln!(w, "seed,same_sign_error,alternating_sign_error")?;
                for r in &rows {
                    writeln!(w, "{},{:e},{:e}", r.seed, r.same, r.alternating)?;
                }
                Ok(())
            })?;
            for r in &rows {
                println!("seed {}: same-sign {:.4e}, alternating {:.4e}", r.seed, r.same, r.alternating);
            }
            println!("wrote {}", path.display());
        }
        StudyKind::Mitigation => {
            let rep = studies::mitigation_compare(&st.mitigation_compare)?;
            let path = out_path(cfg, "mitigation.json")?;
            write_json(&path, &rep)?;
            let raw = out_path(cfg, "mitigation_raw.csv")?;
            write_file(&raw, |w| rep.raw.write_csv(w))?;
            let mit = out_path(cfg, "mitigation_mitigated.csv")?;
            write_file(&mit, |w| rep.mitigated.write_csv(w))?;
            println!("{} of {} expectations outside 3 standard errors (max |z| {:.2})", rep.n_outside, rep.n_checked, rep.max_abs_z);
            println!("max |raw - mitigated|: self/crosstalk {:.4e}, cross {:.4e}", rep.max_diff_self, rep.max_diff_cross);
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
