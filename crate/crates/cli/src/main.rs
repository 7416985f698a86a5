//! `ascsense`: simulator, Monte Carlo harness and acceptance runner.
//!
//! Exit codes: 0 success, 1 an acceptance check failed, 2 usage error,
//! 3 malformed or invalid configuration, 4 missing input file, 5 malformed
//! data file, 6 other I/O failure, 7 estimation failure.

use anyhow::Context;
use ascsense::acceptance::{self, AcceptanceOptions, AccuracySweep, CriterionReport};
use ascsense::estimation::doppler_readout;
use ascsense::harness::{aggregate, emit_outputs, run_pipeline, run_sweep, ExperimentConfig, Method, PipelineOutput, TargetCount, TrialInput};
use ascsense::io::{read_csi_dump, write_csi_dump};
use ascsense::residual::ReferenceStaticResponse;
use ascsense::signal_model::{delay_to_range, SystemConfig};
use ascsense::Error;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exit {
    CheckFailed = 1,
    Usage = 2,
    Config = 3,
    MissingFile = 4,
    Malformed = 5,
    Io = 6,
    Compute = 7,
}

#[derive(Debug)]
struct Failure {
    exit: Exit,
    error: anyhow::Error,
}

impl Failure {
    fn new(exit: Exit, error: impl Into<anyhow::Error>) -> Self {
        Self { exit, error: error.into() }
    }

    /// Exit code by error kind; `config` marks errors raised while loading
    /// or validating the configuration.
    fn from_lib(e: Error, config: bool) -> Self {
        let exit = match &e {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => Exit::MissingFile,
            Error::Io { .. } => Exit::Io,
            Error::Format { .. } if config => Exit::Config,
            Error::InvalidConfig(_) => Exit::Config,
            Error::Format { .. } | Error::Csv { .. } => Exit::Malformed,
            _ => Exit::Compute,
        };
        Self::new(exit, e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn lib<T>(r: ascsense::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::from_lib(e, false))
}

#[derive(Debug, Parser)]
#[command(name = "ascsense", version, about = "Bi-static ISAC sensing under clock asynchronism")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML). Flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated methods: prop_sub, prop_cov, simil, evlp, ifft, synchronized.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Trials per sweep point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Comma-separated SNRs, dB.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    snr: Option<Vec<f64>>,
    /// Comma-separated dynamic power proportions.
    #[arg(long = "dyn-prop", global = true, value_delimiter = ',')]
    dyn_prop: Option<Vec<f64>>,
    /// Comma-separated two-target separations, m.
    #[arg(long = "tau-sep", global = true, value_delimiter = ',')]
    tau_sep: Option<Vec<f64>>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "ASCSENSE_WORKERS")]
    workers: Option<usize>,
    /// Evaluate the acceptance checks that apply to this run; exit 1 if any fails.
    #[arg(long, global = true)]
    check: bool,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Warnings and errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize one trial: CSI dump, calibrated reference, truth and estimates.
    Simulate {
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Monte Carlo sweep over SNR and dynamic proportion.
    Sweep,
    /// Two-target resolution study over separations.
    Resolve,
    /// Standalone reference acquisition of one trial.
    Calibrate {
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run the pipeline on a CSI dump.
    Replay {
        /// CSI dump written by `simulate`.
        dump: PathBuf,
        /// Reference blob written by `simulate` or `calibrate`.
        #[arg(long)]
        reference: PathBuf,
        /// Number of targets; default from the configuration (MDL if `target_count = "mdl"`).
        #[arg(long)]
        targets: Option<usize>,
    },
    /// Run the acceptance suite.
    Check,
}

impl Cli {
    fn base_config(&self) -> CliResult<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| Failure::from_lib(e, true)),
            None => Ok(match self.command {
                Command::Resolve => ExperimentConfig {
                    snr_db: vec![25.0],
                    tau_sep_m: (1..=13).map(|i| (i as f64 * 0.3 * 10.0).round() / 10.0).collect(),
                    ..ExperimentConfig::default()
                },
                _ => ExperimentConfig::default(),
            }),
        }
    }

    /// The file (or default) configuration with flag overrides, validated.
    fn resolved_config(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = self.base_config()?;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.methods {
            cfg.methods = v.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = &self.snr {
            cfg.snr_db = v.clone();
        }
        if let Some(v) = &self.dyn_prop {
            cfg.dyn_proportion = v.clone();
        }
        if let Some(v) = &self.tau_sep {
            cfg.tau_sep_m = v.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg.validate().map_err(|e| Failure::from_lib(e, true))?;
        Ok(cfg)
    }
}

fn create_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(|e| Failure::new(Exit::Io, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|e| Failure::new(Exit::Io, e))
}

/// Logs the resolved configuration and seed and stores them next to the outputs.
fn record_config(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let text = cfg.to_toml();
    log::info!("master seed {}", cfg.seed);
    log::info!("resolved configuration:\n{text}");
    create_out(out)?;
    write_text(&out.join("config.toml"), &text)
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|e| Failure::new(Exit::Io, e))
}

fn csv_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let io = |e: csv::Error| Failure::new(Exit::Io, anyhow::Error::new(e).context(format!("writing {}", path.display())));
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|e| Failure::new(Exit::Io, e))
}

/// `estimates.csv`, `cgs.csv` and `tos.csv` for a set of pipeline runs.
fn write_estimates(out: &Path, system: &SystemConfig, runs: &[PipelineOutput]) -> CliResult<()> {
    let mut est = Vec::new();
    let mut cgs = Vec::new();
    let mut tos = Vec::new();
    for r in runs {
        let label = r.method.label().to_string();
        for (i, t) in r.cgs.targets.iter().enumerate() {
            let velocity = doppler_readout(&t.cgs, system).map(|v| v.to_string()).unwrap_or_default();
            est.push(vec![
                label.clone(),
                i.to_string(),
                t.delay.to_string(),
                delay_to_range(t.delay).to_string(),
                t.aoa.to_string(),
                t.peak_value.to_string(),
                velocity,
            ]);
            for (s, z) in t.cgs.iter().enumerate() {
                cgs.push(vec![label.clone(), i.to_string(), s.to_string(), z.re.to_string(), z.im.to_string()]);
            }
        }
        for (s, to) in r.relative_to.iter().enumerate() {
            tos.push(vec![label.clone(), s.to_string(), to.to_string(), r.residual_to.to_string()]);
        }
    }
    csv_rows(
        &out.join("estimates.csv"),
        &["method", "target", "delay_s", "range_m", "aoa_rad", "peak_value", "velocity_mps"],
        est,
    )?;
    csv_rows(&out.join("cgs.csv"), &["method", "target", "snapshot", "re", "im"], cgs)?;
    csv_rows(&out.join("tos.csv"), &["method", "snapshot", "relative_to_s", "residual_to_s"], tos)
}

fn asynchronous(cfg: &ExperimentConfig) -> Vec<Method> {
    let methods: Vec<Method> = cfg.methods.iter().copied().filter(|m| *m != Method::Synchronized).collect();
    if methods.len() < cfg.methods.len() {
        log::info!("the synchronized oracle needs ground truth; skipped for recorded streams");
    }
    methods
}

/// Target count of a recorded stream: the scenario's when the
/// configuration says `truth`, MDL otherwise.
fn target_hint(cfg: &ExperimentConfig) -> CliResult<Option<usize>> {
    let point = cfg.points().into_iter().next().ok_or_else(|| Failure::new(Exit::Config, anyhow::anyhow!("empty sweep")))?;
    Ok(match cfg.target_count {
        TargetCount::Truth => Some(cfg.spec_for(&point).target_count()),
        TargetCount::Mdl => None,
    })
}

fn simulate(cfg: &ExperimentConfig, out: &Path, trial: usize) -> CliResult<()> {
    let point = cfg.points()[0];
    let input = lib(TrialInput::new(cfg, point, trial))?;
    let reference = lib(input.calibrate(cfg))?;
    let dump = out.join("csi.bin");
    lib(write_csi_dump(&dump, &input.stream, cfg.system.subcarrier_spacing_hz, cfg.system.snapshot_interval_s))?;
    lib(reference.save(&out.join("reference.bin")))?;

    let truth = &input.scenario;
    csv_rows(
        &out.join("truth.csv"),
        &["target", "delay_s", "range_m", "aoa_rad"],
        truth
            .dynamics
            .paths
            .iter()
            .enumerate()
            .map(|(i, p)| vec![i.to_string(), p.delay.to_string(), delay_to_range(p.delay).to_string(), p.aoa.to_string()]),
    )?;
    csv_rows(
        &out.join("offsets.csv"),
        &["snapshot", "to_s", "po_rad"],
        truth
            .offsets
            .to
            .iter()
            .zip(&truth.offsets.po)
            .enumerate()
            .map(|(t, (to, po))| vec![t.to_string(), to.to_string(), po.to_string()]),
    )?;

    let targets = target_hint(cfg)?;
    let runs = asynchronous(cfg)
        .into_iter()
        .map(|m| lib(run_pipeline(&input.stream, cfg, m, &reference, targets)))
        .collect::<CliResult<Vec<_>>>()?;
    write_estimates(out, &cfg.system, &runs)?;
    log::info!(
        "wrote {} ({} warm-up + {} CPI snapshots) and estimates of {} methods to {}",
        dump.display(),
        input.warmup(),
        cfg.system.snapshots,
        runs.len(),
        out.display()
    );
    Ok(())
}

fn replay(cfg: &ExperimentConfig, out: &Path, dump: &Path, reference: &Path, targets: Option<usize>) -> CliResult<()> {
    let d = read_csi_dump(dump).map_err(|e| Failure::from_lib(e, false))?;
    let reference = ReferenceStaticResponse::load(reference).map_err(|e| Failure::from_lib(e, false))?;
    let mut cfg = cfg.clone();
    cfg.system.antennas = d.csi.antennas();
    cfg.system.subcarriers = d.csi.subcarriers();
    cfg.system.subcarrier_spacing_hz = d.subcarrier_spacing_hz;
    cfg.system.snapshot_interval_s = d.snapshot_interval_s;
    cfg.system.snapshots = cfg.system.snapshots.min(d.csi.snapshots());
    let targets = match targets {
        Some(n) => Some(n),
        None => target_hint(&cfg)?,
    };
    let runs = asynchronous(&cfg)
        .into_iter()
        .map(|m| lib(run_pipeline(&d.csi, &cfg, m, &reference, targets)))
        .collect::<CliResult<Vec<_>>>()?;
    write_estimates(out, &cfg.system, &runs)?;
    for r in &runs {
        for t in &r.cgs.targets {
            println!("{} delay {:.3} m aoa {:.3} rad", r.method, delay_to_range(t.delay), t.aoa);
        }
    }
    Ok(())
}

fn calibrate(cfg: &ExperimentConfig, out: &Path, trial: usize) -> CliResult<()> {
    let input = lib(TrialInput::new(cfg, cfg.points()[0], trial))?;
    let (truth, acq) = lib(input.acquire(cfg))?;
    lib(acq.reference.save(&out.join("reference.bin")))?;
    let estimate = acq.reference.clock_error().unwrap_or(f64::NAN);
    println!("clock error: true {:.3} ns, estimated {:.3} ns", truth * 1e9, estimate * 1e9);
    println!("residual TOs: BS {:.3} ns, UE {:.3} ns", acq.bs_residual * 1e9, acq.ue_residual * 1e9);
    csv_rows(
        &out.join("similarity.csv"),
        &["clock_error_s", "similarity"],
        acq.similarity_axis
            .iter()
            .zip(&acq.similarity)
            .map(|(x, y)| vec![x.to_string(), y.to_string()]),
    )
}

/// Prints one line per criterion; true if all passed.
fn print_reports(reports: &[CriterionReport]) -> bool {
    for r in reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("{} of {} criteria passed", reports.len() - failed, reports.len());
    failed == 0
}

/// Runs a harness sweep, writes its tables and optionally checks it.
fn sweep(cfg: &ExperimentConfig, out: &Path, check: bool, resolution: bool) -> CliResult<bool> {
    let start = Instant::now();
    let table = lib(run_sweep(cfg))?;
    let runtime_s = start.elapsed().as_secs_f64();
    let paths = lib(emit_outputs(&table, out))?;
    log::info!("{} trial rows in {runtime_s:.1} s, tables in {}", table.trials.len(), out.display());
    let rows = aggregate(&table);
    for r in &rows {
        let med = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:>12} snr {:>5} dyn {:>4} sep {:>5} | rel TO {} m | rel delay {} m | gamma {} dB | P_res {}",
            r.method.label(),
            r.snr_db,
            r.dyn_proportion,
            r.tau_sep_m.map_or("-".into(), |s| s.to_string()),
            med(r.rel_to_err_m.median),
            med(r.rel_delay_err_m.median),
            med(r.gamma_beta_db.median),
            med(r.resolution_probability)
        );
    }
    log::debug!("aggregates in {}", paths.to_error.parent().unwrap_or(out).display());
    if !check {
        return Ok(true);
    }
    let reports: Vec<CriterionReport> = if resolution {
        vec![CriterionReport {
            id: 5,
            title: "super-resolution",
            checks: acceptance::resolution_checks(&rows),
            runtime_s,
            budget_s: acceptance::BUDGET_S[4],
        }]
    } else {
        let s = Ok(AccuracySweep { rows, runtime_s });
        vec![
            acceptance::criterion_2(&s),
            acceptance::criterion_3(&s),
            acceptance::criterion_4(&s),
            acceptance::criterion_6(&s),
        ]
    };
    Ok(print_reports(&reports))
}

fn run(cli: &Cli) -> CliResult<bool> {
    if let Command::Check = cli.command {
        let mut opts = AcceptanceOptions::default();
        if let Some(s) = cli.seed {
            opts.seed = s;
        }
        if let Some(t) = cli.trials {
            opts.trials = t.max(1);
            opts.mimo_trials = t.clamp(4, 100);
        }
        if let Some(w) = cli.workers {
            opts.workers = w;
        }
        log::info!("acceptance suite: {opts:?}");
        return Ok(print_reports(&acceptance::run_all(&opts)));
    }
    let cfg = cli.resolved_config()?;
    record_config(&cfg, &cli.out)?;
    match &cli.command {
        Command::Simulate { trial } => simulate(&cfg, &cli.out, *trial).map(|_| true),
        Command::Sweep => sweep(&cfg, &cli.out, cli.check, false),
        Command::Resolve => {
            if cfg.tau_sep_m.is_empty() {
                return Err(Failure::new(Exit::Config, anyhow::anyhow!("resolve needs tau_sep_m (--tau-sep)")));
            }
            sweep(&cfg, &cli.out, cli.check, true)
        }
        Command::Calibrate { trial } => calibrate(&cfg, &cli.out, *trial).map(|_| true),
        Command::Replay { dump, reference, targets } => replay(&cfg, &cli.out, dump, reference, *targets).map(|_| true),
        Command::Check => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Exit::Usage as u8) } else { ExitCode::SUCCESS };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(Exit::CheckFailed as u8),
        Err(f) => {
            log::error!("{:#}", f.error);
            ExitCode::from(f.exit as u8)
        }
    }
}
