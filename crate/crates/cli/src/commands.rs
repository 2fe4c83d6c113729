//! Subcommands and their exit codes.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nnde_core::metrics::{validate, ValidationSet};
use nnde_core::trainer::{solve_and_correct, train_correction, train_primary, Clock, NoClock, TrainFailure};
use nnde_core::{CorrectedModel, Error, TrainReport, Zoo};

use crate::checkpoint::{self, CheckpointError};
use crate::checks::{self, CheckResult};
use crate::config::{ConfigError, Resolved, RunConfig};
use crate::csvout;

#[derive(Debug, Parser)]
#[command(name = "nnde", version, about = "Neural-network DE solver with error correction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the primary network; writes model.ckpt and train_stage0.csv.
    Solve {
        config: PathBuf,
        /// Output directory, overriding `run.output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the next correction for a checkpoint; writes model.ckpt and
    /// train_stage<j>.csv.
    Correct {
        config: PathBuf,
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Primary stage followed by `run.n_corrections` corrections.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error metrics against the known solution; writes metrics_sample.csv
    /// and metrics_grid.csv.
    Validate {
        config: PathBuf,
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of every derivative used by the configured run.
    Gradcheck { config: PathBuf },
    /// Built-in identity and consistency checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    /// Unreadable or invalid configuration, checkpoint or output location.
    Config = 1,
    /// Training or evaluation produced non-finite numbers.
    Numerical = 2,
    Check = 3,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Numerical(Error),
    #[error("{0} check(s) failed")]
    Check(usize),
}

impl Failure {
    fn code(&self) -> ExitCode {
        match self {
            Failure::Config(_) | Failure::Checkpoint(_) | Failure::Io { .. } => ExitCode::Config,
            Failure::Numerical(_) => ExitCode::Numerical,
            Failure::Check(_) => ExitCode::Check,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Failure {
        let context = context.into();
        move |source| Failure::Io { context, source }
    }
}

/// Errors raised while training are configuration problems when they concern
/// shapes or settings, numerical otherwise.
fn core_failure(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::Syntax { .. } | Error::UnknownIdentifier { .. } | Error::VariableOutOfRange { .. } => {
            Failure::Config(ConfigError::Core(e))
        }
        other => Failure::Numerical(other),
    }
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

fn clock(cfg: &RunConfig) -> Box<dyn Clock> {
    if cfg.run.deterministic {
        Box::new(NoClock)
    } else {
        Box::new(WallClock(Instant::now()))
    }
}

fn load_config(path: &Path) -> Result<(RunConfig, Resolved), Failure> {
    let text = std::fs::read_to_string(path).map_err(Failure::io(format!("reading {}", path.display())))?;
    let cfg = RunConfig::parse(&text)?;
    let resolved = cfg.resolve()?;
    Ok((cfg, resolved))
}

fn out_dir(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = flag.clone().unwrap_or_else(|| PathBuf::from(&cfg.run.output));
    std::fs::create_dir_all(&dir).map_err(Failure::io(format!("creating {}", dir.display())))?;
    Ok(dir)
}

fn write_training(dir: &Path, stage: usize, report: &TrainReport) -> Result<PathBuf, Failure> {
    let path = dir.join(format!("train_stage{stage}.csv"));
    let file = File::create(&path).map_err(Failure::io(format!("creating {}", path.display())))?;
    csvout::write_training(BufWriter::new(file), &report.records)
        .map_err(|e| Failure::io(format!("writing {}", path.display()))(e.into()))?;
    Ok(path)
}

fn save_model(dir: &Path, cfg: &RunConfig, model: &CorrectedModel) -> Result<PathBuf, Failure> {
    let path = dir.join("model.ckpt");
    checkpoint::save(&path, cfg, model)?;
    Ok(path)
}

fn report_stage(stage: usize, report: &TrainReport) {
    eprintln!(
        "stage {stage}: {} iterations, {}, best loss {:.6e}",
        report.records.len(),
        report.stop.name(),
        report.final_loss
    );
}

fn handle_failure(dir: &Path, stage: usize, f: TrainFailure) -> Failure {
    if let Err(e) = write_training(dir, stage, &f.report) {
        eprintln!("warning: {e}");
    }
    core_failure(f.error)
}

fn solve(config: &Path, out: &Option<PathBuf>) -> Result<(), Failure> {
    let (cfg, r) = load_config(config)?;
    let dir = out_dir(&cfg, out)?;
    let clock = clock(&cfg);
    let (stage, report) = train_primary(&r.problem, r.algorithm.primary_net, &r.algorithm.primary_opt, clock.as_ref())
        .map_err(|f| handle_failure(&dir, 0, f))?;
    report_stage(0, &report);
    write_training(&dir, 0, &report)?;
    let path = save_model(&dir, &cfg, &CorrectedModel::new(stage))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// The checkpoint must come from the same problem and networks.
fn compatible(cfg: &RunConfig, saved: &RunConfig) -> Result<(), Failure> {
    let same = cfg.problem == saved.problem
        && cfg.network == saved.network
        && cfg.correction_network.as_ref().unwrap_or(&cfg.network)
            == saved.correction_network.as_ref().unwrap_or(&saved.network);
    if same {
        Ok(())
    } else {
        Err(ConfigError::Invalid(
            "the checkpoint was trained with a different [problem], [network] or [correction_network]".into(),
        )
        .into())
    }
}

fn correct(config: &Path, ckpt: &Path, out: &Option<PathBuf>) -> Result<(), Failure> {
    let (cfg, r) = load_config(config)?;
    let (saved, _, mut model) = checkpoint::load(ckpt)?;
    compatible(&cfg, &saved)?;
    let dir = out_dir(&cfg, out)?;
    let j = model.n_corrections() + 1;
    let (net, opt) = r.algorithm.correction_stage(j);
    let clock = clock(&cfg);
    let (correction, report) = train_correction(&r.problem, &model, net, &opt, r.algorithm.form, r.algorithm.scale, clock.as_ref())
        .map_err(|f| handle_failure(&dir, j, f))?;
    report_stage(j, &report);
    write_training(&dir, j, &report)?;
    model.push(correction);
    let path = save_model(&dir, &cfg, &model)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(config: &Path, out: &Option<PathBuf>) -> Result<(), Failure> {
    let (cfg, r) = load_config(config)?;
    let dir = out_dir(&cfg, out)?;
    let clock = clock(&cfg);
    let outcome = solve_and_correct(&r.problem, &r.algorithm, clock.as_ref());
    for (stage, report) in outcome.reports.iter().enumerate() {
        report_stage(stage, report);
        write_training(&dir, stage, report)?;
    }
    if let Some(model) = &outcome.model {
        let path = save_model(&dir, &cfg, model)?;
        eprintln!("wrote {}", path.display());
    }
    match outcome.error {
        Some(e) => Err(core_failure(e)),
        None => Ok(()),
    }
}

fn print_stats(label: &str, set: &ValidationSet) {
    let s = &set.stats;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
    println!("{label}: {} points", s.points);
    println!("  l2 primary       {}", opt(s.l2_primary));
    println!("  l2 corrected     {}", opt(s.l2_corrected));
    println!("  linf primary     {}", opt(s.linf_primary));
    println!("  linf corrected   {}", opt(s.linf_corrected));
    println!("  improvement      {}", opt(s.improvement_ratio));
    println!("  mean |error|     {}", opt(s.mean_abs_error));
    println!("  mean |residual|  {:.6e}", s.mean_abs_residual);
    println!("  error/residual   {}", opt(s.indicator_ratio));
    println!("  correlation      {}", opt(s.correlation));
}

fn validate_cmd(config: &Path, ckpt: &Path, out: &Option<PathBuf>) -> Result<(), Failure> {
    let (cfg, r) = load_config(config)?;
    let (saved, p, model) = checkpoint::load(ckpt)?;
    compatible(&cfg, &saved)?;
    debug_assert_eq!(p, r.problem);
    let dir = out_dir(&cfg, out)?;
    let summary = validate(&model, &p, cfg.run.validate_points, cfg.run.grid_res, cfg.run.validate_seed)
        .map_err(core_failure)?;
    for (name, set) in [("metrics_sample.csv", &summary.sample), ("metrics_grid.csv", &summary.grid)] {
        let path = dir.join(name);
        let file = File::create(&path).map_err(Failure::io(format!("creating {}", path.display())))?;
        csvout::write_metrics(BufWriter::new(file), p.dim(), p.output_dim, &set.rows)
            .map_err(|e| Failure::io(format!("writing {}", path.display()))(e.into()))?;
    }
    println!("corrections: {}", model.n_corrections());
    print_stats("sample", &summary.sample);
    print_stats("grid", &summary.grid);
    Ok(())
}

fn report_checks(results: &[CheckResult]) -> Result<(), Failure> {
    let mut failed = 0;
    for r in results {
        let tag = if r.passed() { "ok  " } else { "FAIL" };
        println!("{tag} {}", r.summary());
        failed += usize::from(!r.passed());
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Check(failed))
    }
}

fn gradcheck(config: &Path) -> Result<(), Failure> {
    let (_, r) = load_config(config)?;
    let p = &r.problem;
    let mut results = vec![
        checks::loss_gradients(p, r.algorithm.primary_net, r.algorithm.primary_opt.seed, 1e-4),
        checks::expr_jets(300, 11, 1e-6),
        checks::net_jets(100, 12, 1e-6),
        checks::param_gradients(10, 13, 1e-6),
    ];
    if p.solution.is_some() {
        results.push(checks::error_identity(p, 200, 14, 1e-9));
    }
    report_checks(&results)
}

fn selftest() -> Result<(), Failure> {
    let mut results = vec![checks::expression_examples(), checks::expr_jets(200, 1, 1e-6), checks::net_jets(50, 2, 1e-6)];
    results.extend(checks::bprime_identity(1000, 3));
    results.extend(checks::taylor_orders());
    results.extend(Zoo::ALL.map(|z| {
        let mut r = checks::error_identity(&z.build(), 100, 4, 1e-9);
        r.name = format!("{} on {}", r.name, z.name());
        r
    }));
    results.extend(checks::linear_exactness(100, 5, 1e-10));
    report_checks(&results)
}

/// Runs one subcommand, printing diagnostics to standard error.
pub fn main_with(cli: Cli) -> ExitCode {
    let result = match &cli.command {
        Command::Solve { config, out } => solve(config, out),
        Command::Correct { config, checkpoint, out } => correct(config, checkpoint, out),
        Command::Run { config, out } => run(config, out),
        Command::Validate { config, checkpoint, out } => validate_cmd(config, checkpoint, out),
        Command::Gradcheck { config } => gradcheck(config),
        Command::Selftest => selftest(),
    };
    match result {
        Ok(()) => ExitCode::Ok,
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}
