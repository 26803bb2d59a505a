//! `npos`: config-driven runner for the positioning experiments.
//!
//! Staged subcommands exchange files in the output directory; `all` and
//! `sweep` run the pipeline in memory. Every file name starts with the
//! experiment name and `<experiment>_manifest.txt` records the config hash
//! and a SHA-256 per artifact.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use npos_core::channel::{read_csi, write_csi};
use npos_core::config::ExperimentConfig;
use npos_core::dataset::{build_anchor_set, read_anchors_csv, write_anchors_csv, write_triangles_csv};
use npos_core::experiment::{
    evaluate_on_test, prepare, raw_features, run_methods, simulate, sweep, synthesize, train_method, write_reports,
    write_sweep, ArtifactWriter, Method, MethodRun, Prepared, Simulation, SweepParam,
};
use npos_core::features::{csi_to_features, moving_average, read_features, write_features};
use npos_core::io::FEATURE_MAGIC;
use npos_core::mlp::{read_checkpoint, write_checkpoint, Checkpoint};
use npos_core::simkit::{read_displacements_csv, read_trajectory_csv, write_displacements_csv, write_trajectory_csv};
use npos_core::train::TrainOutcome;
use npos_core::{dataset, Error};

#[derive(Parser, Debug)]
#[command(name = "npos", version, about = "Reference-free neural positioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// INI experiment config; built-in small-room defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config and NPOS_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for CSI synthesis (overrides the config and NPOS_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trajectory, displacement log, dock anchors and CSI files.
    Simulate,
    /// Feature file from the simulated CSI.
    Featurize,
    /// Train one method and write its checkpoint.
    Train {
        #[arg(long)]
        method: String,
    },
    /// Evaluate checkpoints on the test split and write reports.
    Evaluate {
        /// Restrict to one method; defaults to the configured list.
        #[arg(long)]
        method: Option<String>,
    },
    /// Retrain the proposed method for each parameter value.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated ascending values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Full in-memory pipeline: simulate, featurize, train all methods, evaluate.
    All,
}

/// Exit codes, one per error class.
mod exit {
    pub const CONFIG: u8 = 3;
    pub const MISSING_INPUT: u8 = 4;
    pub const UNKNOWN_METHOD: u8 = 5;
    pub const BAD_FILE: u8 = 6;
    pub const IO: u8 = 7;
    pub const RUNTIME: u8 = 8;
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => exit::CONFIG,
        Error::MissingInput(_) => exit::MISSING_INPUT,
        Error::UnknownMethod(_) => exit::UNKNOWN_METHOD,
        Error::Format { .. } => exit::BAD_FILE,
        Error::Io(_) => exit::IO,
        _ => exit::RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("npos: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::small_room(),
    };
    if let Ok(dir) = std::env::var("NPOS_OUT_DIR") {
        cfg.output_dir = dir.into();
    }
    if let Ok(t) = std::env::var("NPOS_THREADS") {
        cfg.threads = t.parse().map_err(|_| Error::Config(format!("NPOS_THREADS=`{t}` is not a count")))?;
    }
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    let dir = cfg.output_dir.clone();
    let started = Instant::now();
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg, &dir)?,
        Command::Featurize => cmd_featurize(&cfg, &dir)?,
        Command::Train { method } => cmd_train(&cfg, &dir, method.parse()?)?,
        Command::Evaluate { method } => {
            let methods = match method {
                Some(m) => vec![m.parse()?],
                None => cfg.methods.clone(),
            };
            cmd_evaluate(&cfg, &dir, &methods)?
        }
        Command::Sweep { param, values } => cmd_sweep(&cfg, &dir, param.parse()?, values)?,
        Command::All => cmd_all(&cfg, &dir)?,
    }
    eprintln!("npos: done in {:.1} s (config {})", started.elapsed().as_secs_f64(), cfg.short_hash());
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<(), Error> {
    let sim = simulate(cfg)?;
    let csi = synthesize(cfg, &sim)?;
    let mut out = ArtifactWriter::new(dir, cfg)?;
    out.write_with("trajectory.csv", |b| write_trajectory_csv(&sim.trajectory, b))?;
    out.write_with("displacements.csv", |b| write_displacements_csv(&sim.displacements, b))?;
    let anchors = build_anchor_set(&sim.trajectory.dock_indices, sim.world.dock.position, cfg.anchor_variance);
    out.write_with("anchors.csv", |b| write_anchors_csv(&anchors, b))?;
    out.write_with("csi.npos", |b| write_csi(&csi, b))?;
    out.finish()?;
    eprintln!("npos: simulated {} samples, {} dock visits", sim.trajectory.len(), anchors.len());
    Ok(())
}

fn cmd_featurize(cfg: &ExperimentConfig, dir: &Path) -> Result<(), Error> {
    let mut out = ArtifactWriter::new(dir, cfg)?;
    let csi = read_csi(&out.path("csi.npos"))?;
    let disp = read_displacements_csv(&out.path("displacements.csv"))?;
    let features = moving_average(&csi_to_features(&csi)?, &cfg.averaging, &disp)?;
    let split = dataset::split_samples(features.len(), cfg.split_seed())?;
    let triangles = dataset::build_triangles(&disp, cfg.leap)?;
    out.write_with("features.npof", |b| write_features(&features, b))?;
    out.write_with("split.txt", |b| split.write(b))?;
    out.write_with("triangles.csv", |b| write_triangles_csv(&triangles, b))?;
    out.finish()?;
    eprintln!("npos: {} feature vectors of dimension {}", features.len(), features.dim());
    Ok(())
}

/// Reassembles the in-memory view of a staged run from its files.
fn load_staged(
    cfg: &ExperimentConfig,
    out: &ArtifactWriter,
    needs_truth: bool,
) -> Result<(Simulation, Prepared), Error> {
    let features_path = out.path("features.npof");
    let header = npos_core::io::peek_header(&features_path, FEATURE_MAGIC)?;
    let disp = read_displacements_csv(&out.path("displacements.csv"))?;
    let anchors = read_anchors_csv(&out.path("anchors.csv"))?;
    let mut trajectory = npos_core::Trajectory::default();
    if needs_truth {
        trajectory = read_trajectory_csv(&out.path("trajectory.csv"))?;
        if trajectory.len() != header.count {
            return Err(Error::DimensionMismatch { expected: header.count, actual: trajectory.len() });
        }
    }
    trajectory.dock_indices = anchors.indices().collect();
    let features = read_features(&features_path)?;
    let split = dataset::SplitPlan::read(&out.path("split.txt"), features.len(), cfg.split_seed())?;
    let data =
        Prepared { features: features.to_f32(), split, triangles: dataset::build_triangles(&disp, cfg.leap)?, anchors };
    Ok((Simulation { world: cfg.world_config(), trajectory, displacements: disp }, data))
}

fn checkpoint_name(cfg: &ExperimentConfig, method: Method) -> String {
    format!("{method}_{}.npom", cfg.short_hash())
}

fn save_checkpoint(
    out: &mut ArtifactWriter,
    cfg: &ExperimentConfig,
    method: Method,
    o: &TrainOutcome,
) -> Result<(), Error> {
    let ckpt = Checkpoint {
        model: o.model.clone(),
        tag: format!("method={method};config={}", cfg.hash()),
        optimizer: Some(o.optimizer.clone()),
    };
    out.write_with(&checkpoint_name(cfg, method), |b| write_checkpoint(&ckpt, b))?;
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, dir: &Path, method: Method) -> Result<(), Error> {
    let mut out = ArtifactWriter::new(dir, cfg)?;
    // Only the supervised baseline and TDoA simulation read ground truth.
    let needs_truth = matches!(method, Method::Baseline1 | Method::Baseline2);
    let (sim, data) = load_staged(cfg, &out, needs_truth)?;
    let outcome = train_method(method, cfg, &sim, &data)?;
    save_checkpoint(&mut out, cfg, method, &outcome)?;
    out.finish()?;
    eprintln!("npos: trained {method}; final epoch loss {:.6e}", outcome.epoch_losses.last().copied().unwrap_or(0.0));
    Ok(())
}

fn cmd_evaluate(cfg: &ExperimentConfig, dir: &Path, methods: &[Method]) -> Result<(), Error> {
    let mut out = ArtifactWriter::new(dir, cfg)?;
    let (sim, data) = load_staged(cfg, &out, true)?;
    let mut runs = vec![];
    for &method in methods {
        let ckpt = read_checkpoint(&out.path(&checkpoint_name(cfg, method)))?;
        let expected = format!("method={method};config={}", cfg.hash());
        if ckpt.tag != expected {
            return Err(Error::Config(format!("checkpoint tag `{}` does not match `{expected}`", ckpt.tag)));
        }
        let outcome = TrainOutcome {
            optimizer: ckpt.optimizer.clone().unwrap_or_else(|| npos_core::Adam::new(cfg.train.adam, &ckpt.model)),
            model: ckpt.model,
            epoch_losses: vec![],
        };
        let report = evaluate_on_test(method.name(), &outcome, &data, &sim)?;
        runs.push(MethodRun { method, outcome, report });
    }
    write_reports(&mut out, &runs, &data, &sim)?;
    out.finish()?;
    print_table(&runs);
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig, dir: &Path, param: SweepParam, values: &[usize]) -> Result<(), Error> {
    let sim = simulate(cfg)?;
    let raw = raw_features(cfg, &sim)?;
    let rows = sweep(cfg, &sim, &raw, param, values)?;
    let mut out = ArtifactWriter::new(dir, cfg)?;
    write_sweep(&mut out, &rows)?;
    out.finish()?;
    println!("{:>6} {:>10} {:>10}", param.name(), "mean_m", "p95_m");
    for r in &rows {
        println!("{:>6} {:>10.4} {:>10.4}", r.value, r.mean, r.p95);
    }
    Ok(())
}

fn cmd_all(cfg: &ExperimentConfig, dir: &Path) -> Result<(), Error> {
    let sim = simulate(cfg)?;
    let raw = raw_features(cfg, &sim)?;
    let data = prepare(cfg, &sim, &raw, &cfg.averaging, cfg.leap)?;
    let runs = run_methods(cfg, &sim, &data)?;
    let mut out = ArtifactWriter::new(dir, cfg)?;
    for r in &runs {
        save_checkpoint(&mut out, cfg, r.method, &r.outcome)?;
    }
    write_reports(&mut out, &runs, &data, &sim)?;
    out.finish()?;
    print_table(&runs);
    Ok(())
}

fn print_table(runs: &[MethodRun]) {
    println!("{:<10} {:>10} {:>10} {:>10}", "method", "mean_m", "median_m", "p95_m");
    for r in runs {
        println!("{:<10} {:>10.4} {:>10.4} {:>10.4}", r.method, r.report.mean, r.report.median, r.report.p95);
    }
}
