//! End-to-end pipelines: simulate, featurize, train, evaluate, sweep.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use sha2::{Digest, Sha256};

use crate::baselines::{train_baseline1, train_baseline2, train_baseline3, train_proposed};
use crate::channel::{downsample_subcarriers, synthesize_sample, CsiSample};
use crate::config::ExperimentConfig;
use crate::dataset::{build_anchor_set, build_triangles, split_samples, AnchorSet, SplitPlan, TriangleSet};
use crate::error::{Error, Result};
use crate::evalrep::{
    cdf_svg, empirical_cdf, error_map_svg, evaluate, sweep_svg, write_cdf_csv, write_results_csv, write_sweep_csv,
    ErrorReport, SweepRow,
};
use crate::features::{csi_to_features, moving_average, AveragingPolicy, FeatureSet};
use crate::geometry::Vec2;
use crate::losses::simulate_tdoa;
use crate::simkit::{generate_trajectory, DisplacementLog, Trajectory, WorldConfig};
use crate::train::TrainOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ours,
    Baseline1,
    Baseline2,
    Baseline3,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ours, Method::Baseline1, Method::Baseline2, Method::Baseline3];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Baseline1 => "baseline1",
            Method::Baseline2 => "baseline2",
            Method::Baseline3 => "baseline3",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Leap increment of the triangle dataset.
    Leap,
    /// Fixed moving-average window length.
    Window,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Leap => "V",
            SweepParam::Window => "L",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "V" => Ok(SweepParam::Leap),
            "L" => Ok(SweepParam::Window),
            _ => Err(Error::InvalidArgument(format!("unknown sweep parameter `{s}` (expected V or L)"))),
        }
    }
}

/// Simulated robot run: the world it happened in, ground truth, odometry.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub world: WorldConfig,
    pub trajectory: Trajectory,
    pub displacements: DisplacementLog,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let world = cfg.world_config();
    let (trajectory, displacements) = generate_trajectory(&world, &cfg.motion, cfg.n_samples)?;
    Ok(Simulation { world, trajectory, displacements })
}

const CHUNK: usize = 512;

fn synthesize_range(cfg: &ExperimentConfig, sim: &Simulation, range: std::ops::Range<usize>) -> Result<Vec<CsiSample>> {
    let chan = cfg.channel_config();
    let csi = range
        .map(|n| synthesize_sample(&sim.world, &chan, n, sim.trajectory.positions[n]))
        .collect::<Result<Vec<_>>>()?;
    if cfg.downsample > 1 {
        downsample_subcarriers(&csi, cfg.downsample)
    } else {
        Ok(csi)
    }
}

/// Runs `job` over `0..n` in chunks on up to `threads` scoped threads and
/// concatenates the results in index order.
fn chunked<T: Send>(
    n: usize,
    threads: usize,
    job: impl Fn(std::ops::Range<usize>) -> Result<Vec<T>> + Sync,
) -> Result<Vec<T>> {
    let ranges: Vec<_> = (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect();
    if threads <= 1 {
        let mut out = Vec::with_capacity(n);
        for r in ranges {
            out.extend(job(r)?);
        }
        return Ok(out);
    }
    let per_thread = ranges.len().div_ceil(threads);
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .chunks(per_thread.max(1))
            .map(|group| {
                let job = &job;
                s.spawn(move || {
                    let mut out = Vec::new();
                    for r in group {
                        out.extend(job(r.clone())?);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Complex CSI of every sample (after subcarrier downsampling).
pub fn synthesize(cfg: &ExperimentConfig, sim: &Simulation) -> Result<Vec<CsiSample>> {
    chunked(sim.trajectory.len(), cfg.threads, |r| synthesize_range(cfg, sim, r))
}

/// Unaveraged features, computed chunk by chunk so the complex CSI of the
/// whole run never sits in memory at once.
pub fn raw_features(cfg: &ExperimentConfig, sim: &Simulation) -> Result<FeatureSet> {
    let n = sim.trajectory.len();
    let mut shape = (0, 0, 0);
    let rows: Vec<Array2<f64>> = chunked(n.div_ceil(CHUNK), cfg.threads, |chunks| {
        chunks
            .map(|c| {
                let r = c * CHUNK..((c + 1) * CHUNK).min(n);
                Ok(csi_to_features(&synthesize_range(cfg, sim, r)?)?.values)
            })
            .collect()
    })?;
    if let Some(first) = rows.first() {
        let b = sim.world.n_aps();
        let a = sim.world.n_antennas();
        shape = (b, a, first.ncols() / (b * a));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    let values = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(FeatureSet { shape, values })
}

/// Everything a training run reads, none of it ground truth.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub features: Array2<f32>,
    pub split: SplitPlan,
    pub triangles: Vec<TriangleSet>,
    pub anchors: AnchorSet,
}

pub fn prepare(
    cfg: &ExperimentConfig,
    sim: &Simulation,
    raw: &FeatureSet,
    averaging: &AveragingPolicy,
    leap: usize,
) -> Result<Prepared> {
    let averaged = moving_average(raw, averaging, &sim.displacements)?;
    Ok(Prepared {
        features: averaged.to_f32(),
        split: split_samples(raw.len(), cfg.split_seed())?,
        triangles: build_triangles(&sim.displacements, leap)?,
        anchors: build_anchor_set(&sim.trajectory.dock_indices, sim.world.dock.position, cfg.anchor_variance),
    })
}

/// Trains one method. Baseline 1 reads ground-truth positions and
/// Baseline 2 simulates TDoA from them; nothing else does.
pub fn train_method(method: Method, cfg: &ExperimentConfig, sim: &Simulation, data: &Prepared) -> Result<TrainOutcome> {
    let tc = cfg.train_config();
    match method {
        Method::Ours => train_proposed(&data.features, &data.triangles, &data.anchors, &data.split, &tc),
        Method::Baseline1 => train_baseline1(&data.features, &sim.trajectory.positions, &data.split, &tc),
        Method::Baseline2 => {
            let tdoa = simulate_tdoa(
                &sim.trajectory,
                &sim.world.ap_positions,
                cfg.tdoa_ref_ap,
                cfg.tdoa_variance,
                cfg.tdoa_seed(),
            )?;
            train_baseline2(
                &data.features,
                &sim.displacements,
                cfg.baseline2_leap,
                &tdoa,
                &sim.world.ap_positions,
                &data.split,
                &tc,
            )
        }
        Method::Baseline3 => {
            Ok(train_baseline3(&data.features, &sim.displacements, &data.anchors, &data.split, &tc)?.0)
        }
    }
}

pub fn test_set(data: &Prepared, sim: &Simulation) -> (Array2<f32>, Vec<Vec2>) {
    let idx = data.split.test_indices();
    let truth = idx.iter().map(|&i| sim.trajectory.positions[i]).collect();
    (data.features.select(Axis(0), &idx), truth)
}

pub fn evaluate_on_test(
    method: &str,
    outcome: &TrainOutcome,
    data: &Prepared,
    sim: &Simulation,
) -> Result<ErrorReport> {
    let (x, truth) = test_set(data, sim);
    evaluate(method, &outcome.model, x.view(), &truth)
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub outcome: TrainOutcome,
    pub report: ErrorReport,
}

/// Trains and evaluates every configured method on one prepared dataset.
pub fn run_methods(cfg: &ExperimentConfig, sim: &Simulation, data: &Prepared) -> Result<Vec<MethodRun>> {
    cfg.methods
        .iter()
        .map(|&method| {
            let outcome = train_method(method, cfg, sim, data)?;
            let report = evaluate_on_test(method.name(), &outcome, data, sim)?;
            Ok(MethodRun { method, outcome, report })
        })
        .collect()
}

/// One proposed-method run per value. `Leap` values use the configured
/// averaging; `Window` values use a fixed window of that length.
pub fn sweep(
    cfg: &ExperimentConfig,
    sim: &Simulation,
    raw: &FeatureSet,
    param: SweepParam,
    values: &[usize],
) -> Result<Vec<SweepRow>> {
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("sweep values must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    let mut shared = None;
    for &value in values {
        let data = match param {
            SweepParam::Leap => {
                let base = match &shared {
                    Some(d) => d,
                    None => shared.insert(prepare(cfg, sim, raw, &cfg.averaging, cfg.leap)?),
                };
                Prepared { triangles: build_triangles(&sim.displacements, value)?, ..base.clone() }
            }
            SweepParam::Window => {
                let policy = AveragingPolicy::fixed(value);
                prepare(cfg, sim, raw, &AveragingPolicy { scale: cfg.averaging.scale, ..policy }, cfg.leap)?
            }
        };
        let outcome = train_method(Method::Ours, cfg, sim, &data)?;
        let report = evaluate_on_test(Method::Ours.name(), &outcome, &data, sim)?;
        rows.push(SweepRow { param: param.name().to_string(), value, mean: report.mean, p95: report.p95 });
    }
    Ok(rows)
}

/// Artifact writer that records every file in a manifest with its SHA-256
/// and the config hash.
pub struct ArtifactWriter {
    dir: PathBuf,
    prefix: String,
    config_hash: String,
    entries: Vec<(String, String)>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), prefix: cfg.name.clone(), config_hash: cfg.hash(), entries: vec![] })
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.dir.join(format!("{}_{artifact}", self.prefix))
    }

    /// Writes `<experiment>_<artifact>` atomically (temp file + rename).
    pub fn write(&mut self, artifact: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(artifact);
        write_atomic(&path, bytes)?;
        self.entries
            .push((path.file_name().unwrap().to_string_lossy().into_owned(), hex::encode(Sha256::digest(bytes))));
        Ok(path)
    }

    pub fn write_with(&mut self, artifact: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = vec![];
        f(&mut buf)?;
        self.write(artifact, &buf)
    }

    /// Appends this writer's files to `<experiment>_manifest.txt`.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.path("manifest.txt");
        let mut text = match std::fs::read_to_string(&path) {
            Ok(t) if t.starts_with(&format!("config_hash {}\n", self.config_hash)) => t,
            _ => format!("config_hash {}\n", self.config_hash),
        };
        for (name, digest) in &self.entries {
            let suffix = format!("  {name}");
            text = text.lines().filter(|l| !l.ends_with(&suffix)).map(|l| format!("{l}\n")).collect();
            text.push_str(&format!("{digest}{suffix}\n"));
        }
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Results CSV, one CDF CSV per method, and both plots.
pub fn write_reports(out: &mut ArtifactWriter, runs: &[MethodRun], data: &Prepared, sim: &Simulation) -> Result<()> {
    let reports: Vec<ErrorReport> = runs.iter().map(|r| r.report.clone()).collect();
    out.write_with("results.csv", |b| write_results_csv(&reports, b))?;
    for r in &reports {
        out.write_with(&format!("cdf_{}.csv", r.method), |b| write_cdf_csv(&empirical_cdf(r), b))?;
    }
    out.write("cdf.svg", cdf_svg("CDF of positioning errors", &reports).as_bytes())?;
    let test_positions: Vec<Vec2> = data.split.test_indices().iter().map(|&i| sim.trajectory.positions[i]).collect();
    for r in &reports {
        let svg = error_map_svg(&format!("{} positioning error", r.method), &test_positions, &r.per_sample_errors);
        out.write(&format!("error_map_{}.svg", r.method), svg.as_bytes())?;
    }
    Ok(())
}

pub fn write_sweep(out: &mut ArtifactWriter, rows: &[SweepRow]) -> Result<()> {
    let param = rows.first().map_or("V", |r| r.param.as_str()).to_string();
    out.write_with(&format!("sweep_{param}.csv"), |b| write_sweep_csv(rows, b))?;
    out.write(&format!("sweep_{param}.svg"), sweep_svg(&format!("{param} sweep"), rows).as_bytes())?;
    Ok(())
}
