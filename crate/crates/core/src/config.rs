//! INI experiment configuration.
//!
//! Every section mirrors one module's types. Missing keys fall back to the
//! defaults of [`ExperimentConfig::small_room`]; unknown sections or keys
//! are rejected. The canonical re-serialization ([`ExperimentConfig::to_ini`])
//! lists every key, and its SHA-256 is the config hash stamped on all
//! artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::experiment::Method;
use crate::features::{AveragingMode, AveragingPolicy};
use crate::geometry::{Polygon, Segment, Vec2};
use crate::losses::DEFAULT_TDOA_VARIANCE;
use crate::mlp::AdamConfig;
use crate::simkit::{random_scatterers, MotionModel, Pose, WorldConfig};
use crate::train::TrainConfig;

/// Offsets added to the master seed for each random component.
mod seed_offset {
    pub const WORLD: u64 = 0;
    pub const CHANNEL: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const TDOA: u64 = 4;
    pub const SCATTERERS: u64 = 5;
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub area: Vec<Vec2>,
    pub ap_positions: Vec<Vec2>,
    pub antenna_offsets: Vec<Vec2>,
    pub blockers: Vec<Segment>,
    pub dock: Pose,
    /// Number of point scatterers placed uniformly inside the area.
    pub n_scatterers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub threads: usize,
    pub world: WorldSpec,
    pub motion: MotionModel,
    /// `rng_seed` is derived from the master seed.
    pub channel: ChannelConfig,
    /// Keep every `downsample`-th subcarrier.
    pub downsample: usize,
    pub averaging: AveragingPolicy,
    pub n_samples: usize,
    pub leap: usize,
    pub anchor_variance: f64,
    pub baseline2_leap: usize,
    pub tdoa_variance: f64,
    pub tdoa_ref_ap: usize,
    /// `seed` is derived from the master seed.
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// 2 m x 2 m room, three corner APs with four half-wavelength-spaced
    /// antennas each, 52 Wi-Fi subcarriers. Scatterers are weak (gain 0.1)
    /// so the line-of-sight geometry dominates the fingerprint, and batches
    /// hold 64 items so 15 epochs give every method enough Adam steps.
    pub fn small_room() -> Self {
        let chan = ChannelConfig { scatterer_gain: 0.1, ..ChannelConfig::wifi(0) };
        let half_lambda = crate::channel::SPEED_OF_LIGHT / chan.carrier_freq / 2.0;
        Self {
            name: "small_room".into(),
            seed: 1,
            methods: vec![Method::Baseline1, Method::Ours, Method::Baseline2, Method::Baseline3],
            output_dir: PathBuf::from("out"),
            threads: 1,
            world: WorldSpec {
                area: vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0), Vec2::new(0.0, 2.0)],
                ap_positions: vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(0.0, 2.0)],
                antenna_offsets: (0..4).map(|k| Vec2::new(0.0, k as f64 * half_lambda)).collect(),
                blockers: vec![],
                dock: Pose { position: Vec2::new(1.0, 1.0), heading: 0.0 },
                n_scatterers: 12,
            },
            motion: MotionModel::default(),
            channel: chan,
            downsample: 1,
            averaging: AveragingPolicy::default(),
            n_samples: 30_000,
            leap: 100,
            anchor_variance: 1.0,
            baseline2_leap: 200,
            tdoa_variance: DEFAULT_TDOA_VARIANCE,
            tdoa_ref_ap: 0,
            train: TrainConfig { batch_size: 64, ..TrainConfig::default() },
        }
    }

    pub fn world_config(&self) -> WorldConfig {
        let area = Polygon::new(self.world.area.clone());
        let scatterers = random_scatterers(&area, self.world.n_scatterers, self.seed + seed_offset::SCATTERERS);
        WorldConfig {
            area,
            ap_positions: self.world.ap_positions.clone(),
            ap_antenna_offsets: self.world.antenna_offsets.clone(),
            blockers: self.world.blockers.clone(),
            dock: self.world.dock,
            scatterers,
            rng_seed: self.seed + seed_offset::WORLD,
        }
    }

    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig { rng_seed: self.seed + seed_offset::CHANNEL, ..self.channel.clone() }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed + seed_offset::TRAIN, output_offset: self.world.dock.position, ..self.train }
    }

    pub fn split_seed(&self) -> u64 {
        self.seed + seed_offset::SPLIT
    }

    pub fn tdoa_seed(&self) -> u64 {
        self.seed + seed_offset::TDOA
    }

    pub fn validate(&self) -> Result<()> {
        self.world_config().validate()?;
        self.motion.validate()?;
        self.channel.validate()?;
        self.averaging.validate()?;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad("experiment name must be non-empty [A-Za-z0-9_-]");
        }
        if self.downsample == 0 || self.downsample > self.channel.n_subcarriers {
            return bad("downsample must be in 1..=n_subcarriers");
        }
        if self.leap == 0 || self.n_samples < 2 * self.leap + 1 {
            return bad("need leap >= 1 and n_samples > 2 * leap");
        }
        if self.baseline2_leap == 0 || self.baseline2_leap >= self.n_samples {
            return bad("baseline2 leap must be in 1..n_samples");
        }
        if !(self.anchor_variance > 0.0) {
            return bad("anchor_variance must be > 0");
        }
        if !(self.tdoa_variance >= 0.0) {
            return bad("tdoa_variance must be >= 0");
        }
        if self.tdoa_ref_ap >= self.world.ap_positions.len() {
            return bad("tdoa ref_ap must name an existing AP");
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return bad("epochs and batch_size must be >= 1");
        }
        if !(self.train.adam.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        if self.methods.is_empty() {
            return bad("at least one method required");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::from_ini_str(&text)
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::small_room();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys outside any [section]".into()));
                }
                continue;
            };
            for (key, value) in props.iter() {
                cfg.set(section, key, value.trim()).map_err(|e| Error::Config(format!("[{section}] {key}: {e}")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> std::result::Result<(), String> {
        match (section, key) {
            ("experiment", "name") => self.name = v.to_string(),
            ("experiment", "seed") => self.seed = num(v)?,
            ("experiment", "methods") => {
                self.methods =
                    v.split(',').map(|m| m.trim().parse()).collect::<Result<_>>().map_err(|e| e.to_string())?
            }
            ("experiment", "output_dir") => self.output_dir = PathBuf::from(v),
            ("experiment", "threads") => self.threads = num(v)?,
            ("world", "area") => self.world.area = points(v)?,
            ("world", "aps") => self.world.ap_positions = points(v)?,
            ("world", "antenna_offsets") => self.world.antenna_offsets = points(v)?,
            ("world", "blockers") => self.world.blockers = segments(v)?,
            ("world", "dock") => {
                let f = floats(v)?;
                if f.len() != 3 {
                    return Err("expected x,y,heading".into());
                }
                self.world.dock = Pose { position: Vec2::new(f[0], f[1]), heading: f[2] };
            }
            ("world", "scatterers") => self.world.n_scatterers = num(v)?,
            ("motion", "forward_min") => self.motion.forward_dist_range.0 = num(v)?,
            ("motion", "forward_max") => self.motion.forward_dist_range.1 = num(v)?,
            ("motion", "rotate_min") => self.motion.rotate_angle_range.0 = num(v)?,
            ("motion", "rotate_max") => self.motion.rotate_angle_range.1 = num(v)?,
            ("motion", "forward_bias") => self.motion.forward_bias = num(v)?,
            ("motion", "bias_compensation") => self.motion.bias_compensation = num(v)?,
            ("motion", "forward_noise_std") => self.motion.forward_noise_std = num(v)?,
            ("motion", "rotate_noise_std") => self.motion.rotate_noise_std = num(v)?,
            ("motion", "dock_return_period") => self.motion.dock_return_period = num(v)?,
            ("motion", "forward_step") => self.motion.forward_step = num(v)?,
            ("motion", "rotate_step") => self.motion.rotate_step = num(v)?,
            ("channel", "carrier_freq") => self.channel.carrier_freq = num(v)?,
            ("channel", "bandwidth") => self.channel.bandwidth = num(v)?,
            ("channel", "n_subcarriers") => self.channel.n_subcarriers = num(v)?,
            ("channel", "snr_db") => self.channel.noise_snr_db = if v == "none" { None } else { Some(num(v)?) },
            ("channel", "scatterer_gain") => self.channel.scatterer_gain = num(v)?,
            ("channel", "downsample") => self.downsample = num(v)?,
            ("features", "averaging") => {
                self.averaging.mode = match v {
                    "none" => AveragingMode::None,
                    "displacement" => AveragingMode::DisplacementDependent,
                    _ => match v.strip_prefix("fixed:") {
                        Some(l) => AveragingMode::Fixed(num(l)?),
                        None => return Err("expected none, displacement or fixed:<L>".into()),
                    },
                }
            }
            ("features", "scale") => self.averaging.scale = num(v)?,
            ("features", "epsilon") => self.averaging.epsilon = num(v)?,
            ("dataset", "n_samples") => self.n_samples = num(v)?,
            ("dataset", "leap") => self.leap = num(v)?,
            ("dataset", "anchor_variance") => self.anchor_variance = num(v)?,
            ("baseline2", "leap") => self.baseline2_leap = num(v)?,
            ("baseline2", "tdoa_variance") => self.tdoa_variance = num(v)?,
            ("baseline2", "ref_ap") => self.tdoa_ref_ap = num(v)?,
            ("train", "epochs") => self.train.epochs = num(v)?,
            ("train", "batch_size") => self.train.batch_size = num(v)?,
            ("train", "learning_rate") => self.train.adam.learning_rate = num(v)?,
            ("train", "beta1") => self.train.adam.beta1 = num(v)?,
            ("train", "beta2") => self.train.adam.beta2 = num(v)?,
            ("train", "eps") => self.train.adam.eps = num(v)?,
            ("train", "decay_factor") => self.train.adam.decay_factor = num(v)?,
            ("train", "decay_every") => self.train.adam.decay_every = num(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Canonical form: every key, fixed order, shortest round-trip floats.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let pts = |p: &[Vec2]| p.iter().map(|p| format!("{},{}", p.x, p.y)).collect::<Vec<_>>().join("; ");
        let m = &self.motion;
        let c = &self.channel;
        let a: &AdamConfig = &self.train.adam;
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "seed = {}", self.seed);
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let _ = writeln!(s, "methods = {}", methods.join(","));
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "\n[world]");
        let _ = writeln!(s, "area = {}", pts(&self.world.area));
        let _ = writeln!(s, "aps = {}", pts(&self.world.ap_positions));
        let _ = writeln!(s, "antenna_offsets = {}", pts(&self.world.antenna_offsets));
        let blockers: Vec<String> =
            self.world.blockers.iter().map(|b| format!("{},{},{},{}", b.a.x, b.a.y, b.b.x, b.b.y)).collect();
        let _ = writeln!(s, "blockers = {}", blockers.join("; "));
        let d = self.world.dock;
        let _ = writeln!(s, "dock = {},{},{}", d.position.x, d.position.y, d.heading);
        let _ = writeln!(s, "scatterers = {}", self.world.n_scatterers);
        let _ = writeln!(s, "\n[motion]");
        let _ = writeln!(s, "forward_min = {}", m.forward_dist_range.0);
        let _ = writeln!(s, "forward_max = {}", m.forward_dist_range.1);
        let _ = writeln!(s, "rotate_min = {}", m.rotate_angle_range.0);
        let _ = writeln!(s, "rotate_max = {}", m.rotate_angle_range.1);
        let _ = writeln!(s, "forward_bias = {}", m.forward_bias);
        let _ = writeln!(s, "bias_compensation = {}", m.bias_compensation);
        let _ = writeln!(s, "forward_noise_std = {}", m.forward_noise_std);
        let _ = writeln!(s, "rotate_noise_std = {}", m.rotate_noise_std);
        let _ = writeln!(s, "dock_return_period = {}", m.dock_return_period);
        let _ = writeln!(s, "forward_step = {}", m.forward_step);
        let _ = writeln!(s, "rotate_step = {}", m.rotate_step);
        let _ = writeln!(s, "\n[channel]");
        let _ = writeln!(s, "carrier_freq = {}", c.carrier_freq);
        let _ = writeln!(s, "bandwidth = {}", c.bandwidth);
        let _ = writeln!(s, "n_subcarriers = {}", c.n_subcarriers);
        match c.noise_snr_db {
            Some(snr) => writeln!(s, "snr_db = {snr}"),
            None => writeln!(s, "snr_db = none"),
        }
        .ok();
        let _ = writeln!(s, "scatterer_gain = {}", c.scatterer_gain);
        let _ = writeln!(s, "downsample = {}", self.downsample);
        let _ = writeln!(s, "\n[features]");
        let mode = match self.averaging.mode {
            AveragingMode::None => "none".to_string(),
            AveragingMode::DisplacementDependent => "displacement".to_string(),
            AveragingMode::Fixed(l) => format!("fixed:{l}"),
        };
        let _ = writeln!(s, "averaging = {mode}");
        let _ = writeln!(s, "scale = {}", self.averaging.scale);
        let _ = writeln!(s, "epsilon = {}", self.averaging.epsilon);
        let _ = writeln!(s, "\n[dataset]");
        let _ = writeln!(s, "n_samples = {}", self.n_samples);
        let _ = writeln!(s, "leap = {}", self.leap);
        let _ = writeln!(s, "anchor_variance = {}", self.anchor_variance);
        let _ = writeln!(s, "\n[baseline2]");
        let _ = writeln!(s, "leap = {}", self.baseline2_leap);
        let _ = writeln!(s, "tdoa_variance = {}", self.tdoa_variance);
        let _ = writeln!(s, "ref_ap = {}", self.tdoa_ref_ap);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "epochs = {}", self.train.epochs);
        let _ = writeln!(s, "batch_size = {}", self.train.batch_size);
        let _ = writeln!(s, "learning_rate = {}", a.learning_rate);
        let _ = writeln!(s, "beta1 = {}", a.beta1);
        let _ = writeln!(s, "beta2 = {}", a.beta2);
        let _ = writeln!(s, "eps = {}", a.eps);
        let _ = writeln!(s, "decay_factor = {}", a.decay_factor);
        let _ = writeln!(s, "decay_every = {}", a.decay_every);
        s
    }

    /// SHA-256 of the canonical form, excluding where outputs go and how
    /// many threads compute them.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.threads = 1;
        hex::encode(Sha256::digest(canonical.to_ini().as_bytes()))
    }

    /// First 12 hex digits of [`hash`](Self::hash), for file names.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn floats(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|x| num(x.trim())).collect()
}

fn groups(v: &str, width: usize) -> std::result::Result<Vec<Vec<f64>>, String> {
    v.split(';')
        .map(str::trim)
        .filter(|g| !g.is_empty())
        .map(|g| {
            let f = floats(g)?;
            if f.len() != width {
                return Err(format!("expected {width} numbers in `{g}`"));
            }
            Ok(f)
        })
        .collect()
}

fn points(v: &str) -> std::result::Result<Vec<Vec2>, String> {
    Ok(groups(v, 2)?.into_iter().map(|f| Vec2::new(f[0], f[1])).collect())
}

fn segments(v: &str) -> std::result::Result<Vec<Segment>, String> {
    Ok(groups(v, 4)?.into_iter().map(|f| Segment::new(Vec2::new(f[0], f[1]), Vec2::new(f[2], f[3]))).collect())
}
