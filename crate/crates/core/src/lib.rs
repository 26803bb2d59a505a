//! Neural positioning from channel state information, trained without
//! ground-truth positions.
//!
//! The pipeline runs a simulated robot ([`simkit`]) through a room,
//! synthesizes multipath CSI ([`channel`]), turns it into normalized
//! magnitude features ([`features`]), builds triangle and anchor training
//! sets from noisy odometry ([`dataset`]), and trains a small MLP
//! ([`mlp`], [`train`]) with the triangle loss ([`losses`]) or one of the
//! reference methods ([`baselines`]). [`evalrep`] scores the results and
//! [`experiment`] wires everything to a config file ([`config`]).

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evalrep;
pub mod experiment;
pub mod features;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod mlp;
pub mod simkit;
pub mod train;
pub mod tridiag;

pub use baselines::{reconstruct_trajectory_ls, PseudoLabels};
pub use channel::{ChannelConfig, Complex, CsiSample};
pub use config::ExperimentConfig;
pub use dataset::{Anchor, AnchorSet, SplitPlan, TriangleSet};
pub use error::{Error, Result};
pub use evalrep::ErrorReport;
pub use experiment::Method;
pub use features::{AveragingMode, AveragingPolicy, FeatureSet};
pub use geometry::{Polygon, Segment, Vec2};
pub use losses::{LossWeights, TdoaMeasurements};
pub use mlp::{Adam, AdamConfig, Checkpoint, Mlp};
pub use simkit::{Command, DisplacementLog, MotionModel, Pose, Trajectory, WorldConfig};
pub use train::TrainConfig;
