//! CSI feature extraction and moving-average smoothing.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::channel::CsiSample;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::io::{read_header, write_header, ContainerHeader, FEATURE_MAGIC};
use crate::simkit::DisplacementLog;

/// Half-width of the displacement window used to pick `L_n`.
pub const DISPLACEMENT_HALF_WINDOW: usize = 10;

/// Upper bound on a displacement-dependent window; keeps `a / epsilon`
/// from overflowing on stationary stretches.
const MAX_WINDOW: usize = 1 << 30;

/// Real feature vectors, one row per sample, each of length `B * A * W`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// `(B, A, W)` of the CSI the features came from.
    pub shape: (usize, usize, usize),
    pub values: Array2<f64>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.values.row(n)
    }

    /// Single-precision copy for training.
    pub fn to_f32(&self) -> Array2<f32> {
        self.values.mapv(|v| v as f32)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Array2<f64> {
        self.values.select(Axis(0), indices)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AveragingMode {
    None,
    /// The same window length `L` for every sample.
    Fixed(usize),
    /// Window length chosen from the local displacement magnitude.
    DisplacementDependent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragingPolicy {
    pub mode: AveragingMode,
    /// Scale parameter `a` (m * samples).
    pub scale: f64,
    /// Floor `epsilon` (m).
    pub epsilon: f64,
}

impl Default for AveragingPolicy {
    fn default() -> Self {
        Self { mode: AveragingMode::DisplacementDependent, scale: 5.0, epsilon: 1e-3 }
    }
}

impl AveragingPolicy {
    pub fn none() -> Self {
        Self { mode: AveragingMode::None, ..Self::default() }
    }

    pub fn fixed(l: usize) -> Self {
        Self { mode: AveragingMode::Fixed(l), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.epsilon > 0.0) {
            return Err(Error::Config("averaging scale and epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Magnitude, whole-tensor unit norm, then row-major vectorization.
pub fn csi_to_features(csi: &[CsiSample]) -> Result<FeatureSet> {
    let first = csi.first().ok_or_else(|| Error::InvalidArgument("empty CSI sequence".into()))?;
    let shape = first.shape;
    let dim = shape.0 * shape.1 * shape.2;
    let mut values = Array2::zeros((csi.len(), dim));
    for (n, (sample, mut row)) in csi.iter().zip(values.rows_mut()).enumerate() {
        if sample.shape != shape {
            return Err(Error::InvalidArgument(format!("sample {n} has a different shape")));
        }
        for (dst, c) in row.iter_mut().zip(&sample.data) {
            *dst = c.abs();
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm(sample.sample_index));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(FeatureSet { shape, values })
}

/// `L_n` for every sample under a displacement-dependent policy, rounded up
/// to an even integer.
pub fn displacement_windows(policy: &AveragingPolicy, disp: &DisplacementLog, n_samples: usize) -> Vec<usize> {
    let d = &disp.measurements;
    // prefix[k] = sum of d[0..k]
    let mut prefix = Vec::with_capacity(d.len() + 1);
    prefix.push(Vec2::ZERO);
    for &v in d {
        prefix.push(*prefix.last().unwrap() + v);
    }
    (0..n_samples)
        .map(|n| {
            let lo = n.saturating_sub(DISPLACEMENT_HALF_WINDOW).min(d.len());
            let hi = (n + DISPLACEMENT_HALF_WINDOW + 1).min(d.len());
            let local = if hi > lo { prefix[hi] - prefix[lo] } else { Vec2::ZERO };
            let l = (policy.scale / (local.norm() + policy.epsilon)).ceil();
            let l = if l >= MAX_WINDOW as f64 { MAX_WINDOW } else { l as usize };
            l + (l % 2)
        })
        .collect()
}

/// Zero-padded moving average. A window of length `L` averages the `L + 1`
/// features `n - floor(L/2) ..= n + ceil(L/2)`; out-of-range terms count
/// as zero vectors but still contribute to the divisor.
pub fn moving_average(features: &FeatureSet, policy: &AveragingPolicy, disp: &DisplacementLog) -> Result<FeatureSet> {
    policy.validate()?;
    let n = features.len();
    let windows: Vec<usize> = match policy.mode {
        AveragingMode::None | AveragingMode::Fixed(0) => return Ok(features.clone()),
        AveragingMode::Fixed(l) => vec![l; n],
        AveragingMode::DisplacementDependent => {
            if disp.len() + 1 != n {
                return Err(Error::DimensionMismatch { expected: n.saturating_sub(1), actual: disp.len() });
            }
            displacement_windows(policy, disp, n)
        }
    };

    let dim = features.dim();
    let mut prefix = Array2::<f64>::zeros((n + 1, dim));
    for i in 0..n {
        let next = &prefix.row(i) + &features.values.row(i);
        prefix.row_mut(i + 1).assign(&next);
    }

    let mut out = Array2::<f64>::zeros((n, dim));
    for (i, (&l, mut row)) in windows.iter().zip(out.rows_mut()).enumerate() {
        let lo = i.saturating_sub(l / 2);
        let hi = (i + l.div_ceil(2) + 1).min(n);
        let inv = 1.0 / (l as f64 + 1.0);
        if l == 0 {
            row.assign(&features.values.row(i));
            continue;
        }
        ndarray::Zip::from(&mut row)
            .and(&prefix.row(hi))
            .and(&prefix.row(lo))
            .for_each(|o, &h, &lw| *o = (h - lw) * inv);
    }
    Ok(FeatureSet { shape: features.shape, values: out })
}

/// Writes the `NPOF` container; values are stored as `f32`.
pub fn write_features<W: Write>(features: &FeatureSet, mut out: W) -> Result<()> {
    write_header(&mut out, FEATURE_MAGIC, &ContainerHeader { count: features.len(), shape: features.shape })?;
    let mut buf = Vec::with_capacity(features.dim() * 4);
    for row in features.values.rows() {
        buf.clear();
        for v in row {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let mut r = crate::io::open(path)?;
    let header = read_header(&mut r, FEATURE_MAGIC, path)?;
    let (b, a, w) = header.shape;
    let dim = b * a * w;
    let mut bytes = vec![0u8; dim * 4];
    let mut values = Array2::zeros((header.count, dim));
    for (n, mut row) in values.rows_mut().into_iter().enumerate() {
        r.read_exact(&mut bytes).map_err(|_| Error::format(path, format!("truncated at sample {n}")))?;
        for (dst, c) in row.iter_mut().zip(bytes.chunks_exact(4)) {
            *dst = f32::from_le_bytes(c.try_into().unwrap()) as f64;
        }
    }
    Ok(FeatureSet { shape: header.shape, values })
}
