//! Least-squares trajectory reconstruction and the per-method trainers.
//!
//! Every trainer takes the full feature matrix and the split; samples in
//! the test set never contribute to a loss term.

use ndarray::Array2;

use crate::dataset::{AnchorSet, SplitPlan, TriangleSet};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::losses::{displacement_magnitudes, TdoaMeasurements};
use crate::simkit::DisplacementLog;
use crate::train::{
    train, Baseline2Objective, DisplacementObjective, SupervisedObjective, TrainConfig, TrainOutcome, TriangleObjective,
};
use crate::tridiag::solve_tridiagonal;

/// Anchor variance used when fitting pseudo labels.
pub const PSEUDO_LABEL_ANCHOR_VARIANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    pub positions: Vec<Vec2>,
    /// Square root of the minimized objective.
    pub residual_norm: f64,
}

/// Minimizes
/// `sum_n ||d_n - (x_{n+1} - x_n)||^2 + sum_a ||x_a - x_idx(a)||^2 / (2 var_a)`
/// over `x_0..x_N`. The normal equations are tridiagonal and decouple
/// into one system per coordinate.
pub fn reconstruct_trajectory_ls(disp: &DisplacementLog, anchors: &AnchorSet) -> Result<PseudoLabels> {
    if anchors.is_empty() {
        return Err(Error::NoAnchors);
    }
    let n = disp.len() + 1;
    let d = &disp.measurements;
    let mut diag = vec![0.0; n];
    let mut rhs = vec![Vec2::ZERO; n];
    for (i, &di) in d.iter().enumerate() {
        diag[i] += 1.0;
        diag[i + 1] += 1.0;
        rhs[i] -= di;
        rhs[i + 1] += di;
    }
    for a in &anchors.entries {
        if a.index >= n {
            return Err(Error::InvalidArgument(format!("anchor at sample {} beyond trajectory", a.index)));
        }
        if !(a.variance > 0.0) {
            return Err(Error::InvalidArgument("anchor variance must be > 0".into()));
        }
        let w = 1.0 / (2.0 * a.variance);
        diag[a.index] += w;
        rhs[a.index] += a.position * w;
    }
    let off = vec![-1.0; n - 1];
    let xs = solve_tridiagonal(&off, &diag, &off, &rhs.iter().map(|r| r.x).collect::<Vec<_>>())?;
    let ys = solve_tridiagonal(&off, &diag, &off, &rhs.iter().map(|r| r.y).collect::<Vec<_>>())?;
    let positions: Vec<Vec2> = xs.into_iter().zip(ys).map(|(x, y)| Vec2::new(x, y)).collect();

    let mut objective: f64 =
        d.iter().enumerate().map(|(i, &di)| (di - (positions[i + 1] - positions[i])).norm_sq()).sum();
    objective +=
        anchors.entries.iter().map(|a| (a.position - positions[a.index]).norm_sq() / (2.0 * a.variance)).sum::<f64>();
    Ok(PseudoLabels { positions, residual_norm: objective.sqrt() })
}

fn check_rows(features: &Array2<f32>, split: &SplitPlan) -> Result<()> {
    if features.nrows() != split.n_samples() {
        return Err(Error::DimensionMismatch { expected: split.n_samples(), actual: features.nrows() });
    }
    Ok(())
}

/// Triangle loss plus anchor loss on training samples only.
pub fn train_proposed(
    features: &Array2<f32>,
    triangles: &[TriangleSet],
    anchors: &AnchorSet,
    split: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_rows(features, split)?;
    let tris = split.train_triangles(triangles);
    let anchors = split.train_anchors(anchors);
    train(features, &TriangleObjective { triangles: &tris, anchors: &anchors, weights: cfg.loss_weights }, cfg)
}

/// Consecutive displacements only (a triangle-free ablation).
pub fn train_displacement(
    features: &Array2<f32>,
    disp: &DisplacementLog,
    anchors: &AnchorSet,
    split: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_rows(features, split)?;
    let steps = (0..disp.len()).filter(|&n| !split.is_test(n) && !split.is_test(n + 1)).collect();
    let anchors = split.train_anchors(anchors);
    train(features, &DisplacementObjective { steps, disp, anchors: &anchors, weights: cfg.loss_weights }, cfg)
}

/// Supervised on ground-truth positions.
pub fn train_baseline1(
    features: &Array2<f32>,
    ground_truth: &[Vec2],
    split: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_rows(features, split)?;
    if ground_truth.len() != features.nrows() {
        return Err(Error::DimensionMismatch { expected: features.nrows(), actual: ground_truth.len() });
    }
    train(features, &SupervisedObjective { indices: split.train_indices(), targets: ground_truth }, cfg)
}

/// Displacement magnitudes at leap `leap` plus TDoA.
pub fn train_baseline2(
    features: &Array2<f32>,
    disp: &DisplacementLog,
    leap: usize,
    tdoa: &TdoaMeasurements,
    ap_positions: &[Vec2],
    split: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_rows(features, split)?;
    if tdoa.values.len() != features.nrows() {
        return Err(Error::DimensionMismatch { expected: features.nrows(), actual: tdoa.values.len() });
    }
    let magnitudes = displacement_magnitudes(disp, leap)?;
    let starts = (0..magnitudes.len()).filter(|&m| !split.is_test(m) && !split.is_test(m + leap)).collect();
    train(features, &Baseline2Objective { starts, leap, magnitudes: &magnitudes, tdoa, ap_positions }, cfg)
}

/// Supervised on least-squares pseudo labels. The reconstruction uses
/// the displacement log and the training anchors with variance
/// [`PSEUDO_LABEL_ANCHOR_VARIANCE`].
pub fn train_baseline3(
    features: &Array2<f32>,
    disp: &DisplacementLog,
    anchors: &AnchorSet,
    split: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<(TrainOutcome, PseudoLabels)> {
    check_rows(features, split)?;
    let anchors = split.train_anchors(anchors).with_variance(PSEUDO_LABEL_ANCHOR_VARIANCE);
    let labels = reconstruct_trajectory_ls(disp, &anchors)?;
    if labels.positions.len() != features.nrows() {
        return Err(Error::DimensionMismatch { expected: features.nrows(), actual: labels.positions.len() });
    }
    let outcome =
        train(features, &SupervisedObjective { indices: split.train_indices(), targets: &labels.positions }, cfg)?;
    Ok((outcome, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_anchor_set;

    #[test]
    fn exact_with_consistent_data() {
        let truth: Vec<Vec2> = (0..50).map(|i| Vec2::new((i as f64 * 0.3).sin(), i as f64 * 0.01)).collect();
        let disp = DisplacementLog { measurements: truth.windows(2).map(|w| w[1] - w[0]).collect() };
        let anchors = build_anchor_set(&[0], truth[0], 0.5);
        let ls = reconstruct_trajectory_ls(&disp, &anchors).unwrap();
        for (p, t) in ls.positions.iter().zip(&truth) {
            assert!(p.distance(*t) < 1e-12);
        }
        assert!(ls.residual_norm < 1e-10);
    }

    #[test]
    fn two_anchor_compromise() {
        // x0 anchored at 0, x1 anchored at 0, measured step 1:
        // minimize (1 - (x1 - x0))^2 + x0^2 + x1^2 -> x1 = -x0 = 1/3.
        let disp = DisplacementLog { measurements: vec![Vec2::new(1.0, 0.0)] };
        let anchors = build_anchor_set(&[0, 1], Vec2::ZERO, 0.5);
        let ls = reconstruct_trajectory_ls(&disp, &anchors).unwrap();
        assert!((ls.positions[0].x + 1.0 / 3.0).abs() < 1e-14);
        assert!((ls.positions[1].x - 1.0 / 3.0).abs() < 1e-14);
        assert!((ls.residual_norm - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn needs_anchors() {
        let disp = DisplacementLog { measurements: vec![Vec2::ZERO; 3] };
        assert!(matches!(reconstruct_trajectory_ls(&disp, &AnchorSet::default()), Err(Error::NoAnchors)));
    }
}
