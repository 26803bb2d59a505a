//! Training objectives and their gradients with respect to network outputs.
//!
//! Every loss takes predicted positions (already produced by the network)
//! and returns its value together with the partial derivative with respect
//! to each prediction it touched. Chaining into parameter gradients is the
//! trainer's job.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::SPEED_OF_LIGHT;
use crate::dataset::{AnchorSet, TriangleSet};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::simkit::{DisplacementLog, Trajectory};

/// Default TDoA variance: 3 ns^2, in s^2.
pub const DEFAULT_TDOA_VARIANCE: f64 = 3e-18;

/// Error variances entering the loss denominators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub side_a: f64,
    pub side_b: f64,
    pub side_c: f64,
    pub displacement: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { side_a: 1.0, side_b: 1.0, side_c: 1.0, displacement: 1.0 }
    }
}

/// `||d - (to - from)||^2 / (2 var)` and its gradient w.r.t. `to`
/// (the gradient w.r.t. `from` is the negation).
fn side_term(d: Vec2, from: Vec2, to: Vec2, var: f64) -> (f64, Vec2) {
    let r = d - (to - from);
    (r.norm_sq() / (2.0 * var), r * (-1.0 / var))
}

/// Loss of one triangle given the predictions at its three vertices
/// `[m, m + V, m + 2V]`.
pub fn triangle_loss(pred: [Vec2; 3], tri: &TriangleSet, w: &LossWeights) -> (f64, [Vec2; 3]) {
    let [p0, p1, p2] = pred;
    let (la, ga) = side_term(tri.d_a, p0, p1, w.side_a);
    let (lb, gb) = side_term(tri.d_b, p1, p2, w.side_b);
    let (lc, gc) = side_term(tri.d_c, p0, p2, w.side_c);
    (la + lb + lc, [-ga - gc, ga - gb, gb + gc])
}

/// Sum of [`triangle_loss`] over triangles; `pred(i)` yields the prediction
/// for sample `i`. Gradients are returned per triangle vertex.
pub fn triangle_loss_sum(
    triangles: &[TriangleSet],
    pred: impl Fn(usize) -> Vec2,
    w: &LossWeights,
) -> (f64, Vec<[Vec2; 3]>) {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(triangles.len());
    for t in triangles {
        let [i, j, k] = t.vertices();
        let (l, g) = triangle_loss([pred(i), pred(j), pred(k)], t, w);
        total += l;
        grads.push(g);
    }
    (total, grads)
}

/// `sum_a ||x_a - pred_a||^2 / (2 var_a)`; `pred[k]` belongs to anchor `k`.
pub fn anchor_loss(pred: &[Vec2], anchors: &AnchorSet) -> Result<(f64, Vec<Vec2>)> {
    if pred.len() != anchors.len() {
        return Err(Error::DimensionMismatch { expected: anchors.len(), actual: pred.len() });
    }
    let mut total = 0.0;
    let grads = pred
        .iter()
        .zip(&anchors.entries)
        .map(|(&p, a)| {
            let r = a.position - p;
            total += r.norm_sq() / (2.0 * a.variance);
            r * (-1.0 / a.variance)
        })
        .collect();
    Ok((total, grads))
}

/// Consecutive-step loss `sum_n ||d_n - (pred_{n+1} - pred_n)||^2 / (2 var)`
/// over all `N + 1` predictions.
pub fn displacement_loss(pred: &[Vec2], disp: &DisplacementLog, w: &LossWeights) -> Result<(f64, Vec<Vec2>)> {
    if pred.len() != disp.len() + 1 {
        return Err(Error::DimensionMismatch { expected: disp.len() + 1, actual: pred.len() });
    }
    let mut total = 0.0;
    let mut grads = vec![Vec2::ZERO; pred.len()];
    for (n, &d) in disp.measurements.iter().enumerate() {
        let (l, g) = side_term(d, pred[n], pred[n + 1], w.displacement);
        total += l;
        grads[n + 1] += g;
        grads[n] -= g;
    }
    Ok((total, grads))
}

/// Triangle part plus anchor part.
pub fn total_loss(triangle: f64, anchor: f64) -> f64 {
    triangle + anchor
}

/// Mean over the batch of `||pred - truth||^2`.
pub fn supervised_mse(pred: &[Vec2], truth: &[Vec2]) -> Result<(f64, Vec<Vec2>)> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), actual: pred.len() });
    }
    if pred.is_empty() {
        return Ok((0.0, vec![]));
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let grads = pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| {
            let r = p - t;
            total += r.norm_sq();
            r * (2.0 / n)
        })
        .collect();
    Ok((total / n, grads))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of `||p - q||` w.r.t. `p`, zero at coincidence.
fn unit(p: Vec2, q: Vec2) -> Vec2 {
    let d = p - q;
    let n = d.norm();
    if n > 0.0 {
        d * (1.0 / n)
    } else {
        Vec2::ZERO
    }
}

/// Simulated TDoA measurements relative to one reference AP.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaMeasurements {
    pub ref_ap: usize,
    /// APs paired with the reference, i.e. every AP except it.
    pub aps: Vec<usize>,
    /// `values[m][k]` pairs sample `m` with AP `aps[k]` (seconds).
    pub values: Vec<Vec<f64>>,
}

/// `tau = (||x_ref - x_m|| - ||x_i - x_m||) / c` plus Gaussian noise of the
/// given variance (s^2), for every trajectory sample.
pub fn simulate_tdoa(
    traj: &Trajectory,
    ap_positions: &[Vec2],
    ref_ap: usize,
    variance: f64,
    seed: u64,
) -> Result<TdoaMeasurements> {
    if ref_ap >= ap_positions.len() {
        return Err(Error::InvalidArgument(format!("reference AP {ref_ap} does not exist")));
    }
    if !(variance >= 0.0) {
        return Err(Error::InvalidArgument("TDoA variance must be >= 0".into()));
    }
    let aps: Vec<usize> = (0..ap_positions.len()).filter(|&i| i != ref_ap).collect();
    let noise = Normal::new(0.0, variance.sqrt()).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_ref = ap_positions[ref_ap];
    let values = traj
        .positions
        .iter()
        .map(|&x| {
            aps.iter()
                .map(|&i| {
                    let mean = (x_ref.distance(x) - ap_positions[i].distance(x)) / SPEED_OF_LIGHT;
                    if variance == 0.0 {
                        mean
                    } else {
                        mean + noise.sample(&mut rng)
                    }
                })
                .collect()
        })
        .collect();
    Ok(TdoaMeasurements { ref_ap, aps, values })
}

/// `|| p_m - p_{m+V} || ` against the measured magnitude, plus the TDoA
/// residuals at `p_m`, all as absolute values. Returns gradients w.r.t.
/// `p_m` and `p_{m+V}`.
pub fn baseline2_term(
    p_m: Vec2,
    p_mv: Vec2,
    magnitude: f64,
    tdoa: &[f64],
    tdoa_aps: &[usize],
    ap_positions: &[Vec2],
    ref_ap: usize,
) -> (f64, [Vec2; 2]) {
    let mut g_m = Vec2::ZERO;
    let mut g_mv = Vec2::ZERO;
    let r = (p_mv - p_m).norm() - magnitude;
    let s = sign(r);
    let u = unit(p_mv, p_m);
    g_mv += u * s;
    g_m -= u * s;
    let mut value = r.abs();

    for (&tau, &i) in tdoa.iter().zip(tdoa_aps) {
        let x_ref = ap_positions[ref_ap];
        let x_i = ap_positions[i];
        let r = x_ref.distance(p_m) - x_i.distance(p_m) - SPEED_OF_LIGHT * tau;
        value += r.abs();
        g_m += (unit(p_m, x_ref) - unit(p_m, x_i)) * sign(r);
    }
    (value, [g_m, g_mv])
}

/// Sum of [`baseline2_term`] over pairs `(m, m + V)`; `starts[k] = m`,
/// `magnitudes[k] = l_m`, and `tdoa.values` is indexed by `m`.
pub fn baseline2_loss(
    pred_m: &[Vec2],
    pred_mv: &[Vec2],
    starts: &[usize],
    magnitudes: &[f64],
    tdoa: Option<&TdoaMeasurements>,
    ap_positions: &[Vec2],
) -> Result<(f64, Vec<[Vec2; 2]>)> {
    let k = starts.len();
    for len in [pred_m.len(), pred_mv.len(), magnitudes.len()] {
        if len != k {
            return Err(Error::DimensionMismatch { expected: k, actual: len });
        }
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(k);
    for j in 0..k {
        let (v, g) = match tdoa {
            Some(t) => baseline2_term(
                pred_m[j],
                pred_mv[j],
                magnitudes[j],
                &t.values[starts[j]],
                &t.aps,
                ap_positions,
                t.ref_ap,
            ),
            None => baseline2_term(pred_m[j], pred_mv[j], magnitudes[j], &[], &[], ap_positions, 0),
        };
        total += v;
        grads.push(g);
    }
    Ok((total, grads))
}

/// `l_m = || sum_{n=m}^{m+V-1} d_n ||` for `m = 0..=N - V`.
pub fn displacement_magnitudes(disp: &DisplacementLog, leap: usize) -> Result<Vec<f64>> {
    let n = disp.len();
    if leap == 0 || n < leap {
        return Err(Error::InvalidArgument(format!("cannot form magnitudes with leap {leap} over {n} steps")));
    }
    let d = &disp.measurements;
    Ok((0..=n - leap).map(|m| d[m..m + leap].iter().copied().sum::<Vec2>().norm()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_anchor_set, Anchor};

    fn tri(d_a: Vec2, d_b: Vec2) -> TriangleSet {
        TriangleSet { start: 0, leap: 1, d_a, d_b, d_c: d_a + d_b }
    }

    #[test]
    fn triangle_zero_at_geometry() {
        let p = [Vec2::new(0.3, 0.1), Vec2::new(1.0, -0.5), Vec2::new(2.0, 2.0)];
        let t = tri(p[1] - p[0], p[2] - p[1]);
        let (l, g) = triangle_loss(p, &t, &LossWeights::default());
        assert!(l.abs() < 1e-28);
        assert!(g.iter().all(|g| g.norm() < 1e-14));
    }

    #[test]
    fn triangle_direct_substitution() {
        let t = tri(Vec2::new(1.0, 0.0), Vec2::ZERO);
        let (l, _) = triangle_loss([Vec2::ZERO; 3], &t, &LossWeights::default());
        assert_eq!(l, 1.0);
    }

    #[test]
    fn triangle_vertex_gradient_structure() {
        let t = tri(Vec2::new(1.0, 2.0), Vec2::new(-0.5, 0.3));
        let p = [Vec2::new(0.1, 0.2), Vec2::new(0.4, -0.3), Vec2::new(-1.0, 0.0)];
        let (_, g) = triangle_loss(p, &t, &LossWeights::default());
        // Gradients sum to zero (translation invariance).
        let s = g[0] + g[1] + g[2];
        assert!(s.norm() < 1e-14);
        // Vertex m collects the A and C residuals.
        let ra = t.d_a - (p[1] - p[0]);
        let rc = t.d_c - (p[2] - p[0]);
        assert!((g[0] - (ra + rc)).norm() < 1e-14);
    }

    #[test]
    fn anchor_values() {
        let a = build_anchor_set(&[0], Vec2::ZERO, 1.0);
        assert_eq!(anchor_loss(&[Vec2::ZERO], &a).unwrap().0, 0.0);
        assert_eq!(anchor_loss(&[Vec2::new(3.0, 4.0)], &a).unwrap().0, 12.5);
        let two = AnchorSet {
            entries: vec![
                Anchor { index: 0, position: Vec2::new(1.0, 1.0), variance: 0.5 },
                Anchor { index: 9, position: Vec2::new(-2.0, 0.5), variance: 2.0 },
            ],
        };
        let p = [Vec2::new(0.2, 0.7), Vec2::new(1.5, -1.0)];
        let oracle = (Vec2::new(1.0, 1.0) - p[0]).norm_sq() / 1.0 + (Vec2::new(-2.0, 0.5) - p[1]).norm_sq() / 4.0;
        assert!((anchor_loss(&p, &two).unwrap().0 - oracle).abs() < 1e-15);
        assert!(anchor_loss(&p[..1], &two).is_err());
    }

    #[test]
    fn displacement_values() {
        let log = DisplacementLog { measurements: vec![Vec2::new(1.0, 0.0)] };
        let (l, _) = displacement_loss(&[Vec2::ZERO, Vec2::ZERO], &log, &LossWeights::default()).unwrap();
        assert_eq!(l, 0.5);
        let exact = [Vec2::ZERO, Vec2::new(1.0, 0.0)];
        assert_eq!(displacement_loss(&exact, &log, &LossWeights::default()).unwrap().0, 0.0);
    }

    #[test]
    fn totals() {
        assert_eq!(total_loss(0.0, 0.0), 0.0);
        assert_eq!(total_loss(1.0, 12.5), 13.5);
    }

    #[test]
    fn mse_values() {
        assert_eq!(supervised_mse(&[Vec2::new(1.0, 1.0)], &[Vec2::new(1.0, 1.0)]).unwrap().0, 0.0);
        assert_eq!(supervised_mse(&[Vec2::ZERO], &[Vec2::new(3.0, 4.0)]).unwrap().0, 25.0);
        let (l, _) = supervised_mse(&[Vec2::ZERO, Vec2::new(1.0, 0.0)], &[Vec2::new(3.0, 4.0), Vec2::ZERO]).unwrap();
        assert_eq!(l, (25.0 + 1.0) / 2.0);
    }

    #[test]
    fn baseline2_zero_cases() {
        let (v, _) = baseline2_term(Vec2::ZERO, Vec2::new(1.0, 0.0), 1.0, &[], &[], &[], 0);
        assert_eq!(v, 0.0);

        let aps = [Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(0.0, 4.0)];
        let traj = Trajectory {
            positions: vec![Vec2::new(1.0, 1.0), Vec2::new(2.0, 1.5)],
            headings: vec![0.0; 2],
            dock_indices: vec![0],
        };
        let tdoa = simulate_tdoa(&traj, &aps, 0, 0.0, 1).unwrap();
        let l = (traj.positions[1] - traj.positions[0]).norm();
        let (v, _) = baseline2_loss(&traj.positions[..1], &traj.positions[1..], &[0], &[l], Some(&tdoa), &aps).unwrap();
        assert!(v < 1e-12, "{v}");
    }

    #[test]
    fn tdoa_means() {
        let aps = [Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)];
        let traj = Trajectory { positions: vec![Vec2::new(0.0, 0.7)], headings: vec![0.0], dock_indices: vec![0] };
        let t = simulate_tdoa(&traj, &aps, 0, 0.0, 0).unwrap();
        assert_eq!(t.values[0][0], 0.0);

        // Reference 5 m away, AP 2 m away: 3 m path difference.
        let aps = [Vec2::new(5.0, 0.0), Vec2::new(0.0, 2.0)];
        let traj = Trajectory { positions: vec![Vec2::ZERO], headings: vec![0.0], dock_indices: vec![0] };
        let t = simulate_tdoa(&traj, &aps, 0, 0.0, 0).unwrap();
        assert!((t.values[0][0] - 3.0 / 299_792_458.0).abs() < 1e-22);
        assert!((t.values[0][0] - 1.0007e-8).abs() < 1e-12);
        assert!(simulate_tdoa(&traj, &aps, 2, 0.0, 0).is_err());
    }

    #[test]
    fn tdoa_noise_has_requested_variance() {
        let aps = [Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)];
        let traj = Trajectory {
            positions: vec![Vec2::new(0.0, 0.5); 20_000],
            headings: vec![0.0; 20_000],
            dock_indices: vec![0],
        };
        let t = simulate_tdoa(&traj, &aps, 0, DEFAULT_TDOA_VARIANCE, 4).unwrap();
        let var = t.values.iter().map(|v| v[0] * v[0]).sum::<f64>() / 20_000.0;
        assert!((var / DEFAULT_TDOA_VARIANCE - 1.0).abs() < 0.05);
    }

    #[test]
    fn baseline2_translation_behaviour() {
        let aps = [Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(0.0, 3.0)];
        let p = [Vec2::new(1.0, 1.0)];
        let q = [Vec2::new(1.7, 1.2)];
        let shift = Vec2::new(0.3, -0.4);
        let ps = [p[0] + shift];
        let qs = [q[0] + shift];
        let (a, _) = baseline2_loss(&p, &q, &[0], &[0.5], None, &aps).unwrap();
        let (b, _) = baseline2_loss(&ps, &qs, &[0], &[0.5], None, &aps).unwrap();
        assert!((a - b).abs() < 1e-15);
        let tdoa = TdoaMeasurements { ref_ap: 0, aps: vec![1, 2], values: vec![vec![1e-9, -2e-9]] };
        let (a, _) = baseline2_loss(&p, &q, &[0], &[0.5], Some(&tdoa), &aps).unwrap();
        let (b, _) = baseline2_loss(&ps, &qs, &[0], &[0.5], Some(&tdoa), &aps).unwrap();
        assert!((a - b).abs() > 1e-3);
    }

    #[test]
    fn magnitudes() {
        let log = DisplacementLog { measurements: vec![Vec2::new(0.3, 0.4); 5] };
        assert_eq!(displacement_magnitudes(&log, 2).unwrap(), vec![1.0; 4]);
        assert!(displacement_magnitudes(&log, 6).is_err());
    }
}
