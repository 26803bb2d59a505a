//! Mini-batch training loop shared by every method.
//!
//! An [`Objective`] enumerates training items (triangles, sample pairs,
//! labelled samples), names the samples each batch needs, and turns the
//! network outputs at those samples into a loss value and per-output
//! gradients. The loop gathers features, runs forward/backward in `f32`,
//! and applies Adam.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{AnchorSet, TriangleSet};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::losses::{anchor_loss, baseline2_term, supervised_mse, triangle_loss, LossWeights, TdoaMeasurements};
use crate::mlp::{positioning_dims, Adam, AdamConfig, Mlp};
use crate::simkit::DisplacementLog;

const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds both the initialization and the per-epoch shuffles.
    pub seed: u64,
    pub loss_weights: LossWeights,
    /// Initial value of the output-layer bias, i.e. the position predicted
    /// by an untrained network.
    pub output_offset: Vec2,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
            loss_weights: LossWeights::default(),
            output_offset: Vec2::ZERO,
        }
    }
}

/// Network outputs of one batch, addressed by sample index.
pub struct BatchView<'a> {
    slots: &'a [u32],
    preds: &'a [Vec2],
    grads: Vec<Vec2>,
}

impl BatchView<'_> {
    pub fn pred(&self, sample: usize) -> Vec2 {
        self.preds[self.slots[sample] as usize]
    }

    pub fn add_grad(&mut self, sample: usize, g: Vec2) {
        self.grads[self.slots[sample] as usize] += g;
    }
}

pub trait Objective {
    fn n_items(&self) -> usize;

    /// Pushes every sample index that `items` touch (duplicates allowed).
    fn collect_samples(&self, items: &[usize], out: &mut Vec<usize>);

    /// Loss of `items`; gradients go through [`BatchView::add_grad`].
    fn batch_loss(&self, items: &[usize], batch: &mut BatchView<'_>) -> f64;

    /// Anchors of an objective whose remaining terms ignore a global
    /// translation of the outputs. The loop then sets the output bias to
    /// its exact minimizer after every epoch.
    fn translation_anchors(&self) -> Option<&AnchorSet> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp<f32>,
    pub optimizer: Adam<f32>,
    /// Sum of batch losses per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh `[F, 512, 256, 64, 2]` network whose input
/// standardization is fitted to the samples the objective touches, so
/// held-out rows never influence it.
pub fn train<O: Objective>(features: &Array2<f32>, objective: &O, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut model = Mlp::<f32>::new(&positioning_dims(features.ncols()), cfg.seed)?;
    let items: Vec<usize> = (0..objective.n_items()).collect();
    let mut used = Vec::new();
    objective.collect_samples(&items, &mut used);
    used.sort_unstable();
    used.dedup();
    if used.is_empty() {
        return Err(Error::InvalidArgument("no training items".into()));
    }
    model.fit_input_normalization(features.select(Axis(0), &used).view())?;
    let last = model.biases.last_mut().expect("at least one layer");
    last[0] = cfg.output_offset.x as f32;
    last[1] = cfg.output_offset.y as f32;
    train_model(model, features, objective, cfg)
}

pub fn train_model<O: Objective>(
    mut model: Mlp<f32>,
    features: &Array2<f32>,
    objective: &O,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if objective.n_items() == 0 {
        return Err(Error::InvalidArgument("no training items".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut optimizer = Adam::new(cfg.adam, &model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut slots = vec![u32::MAX; features.nrows()];
    let mut order: Vec<usize> = (0..objective.n_items()).collect();
    let mut touched = Vec::new();
    let mut samples = Vec::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            touched.clear();
            objective.collect_samples(chunk, &mut touched);
            samples.clear();
            for &s in &touched {
                if slots[s] == u32::MAX {
                    slots[s] = samples.len() as u32;
                    samples.push(s);
                }
            }
            let x = features.select(Axis(0), &samples);
            let (out, cache) = model.forward_cached(x.view())?;
            let preds: Vec<Vec2> = out.rows().into_iter().map(|r| Vec2::new(r[0] as f64, r[1] as f64)).collect();
            let mut view = BatchView { slots: &slots, preds: &preds, grads: vec![Vec2::ZERO; samples.len()] };
            epoch_loss += objective.batch_loss(chunk, &mut view);
            let upstream = Array2::from_shape_fn((samples.len(), 2), |(i, j)| {
                let g = view.grads[i];
                (if j == 0 { g.x } else { g.y }) as f32
            });
            let grads = model.backward_cached(&cache, upstream.view())?;
            optimizer.step(&mut model, &grads)?;
            for &s in &samples {
                slots[s] = u32::MAX;
            }
        }
        optimizer.end_epoch(epoch);
        if let Some(anchors) = objective.translation_anchors() {
            refit_translation(&mut model, features, anchors)?;
        }
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainOutcome { model, optimizer, epoch_losses })
}

/// Shifts the output bias by the precision-weighted mean anchor residual,
/// which minimizes the anchor loss over translations.
fn refit_translation(model: &mut Mlp<f32>, features: &Array2<f32>, anchors: &AnchorSet) -> Result<()> {
    if anchors.is_empty() {
        return Ok(());
    }
    let idx: Vec<usize> = anchors.indices().collect();
    let out = model.forward(features.select(Axis(0), &idx).view())?;
    let mut shift = Vec2::ZERO;
    let mut weight = 0.0;
    for (a, row) in anchors.entries.iter().zip(out.rows()) {
        let w = 1.0 / a.variance;
        shift += (a.position - Vec2::new(row[0] as f64, row[1] as f64)) * w;
        weight += w;
    }
    let shift = shift * (1.0 / weight);
    let last = model.biases.last_mut().expect("at least one layer");
    last[0] += shift.x as f32;
    last[1] += shift.y as f32;
    Ok(())
}

/// Triangle loss over mini-batches of triangles plus the anchor loss,
/// scaled by the batch's share of all triangles so one epoch sums to the
/// full objective.
pub struct TriangleObjective<'a> {
    pub triangles: &'a [TriangleSet],
    pub anchors: &'a AnchorSet,
    pub weights: LossWeights,
}

impl Objective for TriangleObjective<'_> {
    fn n_items(&self) -> usize {
        self.triangles.len()
    }

    fn translation_anchors(&self) -> Option<&AnchorSet> {
        Some(self.anchors)
    }

    fn collect_samples(&self, items: &[usize], out: &mut Vec<usize>) {
        for &k in items {
            out.extend(self.triangles[k].vertices());
        }
        out.extend(self.anchors.indices());
    }

    fn batch_loss(&self, items: &[usize], batch: &mut BatchView<'_>) -> f64 {
        let mut total = 0.0;
        for &k in items {
            let t = &self.triangles[k];
            let v = t.vertices();
            let (l, g) = triangle_loss([batch.pred(v[0]), batch.pred(v[1]), batch.pred(v[2])], t, &self.weights);
            total += l;
            for (i, g) in v.into_iter().zip(g) {
                batch.add_grad(i, g);
            }
        }
        total + anchor_part(self.anchors, items.len() as f64 / self.triangles.len() as f64, batch)
    }
}

fn anchor_part(anchors: &AnchorSet, share: f64, batch: &mut BatchView<'_>) -> f64 {
    if anchors.is_empty() {
        return 0.0;
    }
    let preds: Vec<Vec2> = anchors.indices().map(|i| batch.pred(i)).collect();
    let (l, g) = anchor_loss(&preds, anchors).expect("one prediction per anchor");
    for (a, g) in anchors.entries.iter().zip(g) {
        batch.add_grad(a.index, g * share);
    }
    l * share
}

/// Consecutive-step displacement loss plus anchors; `steps` lists the `n`
/// whose pair `(n, n + 1)` is usable for training.
pub struct DisplacementObjective<'a> {
    pub steps: Vec<usize>,
    pub disp: &'a DisplacementLog,
    pub anchors: &'a AnchorSet,
    pub weights: LossWeights,
}

impl Objective for DisplacementObjective<'_> {
    fn n_items(&self) -> usize {
        self.steps.len()
    }

    fn translation_anchors(&self) -> Option<&AnchorSet> {
        Some(self.anchors)
    }

    fn collect_samples(&self, items: &[usize], out: &mut Vec<usize>) {
        for &k in items {
            out.extend([self.steps[k], self.steps[k] + 1]);
        }
        out.extend(self.anchors.indices());
    }

    fn batch_loss(&self, items: &[usize], batch: &mut BatchView<'_>) -> f64 {
        let mut total = 0.0;
        let var = self.weights.displacement;
        for &k in items {
            let n = self.steps[k];
            let r = self.disp.measurements[n] - (batch.pred(n + 1) - batch.pred(n));
            total += r.norm_sq() / (2.0 * var);
            let g = r * (-1.0 / var);
            batch.add_grad(n + 1, g);
            batch.add_grad(n, -g);
        }
        total + anchor_part(self.anchors, items.len() as f64 / self.steps.len() as f64, batch)
    }
}

/// Mean squared error against per-sample targets.
pub struct SupervisedObjective<'a> {
    pub indices: Vec<usize>,
    /// Indexed by sample.
    pub targets: &'a [Vec2],
}

impl Objective for SupervisedObjective<'_> {
    fn n_items(&self) -> usize {
        self.indices.len()
    }

    fn collect_samples(&self, items: &[usize], out: &mut Vec<usize>) {
        out.extend(items.iter().map(|&k| self.indices[k]));
    }

    fn batch_loss(&self, items: &[usize], batch: &mut BatchView<'_>) -> f64 {
        let idx: Vec<usize> = items.iter().map(|&k| self.indices[k]).collect();
        let preds: Vec<Vec2> = idx.iter().map(|&i| batch.pred(i)).collect();
        let truth: Vec<Vec2> = idx.iter().map(|&i| self.targets[i]).collect();
        let (l, g) = supervised_mse(&preds, &truth).expect("equal lengths");
        for (i, g) in idx.into_iter().zip(g) {
            batch.add_grad(i, g);
        }
        l
    }
}

/// Displacement-magnitude and TDoA objective over pairs `(m, m + leap)`.
pub struct Baseline2Objective<'a> {
    pub starts: Vec<usize>,
    pub leap: usize,
    /// Indexed by `m`.
    pub magnitudes: &'a [f64],
    pub tdoa: &'a TdoaMeasurements,
    pub ap_positions: &'a [Vec2],
}

impl Objective for Baseline2Objective<'_> {
    fn n_items(&self) -> usize {
        self.starts.len()
    }

    fn collect_samples(&self, items: &[usize], out: &mut Vec<usize>) {
        for &k in items {
            out.extend([self.starts[k], self.starts[k] + self.leap]);
        }
    }

    fn batch_loss(&self, items: &[usize], batch: &mut BatchView<'_>) -> f64 {
        let mut total = 0.0;
        for &k in items {
            let m = self.starts[k];
            let (v, [g_m, g_mv]) = baseline2_term(
                batch.pred(m),
                batch.pred(m + self.leap),
                self.magnitudes[m],
                &self.tdoa.values[m],
                &self.tdoa.aps,
                self.ap_positions,
                self.tdoa.ref_ap,
            );
            total += v;
            batch.add_grad(m, g_m);
            batch.add_grad(m + self.leap, g_mv);
        }
        total
    }
}
