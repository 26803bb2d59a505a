//! Fully connected positioning network with ReLU hidden layers and a linear
//! output, exact backpropagation and Adam with step decay.
//!
//! Weights are stored input-major (`fan_in x fan_out`) so a batch `X` with
//! one sample per row maps to `X . W + b`. The network is generic over the
//! float type: training runs in `f32`, gradient checks in `f64`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat, Zip};
use num_traits::NumCast;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::io::{read_magic, read_u32, write_u32, FORMAT_VERSION, MODEL_MAGIC};

/// Hidden widths between the feature input and the 2-D output.
pub const HIDDEN_LAYERS: [usize; 3] = [512, 256, 64];
/// Output dimension (planar position).
pub const OUTPUT_DIM: usize = 2;
/// Half-width of the uniform init of the output layer.
pub const OUTPUT_INIT_SCALE: f64 = 1e-3;

fn cast<T: NdFloat>(v: f64) -> T {
    <T as NumCast>::from(v).expect("representable")
}

/// `[F, 512, 256, 64, 2]`.
pub fn positioning_dims(feature_dim: usize) -> Vec<usize> {
    let mut dims = vec![feature_dim];
    dims.extend(HIDDEN_LAYERS);
    dims.push(OUTPUT_DIM);
    dims
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    dims: Vec<usize>,
    /// Fixed input standardization `(x - shift) * scale`, applied before the
    /// first layer and not trained.
    pub input_shift: Array1<T>,
    pub input_scale: Array1<T>,
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

/// Smallest per-feature standard deviation used when standardizing.
pub const MIN_INPUT_STD: f64 = 1e-6;

/// Layer inputs recorded by [`Mlp::forward_cached`]; `inputs[0]` is the
/// standardized batch.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    inputs: Vec<Array2<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: NdFloat> Gradients<T> {
    pub fn zeros_like(model: &Mlp<T>) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Flat view in the same order as [`Mlp::param`].
    pub fn get(&self, index: usize) -> T {
        let mut i = index;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if i < w.len() {
                return w.as_slice().unwrap()[i];
            }
            i -= w.len();
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index {index} out of range")
    }
}

impl<T: NdFloat> Mlp<T> {
    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer dims {dims:?}")));
        }
        Ok(())
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            input_shift: Array1::zeros(dims[0]),
            input_scale: Array1::ones(dims[0]),
            weights: dims.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: dims[1..].iter().map(|&d| Array1::zeros(d)).collect(),
        })
    }

    /// He-uniform hidden layers, small uniform output layer, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = model.weights.len() - 1;
        for (l, w) in model.weights.iter_mut().enumerate() {
            let limit = if l == last { OUTPUT_INIT_SCALE } else { (6.0 / dims[l] as f64).sqrt() };
            let u = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            w.mapv_inplace(|_| cast(u.sample(&mut rng)));
        }
        Ok(model)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn locate(&self, index: usize) -> (usize, bool, usize) {
        let mut i = index;
        for l in 0..self.weights.len() {
            if i < self.weights[l].len() {
                return (l, true, i);
            }
            i -= self.weights[l].len();
            if i < self.biases[l].len() {
                return (l, false, i);
            }
            i -= self.biases[l].len();
        }
        panic!("parameter index {index} out of range")
    }

    /// Flat parameter access: per layer, row-major weights then bias.
    pub fn param(&self, index: usize) -> T {
        match self.locate(index) {
            (l, true, i) => self.weights[l].as_slice().unwrap()[i],
            (l, false, i) => self.biases[l][i],
        }
    }

    pub fn set_param(&mut self, index: usize, value: T) {
        match self.locate(index) {
            (l, true, i) => self.weights[l].as_slice_mut().unwrap()[i] = value,
            (l, false, i) => self.biases[l][i] = value,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Converts every parameter to another float type.
    pub fn cast<U: NdFloat>(&self) -> Mlp<U> {
        let conv = |v: &T| <U as NumCast>::from(*v).expect("representable");
        Mlp {
            dims: self.dims.clone(),
            input_shift: self.input_shift.map(conv),
            input_scale: self.input_scale.map(conv),
            weights: self.weights.iter().map(|w| w.map(conv)).collect(),
            biases: self.biases.iter().map(|b| b.map(conv)).collect(),
        }
    }

    /// Sets the input standardization to the per-column mean and inverse
    /// standard deviation of `x`.
    pub fn fit_input_normalization(&mut self, x: ArrayView2<T>) -> Result<()> {
        self.check_input(&x)?;
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("cannot fit normalization on zero rows".into()));
        }
        let floor: T = cast(MIN_INPUT_STD);
        let n: T = cast(x.nrows() as f64);
        let mean = x.sum_axis(Axis(0)) / n;
        let centered = &x - &mean;
        let var = (&centered * &centered).sum_axis(Axis(0)) / n;
        self.input_scale = var.mapv(|v| T::one() / if v.sqrt() > floor { v.sqrt() } else { floor });
        self.input_shift = mean;
        Ok(())
    }

    fn standardize(&self, x: &ArrayView2<T>) -> Array2<T> {
        let mut z = x - &self.input_shift;
        z *= &self.input_scale;
        z
    }

    fn affine(&self, l: usize, a: &ArrayView2<T>) -> Array2<T> {
        let mut z = a.dot(&self.weights[l]);
        z += &self.biases[l];
        z
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.dims[0] {
            return Err(Error::DimensionMismatch { expected: self.dims[0], actual: x.ncols() });
        }
        Ok(())
    }

    /// Positions for a batch of feature rows.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let last = self.n_layers() - 1;
        let mut a = self.affine(0, &self.standardize(&x).view());
        for l in 1..=last {
            a.mapv_inplace(relu);
            a = self.affine(l, &a.view());
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.n_layers());
        let x = self.standardize(&x);
        let last = self.n_layers() - 1;
        let mut a = self.affine(0, &x.view());
        inputs.push(x);
        for l in 1..=last {
            a.mapv_inplace(relu);
            let next = self.affine(l, &a.view());
            inputs.push(a);
            a = next;
        }
        Ok((a, ForwardCache { inputs }))
    }

    /// Gradients of `sum <upstream, forward(x)>` from a cached forward pass.
    pub fn backward_cached(&self, cache: &ForwardCache<T>, upstream: ArrayView2<T>) -> Result<Gradients<T>> {
        let batch = cache.inputs[0].nrows();
        let out_dim = *self.dims.last().unwrap();
        if upstream.dim() != (batch, out_dim) {
            return Err(Error::DimensionMismatch { expected: batch * out_dim, actual: upstream.len() });
        }
        let n = self.n_layers();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = upstream.to_owned();
        for l in (0..n).rev() {
            let input = &cache.inputs[l];
            gw.push(input.t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l].t());
                // ReLU subgradient is 0 at 0; input > 0 iff the pre-activation was.
                Zip::from(&mut prev).and(input).for_each(|d, &a| {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                });
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok(Gradients { weights: gw, biases: gb })
    }

    pub fn backward(&self, x: ArrayView2<T>, upstream: ArrayView2<T>) -> Result<Gradients<T>> {
        let (_, cache) = self.forward_cached(x)?;
        self.backward_cached(&cache, upstream)
    }
}

fn relu<T: NdFloat>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub decay_every: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, decay_factor: 0.5, decay_every: 5 }
    }
}

/// Adam moments, step counter and the current (decayed) learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub learning_rate: f64,
    pub step: u64,
    m: Gradients<T>,
    v: Gradients<T>,
}

impl<T: NdFloat> Adam<T> {
    pub fn new(config: AdamConfig, model: &Mlp<T>) -> Self {
        Self {
            config,
            learning_rate: config.learning_rate,
            step: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    /// One bias-corrected Adam update. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, model: &mut Mlp<T>, grads: &Gradients<T>) -> Result<()> {
        for (l, (w, b)) in grads.weights.iter().zip(&grads.biases).enumerate() {
            if !w.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("layer {l} weights")));
            }
            if !b.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("layer {l} biases")));
            }
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let b1: T = cast(c.beta1);
        let b2: T = cast(c.beta2);
        let one_b1: T = cast(1.0 - c.beta1);
        let one_b2: T = cast(1.0 - c.beta2);
        let corr1: T = cast(1.0 - c.beta1.powi(t));
        let corr2: T = cast(1.0 - c.beta2.powi(t));
        let lr: T = cast(self.learning_rate);
        let eps: T = cast(c.eps);

        let update = |p: &mut T, g: &T, m: &mut T, v: &mut T| {
            *m = b1 * *m + one_b1 * *g;
            *v = b2 * *v + one_b2 * *g * *g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..model.weights.len() {
            Zip::from(&mut model.weights[l])
                .and(&grads.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .for_each(update);
            Zip::from(&mut model.biases[l])
                .and(&grads.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .for_each(update);
        }
        Ok(())
    }

    /// Call after each completed epoch (`epoch` counts from 1).
    pub fn end_epoch(&mut self, epoch: usize) {
        if self.config.decay_every > 0 && epoch.is_multiple_of(self.config.decay_every) {
            self.learning_rate *= self.config.decay_factor;
        }
    }
}

fn write_f32s<W: Write>(out: &mut W, values: impl Iterator<Item = f32>) -> Result<()> {
    let buf: Vec<u8> = values.flat_map(|v| v.to_le_bytes()).collect();
    out.write_all(&buf)?;
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize, path: &Path) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(|_| Error::format(path, "truncated parameters"))?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_params<W: Write>(out: &mut W, g: (&[Array2<f32>], &[Array1<f32>])) -> Result<()> {
    for (w, b) in g.0.iter().zip(g.1) {
        write_f32s(out, w.iter().copied())?;
        write_f32s(out, b.iter().copied())?;
    }
    Ok(())
}

type LayerParams = (Vec<Array2<f32>>, Vec<Array1<f32>>);

fn read_params<R: Read>(r: &mut R, dims: &[usize], path: &Path) -> Result<LayerParams> {
    let mut ws = vec![];
    let mut bs = vec![];
    for d in dims.windows(2) {
        let w = read_f32s(r, d[0] * d[1], path)?;
        ws.push(Array2::from_shape_vec((d[0], d[1]), w).expect("sized"));
        bs.push(Array1::from(read_f32s(r, d[1], path)?));
    }
    Ok((ws, bs))
}

/// A checkpoint as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp<f32>,
    /// Free-form tag, e.g. `method=ours;config=<hash>`.
    pub tag: String,
    pub optimizer: Option<Adam<f32>>,
}

/// `NPOM` layout: magic, `u32` version, `u32` layer count + 1, the layer
/// dims as `u32`, `u32` tag length and UTF-8 tag, the input shift and
/// scale as `f32`, then per layer the
/// row-major weights and the bias as `f32`. A trailing `u8` flags optimizer
/// state: learning rates and Adam constants as `f64`, decay period as `u32`,
/// step as `u64`, then first and second moments in parameter order.
pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut out: W) -> Result<()> {
    let model = &ckpt.model;
    out.write_all(MODEL_MAGIC)?;
    write_u32(&mut out, FORMAT_VERSION as usize)?;
    write_u32(&mut out, model.dims.len())?;
    for &d in &model.dims {
        write_u32(&mut out, d)?;
    }
    write_u32(&mut out, ckpt.tag.len())?;
    out.write_all(ckpt.tag.as_bytes())?;
    write_f32s(&mut out, model.input_shift.iter().copied())?;
    write_f32s(&mut out, model.input_scale.iter().copied())?;
    write_params(&mut out, (&model.weights, &model.biases))?;
    match &ckpt.optimizer {
        None => out.write_all(&[0u8])?,
        Some(opt) => {
            out.write_all(&[1u8])?;
            let c = opt.config;
            for v in [opt.learning_rate, c.learning_rate, c.beta1, c.beta2, c.eps, c.decay_factor] {
                out.write_all(&v.to_le_bytes())?;
            }
            write_u32(&mut out, c.decay_every)?;
            out.write_all(&opt.step.to_le_bytes())?;
            write_params(&mut out, (&opt.m.weights, &opt.m.biases))?;
            write_params(&mut out, (&opt.v.weights, &opt.v.biases))?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = crate::io::open(path)?;
    read_magic(&mut r, MODEL_MAGIC, path)?;
    let n = read_u32(&mut r, path)? as usize;
    let dims = (0..n).map(|_| read_u32(&mut r, path).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    Mlp::<f32>::check_dims(&dims)?;
    let tag_len = read_u32(&mut r, path)? as usize;
    let mut tag = vec![0u8; tag_len];
    r.read_exact(&mut tag).map_err(|_| Error::format(path, "truncated tag"))?;
    let tag = String::from_utf8(tag).map_err(|_| Error::format(path, "tag is not UTF-8"))?;
    let input_shift = Array1::from(read_f32s(&mut r, dims[0], path)?);
    let input_scale = Array1::from(read_f32s(&mut r, dims[0], path)?);
    let (weights, biases) = read_params(&mut r, &dims, path)?;
    let model = Mlp { dims: dims.clone(), input_shift, input_scale, weights, biases };
    let mut flag = [0u8; 1];
    let has_optimizer = r.read_exact(&mut flag).is_ok() && flag[0] == 1;
    let optimizer = match has_optimizer {
        false => None,
        true => {
            let mut f64s = [0f64; 6];
            for v in &mut f64s {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(|_| Error::format(path, "truncated optimizer state"))?;
                *v = f64::from_le_bytes(b);
            }
            let decay_every = read_u32(&mut r, path)? as usize;
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| Error::format(path, "truncated optimizer state"))?;
            let step = u64::from_le_bytes(b);
            let (mw, mb) = read_params(&mut r, &dims, path)?;
            let (vw, vb) = read_params(&mut r, &dims, path)?;
            Some(Adam {
                config: AdamConfig {
                    learning_rate: f64s[1],
                    beta1: f64s[2],
                    beta2: f64s[3],
                    eps: f64s[4],
                    decay_factor: f64s[5],
                    decay_every,
                },
                learning_rate: f64s[0],
                step,
                m: Gradients { weights: mw, biases: mb },
                v: Gradients { weights: vw, biases: vb },
            })
        }
    };
    Ok(Checkpoint { model, tag, optimizer })
}
