//! Geometric multipath CSI synthesis.
//!
//! Every UE/antenna link carries an optional line-of-sight path (dropped when
//! the direct segment hits a blocker) plus one single-bounce path per
//! scatterer. Path gains fall off as the inverse of total path length.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{Segment, Vec2};
use crate::io::{read_header, write_header, ContainerHeader, CSI_MAGIC};
use crate::simkit::{Trajectory, WorldConfig};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Minimal complex number for channel coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// `r * exp(j * phase)`.
    pub fn from_polar(r: f64, phase: f64) -> Self {
        let (s, c) = phase.sin_cos();
        Self { re: r * c, im: r * s }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

impl std::ops::Add for Complex {
    type Output = Complex;
    fn add(self, rhs: Complex) -> Complex {
        Complex::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl std::ops::AddAssign for Complex {
    fn add_assign(&mut self, rhs: Complex) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub n_subcarriers: usize,
    /// Per-sample SNR in dB; `None` disables noise.
    pub noise_snr_db: Option<f64>,
    pub scatterer_gain: f64,
    pub rng_seed: u64,
}

impl ChannelConfig {
    /// 802.11a-like: 5.18 GHz carrier, 20 MHz, 52 active subcarriers.
    pub fn wifi(rng_seed: u64) -> Self {
        Self {
            carrier_freq: 5.18e9,
            bandwidth: 20e6,
            n_subcarriers: 52,
            noise_snr_db: Some(20.0),
            scatterer_gain: 0.5,
            rng_seed,
        }
    }

    /// 5G-NR-like: 3.45 GHz carrier, 100 MHz, 3276 active subcarriers.
    pub fn nr(rng_seed: u64) -> Self {
        Self {
            carrier_freq: 3.45e9,
            bandwidth: 100e6,
            n_subcarriers: 3276,
            noise_snr_db: Some(28.0),
            scatterer_gain: 0.5,
            rng_seed,
        }
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.n_subcarriers as f64
    }

    /// Frequency of subcarrier `w` (Hz).
    pub fn subcarrier_freq(&self, w: usize) -> f64 {
        self.carrier_freq + (w as f64 - self.n_subcarriers as f64 / 2.0) * self.subcarrier_spacing()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return Err(Error::Config("n_subcarriers must be >= 1".into()));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::Config("bandwidth must be > 0".into()));
        }
        if !(self.carrier_freq > 0.0) {
            return Err(Error::Config("carrier_freq must be > 0".into()));
        }
        Ok(())
    }
}

/// The complex CSI tensor of one sample, row-major over (AP, antenna, subcarrier).
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    pub sample_index: usize,
    pub shape: (usize, usize, usize),
    pub data: Vec<Complex>,
}

impl CsiSample {
    pub fn zeros(sample_index: usize, shape: (usize, usize, usize)) -> Self {
        Self { sample_index, shape, data: vec![Complex::default(); shape.0 * shape.1 * shape.2] }
    }

    pub fn get(&self, b: usize, a: usize, w: usize) -> Complex {
        let (_, na, nw) = self.shape;
        self.data[(b * na + a) * nw + w]
    }
}

/// One propagation path: amplitude and total length.
#[derive(Debug, Clone, Copy)]
struct PropagationPath {
    gain: f64,
    length: f64,
}

fn paths(world: &WorldConfig, chan: &ChannelConfig, ue: Vec2, antenna: Vec2) -> Vec<PropagationPath> {
    let mut out = Vec::with_capacity(1 + world.scatterers.len());
    let los = Segment::new(ue, antenna);
    if !world.blockers.iter().any(|b| b.intersects(&los)) {
        let length = ue.distance(antenna);
        out.push(PropagationPath { gain: 1.0 / length, length });
    }
    for &s in &world.scatterers {
        let length = ue.distance(s) + s.distance(antenna);
        out.push(PropagationPath { gain: chan.scatterer_gain / length, length });
    }
    out
}

/// Noise-free channel of one UE position.
fn clean_sample(world: &WorldConfig, chan: &ChannelConfig, n: usize, ue: Vec2) -> Result<CsiSample> {
    let shape = (world.n_aps(), world.n_antennas(), chan.n_subcarriers);
    let mut sample = CsiSample::zeros(n, shape);
    let freqs: Vec<f64> = (0..chan.n_subcarriers).map(|w| chan.subcarrier_freq(w)).collect();
    for b in 0..shape.0 {
        for a in 0..shape.1 {
            let antenna = world.antenna_position(b, a);
            if ue.distance(antenna) == 0.0 {
                return Err(Error::DegeneratePath { sample: n, ap: b, antenna: a });
            }
            let row = (b * shape.1 + a) * shape.2;
            for p in paths(world, chan, ue, antenna) {
                let delay = p.length / SPEED_OF_LIGHT;
                for (w, f) in freqs.iter().enumerate() {
                    sample.data[row + w] += Complex::from_polar(p.gain, -2.0 * PI * f * delay);
                }
            }
        }
    }
    Ok(sample)
}

/// CSI of a single trajectory sample, with noise drawn from the sample's own
/// RNG stream so that results do not depend on evaluation order.
pub fn synthesize_sample(world: &WorldConfig, chan: &ChannelConfig, n: usize, ue: Vec2) -> Result<CsiSample> {
    let mut sample = clean_sample(world, chan, n, ue)?;
    if let Some(snr_db) = chan.noise_snr_db {
        let power = sample.data.iter().map(|c| c.norm_sqr()).sum::<f64>() / sample.data.len() as f64;
        let noise_power = power / 10f64.powf(snr_db / 10.0);
        let scale = (noise_power / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(chan.rng_seed);
        rng.set_stream(n as u64);
        for c in &mut sample.data {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *c += Complex::new(scale * re, scale * im);
        }
    }
    Ok(sample)
}

pub fn synthesize_csi(world: &WorldConfig, chan: &ChannelConfig, traj: &Trajectory) -> Result<Vec<CsiSample>> {
    world.validate()?;
    chan.validate()?;
    traj.positions.iter().enumerate().map(|(n, &ue)| synthesize_sample(world, chan, n, ue)).collect()
}

/// Keeps subcarriers `0, factor, 2*factor, ...`.
pub fn downsample_subcarriers(csi: &[CsiSample], factor: usize) -> Result<Vec<CsiSample>> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downsampling factor must be >= 1".into()));
    }
    Ok(csi.iter().map(|s| downsample_one(s, factor)).collect())
}

fn downsample_one(s: &CsiSample, factor: usize) -> CsiSample {
    let (nb, na, nw) = s.shape;
    let kept = nw.div_ceil(factor);
    let mut data = Vec::with_capacity(nb * na * kept);
    for row in s.data.chunks(nw) {
        data.extend(row.iter().step_by(factor).copied());
    }
    CsiSample { sample_index: s.sample_index, shape: (nb, na, kept), data }
}

/// Writes the `NPOS` container: header then interleaved re/im `f32` values.
pub fn write_csi<W: Write>(csi: &[CsiSample], mut out: W) -> Result<()> {
    let shape = csi.first().map(|s| s.shape).unwrap_or((0, 0, 0));
    write_header(&mut out, CSI_MAGIC, &ContainerHeader { count: csi.len(), shape })?;
    let mut buf = Vec::with_capacity(shape.0 * shape.1 * shape.2 * 8);
    for s in csi {
        if s.shape != shape {
            return Err(Error::InvalidArgument("CSI samples differ in shape".into()));
        }
        buf.clear();
        for c in &s.data {
            buf.extend_from_slice(&(c.re as f32).to_le_bytes());
            buf.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_csi(path: &Path) -> Result<Vec<CsiSample>> {
    let mut r = crate::io::open(path)?;
    let header = read_header(&mut r, CSI_MAGIC, path)?;
    let (nb, na, nw) = header.shape;
    let per = nb * na * nw;
    let mut bytes = vec![0u8; per * 8];
    let mut out = Vec::with_capacity(header.count);
    for n in 0..header.count {
        r.read_exact(&mut bytes).map_err(|_| Error::format(path, format!("truncated at sample {n}")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
                Complex::new(re as f64, im as f64)
            })
            .collect();
        out.push(CsiSample { sample_index: n, shape: header.shape, data });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::simkit::Pose;

    fn world(scatterers: Vec<Vec2>, blockers: Vec<Segment>) -> WorldConfig {
        WorldConfig {
            area: Polygon::rectangle(-5.0, -5.0, 5.0, 5.0),
            ap_positions: vec![Vec2::new(2.0, 0.0)],
            ap_antenna_offsets: vec![Vec2::ZERO],
            blockers,
            dock: Pose { position: Vec2::ZERO, heading: 0.0 },
            scatterers,
            rng_seed: 0,
        }
    }

    fn quiet() -> ChannelConfig {
        ChannelConfig { noise_snr_db: None, ..ChannelConfig::wifi(1) }
    }

    fn traj(points: &[Vec2]) -> Trajectory {
        Trajectory { positions: points.to_vec(), headings: vec![0.0; points.len()], dock_indices: vec![0] }
    }

    #[test]
    fn single_path_magnitude() {
        let csi = synthesize_csi(&world(vec![], vec![]), &quiet(), &traj(&[Vec2::ZERO])).unwrap();
        for w in 0..52 {
            assert!((csi[0].get(0, 0, w).abs() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn blocked_los_is_zero() {
        let wall = Segment::new(Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0));
        let csi = synthesize_csi(&world(vec![], vec![wall]), &quiet(), &traj(&[Vec2::ZERO])).unwrap();
        assert!(csi[0].data.iter().all(|c| *c == Complex::default()));
    }

    #[test]
    fn doubling_distance_halves_magnitude() {
        let w = world(vec![], vec![]);
        let csi = synthesize_csi(&w, &quiet(), &traj(&[Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.0)])).unwrap();
        for k in 0..52 {
            let r = csi[1].get(0, 0, k).abs() / csi[0].get(0, 0, k).abs();
            assert!((r - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn multipath_is_frequency_selective() {
        let w = world(vec![Vec2::new(-3.0, 4.0)], vec![]);
        let csi = synthesize_csi(&w, &quiet(), &traj(&[Vec2::ZERO])).unwrap();
        let mags: Vec<f64> = (0..52).map(|k| csi[0].get(0, 0, k).abs()).collect();
        let spread = mags.iter().cloned().fold(f64::MIN, f64::max) - mags.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 1e-6);
    }

    #[test]
    fn coincident_antenna_fails() {
        let err = synthesize_csi(&world(vec![], vec![]), &quiet(), &traj(&[Vec2::new(2.0, 0.0)])).unwrap_err();
        assert!(matches!(err, Error::DegeneratePath { sample: 0, .. }));
    }

    #[test]
    fn noise_meets_snr() {
        let w = world(vec![Vec2::new(-3.0, 4.0)], vec![]);
        let chan = ChannelConfig { noise_snr_db: Some(10.0), n_subcarriers: 4096, ..quiet() };
        let clean = clean_sample(&w, &chan, 0, Vec2::ZERO).unwrap();
        let noisy = synthesize_sample(&w, &chan, 0, Vec2::ZERO).unwrap();
        let sig = clean.data.iter().map(|c| c.norm_sqr()).sum::<f64>();
        let err = clean
            .data
            .iter()
            .zip(&noisy.data)
            .map(|(a, b)| Complex::new(a.re - b.re, a.im - b.im).norm_sqr())
            .sum::<f64>();
        let snr = 10.0 * (sig / err).log10();
        assert!((snr - 10.0).abs() < 0.3, "snr {snr}");
        // Same index, same noise.
        assert_eq!(noisy, synthesize_sample(&w, &chan, 0, Vec2::ZERO).unwrap());
    }

    #[test]
    fn downsample_sizes() {
        let s = CsiSample::zeros(0, (1, 1, 3276));
        assert_eq!(downsample_subcarriers(std::slice::from_ref(&s), 12).unwrap()[0].shape.2, 273);
        assert_eq!(downsample_subcarriers(std::slice::from_ref(&s), 1).unwrap()[0], s);

        let mut s = CsiSample::zeros(0, (1, 2, 10));
        for (i, c) in s.data.iter_mut().enumerate() {
            c.re = i as f64;
        }
        let d = &downsample_subcarriers(&[s], 3).unwrap()[0];
        assert_eq!(d.shape, (1, 2, 4));
        let kept: Vec<f64> = d.data.iter().map(|c| c.re).collect();
        assert_eq!(kept, vec![0.0, 3.0, 6.0, 9.0, 10.0, 13.0, 16.0, 19.0]);
        assert!(downsample_subcarriers(&[], 0).is_err());
    }
}
