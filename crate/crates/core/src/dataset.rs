//! Triangle dataset, dock anchors and the train/test split.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::simkit::DisplacementLog;

/// Accumulated displacements of the triangle with vertices
/// `(start, start + leap, start + 2 * leap)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleSet {
    pub start: usize,
    pub leap: usize,
    pub d_a: Vec2,
    pub d_b: Vec2,
    /// Always `d_a + d_b`.
    pub d_c: Vec2,
}

impl TriangleSet {
    pub fn vertices(&self) -> [usize; 3] {
        [self.start, self.start + self.leap, self.start + 2 * self.leap]
    }
}

/// Every triangle with leap `v`, one per start index `0..=N - 2v`.
pub fn build_triangles(disp: &DisplacementLog, v: usize) -> Result<Vec<TriangleSet>> {
    let n = disp.len();
    if v == 0 {
        return Err(Error::InvalidArgument("leap increment must be >= 1".into()));
    }
    if n < 2 * v {
        return Err(Error::InvalidArgument(format!("{n} displacements cannot hold a leap of {v}")));
    }
    let d = &disp.measurements;
    let side = |from: usize| d[from..from + v].iter().copied().sum::<Vec2>();
    Ok((0..=n - 2 * v)
        .map(|m| {
            let d_a = side(m);
            let d_b = side(m + v);
            TriangleSet { start: m, leap: v, d_a, d_b, d_c: d_a + d_b }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub index: usize,
    pub position: Vec2,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorSet {
    pub entries: Vec<Anchor>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|a| a.index)
    }

    /// Same anchors with every variance replaced.
    pub fn with_variance(&self, variance: f64) -> AnchorSet {
        AnchorSet { entries: self.entries.iter().map(|a| Anchor { variance, ..*a }).collect() }
    }
}

/// One anchor per dock visit, all at the known dock position.
pub fn build_anchor_set(dock_indices: &[usize], dock_position: Vec2, variance: f64) -> AnchorSet {
    AnchorSet {
        entries: dock_indices.iter().map(|&index| Anchor { index, position: dock_position, variance }).collect(),
    }
}

/// Randomly chosen held-out sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub rng_seed: u64,
    is_test: Vec<bool>,
}

/// Marks `round(n / 5)` uniformly random samples as test.
pub fn split_samples(n_samples: usize, seed: u64) -> Result<SplitPlan> {
    if n_samples < 5 {
        return Err(Error::InvalidArgument("need at least 5 samples to split".into()));
    }
    let n_test = (n_samples + 2) / 5;
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n_samples];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    Ok(SplitPlan { rng_seed: seed, is_test })
}

impl SplitPlan {
    pub fn from_test_indices(n_samples: usize, test: &[usize], rng_seed: u64) -> Result<Self> {
        let mut is_test = vec![false; n_samples];
        for &i in test {
            *is_test.get_mut(i).ok_or_else(|| Error::InvalidArgument(format!("test index {i} out of range")))? = true;
        }
        Ok(Self { rng_seed, is_test })
    }

    pub fn n_samples(&self) -> usize {
        self.is_test.len()
    }

    pub fn is_test(&self, i: usize) -> bool {
        self.is_test[i]
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.is_test.len()).filter(|&i| self.is_test[i]).collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.is_test.len()).filter(|&i| !self.is_test[i]).collect()
    }

    /// Triangles none of whose vertices is held out.
    pub fn train_triangles(&self, triangles: &[TriangleSet]) -> Vec<TriangleSet> {
        triangles.iter().filter(|t| t.vertices().iter().all(|&i| !self.is_test[i])).copied().collect()
    }

    pub fn train_anchors(&self, anchors: &AnchorSet) -> AnchorSet {
        AnchorSet { entries: anchors.entries.iter().filter(|a| !self.is_test[a.index]).copied().collect() }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for i in self.test_indices() {
            writeln!(out, "{i}")?;
        }
        Ok(())
    }

    pub fn read(path: &Path, n_samples: usize, rng_seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => e.into(),
        })?;
        let test = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Self::from_test_indices(n_samples, &test, rng_seed)
    }
}

pub fn write_triangles_csv<W: Write>(triangles: &[TriangleSet], mut out: W) -> Result<()> {
    writeln!(out, "m,V,dAx,dAy,dBx,dBy,dCx,dCy")?;
    for t in triangles {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            t.start, t.leap, t.d_a.x, t.d_a.y, t.d_b.x, t.d_b.y, t.d_c.x, t.d_c.y
        )?;
    }
    Ok(())
}

pub fn write_anchors_csv<W: Write>(anchors: &AnchorSet, mut out: W) -> Result<()> {
    writeln!(out, "a,x,y,var")?;
    for a in &anchors.entries {
        writeln!(out, "{},{},{},{}", a.index, a.position.x, a.position.y, a.variance)?;
    }
    Ok(())
}

pub fn read_anchors_csv(path: &Path) -> Result<AnchorSet> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => e.into(),
    })?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("a,x,y,var") {
        return Err(Error::format(path, "expected header `a,x,y,var`"));
    }
    let mut entries = vec![];
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::format(path, format!("bad anchor row {}", i + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        entries.push(Anchor {
            index: f[0].parse().map_err(|_| bad())?,
            position: Vec2::new(num(f[1])?, num(f[2])?),
            variance: num(f[3])?,
        });
    }
    Ok(AnchorSet { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log(v: Vec<Vec2>) -> DisplacementLog {
        DisplacementLog { measurements: v }
    }

    #[test]
    fn constant_sides() {
        let t = build_triangles(&log(vec![Vec2::new(1.0, 0.0); 6]), 2).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].d_a, Vec2::new(2.0, 0.0));
        assert_eq!(t[0].d_b, Vec2::new(2.0, 0.0));
        assert_eq!(t[0].d_c, Vec2::new(4.0, 0.0));
        assert_eq!(t[2].vertices(), [2, 4, 6]);
    }

    #[test]
    fn zero_sides() {
        let t = build_triangles(&log(vec![Vec2::ZERO; 10]), 3).unwrap();
        assert!(t.iter().all(|t| t.d_a == Vec2::ZERO && t.d_b == Vec2::ZERO && t.d_c == Vec2::ZERO));
    }

    #[test]
    fn bad_leaps() {
        assert!(build_triangles(&log(vec![Vec2::ZERO; 10]), 0).is_err());
        assert!(build_triangles(&log(vec![Vec2::ZERO; 10]), 6).is_err());
        assert_eq!(build_triangles(&log(vec![Vec2::ZERO; 10]), 5).unwrap().len(), 1);
    }

    #[test]
    fn anchors_per_visit() {
        let a = build_anchor_set(&[0], Vec2::ZERO, 1.0);
        assert_eq!(a.entries, vec![Anchor { index: 0, position: Vec2::ZERO, variance: 1.0 }]);
        let a = build_anchor_set(&[0, 40, 90], Vec2::new(1.0, 2.0), 1.0);
        assert_eq!(a.len(), 3);
        assert!(a.entries.windows(2).all(|w| w[0].index < w[1].index));
    }

    #[test]
    fn split_sizes() {
        let s = split_samples(10, 3).unwrap();
        assert_eq!(s.test_indices().len(), 2);
        assert_eq!(s, split_samples(10, 3).unwrap());
        let big = split_samples(100_000, 1).unwrap();
        let frac = big.test_indices().len() as f64 / 100_000.0;
        assert!((0.199..=0.201).contains(&frac));
        assert!(split_samples(4, 0).is_err());
    }

    #[test]
    fn no_leakage() {
        let tris = build_triangles(&log(vec![Vec2::new(0.1, 0.0); 200]), 10).unwrap();
        let anchors = build_anchor_set(&(0..200).step_by(7).collect::<Vec<_>>(), Vec2::ZERO, 1.0);
        let split = split_samples(201, 42).unwrap();
        for t in split.train_triangles(&tris) {
            assert!(t.vertices().iter().all(|&i| !split.is_test(i)));
        }
        assert!(split.train_anchors(&anchors).indices().all(|i| !split.is_test(i)));
    }

    proptest! {
        #[test]
        fn closure_is_bit_exact(seed in 0u64..500, v in 1usize..20) {
            use rand::{Rng, SeedableRng};
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d: Vec<Vec2> = (0..60).map(|_| Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            for t in build_triangles(&log(d), v).unwrap() {
                prop_assert_eq!(t.d_c, t.d_a + t.d_b);
            }
        }
    }

    #[test]
    fn csv_roundtrip_anchors() {
        let a = build_anchor_set(&[0, 5], Vec2::new(0.25, -1.5), 0.5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_anchors_csv(&a, std::fs::File::create(&p).unwrap()).unwrap();
        assert_eq!(read_anchors_csv(&p).unwrap(), a);
    }
}
