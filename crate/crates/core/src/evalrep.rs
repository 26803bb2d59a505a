//! Error statistics, empirical CDFs, and CSV/SVG report artifacts.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::mlp::Mlp;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub method: String,
    /// Metres, in test-set order.
    pub per_sample_errors: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Nearest-rank: the `ceil(0.95 n)`-th smallest error.
    pub p95: f64,
}

impl ErrorReport {
    pub fn from_errors(method: impl Into<String>, errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        if let Some(e) = errors.iter().find(|e| !(**e >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid positioning error {e}")));
        }
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let rank = (0.95 * n as f64).ceil() as usize;
        let p95 = sorted[rank.clamp(1, n) - 1];
        Ok(Self { method: method.into(), per_sample_errors: errors, mean, median, p95 })
    }
}

/// Positions predicted for every row of `features`.
pub fn predict(model: &Mlp<f32>, features: ArrayView2<f32>) -> Result<Vec<Vec2>> {
    const CHUNK: usize = 4096;
    let mut out = Vec::with_capacity(features.nrows());
    for start in (0..features.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(features.nrows());
        let pred = model.forward(features.slice(ndarray::s![start..end, ..]))?;
        out.extend(pred.rows().into_iter().map(|r| Vec2::new(r[0] as f64, r[1] as f64)));
    }
    Ok(out)
}

/// Euclidean error of the model on held-out samples.
pub fn evaluate(
    method: &str,
    model: &Mlp<f32>,
    test_features: ArrayView2<f32>,
    test_ground_truth: &[Vec2],
) -> Result<ErrorReport> {
    if test_features.nrows() == 0 {
        return Err(Error::EmptyTestSet);
    }
    if test_features.nrows() != test_ground_truth.len() {
        return Err(Error::DimensionMismatch { expected: test_features.nrows(), actual: test_ground_truth.len() });
    }
    let pred = predict(model, test_features)?;
    let errors = pred.iter().zip(test_ground_truth).map(|(p, t)| p.distance(*t)).collect();
    ErrorReport::from_errors(method, errors)
}

/// Sorted errors paired with `k / n`.
pub fn empirical_cdf(report: &ErrorReport) -> Vec<(f64, f64)> {
    let mut sorted = report.per_sample_errors.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.into_iter().enumerate().map(|(k, e)| (e, (k + 1) as f64 / n)).collect()
}

pub fn write_results_csv<W: Write>(reports: &[ErrorReport], mut out: W) -> Result<()> {
    writeln!(out, "method,mean_m,median_m,p95_m")?;
    for r in reports {
        writeln!(out, "{},{},{},{}", r.method, r.mean, r.median, r.p95)?;
    }
    Ok(())
}

pub fn write_cdf_csv<W: Write>(cdf: &[(f64, f64)], mut out: W) -> Result<()> {
    writeln!(out, "error_m,cum_prob")?;
    for (e, p) in cdf {
        writeln!(out, "{e},{p}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: usize,
    pub mean: f64,
    pub p95: f64,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "param,value,mean_m,p95_m")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.param, r.value, r.mean, r.p95)?;
    }
    Ok(())
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Axes {
    min: Vec2,
    max: Vec2,
}

impl Axes {
    fn fit(points: impl Iterator<Item = Vec2>) -> Self {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
            max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
        }
        if !min.is_finite() || !max.is_finite() {
            return Self { min: Vec2::ZERO, max: Vec2::new(1.0, 1.0) };
        }
        if max.x - min.x < 1e-12 {
            max.x = min.x + 1.0;
        }
        if max.y - min.y < 1e-12 {
            max.y = min.y + 1.0;
        }
        Self { min, max }
    }

    fn map(&self, p: Vec2) -> (f64, f64) {
        let sx = (p.x - self.min.x) / (self.max.x - self.min.x);
        let sy = (p.y - self.min.y) / (self.max.y - self.min.y);
        (MARGIN + sx * (SVG_W - 2.0 * MARGIN), SVG_H - MARGIN - sy * (SVG_H - 2.0 * MARGIN))
    }

    fn frame(&self, svg: &mut String, x_label: &str, y_label: &str) {
        let (x0, y0) = (MARGIN, SVG_H - MARGIN);
        let (x1, y1) = (SVG_W - MARGIN, MARGIN);
        let _ = writeln!(
            svg,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        let _ = writeln!(svg, r#"<text x="{x0}" y="{}" font-size="11">{:.3}</text>"#, y0 + 15.0, self.min.x);
        let _ = writeln!(
            svg,
            r#"<text x="{x1}" y="{}" font-size="11" text-anchor="end">{:.3}</text>"#,
            y0 + 15.0,
            self.max.x
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y0}" font-size="11" text-anchor="end">{:.3}</text>"#,
            x0 - 4.0,
            self.min.y
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.3}</text>"#,
            x0 - 4.0,
            y1 + 10.0,
            self.max.y
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{x_label}</text>"#,
            SVG_W / 2.0,
            SVG_H - 12.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
            SVG_H / 2.0,
            SVG_H / 2.0
        );
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{title}</text>"#, SVG_W / 2.0);
    s
}

/// Blue (0) to red (1).
fn heat(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

/// Ground-truth positions coloured by positioning error.
pub fn error_map_svg(title: &str, positions: &[Vec2], errors: &[f64]) -> String {
    let axes = Axes::fit(positions.iter().copied());
    let max_err = errors.iter().copied().fold(0.0, f64::max).max(1e-12);
    let mut svg = svg_open(title);
    axes.frame(&mut svg, "x (m)", "y (m)");
    for (p, e) in positions.iter().zip(errors) {
        let (x, y) = axes.map(*p);
        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{}"/>"#, heat(e / max_err));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="40" font-size="11" text-anchor="end">max error {max_err:.3} m (red)</text>"#,
        SVG_W - MARGIN
    );
    svg.push_str("</svg>\n");
    svg
}

/// One CDF step curve per report.
pub fn cdf_svg(title: &str, reports: &[ErrorReport]) -> String {
    let cdfs: Vec<Vec<(f64, f64)>> = reports.iter().map(empirical_cdf).collect();
    let x_max = cdfs.iter().flatten().map(|c| c.0).fold(0.0, f64::max);
    let axes = Axes::fit([Vec2::ZERO, Vec2::new(x_max, 1.0)].into_iter());
    let mut svg = svg_open(title);
    axes.frame(&mut svg, "positioning error (m)", "cumulative probability");
    for (k, (cdf, report)) in cdfs.iter().zip(reports).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        let (x, y) = axes.map(Vec2::ZERO);
        let _ = write!(d, "M{x:.2},{y:.2}");
        let mut prev = 0.0;
        for &(e, p) in cdf {
            let (x, y0) = axes.map(Vec2::new(e, prev));
            let (_, y1) = axes.map(Vec2::new(e, p));
            let _ = write!(d, " L{x:.2},{y0:.2} L{x:.2},{y1:.2}");
            prev = p;
        }
        let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#);
        let ly = 50.0 + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-size="12" fill="{colour}">{}</text>"#,
            SVG_W - MARGIN - 110.0,
            report.method
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Mean error against the swept parameter.
pub fn sweep_svg(title: &str, rows: &[SweepRow]) -> String {
    let pts: Vec<Vec2> = rows.iter().map(|r| Vec2::new(r.value as f64, r.mean)).collect();
    let axes = Axes::fit(pts.iter().copied().chain([Vec2::new(pts.first().map_or(0.0, |p| p.x), 0.0)]));
    let mut svg = svg_open(title);
    let param = rows.first().map_or("value", |r| r.param.as_str());
    axes.frame(&mut svg, param, "mean error (m)");
    let mut d = String::new();
    for (i, p) in pts.iter().enumerate() {
        let (x, y) = axes.map(*p);
        let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{}"/>"#, PALETTE[0]);
    }
    let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#, PALETTE[0]);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_hundred() {
        let r = ErrorReport::from_errors("m", (1..=100).map(f64::from).collect()).unwrap();
        assert_eq!(r.mean, 50.5);
        assert_eq!(r.median, 50.5);
        assert_eq!(r.p95, 95.0);
    }

    #[test]
    fn perfect_and_empty() {
        let r = ErrorReport::from_errors("m", vec![0.0; 7]).unwrap();
        assert_eq!((r.mean, r.median, r.p95), (0.0, 0.0, 0.0));
        assert!(matches!(ErrorReport::from_errors("m", vec![]), Err(Error::EmptyTestSet)));
        assert!(ErrorReport::from_errors("m", vec![f64::NAN]).is_err());
    }

    #[test]
    fn small_cdfs() {
        let r = ErrorReport::from_errors("m", vec![2.0]).unwrap();
        assert_eq!(empirical_cdf(&r), vec![(2.0, 1.0)]);
        let r = ErrorReport::from_errors("m", vec![3.0, 1.0]).unwrap();
        assert_eq!(empirical_cdf(&r), vec![(1.0, 0.5), (3.0, 1.0)]);
    }

    #[test]
    fn csv_layout() {
        let r = ErrorReport::from_errors("ours", vec![1.0, 3.0]).unwrap();
        let mut buf = vec![];
        write_results_csv(&[r], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "method,mean_m,median_m,p95_m\nours,2,2,3\n");
    }

    #[test]
    fn svgs_are_well_formed() {
        let r = ErrorReport::from_errors("ours", vec![0.1, 0.4, 0.2]).unwrap();
        let s = cdf_svg("cdf", std::slice::from_ref(&r));
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        let s = error_map_svg("map", &[Vec2::ZERO, Vec2::new(1.0, 1.0), Vec2::new(0.5, 2.0)], &r.per_sample_errors);
        assert_eq!(s.matches("<circle").count(), 3);
    }
}
