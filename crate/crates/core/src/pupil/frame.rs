//! Pupil area from a grayscale eye frame.
//!
//! The darkest blob is segmented by thresholding (Otsu's method by default),
//! its boundary is traced as the midpoints of the pixel edges separating it
//! from the background, and an ellipse is fitted to those points by the
//! numerically stable direct least-squares method (Halir & Flusser's
//! formulation of Fitzgibbon's ellipse-specific fit).

use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{PupilError, PupilSample};

#[derive(Debug, Clone, PartialEq)]
pub struct EyeFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities.
    pub pixels: Vec<u8>,
    pub timestamp: f64,
}

impl EyeFrame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        timestamp: f64,
    ) -> Result<Self, PupilError> {
        if width == 0 || height == 0 {
            return Err(PupilError::InvalidFrame(format!("{width}x{height} frame")));
        }
        if pixels.len() != width * height {
            return Err(PupilError::InvalidFrame(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp,
        })
    }

    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn full(&self) -> Roi {
        Roi {
            x0: 0,
            y0: 0,
            x1: self.width,
            y1: self.height,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Auto,
    Fixed(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub threshold: Threshold,
    /// ROI margin added on every side, as a fraction of the blob's extent.
    pub roi_margin: f64,
    /// Fewer boundary pixels than this make the sample invalid.
    pub min_boundary: usize,
    /// Minimum gap between dark and bright class means under `Auto`.
    pub min_contrast: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::Auto,
            roi_margin: 0.2,
            min_boundary: 20,
            min_contrast: 30.0,
        }
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Roi {
    fn width(&self) -> usize {
        self.x1 - self.x0
    }

    fn height(&self) -> usize {
        self.y1 - self.y0
    }

    fn grown(&self, margin: f64, frame: &EyeFrame) -> Roi {
        let mx = (self.width() as f64 * margin).ceil() as usize;
        let my = (self.height() as f64 * margin).ceil() as usize;
        Roi {
            x0: self.x0.saturating_sub(mx),
            y0: self.y0.saturating_sub(my),
            x1: (self.x1 + mx).min(frame.width),
            y1: (self.y1 + my).min(frame.height),
        }
    }
}

/// Otsu threshold over the ROI: dark pixels are those `≤` the returned level.
/// `None` when the ROI holds a single intensity or the two classes differ by
/// less than `min_contrast`.
fn otsu(frame: &EyeFrame, roi: &Roi, min_contrast: f64) -> Option<u8> {
    let mut hist = [0u64; 256];
    for y in roi.y0..roi.y1 {
        for x in roi.x0..roi.x1 {
            hist[frame.at(x, y) as usize] += 1;
        }
    }
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, c)| i as f64 * *c as f64)
        .sum();
    let (mut w0, mut sum0) = (0u64, 0.0);
    let mut best: Option<(f64, u8, f64)> = None;
    for t in 0..255usize {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1).powi(2);
        if best.is_none_or(|(b, _, _)| between > b) {
            best = Some((between, t as u8, m1 - m0));
        }
    }
    let (_, t, contrast) = best?;
    (contrast >= min_contrast).then_some(t)
}

struct Blob {
    pixels: Vec<(usize, usize)>,
    bbox: Roi,
}

/// Largest 4-connected set of pixels `≤ level` inside the ROI.
fn largest_dark_blob(frame: &EyeFrame, roi: &Roi, level: u8) -> Option<Blob> {
    let (w, h) = (roi.width(), roi.height());
    let dark = |x: usize, y: usize| frame.at(roi.x0 + x, roi.y0 + y) <= level;
    let mut seen = vec![false; w * h];
    let mut best: Option<Vec<(usize, usize)>> = None;
    let mut queue = VecDeque::new();
    for sy in 0..h {
        for sx in 0..w {
            if seen[sy * w + sx] || !dark(sx, sy) {
                continue;
            }
            let mut comp = Vec::new();
            seen[sy * w + sx] = true;
            queue.push_back((sx, sy));
            while let Some((x, y)) = queue.pop_front() {
                comp.push((x, y));
                let mut visit = |nx: usize, ny: usize| {
                    if !seen[ny * w + nx] && dark(nx, ny) {
                        seen[ny * w + nx] = true;
                        queue.push_back((nx, ny));
                    }
                };
                if x > 0 {
                    visit(x - 1, y);
                }
                if x + 1 < w {
                    visit(x + 1, y);
                }
                if y > 0 {
                    visit(x, y - 1);
                }
                if y + 1 < h {
                    visit(x, y + 1);
                }
            }
            if best.as_ref().is_none_or(|b| comp.len() > b.len()) {
                best = Some(comp);
            }
        }
    }
    let pixels: Vec<(usize, usize)> = best?
        .into_iter()
        .map(|(x, y)| (x + roi.x0, y + roi.y0))
        .collect();
    let bbox = Roi {
        x0: pixels.iter().map(|p| p.0).min()?,
        y0: pixels.iter().map(|p| p.1).min()?,
        x1: pixels.iter().map(|p| p.0).max()? + 1,
        y1: pixels.iter().map(|p| p.1).max()? + 1,
    };
    Some(Blob { pixels, bbox })
}

/// Edge midpoints between blob pixels and their outside 4-neighbors, and the
/// number of blob pixels having at least one such neighbor.
fn boundary(blob: &Blob) -> (Vec<(f64, f64)>, usize) {
    let b = &blob.bbox;
    let (w, h) = (b.width() + 2, b.height() + 2);
    let mut inside = vec![false; w * h];
    let idx = |x: usize, y: usize| (y + 1 - b.y0) * w + (x + 1 - b.x0);
    for &(x, y) in &blob.pixels {
        inside[idx(x, y)] = true;
    }
    let mut points = Vec::new();
    let mut count = 0;
    for &(x, y) in &blob.pixels {
        let (fx, fy) = (x as f64, y as f64);
        let before = points.len();
        let i = idx(x, y);
        if !inside[i - 1] {
            points.push((fx - 0.5, fy));
        }
        if !inside[i + 1] {
            points.push((fx + 0.5, fy));
        }
        if !inside[i - w] {
            points.push((fx, fy - 0.5));
        }
        if !inside[i + w] {
            points.push((fx, fy + 0.5));
        }
        if points.len() > before {
            count += 1;
        }
    }
    (points, count)
}

/// Area of the direct least-squares ellipse through `points`, or `None` when
/// the fit is degenerate or not an ellipse.
pub(crate) fn fit_ellipse_area(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 6 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let scale = (points
        .iter()
        .map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2))
        .sum::<f64>()
        / (2.0 * n))
        .sqrt();
    if !(scale > 0.0) {
        return None;
    }

    let (mut s1, mut s2, mut s3) = (Matrix3::zeros(), Matrix3::zeros(), Matrix3::zeros());
    for &(px, py) in points {
        let (x, y) = ((px - mx) / scale, (py - my) / scale);
        let d1 = Vector3::new(x * x, x * y, y * y);
        let d2 = Vector3::new(x, y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let t = -s3.try_inverse()? * s2.transpose();
    let m = s1 + s2 * t;
    // premultiply by the inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]]
    let reduced = Matrix3::from_rows(&[m.row(2) * 0.5, -m.row(1), m.row(0) * 0.5]);

    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in reduced.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-9 * lambda.re.abs().max(1.0) {
            continue;
        }
        let shifted = reduced - Matrix3::identity() * lambda.re;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t?;
        let k = svd.singular_values.imin();
        let v: Vector3<f64> = v_t.row(k).transpose();
        let cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cond > 0.0 && best.as_ref().is_none_or(|(c, _)| cond > *c) {
            best = Some((cond, v));
        }
    }
    let (_, a1) = best?;
    let a2 = t * a1;
    let (a, b, c, d, e, f) = (a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);
    let q = Matrix3::new(
        a,
        b / 2.0,
        d / 2.0,
        b / 2.0,
        c,
        e / 2.0,
        d / 2.0,
        e / 2.0,
        f,
    );
    let q2 = a * c - b * b / 4.0;
    if !(q2 > 0.0) {
        return None;
    }
    let area = std::f64::consts::PI * q.determinant().abs() / q2.powf(1.5) * scale * scale;
    (area.is_finite() && area > 0.0).then_some(area)
}

/// Area of the pupil in `frame`, searching `roi` (the full frame when `None`).
/// Also returns the ROI to search in the next frame.
pub fn detect_pupil(
    frame: &EyeFrame,
    cfg: &FitConfig,
    roi: Option<Roi>,
) -> (PupilSample, Option<Roi>) {
    let full = frame.full();
    let roi = roi.unwrap_or(full);
    match detect_in(frame, cfg, &roi) {
        Some((area, next)) => (PupilSample::valid(frame.timestamp, area), Some(next)),
        None if roi != full => match detect_in(frame, cfg, &full) {
            Some((area, next)) => (PupilSample::valid(frame.timestamp, area), Some(next)),
            None => (PupilSample::invalid(frame.timestamp), None),
        },
        None => (PupilSample::invalid(frame.timestamp), None),
    }
}

fn detect_in(frame: &EyeFrame, cfg: &FitConfig, roi: &Roi) -> Option<(f64, Roi)> {
    let level = match cfg.threshold {
        Threshold::Auto => otsu(frame, roi, cfg.min_contrast)?,
        Threshold::Fixed(t) => t,
    };
    let blob = largest_dark_blob(frame, roi, level)?;
    let full = frame.full();
    let b = &blob.bbox;
    let clipped =
        *roi != full && (b.x0 == roi.x0 || b.y0 == roi.y0 || b.x1 == roi.x1 || b.y1 == roi.y1);
    if clipped {
        return None;
    }
    let (points, count) = boundary(&blob);
    if count < cfg.min_boundary {
        return None;
    }
    let area = fit_ellipse_area(&points)?;
    Some((area, blob.bbox.grown(cfg.roi_margin, frame)))
}

/// Frame-by-frame detector remembering the ROI between frames.
#[derive(Debug, Clone, Default)]
pub struct PupilDetector {
    cfg: FitConfig,
    roi: Option<Roi>,
}

impl PupilDetector {
    pub fn new(cfg: FitConfig) -> Self {
        Self { cfg, roi: None }
    }

    pub fn roi(&self) -> Option<Roi> {
        self.roi
    }

    pub fn push(&mut self, frame: &EyeFrame) -> PupilSample {
        let (sample, roi) = detect_pupil(frame, &self.cfg, self.roi);
        self.roi = roi;
        sample
    }
}
