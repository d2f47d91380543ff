use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{SimError, SimScenario, Stream};
use crate::pupil::{EyeFrame, PupilSample};

/// Supersampling factor per axis when rendering frames.
const SUPERSAMPLE: usize = 4;

/// Smooth step from 0 to 1 over `[-edge/2, edge/2]`.
fn rise(x: f64, edge: f64) -> f64 {
    if edge <= 0.0 {
        return if x >= 0.0 { 1.0 } else { 0.0 };
    }
    if x <= -edge / 2.0 {
        0.0
    } else if x >= edge / 2.0 {
        1.0
    } else {
        0.5 * (1.0 - (PI * (x + edge / 2.0) / edge).cos())
    }
}

impl SimScenario {
    /// Fractional constriction in `[0, 1)` at time `t`; each scheduled PAR
    /// ramps in around its onset and out around its end.
    pub fn constriction(&self, t: f64) -> f64 {
        let p = &self.pupil;
        p.schedule
            .iter()
            .map(|s| s.depth * (rise(t - s.onset, p.edge) - rise(t - s.onset - s.duration, p.edge)))
            .sum()
    }

    pub fn pupil_times(&self) -> impl Iterator<Item = f64> + '_ {
        let n = (self.duration * self.pupil.rate).round() as usize;
        (0..n).map(move |i| i as f64 / self.pupil.rate)
    }

    /// Pupil-area trace at `pupil.rate`; samples inside blinks are invalid.
    pub fn gen_pupil(&self) -> Result<Vec<PupilSample>, SimError> {
        self.validate()?;
        let p = &self.pupil;
        let mut rng = self.rng(Stream::Pupil);
        let phase = rng.random::<f64>() * 2.0 * PI;
        Ok(self
            .pupil_times()
            .map(|t| {
                let noise: f64 = rng.sample(StandardNormal);
                let blink = p
                    .blinks
                    .iter()
                    .any(|b| b.start <= t && t < b.start + b.duration);
                if blink {
                    return PupilSample::invalid(t);
                }
                let hippus = 1.0 + p.hippus_amplitude * (2.0 * PI * p.hippus_hz * t + phase).sin();
                let area = p.baseline_area
                    * hippus
                    * (1.0 - self.constriction(t))
                    * (1.0 + p.noise_level * noise);
                PupilSample::valid(t, area.max(f64::MIN_POSITIVE))
            })
            .collect())
    }

    /// One frame per trace sample: a centered dark disc of the sample's area
    /// on a light background, or a uniformly light frame (closed eye) for an
    /// invalid sample. `pixel_noise` is the standard deviation of additive
    /// intensity noise.
    pub fn render_frames(&self, trace: &[PupilSample], pixel_noise: f64) -> Vec<EyeFrame> {
        let p = &self.pupil;
        let mut rng = self.rng(Stream::Frames);
        let (w, h) = (p.frame_width, p.frame_height);
        trace
            .iter()
            .map(|s| {
                let r = if s.valid { (s.area / PI).sqrt() } else { 0.0 };
                let geometry = EyeGeometry {
                    center: (w as f64 / 2.0, h as f64 / 2.0),
                    semi_axes: (r, r),
                    angle: 0.0,
                };
                let mut f = render_eye(w, h, &geometry, s.timestamp);
                if pixel_noise > 0.0 {
                    for px in &mut f.pixels {
                        let v = *px as f64 + pixel_noise * rng.sample::<f64, _>(StandardNormal);
                        *px = v.round().clamp(0.0, 255.0) as u8;
                    }
                }
                f
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeGeometry {
    /// Pixel coordinates; pixel `(x, y)` covers `[x, x+1) × [y, y+1)`
    /// minus one half, so its center is at `(x, y)`.
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub angle: f64,
}

pub const PUPIL_LEVEL: u8 = 40;
pub const BACKGROUND_LEVEL: u8 = 190;

/// Anti-aliased dark ellipse on a light background.
pub fn render_eye(width: usize, height: usize, g: &EyeGeometry, timestamp: f64) -> EyeFrame {
    let (a, b) = g.semi_axes;
    let (sin, cos) = g.angle.sin_cos();
    let inside = |x: f64, y: f64| {
        if a <= 0.0 || b <= 0.0 {
            return false;
        }
        let (dx, dy) = (x - g.center.0, y - g.center.1);
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    };
    let step = 1.0 / SUPERSAMPLE as f64;
    let total = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let (dark, light) = (PUPIL_LEVEL as f64, BACKGROUND_LEVEL as f64);
    let reach = a.max(b) + 1.0;
    let pixels = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            if (x - g.center.0).abs() > reach || (y - g.center.1).abs() > reach {
                return BACKGROUND_LEVEL;
            }
            let mut covered = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x - 0.5 + (sx as f64 + 0.5) * step;
                    let py = y - 0.5 + (sy as f64 + 0.5) * step;
                    covered += usize::from(inside(px, py));
                }
            }
            let c = covered as f64 / total;
            (light + c * (dark - light)).round() as u8
        })
        .collect();
    EyeFrame::new(width, height, pixels, timestamp).expect("dimensions match")
}
