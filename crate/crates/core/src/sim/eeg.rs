use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{label_at, SimError, SimScenario, Stream};
use crate::eeg::{BandConfig, BandpassFilter, EegStream};
use crate::label::TaskLabel;
use crate::spd::SpdMatrix;

const MU_HZ: f64 = 10.0;
const BETA_HZ: f64 = 22.0;
/// Rows of the Voss pink-noise generator; row `k` holds for `2^k` samples.
const PINK_ROWS: u32 = 8;
const PINK_SHARE: f64 = 0.75;
/// Correlation time of the amplitude fluctuation, seconds.
const JITTER_TAU: f64 = 0.1;
const OWN_GROUP: f64 = 1.0;
const OTHER_GROUP: f64 = 0.2;
const MIDLINE: f64 = 0.5;
/// Own-group weight of channels off the central row (FC, CP, ...).
const OFF_ROW: f64 = 0.8;

/// Weights with which the left and right source groups reach a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lateralization {
    pub left: f64,
    pub right: f64,
}

/// 10-20 convention: odd electrode numbers lie over the left hemisphere, even
/// ones over the right, `z` on the midline. Unrecognized names count as
/// midline.
pub fn lateralization(name: &str) -> Lateralization {
    let row = if name.starts_with('C') && !name.starts_with("CP") {
        1.0
    } else {
        OFF_ROW
    };
    match name.chars().last() {
        Some(c) if c.is_ascii_digit() => {
            let own = OWN_GROUP * row;
            if (c as u8 - b'0') % 2 == 1 {
                Lateralization {
                    left: own,
                    right: OTHER_GROUP,
                }
            } else {
                Lateralization {
                    left: OTHER_GROUP,
                    right: own,
                }
            }
        }
        _ => Lateralization {
            left: MIDLINE,
            right: MIDLINE,
        },
    }
}

/// Imagery of one hand desynchronizes the opposite hemisphere; other
/// non-idle tasks act on both groups.
fn erd_groups(label: &TaskLabel) -> (bool, bool) {
    let s = label.as_str();
    match () {
        _ if label.is_idle() => (false, false),
        _ if s.contains("right") => (true, false),
        _ if s.contains("left") => (false, true),
        _ => (true, true),
    }
}

/// Phases of (left µ, left β, right µ, right β). The hemispheres oscillate
/// in quadrature so the spatial covariance does not depend on the seed.
fn phases(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let mu = rng.random::<f64>() * 2.0 * PI;
    let beta = rng.random::<f64>() * 2.0 * PI;
    [mu, beta, mu + PI / 2.0, beta + PI / 2.0]
}

impl SimScenario {
    /// Multichannel EEG with a per-sample label track, in µV.
    pub fn gen_eeg(&self) -> Result<EegStream, SimError> {
        self.validate()?;
        let e = &self.eeg;
        let fs = e.fs;
        let n = ((self.duration * fs).round() as usize).max(1);
        let ch = e.channels.len();
        let mut rng = self.rng(Stream::Eeg);
        let ph = phases(&mut rng);
        let lat: Vec<Lateralization> = e.channels.iter().map(|c| lateralization(c)).collect();

        let pink_sd = (e.noise_level.powi(2) * PINK_SHARE / PINK_ROWS as f64).sqrt();
        let white = Normal::new(0.0, e.noise_level * (1.0 - PINK_SHARE).sqrt()).expect("finite sd");
        let pink = Normal::new(0.0, pink_sd).expect("finite sd");
        let mut rows = vec![[0.0f64; PINK_ROWS as usize]; ch];

        let rho = (-1.0 / (fs * JITTER_TAU)).exp();
        let innovation = e.amplitude_jitter * (1.0 - rho * rho).sqrt();
        let mut log_amp: [f64; 4] =
            std::array::from_fn(|_| e.amplitude_jitter * rng.sample::<f64, _>(StandardNormal));

        let keep = (1.0 - e.erd_depth).sqrt();
        let mut samples = DMatrix::zeros(ch, n);
        let mut labels = Vec::with_capacity(n);
        for j in 0..n {
            let t = j as f64 / fs;
            let label = label_at(&e.schedule, t);
            let (erd_left, erd_right) = erd_groups(&label);
            labels.push(label);

            for g in &mut log_amp {
                *g = rho * *g + innovation * rng.sample::<f64, _>(StandardNormal);
            }
            let mu = 2.0 * PI * MU_HZ * t;
            let beta = 2.0 * PI * BETA_HZ * t;
            let group = |k: usize, erd: bool| {
                let gain = if erd { keep } else { 1.0 };
                gain * (e.mu_amplitude * log_amp[k].exp() * (mu + ph[k]).sin()
                    + e.beta_amplitude * log_amp[k + 1].exp() * (beta + ph[k + 1]).sin())
            };
            let left = group(0, erd_left);
            let right = group(2, erd_right);
            let scale = match self.drift {
                Some(d) if t >= d.time => d.factor.sqrt(),
                _ => 1.0,
            };

            for c in 0..ch {
                for (k, row) in rows[c].iter_mut().enumerate() {
                    if j % (1usize << k) == 0 {
                        *row = pink.sample(&mut rng);
                    }
                }
                let background = rows[c].iter().sum::<f64>() + white.sample(&mut rng);
                samples[(c, j)] = scale * (lat[c].left * left + lat[c].right * right + background);
            }
        }
        EegStream::new(fs, e.channels.clone(), samples, Some(labels))
            .map_err(|err| SimError::InvalidScenario(err.to_string()))
    }

    /// Expected covariance of band-passed epochs recorded while `label` is
    /// active, before drift, at nominal rhythm amplitudes, with the same
    /// shrinkage the pipeline applies.
    pub fn ground_truth_covariance(
        &self,
        label: &TaskLabel,
        band: &BandConfig,
        shrinkage: f64,
    ) -> Result<SpdMatrix, SimError> {
        self.validate()?;
        let e = &self.eeg;
        let filter = BandpassFilter::butterworth(e.fs, band.low_hz, band.high_hz, band.order)
            .map_err(|err| SimError::InvalidScenario(err.to_string()))?;
        // forward-backward filtering applies |H|²
        let power_gain = |f: f64| filter.magnitude(f).powi(4);
        let ph = phases(&mut self.rng(Stream::Eeg));
        let (erd_left, erd_right) = erd_groups(label);
        let keep = (1.0 - e.erd_depth).sqrt();
        let gl = if erd_left { keep } else { 1.0 };
        let gr = if erd_right { keep } else { 1.0 };

        let ch = e.channels.len();
        let lat: Vec<Lateralization> = e.channels.iter().map(|c| lateralization(c)).collect();
        let vl = DVector::from_iterator(ch, lat.iter().map(|l| l.left * gl));
        let vr = DVector::from_iterator(ch, lat.iter().map(|l| l.right * gr));

        let mut cov = DMatrix::zeros(ch, ch);
        for (k, freq, amp) in [
            (0usize, MU_HZ, e.mu_amplitude),
            (1, BETA_HZ, e.beta_amplitude),
        ] {
            let p = 0.5 * amp * amp * power_gain(freq);
            let cross = (ph[k] - ph[k + 2]).cos();
            cov += (&vl * vl.transpose() + &vr * vr.transpose()) * p;
            cov += (&vl * vr.transpose() + &vr * vl.transpose()) * (p * cross);
        }

        let background = background_variance(e.noise_level, e.fs, &power_gain);
        for c in 0..ch {
            cov[(c, c)] += background;
        }
        let trace = cov.trace();
        let shrunk =
            cov * (1.0 - shrinkage) + DMatrix::identity(ch, ch) * (shrinkage * trace / ch as f64);
        SpdMatrix::new(shrunk).map_err(|err| SimError::InvalidScenario(err.to_string()))
    }
}

/// Filtered variance of the background noise: white plus Voss rows, each row
/// a held Gaussian whose time-averaged spectrum is `σ² sin²(Nω/2) / (N sin²(ω/2))`.
fn background_variance(noise: f64, fs: f64, power_gain: &dyn Fn(f64) -> f64) -> f64 {
    let white_var = noise * noise * (1.0 - PINK_SHARE);
    let row_var = noise * noise * PINK_SHARE / PINK_ROWS as f64;
    let grid = 8192;
    let mut total = 0.0;
    for i in 0..grid {
        let w = (i as f64 + 0.5) * PI / grid as f64;
        let mut s = white_var;
        for k in 0..PINK_ROWS {
            let hold = (1u64 << k) as f64;
            s += row_var * (hold * w / 2.0).sin().powi(2) / (hold * (w / 2.0).sin().powi(2));
        }
        total += s * power_gain(w * fs / (2.0 * PI));
    }
    total / grid as f64
}
