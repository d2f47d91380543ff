//! Butterworth band-pass design and zero-phase (forward-backward) filtering.
//!
//! The design follows the classical analog-prototype route so independent
//! implementations agree on the coefficients:
//!
//! 1. Pre-warp the band edges: `ω = 2·fs·tan(π·f/fs)`; `bw = ωh − ωl`,
//!    `ω0² = ωl·ωh`.
//! 2. Low-pass prototype poles `p_k = exp(iπ(2k + N + 1)/(2N))`, `k = 0..N`.
//! 3. Low-pass to band-pass: each `p_k` yields `q = p_k·bw/2 ± sqrt((p_k·bw/2)² − ω0²)`.
//! 4. Bilinear transform: `z = (2fs + s)/(2fs − s)`. The `N` zeros at `s = 0`
//!    map to `z = 1`, the `N` zeros at infinity to `z = −1`.
//! 5. Second-order sections: each conjugate pole pair (or pair of real poles)
//!    gets numerator `[1, 0, −1]` and denominator `[1, −2·Re z, |z|²]`.
//!    Sections are ordered by increasing pole radius and each numerator is
//!    scaled to unit gain at the digital centre frequency
//!    `ωc = 2·atan(ω0/(2fs))`, so the cascade has unit gain there.

use nalgebra::Complex;

use super::EegError;

type C64 = Complex<f64>;

/// One second-order section in direct form II transposed; `a[0]` is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Complex response at normalized angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> C64 {
        let z1 = C64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2])
            / (self.a[0] + z1 * self.a[1] + z2 * self.a[2])
    }

    /// Steady-state state vector for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let gain = self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>();
        let z2 = self.b[2] - self.a[2] * gain;
        let z1 = self.b[1] - self.a[1] * gain + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }
}

/// Cascade of biquads forming an IIR band-pass filter.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    pub fs: f64,
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub sections: Vec<Biquad>,
}

impl BandpassFilter {
    pub fn butterworth(fs: f64, low_hz: f64, high_hz: f64, order: usize) -> Result<Self, EegError> {
        let nyquist = fs / 2.0;
        if !(fs > 0.0 && low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
            return Err(EegError::InvalidBand {
                low_hz,
                high_hz,
                nyquist,
            });
        }
        if order == 0 {
            return Err(EegError::InvalidOrder(order));
        }

        let two_fs = 2.0 * fs;
        let warp = |f: f64| two_fs * (std::f64::consts::PI * f / fs).tan();
        let (wl, wh) = (warp(low_hz), warp(high_hz));
        let bw = wh - wl;
        let w0_sq = wl * wh;

        let n = order as f64;
        let mut poles = Vec::with_capacity(2 * order);
        for k in 0..order {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            let p = C64::from_polar(1.0, theta) * (bw / 2.0);
            let disc = (p * p - w0_sq).sqrt();
            for s in [p + disc, p - disc] {
                poles.push((two_fs + s) / (two_fs - s));
            }
        }

        let tol = 1e-10;
        let mut denominators: Vec<(f64, [f64; 3])> = poles
            .iter()
            .filter(|z| z.im > tol)
            .map(|z| (z.norm(), [1.0, -2.0 * z.re, z.norm_sqr()]))
            .collect();
        let mut real: Vec<f64> = poles
            .iter()
            .filter(|z| z.im.abs() <= tol)
            .map(|z| z.re)
            .collect();
        real.sort_by(f64::total_cmp);
        for pair in real.chunks(2) {
            let (r1, r2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
            denominators.push((r1.abs().max(r2.abs()), [1.0, -(r1 + r2), r1 * r2]));
        }
        denominators.sort_by(|x, y| x.0.total_cmp(&y.0));

        let centre = 2.0 * (w0_sq.sqrt() / two_fs).atan();
        let sections = denominators
            .into_iter()
            .map(|(_, a)| {
                let raw = Biquad {
                    b: [1.0, 0.0, -1.0],
                    a,
                };
                let g = 1.0 / raw.response(centre).norm();
                Biquad { b: [g, 0.0, -g], a }
            })
            .collect();

        Ok(Self {
            fs,
            low_hz,
            high_hz,
            order,
            sections,
        })
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI * freq_hz / self.fs;
        self.sections
            .iter()
            .map(|s| s.response(omega))
            .fold(C64::new(1.0, 0.0), |acc, h| acc * h)
            .norm()
    }

    /// Causal filtering with the given initial section states.
    fn run(&self, x: &[f64], init: &[[f64; 2]]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (sec, z0) in self.sections.iter().zip(init) {
            let [mut z1, mut z2] = *z0;
            for v in y.iter_mut() {
                let input = *v;
                let out = sec.b[0] * input + z1;
                z1 = sec.b[1] * input - sec.a[1] * out + z2;
                z2 = sec.b[2] * input - sec.a[2] * out;
                *v = out;
            }
        }
        y
    }

    /// Per-section steady-state states for a unit step at the cascade input.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let [z1, z2] = s.step_state();
                let out = [z1 * scale, z2 * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Zero-phase filtering: odd-extension padding of `3·(2·sections + 1)`
    /// samples (capped at `len − 1`), forward pass, backward pass, unpad.
    /// Both passes start from the step steady state scaled by the first sample.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((0..pad).map(|i| 2.0 * x[0] - x[pad - i]));
        ext.extend_from_slice(x);
        ext.extend((0..pad).map(|i| 2.0 * x[n - 1] - x[n - 2 - i]));

        let zi = self.step_states();
        let scaled = |v: f64| zi.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();

        let mut fwd = self.run(&ext, &scaled(ext[0]));
        fwd.reverse();
        let mut back = self.run(&fwd, &scaled(fwd[0]));
        back.reverse();
        back[pad..pad + n].to_vec()
    }
}
