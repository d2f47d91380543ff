//! Test-only helpers and independent oracles. Nothing here calls the
//! library's own matrix functions, so agreement is a genuine cross-check.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use parbci::SpdMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `Q diag(exp(spread·z)) Qᵀ` with a random orthogonal `Q`.
pub fn random_spd(rng: &mut impl Rng, dim: usize, spread: f64) -> SpdMatrix {
    let q = gaussian_matrix(rng, dim, dim).qr().q();
    let d: Vec<f64> = (0..dim)
        .map(|_| (spread * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let m = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)) * q.transpose();
    SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

/// Random invertible matrix with condition number below 100.
pub fn random_invertible(rng: &mut impl Rng, dim: usize) -> DMatrix<f64> {
    loop {
        let w = gaussian_matrix(rng, dim, dim);
        // squared singular values
        let ev = SymmetricEigen::new(w.transpose() * &w).eigenvalues;
        let (lo, hi) = ev
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
        if lo > 0.0 && hi / lo < 1e4 {
            return w;
        }
    }
}

/// Distance via Cholesky whitening: the eigenvalues of `L⁻¹ B L⁻ᵀ` with
/// `A = L Lᵀ` are those of `A⁻¹B`, so `sqrt(Σ log² λᵢ)`.
pub fn oracle_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let l = a.clone().cholesky().expect("positive definite").l();
    let li = l.try_inverse().expect("invertible");
    let w = &li * b * li.transpose();
    SymmetricEigen::new((&w + w.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .map(|v| v.ln().powi(2))
        .sum::<f64>()
        .sqrt()
}

fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let v = &e.eigenvectors;
    v * DMatrix::from_diagonal(&e.eigenvalues.map(f)) * v.transpose()
}

fn karcher_cost(x: &DMatrix<f64>, points: &[(DMatrix<f64>, f64)]) -> f64 {
    points
        .iter()
        .map(|(m, w)| w * oracle_distance(x, m).powi(2))
        .sum()
}

/// Riemannian gradient descent on `Σ wᵢ δ²(X, Mᵢ)` with Armijo backtracking,
/// started from the first point rather than the arithmetic mean.
pub fn oracle_karcher_mean(ms: &[SpdMatrix], weights: &[f64]) -> DMatrix<f64> {
    let total: f64 = weights.iter().sum();
    let points: Vec<(DMatrix<f64>, f64)> = ms
        .iter()
        .zip(weights)
        .map(|(m, w)| (m.as_matrix().clone(), w / total))
        .collect();
    let mut x = points[0].0.clone();
    let mut cost = karcher_cost(&x, &points);
    for _ in 0..2000 {
        let sqrt = sym_fn(&x, f64::sqrt);
        let isqrt = sym_fn(&x, |v| 1.0 / v.sqrt());
        // negative Riemannian gradient in whitened coordinates (up to factor 2)
        let dir = points
            .iter()
            .fold(DMatrix::zeros(x.nrows(), x.ncols()), |acc, (m, w)| {
                acc + sym_fn(&(&isqrt * m * &isqrt), f64::ln) * *w
            });
        let g2 = dir.norm_squared();
        if g2.sqrt() < 1e-12 {
            break;
        }
        let mut step = 0.7;
        let improved = loop {
            let cand = &sqrt * sym_fn(&(&dir * step), f64::exp) * &sqrt;
            let cand = (&cand + cand.transpose()) * 0.5;
            let c = karcher_cost(&cand, &points);
            if c <= cost - 1e-4 * step * 2.0 * g2 {
                x = cand;
                cost = c;
                break true;
            }
            if step < 1e-6 {
                break false;
            }
            step *= 0.5;
        };
        // at the cost's rounding floor no step decreases it further
        if !improved {
            break;
        }
    }
    x
}

/// Mean power in `[lo, hi]` Hz by Welch averaging of Hann-windowed segments,
/// evaluated with a direct DFT on the bins inside the band.
pub fn welch_band_power(x: &[f64], fs: f64, seg: usize, lo: f64, hi: f64) -> f64 {
    let hann: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos())
        .collect();
    let bins: Vec<usize> = (0..seg / 2)
        .filter(|k| {
            let f = *k as f64 * fs / seg as f64;
            f >= lo && f <= hi
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        let s = &x[start..start + seg];
        let mean = s.iter().sum::<f64>() / seg as f64;
        for &k in &bins {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in s.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (k * n) as f64 / seg as f64;
                re += (v - mean) * hann[n] * ph.cos();
                im += (v - mean) * hann[n] * ph.sin();
            }
            total += re * re + im * im;
        }
        count += 1;
        start += seg / 2;
    }
    total / count as f64
}

/// Squared magnitude of an order-`n` digital Butterworth band-pass obtained
/// by the pre-warped bilinear transform, in closed form.
pub fn butterworth_bandpass_power_gain(f: f64, fs: f64, lo: f64, hi: f64, n: usize) -> f64 {
    let warp = |x: f64| 2.0 * fs * (std::f64::consts::PI * x / fs).tan();
    let (wl, wh, w) = (warp(lo), warp(hi), warp(f));
    let r = (w * w - wl * wh) / (w * (wh - wl));
    1.0 / (1.0 + r.powi(2 * n as i32))
}

use parbci::eeg::PipelineConfig;
use parbci::sim::{task_blocks, SimScenario};
use parbci::TaskLabel;

pub fn three_classes() -> Vec<TaskLabel> {
    vec![
        TaskLabel::idle(),
        parbci::label("right_hand"),
        parbci::label("left_hand"),
    ]
}

/// Scenario cycling 4 s blocks through `classes` over `duration` seconds.
pub fn block_scenario(seed: u64, duration: f64, classes: &[TaskLabel]) -> SimScenario {
    let mut s = SimScenario {
        seed,
        duration,
        ..Default::default()
    };
    s.eeg.schedule = task_blocks(classes, 0.0, duration, 4.0);
    s
}

/// Band-passed, epoched covariances with their majority labels.
pub fn labeled_covariances(s: &SimScenario) -> Vec<(SpdMatrix, TaskLabel)> {
    let stream = s.gen_eeg().unwrap();
    PipelineConfig::default()
        .labeled_covariances(&stream)
        .unwrap()
        .into_iter()
        .map(|(c, e)| (c, e.label))
        .collect()
}

pub fn accuracy(model: &parbci::mi::MiModel, data: &[(SpdMatrix, TaskLabel)]) -> f64 {
    let hits = data
        .iter()
        .filter(|(c, l)| &model.classify(c).unwrap().label == l)
        .count();
    hits as f64 / data.len() as f64
}

/// Static and prequentially adapted accuracy over the final `final_block`
/// seconds of a run whose covariance is scaled by `factor` after `train_secs`.
pub fn drift_experiment(
    seed: u64,
    factor: f64,
    train_secs: f64,
    total: f64,
    final_block: f64,
) -> (f64, f64) {
    let classes = three_classes();
    let mut s = block_scenario(seed, total, &classes);
    s.drift = Some(parbci::sim::Drift {
        time: train_secs,
        factor,
    });
    let stream = s.gen_eeg().unwrap();
    let epochs = PipelineConfig::default()
        .labeled_covariances(&stream)
        .unwrap();
    let len = 0.5;
    let (train, rest): (Vec<_>, Vec<_>) = epochs
        .into_iter()
        .partition(|(_, e)| e.start_time + len <= train_secs);
    let train: Vec<(SpdMatrix, TaskLabel)> = train.into_iter().map(|(c, e)| (c, e.label)).collect();
    let fixed =
        parbci::mi::MiModel::train(&classes, &train, parbci::mi::AdaptationParams::default())
            .unwrap();
    let mut adaptive = fixed.clone();
    let (mut hits_static, mut hits_adaptive, mut n) = (0, 0, 0);
    for (c, e) in rest.into_iter().filter(|(_, e)| e.start_time >= train_secs) {
        let in_block = e.start_time >= total - final_block;
        if in_block {
            n += 1;
            hits_static += usize::from(fixed.classify(&c).unwrap().label == e.label);
            hits_adaptive += usize::from(adaptive.classify(&c).unwrap().label == e.label);
        }
        adaptive.record(c, &e.label).unwrap();
    }
    (
        hits_static as f64 / n as f64,
        hits_adaptive as f64 / n as f64,
    )
}

pub mod ui;

use parbci::pupil::{
    condition, detect_par_events, ConditionConfig, DetectorConfig, PromptCycle, PromptSchedule,
    PupilEvent, PupilSample,
};
use parbci::sim::ParSpec;

pub fn events_of(trace: &[PupilSample]) -> Vec<PupilEvent> {
    let n = condition(trace, &ConditionConfig::default()).unwrap();
    detect_par_events(&n, &DetectorConfig::default()).unwrap()
}

pub fn par_scenario(seed: u64, duration: f64, schedule: Vec<ParSpec>) -> SimScenario {
    let mut s = SimScenario {
        seed,
        duration,
        ..Default::default()
    };
    s.pupil.schedule = schedule;
    s
}

/// 20 constrictions of varied duration and depth, 6 s apart.
pub fn twenty_events() -> Vec<ParSpec> {
    (0..20)
        .map(|k| ParSpec {
            onset: 5.0 + 6.0 * k as f64,
            duration: 0.6 + 0.1 * (k % 12) as f64,
            depth: 0.25 + 0.01 * (k % 8) as f64,
        })
        .collect()
}

/// Scheduled PARs found within 0.2 s of their onset, and detections matching no PAR.
pub fn score(schedule: &[ParSpec], ev: &[PupilEvent]) -> (usize, usize) {
    let matched = |e: &PupilEvent| schedule.iter().any(|p| (e.onset - p.onset).abs() <= 0.2);
    let hits = schedule
        .iter()
        .filter(|p| ev.iter().any(|e| (e.onset - p.onset).abs() <= 0.2))
        .count();
    (hits, ev.iter().filter(|e| !matched(e)).count())
}

/// Noise-free trace with 20 prompted PARs cycling through commands 1..4,
/// the prompts, and the expected command per PAR.
pub fn four_class_case() -> (SimScenario, PromptSchedule, Vec<u8>) {
    let mut cycles = Vec::new();
    let mut pars = Vec::new();
    let mut expected = Vec::new();
    for k in 0..20 {
        let start = 4.0 + 7.0 * k as f64;
        cycles.push(PromptCycle::back_to_back(start, 2.5));
        let command = (k % 4) as u8 + 1;
        let window = ((command - 1) / 2) as f64;
        let long = command % 2 == 0;
        pars.push(ParSpec {
            onset: start + 2.5 * window + 0.6,
            duration: if long { 1.6 } else { 0.6 },
            depth: 0.3,
        });
        expected.push(command);
    }
    let prompts = PromptSchedule::new(cycles, 1.0).unwrap();
    let mut s = par_scenario(11, 145.0, pars);
    s.pupil.noise_level = 0.0;
    (s, prompts, expected)
}

use parbci::mi::{AdaptationParams, MiModel};
use parbci::nf::TrialProtocol;
use parbci::sim::TaskInterval;

pub fn two_classes() -> Vec<TaskLabel> {
    vec![TaskLabel::idle(), parbci::label("right_hand")]
}

pub fn calibrated(erd: f64, params: AdaptationParams) -> MiModel {
    let mut s = block_scenario(21, 120.0, &two_classes());
    s.eeg.erd_depth = erd;
    MiModel::train(&two_classes(), &labeled_covariances(&s), params).unwrap()
}

/// One trial's stream with imagery of `task` during the imagery phase.
pub fn trial_scenario(seed: u64, p: &TrialProtocol, task: Option<&str>) -> SimScenario {
    let mut s = SimScenario {
        seed,
        duration: p.trial_length,
        ..Default::default()
    };
    let (a, b) = p.phases.imagery_window();
    s.eeg.schedule = task
        .map(|t| TaskInterval {
            start: a,
            end: b,
            label: parbci::label(t),
        })
        .into_iter()
        .collect();
    s
}
