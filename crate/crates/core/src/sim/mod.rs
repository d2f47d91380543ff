//! Seeded ground-truth generator for EEG with event-related desynchronization,
//! pupil traces carrying accommodative constrictions, and eye frames.

mod eeg;
mod pupil;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::TaskLabel;

pub use eeg::{lateralization, Lateralization};
pub use pupil::{render_eye, EyeGeometry};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::InvalidScenario(msg.into()))
}

/// Default 10-20 montage over the sensorimotor strip.
pub const DEFAULT_CHANNELS: [&str; 8] = ["FC3", "C3", "CP3", "Cz", "CPz", "FC4", "C4", "CP4"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskInterval {
    pub start: f64,
    pub end: f64,
    pub label: TaskLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EegSim {
    pub fs: f64,
    pub channels: Vec<String>,
    /// Fractional band-power drop on the channels a task desynchronizes.
    pub erd_depth: f64,
    /// Standard deviation of the background noise, µV.
    pub noise_level: f64,
    pub mu_amplitude: f64,
    pub beta_amplitude: f64,
    /// Standard deviation of the slow log-amplitude fluctuation of each rhythm.
    pub amplitude_jitter: f64,
    pub schedule: Vec<TaskInterval>,
}

impl Default for EegSim {
    fn default() -> Self {
        Self {
            fs: 256.0,
            channels: DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            erd_depth: 0.3,
            noise_level: 2.0,
            mu_amplitude: 10.0,
            beta_amplitude: 6.0,
            amplitude_jitter: 0.05,
            schedule: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParSpec {
    pub onset: f64,
    pub duration: f64,
    /// Fractional area reduction at full constriction.
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blink {
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PupilSim {
    pub rate: f64,
    pub baseline_area: f64,
    /// Relative amplitude of the slow hippus oscillation.
    pub hippus_amplitude: f64,
    pub hippus_hz: f64,
    /// Relative standard deviation of white measurement noise.
    pub noise_level: f64,
    /// Length of the raised-cosine transitions into and out of a constriction.
    pub edge: f64,
    pub schedule: Vec<ParSpec>,
    pub blinks: Vec<Blink>,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl Default for PupilSim {
    fn default() -> Self {
        Self {
            rate: 60.0,
            baseline_area: std::f64::consts::PI * 40.0 * 40.0,
            hippus_amplitude: 0.05,
            hippus_hz: 0.2,
            noise_level: 0.005,
            edge: 0.3,
            schedule: Vec::new(),
            blinks: Vec::new(),
            frame_width: 200,
            frame_height: 150,
        }
    }
}

/// From `time` on, the signal covariance is multiplied by `factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Drift {
    pub time: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub seed: u64,
    pub duration: f64,
    pub eeg: EegSim,
    pub pupil: PupilSim,
    pub drift: Option<Drift>,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            seed: 0,
            duration: 60.0,
            eeg: EegSim::default(),
            pupil: PupilSim::default(),
            drift: None,
        }
    }
}

/// Independent random streams derived from one seed.
pub(crate) enum Stream {
    Eeg = 1,
    Pupil = 2,
    Frames = 3,
}

impl SimScenario {
    pub(crate) fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream as u64);
        r
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return invalid(format!("duration {} must be positive", self.duration));
        }
        let e = &self.eeg;
        if !(e.fs > 0.0) {
            return invalid(format!("EEG rate {} must be positive", e.fs));
        }
        if e.channels.len() < 2 {
            return invalid("at least two EEG channels are required");
        }
        if !(0.0..=1.0).contains(&e.erd_depth) {
            return invalid(format!("erd_depth {} is outside [0, 1]", e.erd_depth));
        }
        if e.noise_level < 0.0
            || e.mu_amplitude < 0.0
            || e.beta_amplitude < 0.0
            || e.amplitude_jitter < 0.0
        {
            return invalid("EEG amplitudes and noise levels must be nonnegative");
        }
        check_intervals(
            e.schedule.iter().map(|i| (i.start, i.end)),
            self.duration,
            "task schedule",
        )?;

        let p = &self.pupil;
        if !(p.rate > 0.0 && p.baseline_area > 0.0) {
            return invalid("pupil rate and baseline area must be positive");
        }
        if p.hippus_amplitude < 0.0
            || p.hippus_amplitude >= 1.0
            || p.noise_level < 0.0
            || p.edge < 0.0
        {
            return invalid("pupil hippus, noise and edge parameters out of range");
        }
        for s in &p.schedule {
            if !(s.duration > 0.0) || !(0.0..1.0).contains(&s.depth) {
                return invalid(format!(
                    "PAR {s:?} needs positive duration and depth in [0, 1)"
                ));
            }
        }
        check_intervals(
            p.schedule.iter().map(|s| (s.onset, s.onset + s.duration)),
            self.duration,
            "PAR schedule",
        )?;
        check_intervals(
            p.blinks.iter().map(|b| (b.start, b.start + b.duration)),
            self.duration,
            "blink list",
        )?;
        if let Some(d) = self.drift {
            if !(d.factor > 0.0) || !(0.0..=self.duration).contains(&d.time) {
                return invalid(format!(
                    "drift {d:?} needs a positive factor and a time within the run"
                ));
            }
        }
        Ok(())
    }
}

fn check_intervals(
    iter: impl Iterator<Item = (f64, f64)>,
    duration: f64,
    what: &str,
) -> Result<(), SimError> {
    let mut prev_end = 0.0;
    for (k, (start, end)) in iter.enumerate() {
        if !(start >= 0.0 && end > start && end <= duration + 1e-9) {
            return invalid(format!(
                "{what} entry {k}: [{start}, {end}) is empty or outside [0, {duration}]"
            ));
        }
        if start < prev_end {
            return invalid(format!(
                "{what} entry {k} starts at {start}, before the previous one ends at {prev_end}"
            ));
        }
        prev_end = end;
    }
    Ok(())
}

/// Back-to-back blocks of `block` seconds cycling through `labels`, starting
/// at `start` and ending before `end`. Idle entries leave a gap.
pub fn task_blocks(labels: &[TaskLabel], start: f64, end: f64, block: f64) -> Vec<TaskInterval> {
    let mut out = Vec::new();
    if labels.is_empty() || !(block > 0.0) {
        return out;
    }
    let mut k = 0usize;
    loop {
        let s = start + k as f64 * block;
        let e = s + block;
        if e > end + 1e-9 {
            break;
        }
        let label = &labels[k % labels.len()];
        if !label.is_idle() {
            out.push(TaskInterval {
                start: s,
                end: e,
                label: label.clone(),
            });
        }
        k += 1;
    }
    out
}

/// Maximal runs of non-idle labels as intervals `[first/fs, (last+1)/fs)`.
pub fn schedule_from_labels(labels: &[TaskLabel], fs: f64) -> Vec<TaskInterval> {
    let mut out: Vec<TaskInterval> = Vec::new();
    let mut run: Option<(usize, &TaskLabel)> = None;
    for (j, l) in labels
        .iter()
        .chain(std::iter::once(&TaskLabel::idle()))
        .enumerate()
    {
        match run {
            Some((_, cur)) if cur == l => continue,
            Some((start, cur)) => {
                out.push(TaskInterval {
                    start: start as f64 / fs,
                    end: j as f64 / fs,
                    label: cur.clone(),
                });
                run = None;
            }
            None => {}
        }
        if !l.is_idle() && j < labels.len() {
            run = Some((j, l));
        }
    }
    out
}

/// Task active at time `t` under `schedule`.
pub fn label_at(schedule: &[TaskInterval], t: f64) -> TaskLabel {
    schedule
        .iter()
        .find(|i| i.start <= t && t < i.end)
        .map_or_else(TaskLabel::idle, |i| i.label.clone())
}
