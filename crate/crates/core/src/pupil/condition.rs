use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{PupilError, PupilSample};

/// Slack used when comparing timestamps against window edges.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionConfig {
    /// Longest gap between valid samples that is bridged by interpolation.
    pub max_gap: f64,
    /// Length of the trailing baseline window.
    pub baseline_window: f64,
    /// Samples whose ratio to the current baseline falls below this value are
    /// kept out of the baseline.
    pub baseline_exclusion: f64,
    /// Trailing moving-average length applied to the normalized area.
    pub smoothing: f64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            max_gap: 0.3,
            baseline_window: 5.0,
            baseline_exclusion: 0.85,
            smoothing: 0.1,
        }
    }
}

impl ConditionConfig {
    pub fn validate(&self) -> Result<(), PupilError> {
        let ok = self.max_gap >= 0.0
            && self.baseline_window > 0.0
            && self.baseline_exclusion > 0.0
            && self.baseline_exclusion <= 1.0
            && self.smoothing >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(PupilError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Baseline-normalized area; `None` where the input was masked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSample {
    pub timestamp: f64,
    pub value: Option<f64>,
}

/// Running median over a trailing time window.
#[derive(Debug, Clone, Default)]
struct RunningMedian {
    window: VecDeque<(f64, f64)>,
    sorted: Vec<f64>,
}

impl RunningMedian {
    fn expire(&mut self, now: f64, length: f64) {
        while let Some(&(t, v)) = self.window.front() {
            if t > now - length + TIME_EPS {
                break;
            }
            self.window.pop_front();
            let i = self.sorted.partition_point(|x| *x < v);
            self.sorted.remove(i);
        }
    }

    fn insert(&mut self, t: f64, v: f64) {
        self.window.push_back((t, v));
        let i = self.sorted.partition_point(|x| *x < v);
        self.sorted.insert(i, v);
    }

    fn median(&self) -> Option<f64> {
        let n = self.sorted.len();
        match n {
            0 => None,
            _ if n % 2 == 1 => Some(self.sorted[n / 2]),
            _ => Some(0.5 * (self.sorted[n / 2 - 1] + self.sorted[n / 2])),
        }
    }
}

/// Causal conditioning stage. Invalid samples are held until the gap they
/// belong to is known to be short (then interpolated) or long (then masked),
/// so output lags input only inside gaps.
#[derive(Debug, Clone)]
pub struct Conditioner {
    cfg: ConditionConfig,
    last_valid: Option<PupilSample>,
    last_time: Option<f64>,
    held: Vec<f64>,
    baseline: RunningMedian,
    smoother: VecDeque<(f64, f64)>,
}

impl Conditioner {
    pub fn new(cfg: ConditionConfig) -> Result<Self, PupilError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            last_valid: None,
            last_time: None,
            held: Vec::new(),
            baseline: RunningMedian::default(),
            smoother: VecDeque::new(),
        })
    }

    pub fn push(&mut self, s: PupilSample) -> Result<Vec<NormalizedSample>, PupilError> {
        if let Some(prev) = self.last_time {
            if !(s.timestamp > prev) {
                return Err(PupilError::OutOfOrder {
                    previous: prev,
                    timestamp: s.timestamp,
                });
            }
        }
        self.last_time = Some(s.timestamp);
        let mut out = Vec::new();

        if !s.usable() {
            match self.last_valid {
                Some(prev) if s.timestamp - prev.timestamp <= self.cfg.max_gap + TIME_EPS => {
                    self.held.push(s.timestamp);
                }
                _ => {
                    self.mask_held(&mut out);
                    self.mask(s.timestamp, &mut out);
                }
            }
            return Ok(out);
        }

        if let Some(prev) = self.last_valid {
            if !self.held.is_empty() {
                if s.timestamp - prev.timestamp <= self.cfg.max_gap + TIME_EPS {
                    let span = s.timestamp - prev.timestamp;
                    for t in std::mem::take(&mut self.held) {
                        let w = (t - prev.timestamp) / span;
                        let area = prev.area + w * (s.area - prev.area);
                        out.push(self.normalize(t, area));
                    }
                } else {
                    self.mask_held(&mut out);
                }
            }
        }
        out.push(self.normalize(s.timestamp, s.area));
        self.last_valid = Some(s);
        Ok(out)
    }

    /// Masks samples still waiting for a gap to end.
    pub fn finish(&mut self) -> Vec<NormalizedSample> {
        let mut out = Vec::new();
        self.mask_held(&mut out);
        out
    }

    fn mask_held(&mut self, out: &mut Vec<NormalizedSample>) {
        for t in std::mem::take(&mut self.held) {
            self.mask(t, out);
        }
    }

    fn mask(&mut self, t: f64, out: &mut Vec<NormalizedSample>) {
        self.smoother.clear();
        out.push(NormalizedSample {
            timestamp: t,
            value: None,
        });
    }

    fn normalize(&mut self, t: f64, area: f64) -> NormalizedSample {
        let cfg = self.cfg;
        self.baseline.expire(t, cfg.baseline_window);
        let include = match self.baseline.median() {
            Some(b) => area / b >= cfg.baseline_exclusion,
            None => true,
        };
        if include {
            self.baseline.insert(t, area);
        }
        let baseline = self.baseline.median().expect("window is non-empty");
        let raw = area / baseline;

        while let Some(&(t0, _)) = self.smoother.front() {
            if t0 > t - cfg.smoothing + TIME_EPS {
                break;
            }
            self.smoother.pop_front();
        }
        self.smoother.push_back((t, raw));
        let value = self.smoother.iter().map(|(_, v)| v).sum::<f64>() / self.smoother.len() as f64;
        NormalizedSample {
            timestamp: t,
            value: Some(value),
        }
    }
}

/// Batch form of [`Conditioner`]; trailing invalid samples are masked.
pub fn condition(
    series: &[PupilSample],
    cfg: &ConditionConfig,
) -> Result<Vec<NormalizedSample>, PupilError> {
    if !series.iter().any(PupilSample::usable) {
        return Err(PupilError::NoValidSamples);
    }
    for (i, w) in series.windows(2).enumerate() {
        if !(w[1].timestamp > w[0].timestamp) {
            return Err(PupilError::NonMonotonic(i + 1));
        }
    }
    let mut c = Conditioner::new(*cfg)?;
    let mut out = Vec::with_capacity(series.len());
    for s in series {
        out.extend(c.push(*s)?);
    }
    out.extend(c.finish());
    Ok(out)
}
