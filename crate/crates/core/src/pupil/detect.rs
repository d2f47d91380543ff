use serde::{Deserialize, Serialize};

use super::{NormalizedSample, PupilError, PupilEvent};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub theta_on: f64,
    pub theta_off: f64,
    /// Time the signal must stay below `theta_on` before an event opens.
    pub hold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            theta_on: 0.85,
            theta_off: 0.93,
            hold: 0.3,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), PupilError> {
        if self.theta_on > 0.0
            && self.theta_on <= self.theta_off
            && self.theta_off <= 1.5
            && self.hold >= 0.0
        {
            Ok(())
        } else {
            Err(PupilError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DetectorEvent {
    /// The hold time elapsed; `at` is the confirming sample's timestamp.
    Opened {
        onset: f64,
        at: f64,
    },
    Closed(PupilEvent),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Idle,
    Candidate { onset: f64, min: f64 },
    Open { onset: f64, min: f64 },
}

/// Hysteresis detector over a normalized series.
#[derive(Debug, Clone)]
pub struct ParDetector {
    cfg: DetectorConfig,
    state: State,
}

impl ParDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self, PupilError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: State::Idle,
        })
    }

    pub fn is_open(&self) -> bool {
        matches!(self.state, State::Open { .. })
    }

    pub fn push(&mut self, s: &NormalizedSample) -> Option<DetectorEvent> {
        let cfg = self.cfg;
        let t = s.timestamp;
        match (self.state, s.value) {
            (State::Candidate { .. }, None) => {
                self.state = State::Idle;
                None
            }
            (_, None) => None,
            (State::Idle, Some(n)) => {
                if n < cfg.theta_on {
                    self.state = State::Candidate { onset: t, min: n };
                    return self.confirm(t);
                }
                None
            }
            (State::Candidate { onset, min }, Some(n)) => {
                if n < cfg.theta_on {
                    self.state = State::Candidate {
                        onset,
                        min: min.min(n),
                    };
                    self.confirm(t)
                } else {
                    self.state = State::Idle;
                    None
                }
            }
            (State::Open { onset, min }, Some(n)) => {
                if n > cfg.theta_off {
                    self.state = State::Idle;
                    Some(DetectorEvent::Closed(PupilEvent {
                        onset,
                        duration: t - onset,
                        depth: 1.0 - min,
                    }))
                } else {
                    self.state = State::Open {
                        onset,
                        min: min.min(n),
                    };
                    None
                }
            }
        }
    }

    fn confirm(&mut self, t: f64) -> Option<DetectorEvent> {
        if let State::Candidate { onset, min } = self.state {
            if t - onset >= self.cfg.hold - 1e-9 {
                self.state = State::Open { onset, min };
                return Some(DetectorEvent::Opened { onset, at: t });
            }
        }
        None
    }
}

/// Completed events of a normalized series; an event still open at the end
/// is dropped.
pub fn detect_par_events(
    series: &[NormalizedSample],
    cfg: &DetectorConfig,
) -> Result<Vec<PupilEvent>, PupilError> {
    let mut d = ParDetector::new(*cfg)?;
    Ok(series
        .iter()
        .filter_map(|s| match d.push(s) {
            Some(DetectorEvent::Closed(e)) => Some(e),
            _ => None,
        })
        .collect())
}
