//! Pupillary accommodative response decoding: pupil area from eye frames,
//! baseline normalization, constriction event detection and the 4-class
//! command mapping.

mod command;
mod condition;
mod detect;
mod frame;
pub mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use command::{classify_par_command, PromptCycle, PromptSchedule};
pub use condition::{condition, ConditionConfig, Conditioner, NormalizedSample};
pub use detect::{detect_par_events, DetectorConfig, DetectorEvent, ParDetector};
pub use frame::{detect_pupil, EyeFrame, FitConfig, PupilDetector, Roi, Threshold};

#[derive(Debug, Error)]
pub enum PupilError {
    #[error("pupil series contains no valid sample")]
    NoValidSamples,
    #[error("timestamps must be strictly increasing (at index {0})")]
    NonMonotonic(usize),
    #[error("sample at {timestamp} s does not follow {previous} s")]
    OutOfOrder { previous: f64, timestamp: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PupilSample {
    pub timestamp: f64,
    /// Pixels² for frame-derived samples, arbitrary units for direct traces.
    pub area: f64,
    /// False for blinks and failed fits.
    pub valid: bool,
}

impl PupilSample {
    pub fn valid(timestamp: f64, area: f64) -> Self {
        Self {
            timestamp,
            area,
            valid: true,
        }
    }

    pub fn invalid(timestamp: f64) -> Self {
        Self {
            timestamp,
            area: 0.0,
            valid: false,
        }
    }

    pub(crate) fn usable(&self) -> bool {
        self.valid && self.area.is_finite() && self.area > 0.0
    }
}

/// A detected constriction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PupilEvent {
    pub onset: f64,
    pub duration: f64,
    /// `1 − min n(t)` over the event.
    pub depth: f64,
}

/// Conditioning plus detection, fed one raw sample at a time.
#[derive(Debug, Clone)]
pub struct PupilPipeline {
    conditioner: Conditioner,
    detector: ParDetector,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub normalized: Vec<NormalizedSample>,
    pub events: Vec<DetectorEvent>,
}

impl PupilPipeline {
    pub fn new(condition: ConditionConfig, detector: DetectorConfig) -> Result<Self, PupilError> {
        Ok(Self {
            conditioner: Conditioner::new(condition)?,
            detector: ParDetector::new(detector)?,
        })
    }

    pub fn push(&mut self, sample: PupilSample) -> Result<PipelineOutput, PupilError> {
        let normalized = self.conditioner.push(sample)?;
        Ok(self.detect(normalized))
    }

    /// Flushes samples held back while waiting for the end of a gap.
    pub fn finish(&mut self) -> PipelineOutput {
        let normalized = self.conditioner.finish();
        self.detect(normalized)
    }

    fn detect(&mut self, normalized: Vec<NormalizedSample>) -> PipelineOutput {
        let events = normalized
            .iter()
            .filter_map(|n| self.detector.push(n))
            .collect();
        PipelineOutput { normalized, events }
    }
}
