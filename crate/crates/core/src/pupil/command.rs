use serde::{Deserialize, Serialize};

use super::{PupilError, PupilEvent};

/// Two consecutive onset windows, `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptCycle {
    pub windows: [(f64, f64); 2],
}

impl PromptCycle {
    /// Windows `[start, start + len)` and `[start + len, start + 2·len)`.
    pub fn back_to_back(start: f64, len: f64) -> Self {
        Self {
            windows: [(start, start + len), (start + len, start + 2.0 * len)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSchedule {
    pub cycles: Vec<PromptCycle>,
    /// Durations at or above this are long.
    #[serde(default = "default_boundary")]
    pub duration_boundary: f64,
}

fn default_boundary() -> f64 {
    1.0
}

impl PromptSchedule {
    pub fn new(cycles: Vec<PromptCycle>, duration_boundary: f64) -> Result<Self, PupilError> {
        let s = Self {
            cycles,
            duration_boundary,
        };
        s.validate()?;
        Ok(s)
    }

    /// Every window must be non-empty and windows must not overlap.
    pub fn validate(&self) -> Result<(), PupilError> {
        if !(self.duration_boundary > 0.0) {
            return Err(PupilError::InvalidSchedule(format!(
                "duration boundary {} must be positive",
                self.duration_boundary
            )));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for (c, cycle) in self.cycles.iter().enumerate() {
            for (w, &(start, end)) in cycle.windows.iter().enumerate() {
                if !(start.is_finite() && end.is_finite() && start < end) {
                    return Err(PupilError::InvalidSchedule(format!(
                        "cycle {c} window {} is empty: [{start}, {end})",
                        w + 1
                    )));
                }
                if start < prev_end {
                    return Err(PupilError::InvalidSchedule(format!(
                        "cycle {c} window {} starts at {start}, before the previous window ends at {prev_end}",
                        w + 1
                    )));
                }
                prev_end = end;
            }
        }
        Ok(())
    }

    /// Index (0 or 1) of the window containing `t`, if any.
    pub fn window_of(&self, t: f64) -> Option<usize> {
        self.cycles.iter().find_map(|c| {
            c.windows
                .iter()
                .position(|&(start, end)| start <= t && t < end)
        })
    }
}

/// Command 1..=4: short or long constriction starting in the first or second
/// window of a prompt cycle (1 short/first, 2 long/first, 3 short/second,
/// 4 long/second). `None` when the onset falls outside every window.
pub fn classify_par_command(ev: &PupilEvent, schedule: &PromptSchedule) -> Option<u8> {
    let window = schedule.window_of(ev.onset)? as u8;
    let long = ev.duration >= schedule.duration_boundary;
    Some(2 * window + if long { 2 } else { 1 })
}
