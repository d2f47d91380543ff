use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::label::TaskLabel;
use crate::mi::PerformanceMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlockThresholds {
    /// Consecutive sessions that must all pass (or all fail) to switch mode.
    pub sessions: usize,
    pub separability: f64,
    pub consistency: f64,
}

impl Default for UnlockThresholds {
    fn default() -> Self {
        Self {
            sessions: 3,
            separability: 1.0,
            consistency: 0.5,
        }
    }
}

pub fn session_passes(m: &PerformanceMetrics, th: &UnlockThresholds) -> bool {
    m.separability >= th.separability && m.per_class.iter().all(|c| c.consistency >= th.consistency)
}

/// Mode after a history of training sessions, oldest first. Starts in
/// PAR-only mode, unlocks once the last `sessions` all pass and reverts once
/// the last `sessions` all fail.
pub fn unlock_multimodal(history: &[PerformanceMetrics], th: &UnlockThresholds) -> Mode {
    let k = th.sessions.max(1);
    let pass: Vec<bool> = history.iter().map(|m| session_passes(m, th)).collect();
    let mut mode = Mode::ParOnly;
    for end in k..=pass.len() {
        let window = &pass[end - k..end];
        if window.iter().all(|p| *p) {
            mode = Mode::Multimodal;
        } else if window.iter().all(|p| !*p) {
            mode = Mode::ParOnly;
        }
    }
    mode
}

/// Configured shortcuts whose task cleared the consistency threshold in the
/// latest session; empty unless the history unlocks multimodal mode.
pub fn active_shortcuts(
    history: &[PerformanceMetrics],
    th: &UnlockThresholds,
    configured: &BTreeMap<TaskLabel, String>,
) -> BTreeMap<TaskLabel, String> {
    let Some(last) = history.last() else {
        return BTreeMap::new();
    };
    if unlock_multimodal(history, th) != Mode::Multimodal {
        return BTreeMap::new();
    }
    configured
        .iter()
        .filter(|(label, _)| last.consistency(label).is_some_and(|c| c >= th.consistency))
        .map(|(l, id)| (l.clone(), id.clone()))
        .collect()
}
