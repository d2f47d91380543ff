//! Session event log: one JSON object per line, `{"v":1,"seq":..,"t":..,"kind":..}`
//! followed by the kind's payload.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use parbci::mi::{AdaptationParams, PerformanceMetrics};
use parbci::nf::{RunScores, TrialProtocol, TrialResult};
use parbci::pupil::{ConditionConfig, DetectorConfig, PromptSchedule};
use parbci::ui::{Action, Entry, Mode, Notice, UiConfig, UnlockThresholds, View};
use parbci::TaskLabel;
use serde::{Deserialize, Serialize};

use crate::config::GateConfig;
use crate::HubError;

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionKind {
    FreeUse,
    Training,
}

/// Operator command as it enters the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    InjectPar,
    InjectMi { label: TaskLabel },
    PressButton,
    Pause,
    Resume,
    SetSpeed { factor: f64 },
}

/// One finished training session, as kept in the history file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub metrics: PerformanceMetrics,
    pub run_scores: RunScores,
    pub next_tasks: Vec<TaskLabel>,
}

/// Everything the engine needs, recorded at the head of the log so that a
/// replay can rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub session: SessionKind,
    pub seed: u64,
    pub mode: Mode,
    pub shortcuts: BTreeMap<TaskLabel, String>,
    pub gate: GateConfig,
    pub unlock: UnlockThresholds,
    pub ui: UiConfig,
    pub condition: ConditionConfig,
    pub detector: DetectorConfig,
    pub prompts: Option<PromptSchedule>,
    pub protocol: TrialProtocol,
    pub adaptation: AdaptationParams,
    /// Initial model in the snapshot text format.
    pub model: String,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    SessionStart(Box<EngineConfig>),
    EegEpoch {
        start: f64,
        label: Option<TaskLabel>,
        trial: Option<usize>,
        dim: usize,
        /// Row-major covariance entries.
        cov: Vec<f64>,
    },
    PupilSample {
        area: f64,
        valid: bool,
    },
    Operator {
        /// The console's request number, when the command came over the socket.
        request: Option<u64>,
        #[serde(flatten)]
        command: Command,
    },
    ParEvent {
        onset: f64,
        duration: f64,
        depth: f64,
        command: Option<u8>,
    },
    Classification {
        label: TaskLabel,
        score: f64,
        distances: Vec<f64>,
    },
    Feedback {
        trial: usize,
        task: TaskLabel,
        time: f64,
        score: f64,
        adapted: bool,
    },
    Trial {
        trial: usize,
        #[serde(flatten)]
        result: TrialResult,
    },
    UiState {
        view: View,
        highlighted: usize,
        entries: Vec<Entry>,
        mode: Mode,
        origin: Option<usize>,
    },
    Action {
        #[serde(flatten)]
        action: Action,
    },
    Notice {
        #[serde(flatten)]
        notice: Notice,
    },
    /// An operator command with no effect in this kind of session.
    Ignored {
        reason: String,
    },
    Metrics {
        metrics: PerformanceMetrics,
        run_scores: Option<RunScores>,
        next_tasks: Option<Vec<TaskLabel>>,
        adaptations: usize,
    },
    ModeChange {
        from: Mode,
        to: Mode,
    },
    Snapshot {
        file: String,
    },
    SessionEnd {
        inputs: u64,
        actions: u64,
    },
}

impl Body {
    /// Recorded inputs; everything else is derived from them.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Body::EegEpoch { .. } | Body::PupilSample { .. } | Body::Operator { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub v: u32,
    pub seq: u64,
    pub t: f64,
    #[serde(flatten)]
    pub body: Body,
}

/// Numbers records and renders them as log lines.
#[derive(Debug, Default)]
pub struct Log {
    next_seq: u64,
    last_t: f64,
    pending: Vec<String>,
}

impl Log {
    /// Timestamps are clamped so they never decrease.
    pub fn emit(&mut self, t: f64, body: Body) {
        self.last_t = self.last_t.max(t);
        let r = Record {
            v: LOG_VERSION,
            seq: self.next_seq,
            t: self.last_t,
            body,
        };
        self.next_seq += 1;
        self.pending
            .push(serde_json::to_string(&r).expect("records serialize"));
    }

    pub fn take(&mut self) -> Vec<String> {
        std::mem::take(&mut self.pending)
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }
}

pub fn parse_line(line: &str, number: usize) -> Result<Record, HubError> {
    let r: Record = serde_json::from_str(line).map_err(|e| HubError::Log {
        line: number,
        message: e.to_string(),
    })?;
    if r.v != LOG_VERSION {
        return Err(HubError::Log {
            line: number,
            message: format!("unsupported version {}", r.v),
        });
    }
    Ok(r)
}

/// Reads a whole log, keeping each record's original line.
pub fn read_log<R: BufRead>(input: R) -> Result<Vec<(String, Record)>, HubError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = parse_line(&line, i + 1)?;
        out.push((line, r));
    }
    Ok(out)
}

pub fn write_lines<W: Write>(out: &mut W, lines: &[String]) -> std::io::Result<()> {
    for l in lines {
        out.write_all(l.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
