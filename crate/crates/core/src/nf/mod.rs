//! Neurofeedback training: cued motor-imagery trials scored online against
//! the classifier, scheduled prototype adaptation, and a curriculum that
//! adds one task at a time once the user is reliable on the current set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eeg::{bandpass, covariance_of, epoch_geometry, EegError, EegStream, PipelineConfig};
use crate::label::TaskLabel;
use crate::mi::{contrast, MiError, MiModel, PerformanceMetrics};
use crate::sim::{SimError, SimScenario, TaskInterval};
use crate::spd::SpdMatrix;

/// Upper bound on a trial, seconds.
pub const MAX_TRIAL_LENGTH: f64 = 20.0;

#[derive(Debug, Error)]
pub enum NfError {
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("trial needs {needed} samples, stream has {got}")]
    StreamTooShort { needed: usize, got: usize },
    #[error(transparent)]
    Mi(#[from] MiError),
    #[error(transparent)]
    Eeg(#[from] EegError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialPhases {
    pub rest: f64,
    pub cue: f64,
    pub imagery: f64,
    pub inter_trial: f64,
}

impl Default for TrialPhases {
    fn default() -> Self {
        Self {
            rest: 2.0,
            cue: 1.0,
            imagery: 4.0,
            inter_trial: 2.0,
        }
    }
}

impl TrialPhases {
    pub fn total(&self) -> f64 {
        self.rest + self.cue + self.imagery + self.inter_trial
    }

    /// Imagery window relative to the trial start.
    pub fn imagery_window(&self) -> (f64, f64) {
        let start = self.rest + self.cue;
        (start, start + self.imagery)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlockCriterion {
    /// Most recent runs that must all meet the score.
    pub min_runs: usize,
    pub min_mean_score: f64,
}

impl Default for UnlockCriterion {
    fn default() -> Self {
        Self {
            min_runs: 2,
            min_mean_score: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialProtocol {
    pub trial_length: f64,
    pub phases: TrialPhases,
    pub trials_per_run: usize,
    pub active_tasks: Vec<TaskLabel>,
    /// Order in which tasks are introduced.
    pub curriculum: Vec<TaskLabel>,
    pub unlock: UnlockCriterion,
    pub pipeline: PipelineConfig,
}

impl Default for TrialProtocol {
    fn default() -> Self {
        let curriculum: Vec<TaskLabel> = ["idle", "right_hand", "left_hand"]
            .iter()
            .map(|l| TaskLabel::new(*l).expect("valid label"))
            .collect();
        Self {
            trial_length: 9.0,
            phases: TrialPhases::default(),
            trials_per_run: 10,
            active_tasks: curriculum[..2].to_vec(),
            curriculum,
            unlock: UnlockCriterion::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl TrialProtocol {
    pub fn validate(&self) -> Result<(), NfError> {
        let bad = |m: String| Err(NfError::InvalidProtocol(m));
        let p = &self.phases;
        if [p.rest, p.cue, p.imagery, p.inter_trial]
            .iter()
            .any(|d| !(*d >= 0.0))
            || !(p.imagery > 0.0)
        {
            return bad("phase durations must be nonnegative and imagery positive".into());
        }
        if !(self.trial_length > 0.0 && self.trial_length <= MAX_TRIAL_LENGTH) {
            return bad(format!(
                "trial length {} s is outside (0, {MAX_TRIAL_LENGTH}]",
                self.trial_length
            ));
        }
        if (p.total() - self.trial_length).abs() > 1e-9 {
            return bad(format!(
                "phases sum to {} s, trial length is {} s",
                p.total(),
                self.trial_length
            ));
        }
        if self.trials_per_run == 0 {
            return bad("trials_per_run must be at least 1".into());
        }
        if self.active_tasks.len() < 2 {
            return bad("at least two active tasks are needed".into());
        }
        for (i, t) in self.active_tasks.iter().enumerate() {
            if self.active_tasks[..i].contains(t) {
                return bad(format!("task `{t}` is active twice"));
            }
        }
        if self.unlock.min_runs == 0 {
            return bad("unlock criterion needs at least one run".into());
        }
        let (len, _) = epoch_geometry(
            1000.0,
            self.pipeline.epoch.epoch_seconds,
            self.pipeline.epoch.overlap,
        )?;
        if self.pipeline.epoch.epoch_seconds > p.imagery || len < 2 {
            return bad("the imagery phase must hold at least one epoch".into());
        }
        Ok(())
    }

    /// Task of trial `k` under round-robin over the active tasks.
    pub fn task_of(&self, k: usize) -> &TaskLabel {
        &self.active_tasks[k % self.active_tasks.len()]
    }
}

/// `(d_other − d_target)/(d_other + d_target)`: +1 on the target prototype,
/// −1 on another class's prototype.
pub fn feedback_score(c: &SpdMatrix, m: &MiModel, target: &TaskLabel) -> Result<f64, NfError> {
    let t = m
        .index_of(target)
        .ok_or_else(|| MiError::UnknownLabel(target.clone()))?;
    let d = m.distances(c)?;
    let other = d
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != t)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    Ok(contrast(other, d[t]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSample {
    /// Seconds from the trial start to the end of the scored epoch.
    pub time: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub task: TaskLabel,
    pub feedback_samples: Vec<FeedbackSample>,
    pub mean_score: f64,
    pub epochs_used: usize,
}

/// Imagery-phase covariances of one trial, each with the time from the
/// trial start to the end of its epoch. `stream` starts at the trial start.
pub fn imagery_epochs(
    p: &TrialProtocol,
    stream: &EegStream,
) -> Result<Vec<(f64, SpdMatrix)>, NfError> {
    let fs = stream.fs;
    let needed = (p.trial_length * fs).round() as usize;
    if stream.len() < needed {
        return Err(NfError::StreamTooShort {
            needed,
            got: stream.len(),
        });
    }
    let band = &p.pipeline.band;
    let filtered = bandpass(
        &stream.slice(0, needed),
        band.low_hz,
        band.high_hz,
        band.order,
    )?;
    let (len, step) = epoch_geometry(fs, p.pipeline.epoch.epoch_seconds, p.pipeline.epoch.overlap)?;
    let (a, b) = p.phases.imagery_window();
    let (first, end) = (
        (a * fs).round() as usize,
        ((b * fs).round() as usize).min(needed),
    );
    let mut out = Vec::new();
    let mut start = first;
    while start + len <= end {
        let block = filtered.samples.columns(start, len).into_owned();
        out.push((
            (start + len) as f64 / fs,
            covariance_of(&block, p.pipeline.shrinkage)?,
        ));
        start += step;
    }
    Ok(out)
}

fn summarize(task: &TaskLabel, feedback_samples: Vec<FeedbackSample>) -> TrialResult {
    let n = feedback_samples.len();
    let mean_score = feedback_samples.iter().map(|f| f.score).sum::<f64>() / n.max(1) as f64;
    TrialResult {
        task: task.clone(),
        feedback_samples,
        mean_score,
        epochs_used: n,
    }
}

/// Scores one trial against a fixed model. `stream` starts at the trial
/// start and covers at least `trial_length`.
pub fn run_trial(
    p: &TrialProtocol,
    task: &TaskLabel,
    stream: &EegStream,
    m: &MiModel,
) -> Result<TrialResult, NfError> {
    p.validate()?;
    if !p.active_tasks.contains(task) {
        return Err(NfError::InvalidProtocol(format!(
            "task `{task}` is not active"
        )));
    }
    let samples = imagery_epochs(p, stream)?
        .into_iter()
        .map(|(time, c)| {
            Ok(FeedbackSample {
                time,
                score: feedback_score(&c, m, task)?,
            })
        })
        .collect::<Result<Vec<_>, NfError>>()?;
    Ok(summarize(task, samples))
}

/// Per-task mean of trial mean scores within one run.
pub type RunScores = BTreeMap<TaskLabel, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub model: MiModel,
    pub metrics: PerformanceMetrics,
    pub results: Vec<TrialResult>,
    pub run_scores: RunScores,
    /// Active tasks for the next session.
    pub next_tasks: Vec<TaskLabel>,
    /// Number of automatic prototype updates that fired.
    pub adaptations: usize,
}

/// The scenario with its EEG schedule replaced by the cues of a run:
/// each trial's imagery phase carries its task.
pub fn session_scenario(base: &SimScenario, p: &TrialProtocol) -> SimScenario {
    let mut s = base.clone();
    let n = p.trials_per_run;
    s.duration = n as f64 * p.trial_length;
    let (a, b) = p.phases.imagery_window();
    s.eeg.schedule = (0..n)
        .filter(|k| !p.task_of(*k).is_idle())
        .map(|k| {
            let t0 = k as f64 * p.trial_length;
            TaskInterval {
                start: t0 + a,
                end: t0 + b,
                label: p.task_of(k).clone(),
            }
        })
        .collect();
    s
}

/// Whether the last `min_runs` runs, oldest first, all reach the score on
/// every task in `tasks`.
pub fn criterion_met(history: &[RunScores], tasks: &[TaskLabel], c: &UnlockCriterion) -> bool {
    history.len() >= c.min_runs
        && history[history.len() - c.min_runs..].iter().all(|run| {
            tasks
                .iter()
                .all(|t| run.get(t).is_some_and(|s| *s >= c.min_mean_score))
        })
}

/// Active tasks after a run: the next curriculum task is appended when the
/// criterion holds. Tasks are never removed.
pub fn next_active_tasks(p: &TrialProtocol, history: &[RunScores]) -> Vec<TaskLabel> {
    let mut tasks = p.active_tasks.clone();
    if criterion_met(history, &tasks, &p.unlock) {
        if let Some(next) = p.curriculum.iter().find(|t| !tasks.contains(t)) {
            tasks.push(next.clone());
        }
    }
    tasks
}

/// Incremental training session: trials are opened in order, each imagery
/// epoch is scored with the current model and then recorded under its cue
/// label, so prototypes adapt every `period` epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    protocol: TrialProtocol,
    model: MiModel,
    labeled: Vec<(SpdMatrix, TaskLabel)>,
    results: Vec<TrialResult>,
    open: Option<(TaskLabel, Vec<FeedbackSample>)>,
    adaptations: usize,
}

impl Trainer {
    pub fn new(p: &TrialProtocol, m: &MiModel) -> Result<Self, NfError> {
        p.validate()?;
        for t in &p.active_tasks {
            m.index_of(t)
                .ok_or_else(|| MiError::UnknownLabel(t.clone()))?;
        }
        let mut model = m.clone();
        model.discard_pending();
        Ok(Self {
            protocol: p.clone(),
            model,
            labeled: Vec::new(),
            results: Vec::new(),
            open: None,
            adaptations: 0,
        })
    }

    pub fn model(&self) -> &MiModel {
        &self.model
    }

    /// Index of the next trial to open.
    pub fn trials_started(&self) -> usize {
        self.results.len() + usize::from(self.open.is_some())
    }

    /// Closes the open trial, if any, and returns its result.
    pub fn end_trial(&mut self) -> Option<&TrialResult> {
        let (task, samples) = self.open.take()?;
        self.results.push(summarize(&task, samples));
        self.results.last()
    }

    /// Opens the next trial; its task follows the round-robin order.
    pub fn begin_trial(&mut self) -> TaskLabel {
        self.end_trial();
        let task = self.protocol.task_of(self.results.len()).clone();
        self.open = Some((task.clone(), Vec::new()));
        task
    }

    /// Scores and records one imagery epoch of the open trial. The flag is
    /// set when the epoch triggered a prototype update.
    pub fn push_epoch(
        &mut self,
        time: f64,
        c: SpdMatrix,
    ) -> Result<(FeedbackSample, bool), NfError> {
        let Some((task, samples)) = self.open.as_mut() else {
            return Err(NfError::InvalidProtocol("no trial is open".into()));
        };
        let sample = FeedbackSample {
            time,
            score: feedback_score(&c, &self.model, task)?,
        };
        samples.push(sample);
        let adapted = self.model.record(c.clone(), task)?;
        self.adaptations += usize::from(adapted);
        self.labeled.push((c, task.clone()));
        Ok((sample, adapted))
    }

    /// Ends the session: drops pending epochs, computes metrics with the
    /// final model and applies the curriculum. `history` holds earlier runs'
    /// scores, oldest first.
    pub fn finish(mut self, history: &[RunScores]) -> Result<SessionOutcome, NfError> {
        self.end_trial();
        self.model.discard_pending();
        let metrics = self.model.performance_metrics(&self.labeled)?;
        let mut run_scores = RunScores::new();
        for t in &self.protocol.active_tasks {
            let scores: Vec<f64> = self
                .results
                .iter()
                .filter(|r| &r.task == t)
                .map(|r| r.mean_score)
                .collect();
            if !scores.is_empty() {
                run_scores.insert(t.clone(), scores.iter().sum::<f64>() / scores.len() as f64);
            }
        }
        let mut all = history.to_vec();
        all.push(run_scores.clone());
        Ok(SessionOutcome {
            next_tasks: next_active_tasks(&self.protocol, &all),
            model: self.model,
            metrics,
            results: self.results,
            run_scores,
            adaptations: self.adaptations,
        })
    }
}

/// Runs one training session over the scenario's signal with a [`Trainer`].
/// Trials cycle through the active tasks; pending epochs are dropped at the
/// end. `history` holds earlier runs' scores, oldest first.
pub fn run_session(
    p: &TrialProtocol,
    m: &MiModel,
    base: &SimScenario,
    history: &[RunScores],
) -> Result<SessionOutcome, NfError> {
    let mut trainer = Trainer::new(p, m)?;
    let stream = session_scenario(base, p).gen_eeg()?;
    let per_trial = (p.trial_length * stream.fs).round() as usize;
    for k in 0..p.trials_per_run {
        trainer.begin_trial();
        let trial = stream.slice(k * per_trial, ((k + 1) * per_trial).min(stream.len()));
        for (time, c) in imagery_epochs(p, &trial)? {
            trainer.push_epoch(time, c)?;
        }
    }
    trainer.finish(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::label;
    use crate::mi::AdaptationParams;

    fn model() -> MiModel {
        let protos = vec![
            SpdMatrix::from_diagonal(&[2.0, 1.0]).unwrap(),
            SpdMatrix::from_diagonal(&[1.0, 2.0]).unwrap(),
        ];
        MiModel::from_prototypes(
            vec![TaskLabel::idle(), label("right_hand")],
            protos,
            AdaptationParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn feedback_score_examples() {
        let m = model();
        let rh = label("right_hand");
        assert_eq!(feedback_score(&m.prototypes()[1], &m, &rh).unwrap(), 1.0);
        assert_eq!(feedback_score(&m.prototypes()[0], &m, &rh).unwrap(), -1.0);
        assert_eq!(
            feedback_score(&SpdMatrix::identity(2), &m, &rh).unwrap(),
            0.0
        );
        assert!(feedback_score(&SpdMatrix::identity(2), &m, &label("feet")).is_err());
    }

    #[test]
    fn protocol_limits() {
        TrialProtocol::default().validate().unwrap();
        let long = TrialProtocol {
            trial_length: 25.0,
            phases: TrialPhases {
                rest: 5.0,
                cue: 2.0,
                imagery: 14.0,
                inter_trial: 4.0,
            },
            ..Default::default()
        };
        assert!(matches!(long.validate(), Err(NfError::InvalidProtocol(_))));
        let mismatch = TrialProtocol {
            trial_length: 10.0,
            ..Default::default()
        };
        assert!(mismatch.validate().is_err());
    }

    #[test]
    fn curriculum_grows_one_task_at_a_time() {
        let p = TrialProtocol::default();
        let good: RunScores = [(TaskLabel::idle(), 0.5), (label("right_hand"), 0.4)]
            .into_iter()
            .collect();
        let weak: RunScores = [(TaskLabel::idle(), 0.5), (label("right_hand"), 0.2)]
            .into_iter()
            .collect();
        assert_eq!(next_active_tasks(&p, &[good.clone()]), p.active_tasks);
        assert_eq!(
            next_active_tasks(&p, &[weak.clone(), good.clone()]),
            p.active_tasks
        );
        let grown = next_active_tasks(&p, &[good.clone(), good.clone()]);
        assert_eq!(
            grown,
            vec![TaskLabel::idle(), label("right_hand"), label("left_hand")]
        );
        let full = TrialProtocol {
            active_tasks: grown.clone(),
            ..p
        };
        let all: RunScores = grown.iter().map(|t| (t.clone(), 0.9)).collect();
        assert_eq!(next_active_tasks(&full, &[all.clone(), all]), grown);
    }
}
