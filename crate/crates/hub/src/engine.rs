//! The single-owner session engine. Inputs arrive in time order; every
//! input and everything derived from it is appended to the log.

use parbci::mi::{snapshot, MiModel, PerformanceMetrics};
use parbci::nf::Trainer;
use parbci::pupil::{classify_par_command, DetectorEvent, PupilPipeline, PupilSample};
use parbci::ui::{unlock_multimodal, Mode, UiEvent, UiEventKind, UiFlow, UiState, View};
use parbci::{SpdMatrix, TaskLabel};

use crate::config::GateConfig;
use crate::log::{Body, Command, EngineConfig, HistoryEntry, Log, SessionKind};
use crate::HubError;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochInput {
    /// Session time at which the epoch is complete.
    pub t: f64,
    pub start: f64,
    pub label: Option<TaskLabel>,
    pub trial: Option<usize>,
    pub cov: SpdMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Pupil(PupilSample),
    Epoch(EpochInput),
    Operator {
        t: f64,
        request: Option<u64>,
        command: Command,
    },
}

impl Input {
    pub fn time(&self) -> f64 {
        match self {
            Input::Pupil(s) => s.timestamp,
            Input::Epoch(e) => e.t,
            Input::Operator { t, .. } => *t,
        }
    }

    /// Rebuilds an input from its log record.
    pub fn from_record(t: f64, body: &Body) -> Result<Option<Self>, HubError> {
        Ok(match body {
            Body::PupilSample { area, valid } => Some(Input::Pupil(PupilSample {
                timestamp: t,
                area: *area,
                valid: *valid,
            })),
            Body::EegEpoch {
                start,
                label,
                trial,
                dim,
                cov,
            } => Some(Input::Epoch(EpochInput {
                t,
                start: *start,
                label: label.clone(),
                trial: *trial,
                cov: SpdMatrix::from_row_slice(*dim, cov)
                    .map_err(|e| HubError::Runtime(e.to_string()))?,
            })),
            Body::Operator { request, command } => Some(Input::Operator {
                t,
                request: *request,
                command: command.clone(),
            }),
            _ => None,
        })
    }
}

/// Same non-idle label at or above the floor for `count` consecutive epochs.
#[derive(Debug, Clone)]
struct Gate {
    cfg: GateConfig,
    run: Option<(TaskLabel, usize)>,
}

impl Gate {
    fn push(&mut self, label: &TaskLabel, score: f64) -> Option<TaskLabel> {
        if label.is_idle() || score < self.cfg.floor {
            self.run = None;
            return None;
        }
        let n = match &self.run {
            Some((l, n)) if l == label => n + 1,
            _ => 1,
        };
        if n >= self.cfg.count {
            self.run = None;
            return Some(label.clone());
        }
        self.run = Some((label.clone(), n));
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOutcome {
    pub model: MiModel,
    pub metrics: Option<PerformanceMetrics>,
    /// Set for training sessions.
    pub history: Option<HistoryEntry>,
    pub actions: u64,
}

pub struct Engine {
    cfg: EngineConfig,
    log: Log,
    clock: f64,
    flow: UiFlow,
    ui: UiState,
    shown: Option<(View, usize, Option<usize>, Mode)>,
    pupil: PupilPipeline,
    gate: Gate,
    model: MiModel,
    trainer: Option<Trainer>,
    trial: Option<usize>,
    labeled: Vec<(SpdMatrix, TaskLabel)>,
    inputs: u64,
    actions: u64,
}

fn runtime(e: impl std::fmt::Display) -> HubError {
    HubError::Runtime(e.to_string())
}

impl Engine {
    /// Opens the session and logs its start record.
    pub fn new(cfg: EngineConfig) -> Result<Self, HubError> {
        let model = snapshot::read_model(cfg.model.as_bytes())
            .map_err(runtime)?
            .with_params(cfg.adaptation)
            .map_err(runtime)?;
        let flow = UiFlow::new(cfg.ui.clone()).map_err(runtime)?;
        let ui = UiState::new().with_mode(cfg.mode, cfg.shortcuts.clone());
        let pupil = PupilPipeline::new(cfg.condition, cfg.detector).map_err(runtime)?;
        let trainer = match cfg.session {
            SessionKind::Training => Some(Trainer::new(&cfg.protocol, &model).map_err(runtime)?),
            SessionKind::FreeUse => None,
        };
        let mut e = Self {
            gate: Gate {
                cfg: cfg.gate,
                run: None,
            },
            cfg,
            log: Log::default(),
            clock: 0.0,
            flow,
            ui,
            shown: None,
            pupil,
            model,
            trainer,
            trial: None,
            labeled: Vec::new(),
            inputs: 0,
            actions: 0,
        };
        e.log.emit(0.0, Body::SessionStart(Box::new(e.cfg.clone())));
        if e.cfg.session == SessionKind::FreeUse {
            e.show_ui();
        }
        Ok(e)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn ui(&self) -> &UiState {
        &self.ui
    }

    /// Log lines produced since the last call.
    pub fn take_lines(&mut self) -> Vec<String> {
        self.log.take()
    }

    pub fn handle(&mut self, input: Input) -> Result<(), HubError> {
        let t = input.time();
        if !(t >= self.clock) {
            return Err(HubError::Runtime(format!(
                "input at {t} arrived after session time {}",
                self.clock
            )));
        }
        self.clock = t;
        self.inputs += 1;
        let free = self.cfg.session == SessionKind::FreeUse;
        match input {
            Input::Pupil(s) => {
                self.log.emit(
                    t,
                    Body::PupilSample {
                        area: s.area,
                        valid: s.valid,
                    },
                );
                self.advance_ui();
                let out = self.pupil.push(s).map_err(runtime)?;
                for ev in out.events {
                    self.detector_event(ev)?;
                }
            }
            Input::Epoch(e) => {
                self.log.emit(
                    t,
                    Body::EegEpoch {
                        start: e.start,
                        label: e.label.clone(),
                        trial: e.trial,
                        dim: e.cov.dim(),
                        cov: e.cov.to_row_major(),
                    },
                );
                self.advance_ui();
                if free {
                    self.classify(e)?;
                } else {
                    self.train(e)?;
                }
            }
            Input::Operator {
                request, command, ..
            } => {
                self.log.emit(
                    t,
                    Body::Operator {
                        request,
                        command: command.clone(),
                    },
                );
                self.advance_ui();
                let kind = match command {
                    Command::InjectPar => Some(UiEventKind::ParTask),
                    Command::InjectMi { label } => Some(UiEventKind::Mi { label }),
                    Command::PressButton => Some(UiEventKind::ExternalButton),
                    Command::Pause | Command::Resume | Command::SetSpeed { .. } => None,
                };
                match kind {
                    Some(k) if free => self.ui_event(k)?,
                    Some(_) => self.log.emit(
                        t,
                        Body::Ignored {
                            reason: "no menu during training".into(),
                        },
                    ),
                    None => {}
                }
            }
        }
        Ok(())
    }

    fn detector_event(&mut self, ev: DetectorEvent) -> Result<(), HubError> {
        match ev {
            DetectorEvent::Opened { .. } => {
                if self.cfg.session == SessionKind::FreeUse {
                    self.ui_event(UiEventKind::ParTask)?;
                }
            }
            DetectorEvent::Closed(p) => {
                let command = self
                    .cfg
                    .prompts
                    .as_ref()
                    .and_then(|s| classify_par_command(&p, s));
                self.log.emit(
                    self.clock,
                    Body::ParEvent {
                        onset: p.onset,
                        duration: p.duration,
                        depth: p.depth,
                        command,
                    },
                );
            }
        }
        Ok(())
    }

    fn classify(&mut self, e: EpochInput) -> Result<(), HubError> {
        let c = self.model.classify(&e.cov).map_err(runtime)?;
        self.log.emit(
            self.clock,
            Body::Classification {
                label: c.label.clone(),
                score: c.score,
                distances: c.distances.clone(),
            },
        );
        if self.ui.mode == Mode::Multimodal {
            if let Some(label) = self.gate.push(&c.label, c.score) {
                self.ui_event(UiEventKind::Mi { label })?;
            }
        }
        if let Some(l) = e.label {
            if self.model.index_of(&l).is_some() {
                self.labeled.push((e.cov, l));
            }
        }
        Ok(())
    }

    fn train(&mut self, e: EpochInput) -> Result<(), HubError> {
        let trainer = self
            .trainer
            .as_mut()
            .expect("training sessions own a trainer");
        let Some(k) = e.trial else {
            return Err(HubError::Runtime(format!(
                "training epoch at {} has no trial index",
                e.t
            )));
        };
        if self.trial != Some(k) {
            if k != trainer.trials_started() {
                return Err(HubError::Runtime(format!(
                    "trial {k} out of order, expected {}",
                    trainer.trials_started()
                )));
            }
            self.close_trial();
            self.trainer.as_mut().expect("trainer").begin_trial();
            self.trial = Some(k);
        }
        let trial_start = k as f64 * self.cfg.protocol.trial_length;
        let trainer = self.trainer.as_mut().expect("trainer");
        let (sample, adapted) = trainer
            .push_epoch(e.t - trial_start, e.cov)
            .map_err(runtime)?;
        let task = self.cfg.protocol.task_of(k).clone();
        self.log.emit(
            self.clock,
            Body::Feedback {
                trial: k,
                task,
                time: sample.time,
                score: sample.score,
                adapted,
            },
        );
        Ok(())
    }

    fn close_trial(&mut self) {
        let (Some(k), Some(trainer)) = (self.trial, self.trainer.as_mut()) else {
            return;
        };
        if let Some(result) = trainer.end_trial() {
            let result = result.clone();
            self.log.emit(self.clock, Body::Trial { trial: k, result });
        }
        self.trial = None;
    }

    fn advance_ui(&mut self) {
        if self.cfg.session == SessionKind::FreeUse {
            self.ui = self.flow.advance_to(&self.ui, self.clock);
            self.show_ui();
        }
    }

    fn ui_event(&mut self, kind: UiEventKind) -> Result<(), HubError> {
        let e = UiEvent {
            timestamp: self.clock.max(self.ui.clock),
            kind,
        };
        let out = self.flow.on_event(&self.ui, &e).map_err(runtime)?;
        self.ui = out.state;
        for action in out.actions {
            self.actions += 1;
            self.log.emit(self.clock, Body::Action { action });
        }
        if let Some(notice) = out.notice {
            self.log.emit(self.clock, Body::Notice { notice });
        }
        self.show_ui();
        Ok(())
    }

    /// Logs the UI state when anything visible changed.
    fn show_ui(&mut self) {
        let s = &self.ui;
        let key = (s.view, s.highlighted, s.selection_origin, s.mode);
        if self.shown == Some(key) {
            return;
        }
        self.shown = Some(key);
        let entries = self.flow.entries(s);
        self.log.emit(
            self.clock,
            Body::UiState {
                view: s.view,
                highlighted: s.highlighted,
                entries,
                mode: s.mode,
                origin: s.selection_origin,
            },
        );
    }

    /// Flushes the pupil pipeline, closes the session and logs the metrics,
    /// the snapshot file name and the end record.
    pub fn finish(mut self, snapshot_file: &str) -> Result<(EngineOutcome, Vec<String>), HubError> {
        let out = self.pupil.finish();
        for ev in out.events {
            self.detector_event(ev)?;
        }
        let mut history = None;
        let mut metrics = None;
        match self.trainer.take() {
            Some(mut trainer) => {
                if let (Some(k), Some(result)) = (self.trial, trainer.end_trial()) {
                    let result = result.clone();
                    self.log.emit(self.clock, Body::Trial { trial: k, result });
                }
                let prior: Vec<_> = self
                    .cfg
                    .history
                    .iter()
                    .map(|h| h.run_scores.clone())
                    .collect();
                let outcome = trainer.finish(&prior).map_err(runtime)?;
                self.log.emit(
                    self.clock,
                    Body::Metrics {
                        metrics: outcome.metrics.clone(),
                        run_scores: Some(outcome.run_scores.clone()),
                        next_tasks: Some(outcome.next_tasks.clone()),
                        adaptations: outcome.adaptations,
                    },
                );
                let mut all: Vec<PerformanceMetrics> =
                    self.cfg.history.iter().map(|h| h.metrics.clone()).collect();
                all.push(outcome.metrics.clone());
                let next = unlock_multimodal(&all, &self.cfg.unlock);
                if next != self.cfg.mode {
                    self.log.emit(
                        self.clock,
                        Body::ModeChange {
                            from: self.cfg.mode,
                            to: next,
                        },
                    );
                }
                self.model = outcome.model;
                metrics = Some(outcome.metrics.clone());
                history = Some(HistoryEntry {
                    metrics: outcome.metrics,
                    run_scores: outcome.run_scores,
                    next_tasks: outcome.next_tasks,
                });
            }
            None => {
                // needs two classes with at least two epochs each
                if let Ok(m) = self.model.performance_metrics(&self.labeled) {
                    self.log.emit(
                        self.clock,
                        Body::Metrics {
                            metrics: m.clone(),
                            run_scores: None,
                            next_tasks: None,
                            adaptations: 0,
                        },
                    );
                    metrics = Some(m);
                }
            }
        }
        self.log.emit(
            self.clock,
            Body::Snapshot {
                file: snapshot_file.to_string(),
            },
        );
        self.log.emit(
            self.clock,
            Body::SessionEnd {
                inputs: self.inputs,
                actions: self.actions,
            },
        );
        let lines = self.log.take();
        Ok((
            EngineOutcome {
                model: self.model,
                metrics,
                history,
                actions: self.actions,
            },
            lines,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use parbci::label;

    #[test]
    fn gate_needs_consecutive_confident_epochs() {
        let mut g = Gate {
            cfg: GateConfig::default(),
            run: None,
        };
        let rh = label("right_hand");
        assert_eq!(g.push(&rh, 0.6), None);
        assert_eq!(g.push(&rh, 0.7), None);
        assert_eq!(g.push(&rh, 0.5), Some(rh.clone()));
        // the run restarts after firing
        assert_eq!(g.push(&rh, 0.9), None);
        assert_eq!(g.push(&rh, 0.4), None);
        assert_eq!(g.push(&rh, 0.9), None);
        assert_eq!(g.push(&label("left_hand"), 0.9), None);
        assert_eq!(g.push(&TaskLabel::idle(), 1.0), None);
        assert_eq!(g.push(&rh, 0.9), None);
        assert_eq!(g.push(&rh, 0.9), None);
        assert_eq!(g.push(&rh, 0.9), Some(rh));
    }
}
