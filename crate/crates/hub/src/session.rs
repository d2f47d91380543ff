//! Session drivers: build the engine from a config, feed it inputs in time
//! order and persist the log, the model snapshot and the history.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use parbci::eeg::{epoch_geometry, io as eeg_io, EegStream};
use parbci::mi::{snapshot, MiModel};
use parbci::nf::{imagery_epochs, session_scenario};
use parbci::pupil::{io as pupil_io, PupilDetector, PupilSample};
use parbci::sim::{task_blocks, SimScenario};
use parbci::ui::{active_shortcuts, unlock_multimodal, Mode};

use crate::config::{ModeSetting, SessionConfig};
use crate::engine::{Engine, EngineOutcome, EpochInput, Input};
use crate::log::{read_log, write_lines, Body, EngineConfig, HistoryEntry, SessionKind};
use crate::HubError;

pub const LOG_FILE: &str = "session.jsonl";
pub const SNAPSHOT_FILE: &str = "model.txt";

fn runtime(e: impl std::fmt::Display) -> HubError {
    HubError::Runtime(e.to_string())
}

pub fn read_history(path: Option<&Path>) -> Result<Vec<HistoryEntry>, HubError> {
    let Some(path) = path.filter(|p| p.exists()) else {
        return Ok(Vec::new());
    };
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| HubError::Log {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn append_history(path: &Path, entry: &HistoryEntry) -> Result<(), HubError> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    writeln!(
        f,
        "{}",
        serde_json::to_string(entry).expect("history serializes")
    )?;
    Ok(())
}

/// Simulated cued run, `calibration_block` seconds per class, used to train
/// the initial model. It uses the session seed plus one.
pub fn calibration_scenario(cfg: &SessionConfig) -> SimScenario {
    let mi = &cfg.mi_classifier;
    let mut s = cfg.sim_signals.clone();
    s.seed = s.seed.wrapping_add(1);
    s.duration = mi.calibration_seconds;
    s.drift = None;
    s.pupil.schedule.clear();
    s.pupil.blinks.clear();
    s.eeg.schedule = task_blocks(
        &mi.classes,
        0.0,
        mi.calibration_seconds,
        mi.calibration_block,
    );
    s
}

pub fn calibrate(cfg: &SessionConfig) -> Result<MiModel, HubError> {
    let stream = calibration_scenario(cfg).gen_eeg().map_err(runtime)?;
    let labeled: Vec<_> = cfg
        .eeg_pipeline
        .labeled_covariances(&stream)
        .map_err(runtime)?
        .into_iter()
        .map(|(c, e)| (c, e.label))
        .collect();
    MiModel::train(
        &cfg.mi_classifier.classes,
        &labeled,
        cfg.mi_classifier.adaptation,
    )
    .map_err(runtime)
}

pub fn load_model(path: &Path) -> Result<MiModel, HubError> {
    snapshot::read_model(BufReader::new(File::open(path)?)).map_err(runtime)
}

pub fn save_model(path: &Path, m: &MiModel) -> Result<(), HubError> {
    let mut w = BufWriter::new(File::create(path)?);
    snapshot::write_model(m, &mut w).map_err(runtime)?;
    w.flush()?;
    Ok(())
}

/// Resolves the mode, shortcuts, active tasks and initial model.
pub fn prepare(cfg: &SessionConfig, session: SessionKind) -> Result<EngineConfig, HubError> {
    let history = read_history(cfg.session_hub.history.as_deref())?;
    let model = match &cfg.mi_classifier.initial_model {
        Some(p) => load_model(p)?,
        None => calibrate(cfg)?,
    };
    let metrics: Vec<_> = history.iter().map(|h| h.metrics.clone()).collect();
    let th = &cfg.session_hub.unlock;
    let (mode, shortcuts) = match cfg.session_hub.mode {
        ModeSetting::Auto => (
            unlock_multimodal(&metrics, th),
            active_shortcuts(&metrics, th, &cfg.ui_flow.shortcuts),
        ),
        ModeSetting::ParOnly => (Mode::ParOnly, Default::default()),
        ModeSetting::Multimodal => (Mode::Multimodal, cfg.ui_flow.shortcuts.clone()),
    };
    let mut protocol = cfg.nf_training.clone();
    if let Some(last) = history.last() {
        protocol.active_tasks = last.next_tasks.clone();
    }
    Ok(EngineConfig {
        session,
        seed: cfg.sim_signals.seed,
        mode,
        shortcuts,
        gate: cfg.session_hub.gate,
        unlock: *th,
        ui: cfg.ui_flow.clone(),
        condition: cfg.pupil_pipeline.condition,
        detector: cfg.pupil_pipeline.detector,
        prompts: cfg.pupil_pipeline.prompts.clone(),
        protocol,
        adaptation: cfg.mi_classifier.adaptation,
        model: snapshot::model_to_string(&model),
        history,
    })
}

fn epoch_inputs(cfg: &SessionConfig, stream: &EegStream) -> Result<Vec<Input>, HubError> {
    let p = &cfg.eeg_pipeline;
    let (len, _) =
        epoch_geometry(stream.fs, p.epoch.epoch_seconds, p.epoch.overlap).map_err(runtime)?;
    let labeled = stream.labels.is_some();
    Ok(p.labeled_covariances(stream)
        .map_err(runtime)?
        .into_iter()
        .map(|(cov, e)| {
            Input::Epoch(EpochInput {
                t: (e.start_sample + len) as f64 / stream.fs,
                start: e.start_time,
                label: labeled.then_some(e.label),
                trial: None,
                cov,
            })
        })
        .collect())
}

fn pupil_trace(cfg: &SessionConfig, scenario: &SimScenario) -> Result<Vec<PupilSample>, HubError> {
    let trace = scenario.gen_pupil().map_err(runtime)?;
    let p = &cfg.pupil_pipeline;
    if !p.frames {
        return Ok(trace);
    }
    let mut det = PupilDetector::new(p.fit);
    Ok(scenario
        .render_frames(&trace, p.pixel_noise)
        .iter()
        .map(|f| det.push(f))
        .collect())
}

/// Pupil samples and EEG epochs of a free-use session, merged by time with
/// pupil samples first at equal times.
pub fn free_use_inputs(cfg: &SessionConfig) -> Result<Vec<Input>, HubError> {
    let (stream, trace) = match &cfg.session_hub.files {
        Some(f) => {
            let stream =
                eeg_io::read_stream(BufReader::new(File::open(&f.eeg)?)).map_err(runtime)?;
            let trace =
                pupil_io::read_trace(BufReader::new(File::open(&f.trace)?)).map_err(runtime)?;
            (stream, trace)
        }
        None => {
            let s = &cfg.sim_signals;
            (s.gen_eeg().map_err(runtime)?, pupil_trace(cfg, s)?)
        }
    };
    let mut inputs: Vec<Input> = trace.into_iter().map(Input::Pupil).collect();
    inputs.extend(epoch_inputs(cfg, &stream)?);
    let rank = |i: &Input| usize::from(matches!(i, Input::Epoch(_)));
    inputs.sort_by(|a, b| a.time().total_cmp(&b.time()).then(rank(a).cmp(&rank(b))));
    Ok(inputs)
}

/// Imagery epochs of every trial of one run over the simulated user.
pub fn training_inputs(cfg: &SessionConfig, ec: &EngineConfig) -> Result<Vec<Input>, HubError> {
    let p = &ec.protocol;
    let stream = session_scenario(&cfg.sim_signals, p)
        .gen_eeg()
        .map_err(runtime)?;
    let per_trial = (p.trial_length * stream.fs).round() as usize;
    let (len, _) = epoch_geometry(
        stream.fs,
        p.pipeline.epoch.epoch_seconds,
        p.pipeline.epoch.overlap,
    )
    .map_err(runtime)?;
    let mut out = Vec::new();
    for k in 0..p.trials_per_run {
        let trial = stream.slice(k * per_trial, ((k + 1) * per_trial).min(stream.len()));
        let t0 = k as f64 * p.trial_length;
        for (time, cov) in imagery_epochs(p, &trial).map_err(runtime)? {
            out.push(Input::Epoch(EpochInput {
                t: t0 + time,
                start: t0 + time - len as f64 / stream.fs,
                label: Some(p.task_of(k).clone()),
                trial: Some(k),
                cov,
            }));
        }
    }
    Ok(out)
}

/// Paces session time against the wall clock; no speed means no waiting.
#[derive(Debug, Clone)]
pub struct Pacer {
    speed: Option<f64>,
    anchor: Option<(Instant, f64)>,
}

impl Pacer {
    pub fn new(speed: Option<f64>) -> Self {
        Self {
            speed,
            anchor: None,
        }
    }

    pub fn set_speed(&mut self, factor: f64) {
        self.speed = Some(factor);
        self.anchor = None;
    }

    /// Restarts pacing from the next input, e.g. after a pause.
    pub fn reanchor(&mut self) {
        self.anchor = None;
    }

    pub fn wait_until(&mut self, t: f64) {
        let Some(speed) = self.speed else {
            return;
        };
        let (wall, t0) = *self.anchor.get_or_insert((Instant::now(), t));
        let target = wall + Duration::from_secs_f64(((t - t0) / speed).max(0.0));
        let now = Instant::now();
        if target > now {
            std::thread::sleep(target - now);
        }
    }
}

/// Receives every log line as it is produced.
pub trait LineSink {
    fn line(&mut self, line: &str);
}

impl LineSink for () {
    fn line(&mut self, _: &str) {}
}

/// Log file writer that forwards lines to an observer.
pub struct Recorder<'a> {
    out: Option<BufWriter<File>>,
    lines: Vec<String>,
    sink: &'a mut dyn LineSink,
    keep: bool,
}

impl<'a> Recorder<'a> {
    /// `path` of `None` keeps the log in memory only.
    pub fn new(path: Option<&Path>, sink: &'a mut dyn LineSink) -> Result<Self, HubError> {
        let out = match path {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        };
        Ok(Self {
            keep: out.is_none(),
            out,
            lines: Vec::new(),
            sink,
        })
    }

    pub fn push(&mut self, lines: Vec<String>) -> Result<(), HubError> {
        for l in &lines {
            self.sink.line(l);
        }
        if let Some(w) = self.out.as_mut() {
            write_lines(w, &lines)?;
        }
        if self.keep {
            self.lines.extend(lines);
        }
        Ok(())
    }

    pub fn close(mut self) -> Result<Vec<String>, HubError> {
        if let Some(w) = self.out.as_mut() {
            w.flush()?;
        }
        Ok(self.lines)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub outcome: EngineOutcome,
    pub log: PathBuf,
    pub snapshot: PathBuf,
}

/// Where operator commands come from while a session runs.
pub trait Control {
    /// Called before each input; may feed operator commands into the engine.
    fn before_input(
        &mut self,
        engine: &mut Engine,
        rec: &mut Recorder<'_>,
        pacer: &mut Pacer,
    ) -> Result<(), HubError>;
}

impl Control for () {
    fn before_input(
        &mut self,
        _: &mut Engine,
        _: &mut Recorder<'_>,
        _: &mut Pacer,
    ) -> Result<(), HubError> {
        Ok(())
    }
}

/// Feeds `inputs` through a fresh engine, writing the log and the final
/// snapshot into `out_dir`.
pub fn drive(
    ec: EngineConfig,
    inputs: Vec<Input>,
    out_dir: &Path,
    speed: Option<f64>,
    control: &mut dyn Control,
    sink: &mut dyn LineSink,
) -> Result<SessionSummary, HubError> {
    fs::create_dir_all(out_dir)?;
    let log = out_dir.join(LOG_FILE);
    let snap = out_dir.join(SNAPSHOT_FILE);
    let mut rec = Recorder::new(Some(&log), sink)?;
    let mut engine = Engine::new(ec)?;
    rec.push(engine.take_lines())?;
    let mut pacer = Pacer::new(speed);
    for input in inputs {
        control.before_input(&mut engine, &mut rec, &mut pacer)?;
        pacer.wait_until(input.time());
        engine.handle(input)?;
        rec.push(engine.take_lines())?;
    }
    control.before_input(&mut engine, &mut rec, &mut pacer)?;
    let (outcome, lines) = engine.finish(SNAPSHOT_FILE)?;
    rec.push(lines)?;
    rec.close()?;
    save_model(&snap, &outcome.model)?;
    Ok(SessionSummary {
        outcome,
        log,
        snapshot: snap,
    })
}

/// Runs a session of the given kind with optional live control, appending
/// training results to the history file.
pub fn run_with(
    cfg: &SessionConfig,
    session: SessionKind,
    control: &mut dyn Control,
    sink: &mut dyn LineSink,
) -> Result<SessionSummary, HubError> {
    let ec = prepare(cfg, session)?;
    let inputs = match session {
        SessionKind::FreeUse => free_use_inputs(cfg)?,
        SessionKind::Training => training_inputs(cfg, &ec)?,
    };
    let summary = drive(
        ec,
        inputs,
        &cfg.session_hub.output_dir,
        cfg.session_hub.speed,
        control,
        sink,
    )?;
    if let (Some(path), Some(entry)) = (&cfg.session_hub.history, &summary.outcome.history) {
        append_history(path, entry)?;
    }
    Ok(summary)
}

pub fn run(cfg: &SessionConfig, session: SessionKind) -> Result<SessionSummary, HubError> {
    run_with(cfg, session, &mut (), &mut ())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub lines: Vec<String>,
    pub outcome: EngineOutcome,
    /// Seq of the first record that differs from the source log.
    pub first_difference: Option<u64>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.first_difference.is_none()
    }
}

/// Re-runs a session from its own log. Only the recorded inputs are fed
/// back; every derived record is recomputed and compared.
pub fn replay_lines(source: &[(String, crate::log::Record)]) -> Result<ReplayReport, HubError> {
    let Some((_, first)) = source.first() else {
        return Err(HubError::Underrun("the log is empty".into()));
    };
    let Body::SessionStart(ec) = &first.body else {
        return Err(HubError::Underrun(
            "the log does not start with session_start".into(),
        ));
    };
    if !source
        .iter()
        .any(|(_, r)| matches!(r.body, Body::SessionEnd { .. }))
    {
        return Err(HubError::Underrun("the log ends before session_end".into()));
    }
    let mut engine = Engine::new((**ec).clone())?;
    let mut lines = engine.take_lines();
    for (_, r) in source {
        if let Some(input) = Input::from_record(r.t, &r.body)? {
            engine.handle(input)?;
            lines.extend(engine.take_lines());
        }
    }
    let (outcome, tail) = engine.finish(SNAPSHOT_FILE)?;
    lines.extend(tail);
    let first_difference = lines
        .iter()
        .zip(source.iter().map(|(l, _)| l))
        .position(|(a, b)| a != b)
        .or((lines.len() != source.len()).then(|| lines.len().min(source.len())))
        .map(|i| i as u64);
    Ok(ReplayReport {
        lines,
        outcome,
        first_difference,
    })
}

pub fn read_log_file(path: &Path) -> Result<Vec<(String, crate::log::Record)>, HubError> {
    read_log(BufReader::new(File::open(path)?))
}

/// Replays `log` into `out_dir`, which must not hold the source log.
pub fn replay(log: &Path, out_dir: &Path) -> Result<ReplayReport, HubError> {
    let source = read_log_file(log)?;
    fs::create_dir_all(out_dir)?;
    let target = out_dir.join(LOG_FILE);
    if target.exists() && fs::canonicalize(&target)? == fs::canonicalize(log)? {
        return Err(HubError::Config(
            "replay output would overwrite the source log".into(),
        ));
    }
    let report = replay_lines(&source)?;
    let mut w = BufWriter::new(File::create(&target)?);
    write_lines(&mut w, &report.lines)?;
    w.flush()?;
    save_model(&out_dir.join(SNAPSHOT_FILE), &report.outcome.model)?;
    Ok(report)
}

/// Recomputes the session's metrics record by replaying its inputs.
pub fn recompute_metrics(log: &Path) -> Result<Option<Body>, HubError> {
    let report = replay_lines(&read_log_file(log)?)?;
    for (i, l) in report.lines.iter().enumerate() {
        let r = crate::log::parse_line(l, i + 1)?;
        if matches!(r.body, Body::Metrics { .. }) {
            return Ok(Some(r.body));
        }
    }
    Ok(None)
}

/// Writes the scenario's EEG stream, pupil trace and optionally its frames.
pub fn simulate(cfg: &SessionConfig, out_dir: &Path) -> Result<Vec<PathBuf>, HubError> {
    fs::create_dir_all(out_dir)?;
    let s = &cfg.sim_signals;
    let eeg = out_dir.join("eeg.csv");
    let trace_path = out_dir.join("trace.csv");
    let stream = s.gen_eeg().map_err(runtime)?;
    let mut w = BufWriter::new(File::create(&eeg)?);
    eeg_io::write_stream(&stream, &mut w).map_err(runtime)?;
    w.flush()?;
    let trace = s.gen_pupil().map_err(runtime)?;
    let mut w = BufWriter::new(File::create(&trace_path)?);
    pupil_io::write_trace(&trace, &mut w).map_err(runtime)?;
    w.flush()?;
    let mut written = vec![eeg, trace_path];
    if cfg.pupil_pipeline.frames {
        let dir = out_dir.join("frames");
        fs::create_dir_all(&dir)?;
        pupil_io::write_frames(
            &dir,
            &s.render_frames(&trace, cfg.pupil_pipeline.pixel_noise),
        )
        .map_err(runtime)?;
        written.push(dir);
    }
    Ok(written)
}
