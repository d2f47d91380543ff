//! Declarative session configuration: one TOML file whose sections mirror
//! the module names.

use std::path::{Path, PathBuf};

use parbci::eeg::PipelineConfig;
use parbci::mi::AdaptationParams;
use parbci::nf::TrialProtocol;
use parbci::pupil::{ConditionConfig, DetectorConfig, FitConfig, PromptSchedule};
use parbci::sim::SimScenario;
use parbci::ui::{UiConfig, UiFlow, UnlockThresholds};
use parbci::TaskLabel;
use serde::{Deserialize, Serialize};

use crate::HubError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSetting {
    /// Unlock from the training history.
    Auto,
    ParOnly,
    Multimodal,
}

/// Recorded streams used instead of the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub eeg: PathBuf,
    pub trace: PathBuf,
}

/// Turns the continuous classifier output into discrete intents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub floor: f64,
    pub count: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            floor: 0.5,
            count: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HubSection {
    /// Overrides `sim_signals.seed`.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub listen: String,
    /// Append-only record of training sessions, one JSON object per line.
    pub history: Option<PathBuf>,
    pub files: Option<FileSource>,
    pub gate: GateConfig,
    pub unlock: UnlockThresholds,
    pub mode: ModeSetting,
    /// Session seconds per wall-clock second; unset runs as fast as possible.
    pub speed: Option<f64>,
    pub console_queue: usize,
    /// The console session waits for a `resume` before its first input.
    pub start_paused: bool,
}

impl Default for HubSection {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: PathBuf::from("out"),
            listen: "127.0.0.1:7878".into(),
            history: None,
            files: None,
            gate: GateConfig::default(),
            unlock: UnlockThresholds::default(),
            mode: ModeSetting::Auto,
            speed: None,
            console_queue: 8192,
            start_paused: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub classes: Vec<TaskLabel>,
    pub adaptation: AdaptationParams,
    /// Length of the simulated calibration run when no model is given.
    pub calibration_seconds: f64,
    /// Block length of the calibration cues.
    pub calibration_block: f64,
    pub initial_model: Option<PathBuf>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            classes: ["idle", "right_hand", "left_hand"]
                .iter()
                .map(|s| parbci::label(s))
                .collect(),
            adaptation: AdaptationParams::default(),
            calibration_seconds: 120.0,
            calibration_block: 4.0,
            initial_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PupilSection {
    pub condition: ConditionConfig,
    pub detector: DetectorConfig,
    pub fit: FitConfig,
    /// Derive samples from rendered eye frames instead of the trace.
    pub frames: bool,
    pub pixel_noise: f64,
    pub prompts: Option<PromptSchedule>,
}

impl Default for PupilSection {
    fn default() -> Self {
        Self {
            condition: ConditionConfig::default(),
            detector: DetectorConfig::default(),
            fit: FitConfig::default(),
            frames: false,
            pixel_noise: 2.0,
            prompts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub session_hub: HubSection,
    pub sim_signals: SimScenario,
    pub eeg_pipeline: PipelineConfig,
    pub mi_classifier: ClassifierSection,
    pub pupil_pipeline: PupilSection,
    pub ui_flow: UiConfig,
    /// Its `pipeline` is replaced by `[eeg_pipeline]`.
    pub nf_training: TrialProtocol,
}

fn bad<T>(msg: impl Into<String>) -> Result<T, HubError> {
    Err(HubError::Config(msg.into()))
}

impl SessionConfig {
    pub fn from_toml(text: &str) -> Result<Self, HubError> {
        let mut cfg: SessionConfig =
            toml::from_str(text).map_err(|e| HubError::Config(e.to_string()))?;
        cfg.apply_overrides();
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HubError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HubError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_overrides(&mut self) {
        if let Some(seed) = self.session_hub.seed {
            self.sim_signals.seed = seed;
        }
        self.nf_training.pipeline = self.eeg_pipeline;
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.session_hub.seed = Some(seed);
        self.apply_overrides();
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let h = &mut self.session_hub;
        fix(&mut h.output_dir);
        if let Some(p) = h.history.as_mut() {
            fix(p);
        }
        if let Some(f) = h.files.as_mut() {
            fix(&mut f.eeg);
            fix(&mut f.trace);
        }
        if let Some(p) = self.mi_classifier.initial_model.as_mut() {
            fix(p);
        }
    }

    /// Checks every section and that referenced input files exist. The
    /// history file may be missing; it is created by the first training run.
    pub fn validate(&self) -> Result<(), HubError> {
        let cfg_err = |e: &dyn std::fmt::Display| HubError::Config(e.to_string());
        self.sim_signals.validate().map_err(|e| cfg_err(&e))?;
        parbci::eeg::epoch_geometry(
            self.sim_signals.eeg.fs,
            self.eeg_pipeline.epoch.epoch_seconds,
            self.eeg_pipeline.epoch.overlap,
        )
        .map_err(|e| cfg_err(&e))?;
        if !(0.0..=1.0).contains(&self.eeg_pipeline.shrinkage) {
            return bad(format!(
                "shrinkage {} is outside [0, 1]",
                self.eeg_pipeline.shrinkage
            ));
        }
        parbci::eeg::BandpassFilter::butterworth(
            self.sim_signals.eeg.fs,
            self.eeg_pipeline.band.low_hz,
            self.eeg_pipeline.band.high_hz,
            self.eeg_pipeline.band.order,
        )
        .map_err(|e| cfg_err(&e))?;

        let mi = &self.mi_classifier;
        mi.adaptation.validate().map_err(|e| cfg_err(&e))?;
        if mi.classes.len() < 2 || !mi.classes.iter().any(|c| c.is_idle()) {
            return bad("mi_classifier.classes needs idle and at least one task");
        }
        if !(mi.calibration_seconds > 0.0 && mi.calibration_block > 0.0) {
            return bad("calibration_seconds and calibration_block must be positive");
        }

        let p = &self.pupil_pipeline;
        p.condition.validate().map_err(|e| cfg_err(&e))?;
        p.detector.validate().map_err(|e| cfg_err(&e))?;
        if let Some(s) = &p.prompts {
            s.validate().map_err(|e| cfg_err(&e))?;
        }
        if p.pixel_noise < 0.0 {
            return bad("pixel_noise must be nonnegative");
        }

        UiFlow::new(self.ui_flow.clone()).map_err(|e| cfg_err(&e))?;
        self.nf_training.validate().map_err(|e| cfg_err(&e))?;
        for t in &self.nf_training.curriculum {
            if !mi.classes.contains(t) {
                return bad(format!("curriculum task `{t}` is not a classifier class"));
            }
        }

        let h = &self.session_hub;
        if !(h.gate.floor.is_finite() && h.gate.count >= 1) {
            return bad("gate needs a finite floor and count >= 1");
        }
        if let Some(s) = h.speed {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("speed {s} must be positive"));
            }
        }
        if h.console_queue == 0 {
            return bad("console_queue must be positive");
        }
        let must_exist = |p: &Path, what: &str| {
            if p.is_file() {
                Ok(())
            } else {
                bad(format!("{what} {} does not exist", p.display()))
            }
        };
        if let Some(f) = &h.files {
            must_exist(&f.eeg, "EEG file")?;
            must_exist(&f.trace, "trace file")?;
            if mi.initial_model.is_none() {
                return bad("a file source needs mi_classifier.initial_model");
            }
        }
        if let Some(m) = &mi.initial_model {
            must_exist(m, "initial model")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_config() {
        let cfg = SessionConfig::from_toml("").unwrap();
        assert_eq!(cfg, SessionConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn seed_override_and_shared_pipeline() {
        let cfg = SessionConfig::from_toml(
            "[session_hub]\nseed = 9\n[sim_signals]\nseed = 1\n[eeg_pipeline]\nshrinkage = 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.sim_signals.seed, 9);
        assert_eq!(cfg.nf_training.pipeline.shrinkage, 0.2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(SessionConfig::from_toml("[session_hub]\nsped = 2.0\n").is_err());
        assert!(SessionConfig::from_toml("[nonsense]\n").is_err());
    }
}
