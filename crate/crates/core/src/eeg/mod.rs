//! From raw multichannel EEG to labeled covariance matrices: zero-phase
//! band-pass filtering, overlapped epoching and shrinkage covariance
//! estimation.

mod epoch;
mod filter;
pub mod io;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::TaskLabel;
use crate::spd::{SpdError, SpdMatrix};

pub use epoch::{epoch_geometry, epoch_stream, Epoch, EpochConfig, Epocher};
pub use filter::{BandpassFilter, Biquad};

#[derive(Debug, Error)]
pub enum EegError {
    #[error("invalid stream: {0}")]
    InvalidStream(String),
    #[error("band {low_hz}-{high_hz} Hz must satisfy 0 < low < high < nyquist ({nyquist} Hz)")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        nyquist: f64,
    },
    #[error("filter order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("invalid epoching: {0}")]
    InvalidEpoching(String),
    #[error("epoch has {0} samples; covariance needs at least 2")]
    EpochTooShort(usize),
    #[error("shrinkage {0} is outside [0, 1]")]
    InvalidShrinkage(f64),
    #[error("degenerate epoch: zero total variance")]
    DegenerateEpoch,
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A multichannel recording, `channels × samples`, in µV.
#[derive(Debug, Clone, PartialEq)]
pub struct EegStream {
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub samples: DMatrix<f64>,
    /// Optional per-sample task label.
    pub labels: Option<Vec<TaskLabel>>,
}

impl EegStream {
    pub fn new(
        fs: f64,
        channel_names: Vec<String>,
        samples: DMatrix<f64>,
        labels: Option<Vec<TaskLabel>>,
    ) -> Result<Self, EegError> {
        let s = Self {
            fs,
            channel_names,
            samples,
            labels,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EegError> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(EegError::InvalidStream(format!(
                "sampling rate {} must be positive",
                self.fs
            )));
        }
        if self.samples.nrows() == 0 || self.samples.ncols() == 0 {
            return Err(EegError::InvalidStream(
                "stream has no channels or no samples".into(),
            ));
        }
        if self.channel_names.len() != self.samples.nrows() {
            return Err(EegError::InvalidStream(format!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                self.samples.nrows()
            )));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.samples.ncols() {
                return Err(EegError::InvalidStream(format!(
                    "label track has {} entries for {} samples",
                    l.len(),
                    self.samples.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    /// Samples `[start, end)`, labels included.
    pub fn slice(&self, start: usize, end: usize) -> EegStream {
        let end = end.min(self.len());
        let start = start.min(end);
        EegStream {
            fs: self.fs,
            channel_names: self.channel_names.clone(),
            samples: self.samples.columns(start, end - start).into_owned(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
        }
    }

    pub fn label_at(&self, sample: usize) -> TaskLabel {
        self.labels
            .as_ref()
            .and_then(|l| l.get(sample).cloned())
            .unwrap_or_else(TaskLabel::idle)
    }
}

/// Band-pass settings; the default is the 8–30 Hz sensorimotor band, order 4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            low_hz: 8.0,
            high_hz: 30.0,
            order: 4,
        }
    }
}

/// Zero-phase Butterworth band-pass of every channel.
pub fn bandpass(
    stream: &EegStream,
    low_hz: f64,
    high_hz: f64,
    order: usize,
) -> Result<EegStream, EegError> {
    stream.validate()?;
    let filter = BandpassFilter::butterworth(stream.fs, low_hz, high_hz, order)?;
    let mut out = stream.samples.clone();
    for ch in 0..stream.channels() {
        let row: Vec<f64> = stream.samples.row(ch).iter().copied().collect();
        for (j, v) in filter.filtfilt(&row).into_iter().enumerate() {
            out[(ch, j)] = v;
        }
    }
    Ok(EegStream {
        samples: out,
        ..stream.clone()
    })
}

/// Shrinkage covariance of a `channels × L` block:
/// `C = X_c X_cᵀ/(L−1)`, then `(1−λ)·C + λ·(tr C/n)·I`.
pub fn covariance_of(data: &DMatrix<f64>, shrinkage: f64) -> Result<SpdMatrix, EegError> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(EegError::InvalidShrinkage(shrinkage));
    }
    let (n, len) = data.shape();
    if len < 2 {
        return Err(EegError::EpochTooShort(len));
    }
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    let raw = (&centered * centered.transpose()) / (len as f64 - 1.0);
    let trace = raw.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(EegError::DegenerateEpoch);
    }
    let target = trace / n as f64;
    let mut shrunk = raw * (1.0 - shrinkage);
    for i in 0..n {
        shrunk[(i, i)] += shrinkage * target;
    }
    Ok(SpdMatrix::new(shrunk)?)
}

pub fn covariance(epoch: &Epoch, shrinkage: f64) -> Result<SpdMatrix, EegError> {
    covariance_of(&epoch.data, shrinkage)
}

/// Band, epoching and shrinkage bundled as one pipeline setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub band: BandConfig,
    pub epoch: EpochConfig,
    pub shrinkage: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            band: BandConfig::default(),
            epoch: EpochConfig::default(),
            shrinkage: 0.1,
        }
    }
}

impl PipelineConfig {
    /// Filters, epochs and estimates covariances for a whole stream.
    pub fn labeled_covariances(
        &self,
        stream: &EegStream,
    ) -> Result<Vec<(SpdMatrix, Epoch)>, EegError> {
        let filtered = bandpass(stream, self.band.low_hz, self.band.high_hz, self.band.order)?;
        epoch_stream(&filtered, self.epoch.epoch_seconds, self.epoch.overlap)?
            .into_iter()
            .map(|e| Ok((covariance(&e, self.shrinkage)?, e)))
            .collect()
    }
}
