use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{EegError, EegStream};
use crate::label::TaskLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpochConfig {
    pub epoch_seconds: f64,
    /// Fraction of each window shared with the next, in `[0, 1)`.
    pub overlap: f64,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            epoch_seconds: 0.5,
            overlap: 0.5,
        }
    }
}

/// A labeled window of `channels × L` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub data: DMatrix<f64>,
    pub start_sample: usize,
    pub start_time: f64,
    pub label: TaskLabel,
}

/// Window length `L = round(epoch_seconds·fs)` and hop `floor(L·(1 − overlap))`
/// (at least one sample).
pub fn epoch_geometry(
    fs: f64,
    epoch_seconds: f64,
    overlap: f64,
) -> Result<(usize, usize), EegError> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(EegError::InvalidEpoching(format!(
            "overlap {overlap} must be in [0, 1)"
        )));
    }
    if !(epoch_seconds > 0.0) || !(fs > 0.0) {
        return Err(EegError::InvalidEpoching(format!(
            "epoch length {epoch_seconds} s at {fs} Hz"
        )));
    }
    let len = (epoch_seconds * fs).round() as usize;
    if len == 0 {
        return Err(EegError::InvalidEpoching(format!(
            "{epoch_seconds} s at {fs} Hz rounds to zero samples"
        )));
    }
    let step = ((len as f64 * (1.0 - overlap)).floor() as usize).max(1);
    Ok((len, step))
}

/// Splits a stream into overlapping windows; a stream shorter than one
/// window yields no epochs.
pub fn epoch_stream(
    stream: &EegStream,
    epoch_seconds: f64,
    overlap: f64,
) -> Result<Vec<Epoch>, EegError> {
    let mut epocher = Epocher::new(stream.fs, stream.channels(), epoch_seconds, overlap)?;
    let labels = stream
        .labels
        .clone()
        .unwrap_or_else(|| vec![TaskLabel::idle(); stream.len()]);
    Ok(epocher.push(&stream.samples, &labels))
}

/// Majority label of a window; a tie for the top count resolves to idle.
fn majority(labels: &[TaskLabel]) -> TaskLabel {
    let mut counts: Vec<(&TaskLabel, usize)> = Vec::new();
    for l in labels {
        match counts.iter_mut().find(|(k, _)| *k == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
    let mut winners = counts.iter().filter(|(_, c)| *c == best);
    match (winners.next(), winners.next()) {
        (Some((l, _)), None) => (*l).clone(),
        _ => TaskLabel::idle(),
    }
}

/// Incremental epoching: feeding a stream in arbitrary chunks produces the
/// same epochs as [`epoch_stream`] on the concatenation.
#[derive(Debug, Clone)]
pub struct Epocher {
    fs: f64,
    channels: usize,
    len: usize,
    step: usize,
    buffer: Vec<Vec<f64>>,
    labels: Vec<TaskLabel>,
    /// Absolute index of `buffer[_][0]`.
    buffer_start: usize,
    next_start: usize,
}

impl Epocher {
    pub fn new(
        fs: f64,
        channels: usize,
        epoch_seconds: f64,
        overlap: f64,
    ) -> Result<Self, EegError> {
        let (len, step) = epoch_geometry(fs, epoch_seconds, overlap)?;
        Ok(Self {
            fs,
            channels,
            len,
            step,
            buffer: vec![Vec::new(); channels],
            labels: Vec::new(),
            buffer_start: 0,
            next_start: 0,
        })
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Appends `channels × n` samples with their labels and returns every
    /// window completed by them.
    pub fn push(&mut self, samples: &DMatrix<f64>, labels: &[TaskLabel]) -> Vec<Epoch> {
        assert_eq!(
            samples.nrows(),
            self.channels,
            "channel count changed mid-stream"
        );
        assert_eq!(
            samples.ncols(),
            labels.len(),
            "label count must match sample count"
        );
        for (ch, buf) in self.buffer.iter_mut().enumerate() {
            buf.extend(samples.row(ch).iter());
        }
        self.labels.extend_from_slice(labels);

        let mut out = Vec::new();
        let available = self.buffer_start + self.labels.len();
        while self.next_start + self.len <= available {
            let offset = self.next_start - self.buffer_start;
            let data = DMatrix::from_fn(self.channels, self.len, |i, j| self.buffer[i][offset + j]);
            out.push(Epoch {
                data,
                start_sample: self.next_start,
                start_time: self.next_start as f64 / self.fs,
                label: majority(&self.labels[offset..offset + self.len]),
            });
            self.next_start += self.step;
        }

        let drop = self.next_start.min(available) - self.buffer_start;
        if drop > 0 {
            for buf in &mut self.buffer {
                buf.drain(..drop);
            }
            self.labels.drain(..drop);
            self.buffer_start += drop;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::label;

    fn ramp_stream(fs: f64, seconds: f64) -> EegStream {
        let n = (fs * seconds).round() as usize;
        EegStream::new(
            fs,
            vec!["a".into(), "b".into()],
            DMatrix::from_fn(2, n, |i, j| (i * 1000 + j) as f64),
            None,
        )
        .unwrap()
    }

    #[test]
    fn two_seconds_at_256_hz() {
        assert_eq!(epoch_geometry(256.0, 0.5, 0.5).unwrap(), (128, 64));
        assert_eq!(
            epoch_stream(&ramp_stream(256.0, 2.0), 0.5, 0.5)
                .unwrap()
                .len(),
            7
        );
    }

    #[test]
    fn two_seconds_at_250_hz() {
        assert_eq!(epoch_geometry(250.0, 0.5, 0.5).unwrap(), (125, 62));
        assert_eq!(
            epoch_stream(&ramp_stream(250.0, 2.0), 0.5, 0.5)
                .unwrap()
                .len(),
            7
        );
    }

    #[test]
    fn short_stream_gives_no_epochs() {
        assert!(epoch_stream(&ramp_stream(256.0, 0.4), 0.5, 0.5)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn rejects_bad_overlap() {
        assert!(epoch_geometry(256.0, 0.5, 1.0).is_err());
        assert!(epoch_geometry(256.0, 0.5, -0.1).is_err());
        assert!(epoch_geometry(256.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn epoch_k_is_the_expected_slice() {
        let s = ramp_stream(256.0, 2.0);
        for (k, e) in epoch_stream(&s, 0.5, 0.5).unwrap().iter().enumerate() {
            assert_eq!(e.start_sample, k * 64);
            assert_eq!(e.data, s.samples.columns(k * 64, 128).into_owned());
        }
    }

    #[test]
    fn majority_label_with_idle_tie_break() {
        let a = label("right_hand");
        let b = label("left_hand");
        assert_eq!(majority(&[a.clone(), a.clone(), b.clone()]), a);
        assert_eq!(majority(&[a.clone(), b.clone()]), TaskLabel::idle());
        assert_eq!(
            majority(&[a.clone(), a.clone(), TaskLabel::idle(), TaskLabel::idle()]),
            TaskLabel::idle()
        );
    }

    #[test]
    fn transition_epoch_takes_majority() {
        let fs = 256.0;
        let n = 512;
        let labels: Vec<TaskLabel> = (0..n)
            .map(|j| {
                if j >= 200 {
                    label("right_hand")
                } else {
                    TaskLabel::idle()
                }
            })
            .collect();
        let s = EegStream::new(
            fs,
            vec!["a".into()],
            DMatrix::from_element(1, n, 1.0),
            Some(labels),
        )
        .unwrap();
        let epochs = epoch_stream(&s, 0.5, 0.5).unwrap();
        // window [128, 256): 72 idle, 56 right_hand
        assert_eq!(epochs[2].label, TaskLabel::idle());
        // window [192, 320): 8 idle, 120 right_hand
        assert_eq!(epochs[3].label, label("right_hand"));
    }
}
