//! Text stream format.
//!
//! ```text
//! parbci-eeg 1 fs=256
//! label,FC3,C3,...
//! idle,-3.25,12.5,...
//! ```
//!
//! The first line carries the format version and sampling rate, the second
//! the column names. Each following row is one sample: the task label (empty
//! when the stream has no label track) and one value per channel, written in
//! shortest round-trip decimal form.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::{EegError, EegStream};
use crate::label::TaskLabel;

pub const MAGIC: &str = "parbci-eeg";
pub const VERSION: u32 = 1;

pub fn write_stream<W: Write>(stream: &EegStream, mut out: W) -> Result<(), EegError> {
    writeln!(out, "{MAGIC} {VERSION} fs={}", stream.fs)?;
    writeln!(out, "label,{}", stream.channel_names.join(","))?;
    let mut line = String::new();
    for j in 0..stream.len() {
        line.clear();
        if let Some(l) = &stream.labels {
            line.push_str(l[j].as_str());
        }
        for i in 0..stream.channels() {
            let _ = write!(line, ",{}", stream.samples[(i, j)]);
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_stream<R: BufRead>(input: R) -> Result<EegStream, EegError> {
    let mut lines = input.lines().enumerate();
    let bad = |line: usize, message: String| EegError::Format {
        line: line + 1,
        message,
    };

    let (n, header) = lines.next().ok_or_else(|| bad(0, "empty file".into()))?;
    let header = header?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(bad(n, format!("expected {MAGIC} header")));
    }
    match parts.next().map(str::parse::<u32>) {
        Some(Ok(VERSION)) => {}
        other => return Err(bad(n, format!("unsupported version {other:?}"))),
    }
    let fs = parts
        .next()
        .and_then(|p| p.strip_prefix("fs="))
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| bad(n, "missing fs=<rate>".into()))?;

    let (n, columns) = lines
        .next()
        .ok_or_else(|| bad(1, "missing column header".into()))?;
    let columns = columns?;
    let mut names = columns.split(',');
    if names.next() != Some("label") {
        return Err(bad(n, "first column must be `label`".into()));
    }
    let channel_names: Vec<String> = names.map(str::to_string).collect();
    let channels = channel_names.len();

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<Option<TaskLabel>> = Vec::new();
    for (n, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default();
        labels.push(if label.is_empty() {
            None
        } else {
            Some(label.parse().map_err(|e| bad(n, e))?)
        });
        let before = values.len();
        for f in fields {
            values.push(f.parse().map_err(|_| bad(n, format!("bad value {f:?}")))?);
        }
        if values.len() - before != channels {
            return Err(bad(
                n,
                format!("expected {channels} values, got {}", values.len() - before),
            ));
        }
    }

    let len = labels.len();
    let labels = if labels.iter().all(Option::is_none) {
        None
    } else {
        Some(
            labels
                .into_iter()
                .map(|l| l.unwrap_or_else(TaskLabel::idle))
                .collect(),
        )
    };
    // rows in the file are samples, so the flat buffer is column-major
    let samples = DMatrix::from_vec(channels, len, values);
    EegStream::new(fs, channel_names, samples, labels)
}
