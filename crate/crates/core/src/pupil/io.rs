//! Pupil trace and eye-frame files.
//!
//! A trace is CSV with a version comment and a column header:
//!
//! ```text
//! # parbci-trace 1
//! timestamp,area,valid
//! 0,5026.548245743669,1
//! 0.016666666666666666,0,0
//! ```
//!
//! Frames are binary PGM (`P5`, maxval 255) files whose header carries the
//! timestamp in a `# t=<seconds>` comment. A frame sequence is a directory of
//! such files named `frame_000000.pgm`, `frame_000001.pgm`, ...

use std::fs;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use super::{EyeFrame, PupilError, PupilSample};

pub const TRACE_HEADER: &str = "# parbci-trace 1";

pub fn write_trace<W: Write>(samples: &[PupilSample], mut out: W) -> Result<(), PupilError> {
    writeln!(out, "{TRACE_HEADER}")?;
    writeln!(out, "timestamp,area,valid")?;
    for s in samples {
        writeln!(out, "{},{},{}", s.timestamp, s.area, u8::from(s.valid))?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<PupilSample>, PupilError> {
    let mut lines = input.lines();
    let bad = |line: usize, message: String| PupilError::Format { line, message };
    match lines.next().transpose()? {
        Some(h) if h.trim_end() == TRACE_HEADER => {}
        Some(h) => return Err(bad(1, format!("expected `{TRACE_HEADER}`, found {h:?}"))),
        None => return Err(bad(1, "empty file".into())),
    }
    match lines.next().transpose()? {
        Some(h) if h.trim_end() == "timestamp,area,valid" => {}
        _ => return Err(bad(2, "expected `timestamp,area,valid`".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 3;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad(n, format!("expected 3 fields, got {}", f.len())));
        }
        let timestamp = f[0]
            .trim()
            .parse()
            .map_err(|_| bad(n, format!("bad timestamp {:?}", f[0])))?;
        let area = f[1]
            .trim()
            .parse()
            .map_err(|_| bad(n, format!("bad area {:?}", f[1])))?;
        let valid = match f[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(bad(n, format!("bad valid flag {other:?}"))),
        };
        out.push(PupilSample {
            timestamp,
            area,
            valid,
        });
    }
    Ok(out)
}

pub fn write_pgm<W: Write>(frame: &EyeFrame, mut out: W) -> Result<(), PupilError> {
    write!(
        out,
        "P5\n# t={}\n{} {}\n255\n",
        frame.timestamp, frame.width, frame.height
    )?;
    out.write_all(&frame.pixels)?;
    Ok(())
}

pub fn read_pgm<R: Read>(mut input: R) -> Result<EyeFrame, PupilError> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let bad = |message: &str| PupilError::Format {
        line: 0,
        message: message.to_string(),
    };

    let mut pos = 0;
    let mut timestamp = 0.0;
    let mut fields: Vec<String> = Vec::new();
    while fields.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= data.len() {
            return Err(bad("truncated PGM header"));
        }
        if data[pos] == b'#' {
            let end = data[pos..]
                .iter()
                .position(|b| *b == b'\n')
                .map_or(data.len(), |e| pos + e);
            let comment = String::from_utf8_lossy(&data[pos + 1..end]);
            if let Some(t) = comment.trim().strip_prefix("t=") {
                timestamp = t.parse().map_err(|_| bad("bad timestamp comment"))?;
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 PGM is supported"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    if fields[3] != "255" {
        return Err(bad("maxval must be 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = data
        .get(pos..pos + width * height)
        .ok_or_else(|| bad("truncated raster"))?;
    EyeFrame::new(width, height, raster.to_vec(), timestamp)
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:06}.pgm"))
}

pub fn write_frames(dir: &Path, frames: &[EyeFrame]) -> Result<(), PupilError> {
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        let file = fs::File::create(frame_path(dir, i))?;
        write_pgm(f, std::io::BufWriter::new(file))?;
    }
    Ok(())
}

/// Reads `frame_*.pgm` files of a directory in name order.
pub fn read_frames(dir: &Path) -> Result<Vec<EyeFrame>, PupilError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "pgm")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("frame_"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| read_pgm(std::io::BufReader::new(fs::File::open(p)?)))
        .collect()
}
