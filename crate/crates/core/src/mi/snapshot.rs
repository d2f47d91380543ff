//! Model snapshot text format.
//!
//! ```text
//! parbci-model 1
//! dim 2
//! alpha 0.1
//! period 30
//! classes idle right_hand
//! prototype idle
//! 1 0
//! 0 1
//! prototype right_hand
//! ...
//! pending right_hand 1
//! ...
//! end
//! ```
//!
//! Matrices are written row by row in shortest round-trip decimal form, so a
//! load after a save reproduces the model exactly. `pending` blocks list the
//! buffered adaptation epochs of a class, one matrix after another; classes
//! with an empty buffer are omitted. A file without the closing `end` line is
//! rejected.

use std::io::{BufRead, Write};

use super::{AdaptationParams, MiError, MiModel};
use crate::label::TaskLabel;
use crate::spd::SpdMatrix;

pub const MAGIC: &str = "parbci-model";
pub const VERSION: u32 = 1;

pub fn write_model<W: Write>(m: &MiModel, mut out: W) -> Result<(), MiError> {
    let p = m.params();
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(out, "dim {}", m.dim())?;
    writeln!(out, "alpha {}", p.alpha)?;
    writeln!(out, "period {}", p.period)?;
    let names: Vec<&str> = m.classes().iter().map(TaskLabel::as_str).collect();
    writeln!(out, "classes {}", names.join(" "))?;
    for (c, proto) in m.classes().iter().zip(m.prototypes()) {
        writeln!(out, "prototype {c}")?;
        write_matrix(&mut out, proto)?;
    }
    for (c, buf) in m.classes().iter().zip(m.pending()) {
        if buf.is_empty() {
            continue;
        }
        writeln!(out, "pending {c} {}", buf.len())?;
        for mat in buf {
            write_matrix(&mut out, mat)?;
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

pub fn model_to_string(m: &MiModel) -> String {
    let mut buf = Vec::new();
    write_model(m, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("model text is UTF-8")
}

fn write_matrix<W: Write>(out: &mut W, m: &SpdMatrix) -> std::io::Result<()> {
    let a = m.as_matrix();
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| a[(i, j)].to_string()).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

struct Reader<I> {
    lines: I,
    line: usize,
}

impl<I: Iterator<Item = std::io::Result<String>>> Reader<I> {
    fn next(&mut self) -> Result<String, MiError> {
        self.line += 1;
        match self.lines.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, message: impl Into<String>) -> MiError {
        MiError::Format {
            line: self.line,
            message: message.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<String, MiError> {
        let l = self.next()?;
        match l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
            Some(rest) => Ok(rest.to_string()),
            None => Err(self.err(format!("expected `{key} ...`"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T, MiError> {
        s.trim()
            .parse()
            .map_err(|_| self.err(format!("bad {what} {s:?}")))
    }

    fn matrix(&mut self, dim: usize) -> Result<SpdMatrix, MiError> {
        let mut entries = Vec::with_capacity(dim * dim);
        for _ in 0..dim {
            let l = self.next()?;
            let row: Vec<f64> = l
                .split_whitespace()
                .map(|v| self.parse(v, "entry"))
                .collect::<Result<_, _>>()?;
            if row.len() != dim {
                return Err(self.err(format!("expected {dim} entries, got {}", row.len())));
            }
            entries.extend(row);
        }
        SpdMatrix::from_row_slice(dim, &entries).map_err(|e| self.err(e.to_string()))
    }
}

pub fn read_model<R: BufRead>(input: R) -> Result<MiModel, MiError> {
    let mut r = Reader {
        lines: input.lines(),
        line: 0,
    };
    let header = r.next()?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(r.err(format!("expected {MAGIC} header")));
    }
    let version: u32 = r.parse(parts.next().unwrap_or(""), "version")?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let dim: usize = {
        let v = r.keyed("dim")?;
        r.parse(&v, "dim")?
    };
    if dim == 0 {
        return Err(r.err("dim must be positive"));
    }
    let alpha: f64 = {
        let v = r.keyed("alpha")?;
        r.parse(&v, "alpha")?
    };
    let period: usize = {
        let v = r.keyed("period")?;
        r.parse(&v, "period")?
    };
    let classes: Vec<TaskLabel> = {
        let v = r.keyed("classes")?;
        v.split_whitespace()
            .map(|c| c.parse().map_err(|e: String| r.err(e)))
            .collect::<Result<_, _>>()?
    };

    let mut prototypes = Vec::with_capacity(classes.len());
    for c in &classes {
        let name = r.keyed("prototype")?;
        if name != c.as_str() {
            return Err(r.err(format!("expected prototype for `{c}`, found `{name}`")));
        }
        prototypes.push(r.matrix(dim)?);
    }

    let mut pending = vec![Vec::new(); classes.len()];
    loop {
        let l = r.next()?;
        if l == "end" {
            break;
        }
        let mut f = l.split_whitespace();
        if f.next() != Some("pending") {
            return Err(r.err("expected `pending` or `end`"));
        }
        let name = f.next().unwrap_or("");
        let i = classes
            .iter()
            .position(|c| c.as_str() == name)
            .ok_or_else(|| r.err(format!("pending block for unknown class `{name}`")))?;
        let count: usize = r.parse(f.next().unwrap_or(""), "count")?;
        for _ in 0..count {
            pending[i].push(r.matrix(dim)?);
        }
    }

    let mut model =
        MiModel::from_prototypes(classes, prototypes, AdaptationParams { alpha, period })?;
    model.set_pending(pending);
    Ok(model)
}
