//! File formats.
//!
//! * Annotation text: one object per line, `x1 y1 x2 y2 x3 y3 x4 y4 class difficult`.
//!   DOTA `imagesource:`/`gsd:` header lines and blank lines are skipped.
//! * Detection text: one box per line, `class score x1 y1 x2 y2 x3 y3 x4 y4`.
//! * Tensor binary: `b"OBBT"`, `u32` rank, `rank x u64` dims, then `f32`
//!   data in row-major order; all little-endian.
//!
//! Text output uses fixed six-decimal formatting.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::GtInstance;
use crate::geometry::Quad;
use crate::nms::{ScoredBox, Shape};

pub const TENSOR_MAGIC: [u8; 4] = *b"OBBT";
pub const MAX_TENSOR_RANK: usize = 8;

/// Row-major `f32` tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(Error::LengthMismatch {
                expected: n,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_TENSOR_RANK {
        return Err(Error::Tensor(format!(
            "rank {} outside 1..={MAX_TENSOR_RANK}",
            dims.len()
        )));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Tensor(format!("dims {dims:?} overflow")))
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let n = element_count(&t.dims)?;
    if n != t.data.len() {
        return Err(Error::LengthMismatch {
            expected: n,
            found: t.data.len(),
        });
    }
    let mut out = Vec::with_capacity(8 + 8 * t.dims.len() + 4 * n);
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = bytes;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(Error::Tensor(format!("truncated {what}")));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    if take(4, "magic")? != TENSOR_MAGIC {
        return Err(Error::Tensor("bad magic".into()));
    }
    let rank = u32::from_le_bytes(take(4, "rank")?.try_into().expect("4 bytes")) as usize;
    if rank == 0 || rank > MAX_TENSOR_RANK {
        return Err(Error::Tensor(format!("rank {rank} outside 1..={MAX_TENSOR_RANK}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = u64::from_le_bytes(take(8, "dims")?.try_into().expect("8 bytes"));
        dims.push(usize::try_from(d).map_err(|_| Error::Tensor(format!("dim {d} too large")))?);
    }
    let n = element_count(&dims)?;
    let payload = cur;
    let expected = n
        .checked_mul(4)
        .ok_or_else(|| Error::Tensor("payload size overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Tensor(format!(
            "payload is {} bytes, dims {dims:?} need {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Tensor { dims, data })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tensor(t)?)?;
    Ok(())
}

/// Category names and their ids.
///
/// An open map interns unseen names in first-seen order; a closed map
/// (built from an explicit list) rejects them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassMap {
    names: Vec<String>,
    closed: bool,
}

impl ClassMap {
    pub fn open() -> Self {
        Self::default()
    }

    pub fn closed<S: AsRef<str>>(names: &[S]) -> Self {
        Self {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            closed: true,
        }
    }

    pub fn id(&mut self, name: &str) -> Option<usize> {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Some(i);
        }
        if self.closed {
            return None;
        }
        self.names.push(name.to_string());
        Some(self.names.len() - 1)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn is_header(line: &str) -> bool {
    line.starts_with("imagesource:") || line.starts_with("gsd:")
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("{what}: cannot parse {tok:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("{what}: non-finite value {tok:?}"),
        });
    }
    Ok(v)
}

fn parse_coords(toks: &[&str], line: usize) -> Result<Quad> {
    let mut c = [0.0; 8];
    for (slot, tok) in c.iter_mut().zip(toks) {
        *slot = parse_f64(tok, line, "coordinate")?;
    }
    Ok(Quad::from_coords(c))
}

fn class_id(classes: &mut ClassMap, tok: &str, line: usize) -> Result<usize> {
    classes.id(tok).ok_or_else(|| Error::Parse {
        line,
        msg: format!("unknown class {tok:?}"),
    })
}

/// Parses annotation text. Line numbers in errors are 1-based.
pub fn parse_annotations(text: &str, classes: &mut ClassMap) -> Result<Vec<GtInstance>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || is_header(trimmed) {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 10 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 10 fields, found {}", toks.len()),
            });
        }
        let quad = parse_coords(&toks[..8], line)?;
        let class_id = class_id(classes, toks[8], line)?;
        let difficult = match toks[9] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("difficult flag must be 0 or 1, found {other:?}"),
                })
            }
        };
        out.push(GtInstance {
            quad,
            class_id,
            difficult,
        });
    }
    Ok(out)
}

pub fn format_annotations(gts: &[GtInstance], classes: &ClassMap) -> String {
    let mut s = String::new();
    for g in gts {
        for c in g.quad.coords() {
            s.push_str(&fmt6(c));
            s.push(' ');
        }
        s.push_str(class_name(classes, g.class_id).as_str());
        s.push_str(if g.difficult { " 1\n" } else { " 0\n" });
    }
    s
}

/// Parses detection text into quad-shaped scored boxes.
pub fn parse_detections(text: &str, classes: &mut ClassMap) -> Result<Vec<ScoredBox>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 10 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 10 fields, found {}", toks.len()),
            });
        }
        let class_id = class_id(classes, toks[0], line)?;
        let score = parse_f64(toks[1], line, "score")?;
        let quad = parse_coords(&toks[2..], line)?;
        let b = ScoredBox::new(Shape::Q(quad), score, class_id).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        out.push(b);
    }
    Ok(out)
}

pub fn format_detection(b: &ScoredBox, classes: &ClassMap) -> String {
    let mut s = class_name(classes, b.class_id);
    s.push(' ');
    s.push_str(&fmt6(b.score));
    for c in b.shape.to_quad().coords() {
        s.push(' ');
        s.push_str(&fmt6(c));
    }
    s
}

pub fn format_detections(dets: &[ScoredBox], classes: &ClassMap) -> String {
    dets.iter()
        .map(|d| format_detection(d, classes) + "\n")
        .collect()
}

fn class_name(classes: &ClassMap, id: usize) -> String {
    classes
        .name(id)
        .map(str::to_string)
        .unwrap_or_else(|| format!("class{id}"))
}

/// Parses whitespace-separated numbers, `width` per non-blank line.
pub fn parse_rows(text: &str, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != width {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected {width} numbers, found {}", toks.len()),
            });
        }
        rows.push(
            toks.iter()
                .map(|t| parse_f64(t, i + 1, "value"))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(rows)
}

/// Six decimals, with negative zero printed as zero.
pub fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}
