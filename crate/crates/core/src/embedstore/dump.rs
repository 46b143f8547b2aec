//! Anchor-embedding dump files, version 1.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic           8 bytes  "EVMDUMP\n"
//! format_version  u32      1
//! dim             u32
//! count           u64
//! strategy        u8       0 = full, 1 = masked (default for records)
//! count x {
//!     preamble_len  u32
//!     preamble      JSON {label_id, anchor_word, sentence_id, strategy, dim}
//!     vector        dim x f32
//! }
//! ```
//!
//! Text layout: one JSON object per line. The first line is the header
//! `{"format":"eventmap-dump","format_version":1,"dim":..,"count":..,"strategy":..}`,
//! then one record per line with the vector as a decimal array. Vector
//! components are written as the exact `f64` widening of each `f32`, so text
//! dumps also reload bit-exactly.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Embedding, VectorError};

pub const DUMP_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"EVMDUMP\n";
const TEXT_FORMAT_NAME: &str = "eventmap-dump";

/// How a target word is presented to the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Sentence encoded unchanged (trigger labels).
    Full,
    /// Target word replaced by the mask token (argument labels).
    Masked,
}

impl Strategy {
    fn code(self) -> u8 {
        match self {
            Strategy::Full => 0,
            Strategy::Masked => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Strategy::Full),
            1 => Some(Strategy::Masked),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Full => "full",
            Strategy::Masked => "masked",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DumpEncoding {
    #[default]
    Binary,
    Text,
}

/// One contextualized embedding of an anchor word in an anchor sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorRecord {
    pub label_id: String,
    pub anchor_word: String,
    pub sentence_id: String,
    pub strategy: Strategy,
    pub vector: Embedding,
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("dump I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an anchor dump (unrecognized leading bytes)")]
    BadMagic,
    #[error("unsupported dump format_version {0} (expected {DUMP_FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("dump truncated while reading {0}")]
    Truncated(String),
    #[error("dump record {record}: header dim is {expected} but vector has {found} values")]
    DimMismatch {
        record: usize,
        expected: usize,
        found: usize,
    },
    #[error("dump header declares {declared} records but {found} were read")]
    CountMismatch { declared: u64, found: u64 },
    #[error("dump line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dump record {record}: {source}")]
    Vector {
        record: usize,
        #[source]
        source: VectorError,
    },
    #[error("dump header has unknown strategy code {0}")]
    BadStrategy(u8),
    #[error("dump has {count} records but dim 0")]
    ZeroDim { count: u64 },
}

#[derive(Serialize, Deserialize)]
struct TextHeader {
    format: String,
    format_version: u32,
    dim: usize,
    count: u64,
    strategy: Strategy,
}

#[derive(Serialize, Deserialize)]
struct Preamble {
    label_id: String,
    anchor_word: String,
    sentence_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct TextRecord {
    #[serde(flatten)]
    meta: Preamble,
    vector: Vec<f64>,
}

fn header_fields(records: &[AnchorRecord]) -> Result<(usize, Strategy), DumpError> {
    let dim = records.first().map_or(0, |r| r.vector.dim());
    for (i, r) in records.iter().enumerate() {
        if r.vector.dim() != dim {
            return Err(DumpError::DimMismatch {
                record: i,
                expected: dim,
                found: r.vector.dim(),
            });
        }
    }
    let strategy = records.first().map_or(Strategy::Full, |r| r.strategy);
    Ok((dim, strategy))
}

pub fn write_dump_to<W: Write>(
    mut out: W,
    records: &[AnchorRecord],
    encoding: DumpEncoding,
) -> Result<(), DumpError> {
    let (dim, default_strategy) = header_fields(records)?;
    match encoding {
        DumpEncoding::Binary => {
            out.write_all(MAGIC)?;
            out.write_all(&DUMP_FORMAT_VERSION.to_le_bytes())?;
            out.write_all(&(dim as u32).to_le_bytes())?;
            out.write_all(&(records.len() as u64).to_le_bytes())?;
            out.write_all(&[default_strategy.code()])?;
            for r in records {
                let preamble = serde_json::to_vec(&Preamble {
                    label_id: r.label_id.clone(),
                    anchor_word: r.anchor_word.clone(),
                    sentence_id: r.sentence_id.clone(),
                    strategy: Some(r.strategy),
                    dim: Some(dim),
                })
                .expect("preamble serializes");
                out.write_all(&(preamble.len() as u32).to_le_bytes())?;
                out.write_all(&preamble)?;
                for v in r.vector.as_slice() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        DumpEncoding::Text => {
            let header = TextHeader {
                format: TEXT_FORMAT_NAME.to_string(),
                format_version: DUMP_FORMAT_VERSION,
                dim,
                count: records.len() as u64,
                strategy: default_strategy,
            };
            serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
            for r in records {
                let line = TextRecord {
                    meta: Preamble {
                        label_id: r.label_id.clone(),
                        anchor_word: r.anchor_word.clone(),
                        sentence_id: r.sentence_id.clone(),
                        strategy: Some(r.strategy),
                        dim: None,
                    },
                    vector: r.vector.to_f64(),
                };
                serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
                out.write_all(b"\n")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_dump(
    path: impl AsRef<Path>,
    records: &[AnchorRecord],
    encoding: DumpEncoding,
) -> Result<(), DumpError> {
    let file = std::fs::File::create(path)?;
    write_dump_to(std::io::BufWriter::new(file), records, encoding)
}

/// Reads a dump in either encoding; the encoding is detected from the first bytes.
pub fn read_dump_from<R: Read>(mut input: R) -> Result<Vec<AnchorRecord>, DumpError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes[MAGIC.len()..])
    } else if bytes.first() == Some(&b'{') {
        decode_text(&bytes)
    } else {
        Err(DumpError::BadMagic)
    }
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<Vec<AnchorRecord>, DumpError> {
    read_dump_from(std::fs::File::open(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DumpError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DumpError::Truncated(what.to_string()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, DumpError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, DumpError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn decode_binary(bytes: &[u8]) -> Result<Vec<AnchorRecord>, DumpError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let version = cur.u32("header")?;
    if version != DUMP_FORMAT_VERSION {
        return Err(DumpError::UnsupportedVersion(version));
    }
    let dim = cur.u32("header")? as usize;
    let count = cur.u64("header")?;
    let code = cur.take(1, "header")?[0];
    let default_strategy = Strategy::from_code(code).ok_or(DumpError::BadStrategy(code))?;
    if dim == 0 && count > 0 {
        return Err(DumpError::ZeroDim { count });
    }

    let mut records = Vec::new();
    for i in 0..count {
        let record = i as usize;
        let what = format!("record {record}");
        let len = cur.u32(&what)? as usize;
        let meta: Preamble =
            serde_json::from_slice(cur.take(len, &what)?).map_err(|e| DumpError::Parse {
                line: record,
                message: format!("bad record preamble: {e}"),
            })?;
        if let Some(found) = meta.dim {
            if found != dim {
                return Err(DumpError::DimMismatch {
                    record,
                    expected: dim,
                    found,
                });
            }
        }
        let raw = cur.take(dim * 4, &what)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let vector = Embedding::new(values).map_err(|source| DumpError::Vector { record, source })?;
        records.push(AnchorRecord {
            label_id: meta.label_id,
            anchor_word: meta.anchor_word,
            sentence_id: meta.sentence_id,
            strategy: meta.strategy.unwrap_or(default_strategy),
            vector,
        });
    }
    if cur.pos != bytes.len() {
        return Err(DumpError::Parse {
            line: records.len(),
            message: format!("{} trailing bytes after last record", bytes.len() - cur.pos),
        });
    }
    Ok(records)
}

fn decode_text(bytes: &[u8]) -> Result<Vec<AnchorRecord>, DumpError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DumpError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(DumpError::BadMagic)?;
    let header: TextHeader = serde_json::from_str(first).map_err(|e| DumpError::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.format != TEXT_FORMAT_NAME {
        return Err(DumpError::BadMagic);
    }
    if header.format_version != DUMP_FORMAT_VERSION {
        return Err(DumpError::UnsupportedVersion(header.format_version));
    }
    if header.dim == 0 && header.count > 0 {
        return Err(DumpError::ZeroDim {
            count: header.count,
        });
    }

    let mut records = Vec::new();
    for (lineno, line) in lines {
        let record = records.len();
        let rec: TextRecord = serde_json::from_str(line).map_err(|e| DumpError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if rec.vector.len() != header.dim {
            return Err(DumpError::DimMismatch {
                record,
                expected: header.dim,
                found: rec.vector.len(),
            });
        }
        let values = rec.vector.iter().map(|&v| v as f32).collect();
        let vector = Embedding::new(values).map_err(|source| DumpError::Vector { record, source })?;
        records.push(AnchorRecord {
            label_id: rec.meta.label_id,
            anchor_word: rec.meta.anchor_word,
            sentence_id: rec.meta.sentence_id,
            strategy: rec.meta.strategy.unwrap_or(header.strategy),
            vector,
        });
    }
    if records.len() as u64 != header.count {
        return Err(DumpError::CountMismatch {
            declared: header.count,
            found: records.len() as u64,
        });
    }
    Ok(records)
}
