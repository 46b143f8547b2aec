//! Identified events with precomputed embeddings.
//!
//! Mention files are line-delimited JSON, one event per line:
//!
//! ```json
//! {"event_id":"e1","sentence_id":"s1",
//!  "trigger":{"start":3,"end":4,"text":"war","embedding_ref":0,"gold_type":"Conflict:Attack"},
//!  "arguments":[{"start":0,"end":1,"text":"Iraq","entity_type":"GPE","embedding_ref":1,"gold_role":"Attacker"}]}
//! ```
//!
//! `embedding_ref` is either an index into a sidecar anchor dump or an inline
//! array of numbers.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedstore::{AnchorRecord, ClusterStore, Embedding, Strategy, VectorError};
use crate::ontology::Ontology;

#[derive(Debug, Error)]
pub enum MentionError {
    #[error("cannot read mention file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("mention file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event \"{event_id}\": invalid span {detail}")]
    InvalidSpan { event_id: String, detail: String },
    #[error("event \"{event_id}\": duplicate event id")]
    DuplicateEventId { event_id: String },
    #[error("event \"{event_id}\": embedding_ref {index} is out of range (sidecar has {len} vectors)")]
    BadRef {
        event_id: String,
        index: usize,
        len: usize,
    },
    #[error("event \"{event_id}\": embedding_ref is an index but no sidecar dump was given")]
    MissingSidecar { event_id: String },
    #[error("event \"{event_id}\": embedding has dimension {found}, store dimension is {expected}")]
    DimMismatch {
        event_id: String,
        expected: usize,
        found: usize,
    },
    #[error("event \"{event_id}\": {source}")]
    Vector {
        event_id: String,
        #[source]
        source: VectorError,
    },
    #[error("event \"{event_id}\": {what} \"{label}\" is not in the ontology")]
    UnknownLabel {
        event_id: String,
        what: &'static str,
        label: String,
    },
}

/// A token span `[start, end)` within one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Span {
    pub fn new(sentence_id: impl Into<String>, start: usize, end: usize, text: impl Into<String>) -> Result<Self, String> {
        let text = text.into();
        if start >= end {
            return Err(format!("[{start}, {end}) is empty or reversed"));
        }
        if text.is_empty() {
            return Err(format!("[{start}, {end}) has empty text"));
        }
        Ok(Span {
            sentence_id: sentence_id.into(),
            start,
            end,
            text,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerMention {
    pub span: Span,
    pub embedding: Embedding,
    pub gold_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArgumentMention {
    pub span: Span,
    pub entity_type: Option<String>,
    pub embedding: Embedding,
    pub gold_role: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventMention {
    pub event_id: String,
    pub trigger: TriggerMention,
    pub arguments: Vec<ArgumentMention>,
}

impl EventMention {
    pub fn sentence_id(&self) -> &str {
        &self.trigger.span.sentence_id
    }
}

/// Where a mention's vector lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmbeddingRef {
    Index(usize),
    Inline(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub embedding_ref: EmbeddingRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentRecord {
    pub start: usize,
    pub end: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
    pub embedding_ref: EmbeddingRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_role: Option<String>,
}

/// One line of a mention file, before embeddings are resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub event_id: String,
    pub sentence_id: String,
    pub trigger: TriggerRecord,
    #[serde(default)]
    pub arguments: Vec<ArgumentRecord>,
}

impl MentionRecord {
    pub fn trigger_span(&self) -> Span {
        Span {
            sentence_id: self.sentence_id.clone(),
            start: self.trigger.start,
            end: self.trigger.end,
            text: self.trigger.text.clone(),
        }
    }

    pub fn argument_span(&self, j: usize) -> Span {
        let a = &self.arguments[j];
        Span {
            sentence_id: self.sentence_id.clone(),
            start: a.start,
            end: a.end,
            text: a.text.clone(),
        }
    }

    fn validate_spans(&self) -> Result<(), MentionError> {
        let check = |start, end, text: &str, what: &str| {
            Span::new(self.sentence_id.as_str(), start, end, text)
                .map(drop)
                .map_err(|detail| MentionError::InvalidSpan {
                    event_id: self.event_id.clone(),
                    detail: format!("for {what}: {detail}"),
                })
        };
        check(self.trigger.start, self.trigger.end, &self.trigger.text, "trigger")?;
        for (j, a) in self.arguments.iter().enumerate() {
            check(a.start, a.end, &a.text, &format!("argument {j}"))?;
        }
        Ok(())
    }
}

/// Parses mention records, checking spans and event-id uniqueness.
pub fn parse_records<R: BufRead>(input: R) -> Result<Vec<MentionRecord>, MentionError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| MentionError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MentionRecord = serde_json::from_str(&line).map_err(|e| MentionError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate_spans()?;
        if !seen.insert(rec.event_id.clone()) {
            return Err(MentionError::DuplicateEventId { event_id: rec.event_id });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<MentionRecord>, MentionError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| MentionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_records(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions<'a> {
    /// Vectors addressed by index-valued `embedding_ref`s.
    pub sidecar: Option<&'a [Embedding]>,
    /// When set, gold labels and entity types are checked against it.
    pub ontology: Option<&'a Ontology>,
    /// Turn unknown gold labels into errors instead of warnings.
    pub strict: bool,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedMentions {
    pub events: Vec<EventMention>,
    pub warnings: Vec<String>,
}

/// Resolves embeddings and validates records against `store`'s dimension.
pub fn resolve_records(
    records: Vec<MentionRecord>,
    store: &ClusterStore,
    options: LoadOptions<'_>,
) -> Result<LoadedMentions, MentionError> {
    let mut loaded = LoadedMentions::default();
    for rec in records {
        let event_id = rec.event_id.clone();
        let resolve = |r: &EmbeddingRef| -> Result<Embedding, MentionError> {
            let emb = match r {
                EmbeddingRef::Index(index) => {
                    let side = options.sidecar.ok_or_else(|| MentionError::MissingSidecar {
                        event_id: event_id.clone(),
                    })?;
                    side.get(*index).cloned().ok_or_else(|| MentionError::BadRef {
                        event_id: event_id.clone(),
                        index: *index,
                        len: side.len(),
                    })?
                }
                EmbeddingRef::Inline(values) => Embedding::new(values.iter().map(|&v| v as f32).collect())
                    .map_err(|source| MentionError::Vector {
                        event_id: event_id.clone(),
                        source,
                    })?,
            };
            if emb.dim() != store.dim() {
                return Err(MentionError::DimMismatch {
                    event_id: event_id.clone(),
                    expected: store.dim(),
                    found: emb.dim(),
                });
            }
            Ok(emb)
        };

        let trigger = TriggerMention {
            span: rec.trigger_span(),
            embedding: resolve(&rec.trigger.embedding_ref)?,
            gold_type: rec.trigger.gold_type.clone(),
        };
        let mut arguments = Vec::with_capacity(rec.arguments.len());
        for (j, a) in rec.arguments.iter().enumerate() {
            arguments.push(ArgumentMention {
                span: rec.argument_span(j),
                entity_type: a.entity_type.clone(),
                embedding: resolve(&a.embedding_ref)?,
                gold_role: a.gold_role.clone(),
            });
        }
        let event = EventMention {
            event_id,
            trigger,
            arguments,
        };
        if let Some(ontology) = options.ontology {
            check_labels(&event, ontology, options.strict, &mut loaded.warnings)?;
        }
        loaded.events.push(event);
    }
    Ok(loaded)
}

fn check_labels(
    event: &EventMention,
    ontology: &Ontology,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<(), MentionError> {
    let mut problems = Vec::new();
    if let Some(g) = &event.trigger.gold_type {
        if ontology.event_type(g).is_none() {
            problems.push(("gold event type", g.clone()));
        }
    }
    for a in &event.arguments {
        if let Some(g) = &a.gold_role {
            if ontology.role_type(g).is_none() {
                problems.push(("gold role", g.clone()));
            }
        }
        if let Some(e) = &a.entity_type {
            if !ontology.has_entity_type(e) {
                problems.push(("entity type", e.clone()));
            }
        }
    }
    for (what, label) in problems {
        let err = MentionError::UnknownLabel {
            event_id: event.event_id.clone(),
            what,
            label,
        };
        if strict {
            return Err(err);
        }
        log::warn!("{err}");
        warnings.push(err.to_string());
    }
    Ok(())
}

/// Reads and resolves a mention file.
pub fn load_mentions(
    path: impl AsRef<Path>,
    store: &ClusterStore,
    options: LoadOptions<'_>,
) -> Result<LoadedMentions, MentionError> {
    resolve_records(read_records(path)?, store, options)
}

/// How [`write_mentions_to`] stores vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingMode {
    Inline,
    /// Vectors go to the returned anchor records; the file holds their indices.
    Sidecar,
}

/// Writes events as mention records. In sidecar mode the returned records
/// are meant to be written with [`crate::embedstore::write_dump`].
pub fn write_mentions_to<W: Write>(
    mut out: W,
    events: &[EventMention],
    mode: EmbeddingMode,
) -> std::io::Result<Vec<AnchorRecord>> {
    let mut sidecar = Vec::new();
    let mut reference = |emb: &Embedding, label: &str, span: &Span, strategy| match mode {
        EmbeddingMode::Inline => EmbeddingRef::Inline(emb.to_f64()),
        EmbeddingMode::Sidecar => {
            sidecar.push(AnchorRecord {
                label_id: label.to_string(),
                anchor_word: span.text.clone(),
                sentence_id: span.sentence_id.clone(),
                strategy,
                vector: emb.clone(),
            });
            EmbeddingRef::Index(sidecar.len() - 1)
        }
    };
    for ev in events {
        let trigger = TriggerRecord {
            start: ev.trigger.span.start,
            end: ev.trigger.span.end,
            text: ev.trigger.span.text.clone(),
            embedding_ref: reference(&ev.trigger.embedding, &ev.event_id, &ev.trigger.span, Strategy::Full),
            gold_type: ev.trigger.gold_type.clone(),
        };
        let arguments = ev
            .arguments
            .iter()
            .map(|a| ArgumentRecord {
                start: a.span.start,
                end: a.span.end,
                text: a.span.text.clone(),
                entity_type: a.entity_type.clone(),
                embedding_ref: reference(&a.embedding, &ev.event_id, &a.span, Strategy::Masked),
                gold_role: a.gold_role.clone(),
            })
            .collect();
        let rec = MentionRecord {
            event_id: ev.event_id.clone(),
            sentence_id: ev.sentence_id().to_string(),
            trigger,
            arguments,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(sidecar)
}
