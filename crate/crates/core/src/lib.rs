//! Zero-shot event typing: triggers and arguments are scored by cosine
//! similarity against clusters of label embeddings, then typed jointly under
//! the ontology's constraints.
//!
//! Modules follow the data flow: [`ontology`] and [`embedstore`] hold the
//! label side, [`mentions`] the events to type, [`scoring`] and [`inference`]
//! make the decisions, [`filtering`] rejects out-of-ontology triggers, and
//! [`evaluation`] measures the results. [`pipeline`] and [`cli`] tie them
//! together.

pub mod cli;
pub mod embedstore;
pub mod evaluation;
pub mod filtering;
pub mod inference;
pub mod mentions;
pub mod ontology;
pub mod pipeline;
pub mod scoring;
