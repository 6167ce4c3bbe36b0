//! Event logs: parsing, filtering, discretization, encoding and splitting.
//!
//! An [`EventLog`] is a set of traces (one per process instance), each an
//! ordered sequence of events carrying an activity label, a timestamp and a
//! map of context attributes. Logs are turned into index sequences
//! ([`EncodedLog`]) before anything probabilistic touches them.

mod csv_io;
mod discretize;
mod encode;

pub use csv_io::{parse_csv, write_csv, ColumnMapping};
pub use discretize::{apply_discretization, discretize_attribute, DiscretizationSpec};
pub use encode::{
    encode_log, encode_with_vocabulary, validate_roles, EncodedLog, EncodedTrace, RoleConfig,
    RoleVocab, Vocab, Vocabularies, MISSING_LABEL, OTHER_LABEL,
};

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Kind of a context attribute column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical,
    Numeric,
}

/// A raw attribute value. Absent values are simply not present in the
/// event's attribute map.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Text(String),
    Number(f64),
}

impl AttributeValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttributeValue::Text(s) => Some(s),
            AttributeValue::Number(_) => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttributeValue::Number(n) => Some(*n),
            AttributeValue::Text(_) => None,
        }
    }
}

/// One event of a process instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub activity: String,
    pub timestamp: NaiveDateTime,
    pub attributes: BTreeMap<String, AttributeValue>,
}

impl Event {
    pub fn attribute(&self, name: &str) -> Option<&AttributeValue> {
        self.attributes.get(name)
    }
}

/// The ordered event sequence of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// A full event log plus the attribute schema.
///
/// Traces appear in first-appearance order of their case ids; events within
/// a trace are sorted by timestamp with input order breaking ties.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub schema: BTreeMap<String, AttributeKind>,
}

impl EventLog {
    pub fn num_traces(&self) -> usize {
        self.traces.len()
    }

    pub fn num_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn attribute_kind(&self, name: &str) -> Option<AttributeKind> {
        self.schema.get(name).copied()
    }
}

/// Drop traces shorter than `min_len` events. Returns the filtered log and
/// the number of traces removed.
pub fn filter_short_traces(log: &EventLog, min_len: usize) -> (EventLog, usize) {
    let retained: Vec<Trace> = log
        .traces
        .iter()
        .filter(|t| t.len() >= min_len)
        .cloned()
        .collect();
    let removed = log.traces.len() - retained.len();
    (
        EventLog {
            traces: retained,
            schema: log.schema.clone(),
        },
        removed,
    )
}

/// Random trace-level partition into train and test sides.
///
/// `|train| = round(train_ratio * N)`; both sides keep the input trace
/// order. Deterministic for a fixed seed.
pub fn split_log(log: &EventLog, train_ratio: f64, seed: u64) -> Result<(EventLog, EventLog)> {
    if log.traces.is_empty() {
        return Err(Error::Config("cannot split an empty log".into()));
    }
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::Config(format!(
            "train ratio must lie in (0, 1), got {train_ratio}"
        )));
    }
    let n = log.traces.len();
    let n_train = (train_ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Config(format!(
            "split of {n} traces at ratio {train_ratio} leaves one side empty"
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut train_idx: Vec<usize> = indices[..n_train].to_vec();
    let mut test_idx: Vec<usize> = indices[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let pick = |idx: &[usize]| EventLog {
        traces: idx.iter().map(|&i| log.traces[i].clone()).collect(),
        schema: log.schema.clone(),
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}
