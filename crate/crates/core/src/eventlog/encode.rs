//! Index encoding of event logs.
//!
//! Every categorical variable gets a vocabulary mapping labels to dense
//! indices in first-appearance order, with two reserved trailing slots: one
//! for absent values and one for labels never seen at build time.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AttributeKind, AttributeValue, EventLog};
use crate::error::{Error, Result};

/// Display label for the reserved absent-value index.
pub const MISSING_LABEL: &str = "<missing>";
/// Display label for the reserved unknown-value index.
pub const OTHER_LABEL: &str = "<other>";

/// Label-to-index mapping for one categorical variable.
///
/// Indices `0..real_len()` hold observed labels in first-appearance order;
/// index `len() - 2` is the absent-value slot and `len() - 1` the
/// unknown-value slot.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    values: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Vocab {
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_values<I, S>(values: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab::new();
        for value in values {
            let value = value.into();
            if vocab.index.contains_key(&value) {
                return Err(Error::Schema(format!("duplicate vocabulary label '{value}'")));
            }
            vocab.insert_or_get(&value)?;
        }
        Ok(vocab)
    }

    fn insert_or_get(&mut self, value: &str) -> Result<usize> {
        if value == MISSING_LABEL || value == OTHER_LABEL {
            return Err(Error::Schema(format!(
                "label '{value}' collides with a reserved vocabulary slot"
            )));
        }
        if let Some(&i) = self.index.get(value) {
            return Ok(i);
        }
        let i = self.values.len();
        self.values.push(value.to_string());
        self.index.insert(value.to_string(), i);
        Ok(i)
    }

    /// Number of observed labels, excluding the two reserved slots.
    pub fn real_len(&self) -> usize {
        self.values.len()
    }

    /// Total index range, including the two reserved slots.
    pub fn len(&self) -> usize {
        self.values.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn missing_index(&self) -> usize {
        self.values.len()
    }

    pub fn other_index(&self) -> usize {
        self.values.len() + 1
    }

    /// Index of a label, or of the reserved slot its display label names.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        if let Some(&i) = self.index.get(label) {
            return Some(i);
        }
        match label {
            MISSING_LABEL => Some(self.missing_index()),
            OTHER_LABEL => Some(self.other_index()),
            _ => None,
        }
    }

    /// Index of a label, mapping anything outside the vocabulary to the
    /// reserved out-of-vocabulary slot.
    pub fn index_or_other(&self, label: &str) -> usize {
        self.index
            .get(label)
            .copied()
            .unwrap_or_else(|| self.other_index())
    }

    pub fn label_of(&self, index: usize) -> Option<&str> {
        if index < self.values.len() {
            Some(&self.values[index])
        } else if index == self.missing_index() {
            Some(MISSING_LABEL)
        } else if index == self.other_index() {
            Some(OTHER_LABEL)
        } else {
            None
        }
    }

    /// Observed labels in index order, without the reserved slots.
    pub fn observed_labels(&self) -> &[String] {
        &self.values
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::new()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(values: Vec<String>) -> Result<Self> {
        Vocab::from_values(values)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(vocab: Vocab) -> Vec<String> {
        vocab.values
    }
}

/// Vocabulary of a role attribute together with its column name.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoleVocab {
    pub attribute: String,
    #[serde(rename = "values")]
    pub vocab: Vocab,
}

/// Which context attribute plays which role. Either or both may be unset.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct RoleConfig {
    pub background: Option<String>,
    pub symptom: Option<String>,
}

impl RoleConfig {
    pub fn none() -> Self {
        RoleConfig::default()
    }

    pub fn background(attr: &str) -> Self {
        RoleConfig {
            background: Some(attr.into()),
            symptom: None,
        }
    }

    pub fn symptom(attr: &str) -> Self {
        RoleConfig {
            background: None,
            symptom: Some(attr.into()),
        }
    }

    pub fn both(background: &str, symptom: &str) -> Self {
        RoleConfig {
            background: Some(background.into()),
            symptom: Some(symptom.into()),
        }
    }
}

/// Vocabularies of every encoded variable. A missing role means that axis
/// has size 1 and all its indices are 0.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Vocabularies {
    pub activity: Vocab,
    pub background: Option<RoleVocab>,
    pub symptom: Option<RoleVocab>,
}

impl Vocabularies {
    pub fn num_activities(&self) -> usize {
        self.activity.len()
    }

    pub fn num_backgrounds(&self) -> usize {
        self.background.as_ref().map_or(1, |r| r.vocab.len())
    }

    pub fn num_symptoms(&self) -> usize {
        self.symptom.as_ref().map_or(1, |r| r.vocab.len())
    }

    pub fn roles(&self) -> RoleConfig {
        RoleConfig {
            background: self.background.as_ref().map(|r| r.attribute.clone()),
            symptom: self.symptom.as_ref().map(|r| r.attribute.clone()),
        }
    }
}

/// One trace as parallel index sequences, all of the trace's length.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTrace {
    pub case_id: String,
    pub events: Vec<usize>,
    pub backgrounds: Vec<usize>,
    pub symptoms: Vec<usize>,
}

impl EncodedTrace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The (event, background, symptom) indices at 0-based position `t`.
    pub fn slice(&self, t: usize) -> (usize, usize, usize) {
        (self.events[t], self.backgrounds[t], self.symptoms[t])
    }
}

/// An index-encoded log plus the vocabularies that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedLog {
    pub traces: Vec<EncodedTrace>,
    pub vocabs: Vocabularies,
}

impl EncodedLog {
    pub fn num_traces(&self) -> usize {
        self.traces.len()
    }

    pub fn num_events(&self) -> usize {
        self.traces.iter().map(EncodedTrace::len).sum()
    }

    /// Random trace-level partition, mirroring the raw-log split: the train
    /// side gets `round(train_ratio * N)` traces and both sides keep the
    /// input order.
    pub fn split_traces(&self, train_ratio: f64, seed: u64) -> Result<(EncodedLog, EncodedLog)> {
        if self.traces.is_empty() {
            return Err(Error::Config("cannot split an empty log".into()));
        }
        if !(train_ratio > 0.0 && train_ratio < 1.0) {
            return Err(Error::Config(format!(
                "train ratio must lie in (0, 1), got {train_ratio}"
            )));
        }
        let n = self.traces.len();
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
        let pick = |idx: &[usize]| EncodedLog {
            traces: idx.iter().map(|&i| self.traces[i].clone()).collect(),
            vocabs: self.vocabs.clone(),
        };
        Ok((pick(&train_idx), pick(&test_idx)))
    }
}

fn validate_role(log: &EventLog, attr: &str, role: &str) -> Result<()> {
    match log.attribute_kind(attr) {
        Some(AttributeKind::Categorical) => Ok(()),
        Some(AttributeKind::Numeric) => Err(Error::Config(format!(
            "{role} attribute '{attr}' is numeric; discretize it first"
        ))),
        None => Err(Error::Config(format!(
            "{role} attribute '{attr}' is not in the schema"
        ))),
    }
}

/// Check that every role attribute exists in the log schema as a
/// categorical attribute and that no attribute plays both roles.
pub fn validate_roles(log: &EventLog, roles: &RoleConfig) -> Result<()> {
    if let (Some(b), Some(s)) = (&roles.background, &roles.symptom) {
        if b == s {
            return Err(Error::Config(format!(
                "attribute '{b}' cannot play both roles"
            )));
        }
    }
    if let Some(b) = &roles.background {
        validate_role(log, b, "background")?;
    }
    if let Some(s) = &roles.symptom {
        validate_role(log, s, "symptom")?;
    }
    Ok(())
}

enum AttrEncoder<'a> {
    Absent,
    Building { attribute: &'a str, vocab: Vocab },
    Fixed { attribute: &'a str, vocab: &'a Vocab },
}

impl<'a> AttrEncoder<'a> {
    fn encode(&mut self, event: &super::Event) -> Result<usize> {
        let (attribute, build) = match self {
            AttrEncoder::Absent => return Ok(0),
            AttrEncoder::Building { attribute, .. } => (*attribute, true),
            AttrEncoder::Fixed { attribute, .. } => (*attribute, false),
        };
        let label = match event.attribute(attribute) {
            None => None,
            Some(AttributeValue::Text(s)) => Some(s.as_str()),
            Some(AttributeValue::Number(_)) => {
                return Err(Error::Schema(format!(
                    "attribute '{attribute}' declared categorical but holds a number"
                )));
            }
        };
        match self {
            AttrEncoder::Building { vocab, .. } => match label {
                Some(s) if build => vocab.insert_or_get(s),
                Some(_) => unreachable!(),
                None => Ok(vocab.missing_index()),
            },
            AttrEncoder::Fixed { vocab, .. } => match label {
                Some(s) => Ok(vocab.index_or_other(s)),
                None => Ok(vocab.missing_index()),
            },
            AttrEncoder::Absent => unreachable!(),
        }
    }

    fn into_vocab(self) -> Option<(String, Vocab)> {
        match self {
            AttrEncoder::Absent => None,
            AttrEncoder::Building { attribute, vocab } => Some((attribute.to_string(), vocab)),
            AttrEncoder::Fixed { attribute, vocab } => {
                Some((attribute.to_string(), vocab.clone()))
            }
        }
    }
}

fn encode_traces(
    log: &EventLog,
    activity: &mut dyn FnMut(&str) -> Result<usize>,
    background: &mut AttrEncoder,
    symptom: &mut AttrEncoder,
) -> Result<Vec<EncodedTrace>> {
    let mut traces = Vec::with_capacity(log.traces.len());
    for trace in &log.traces {
        let mut events = Vec::with_capacity(trace.len());
        let mut backgrounds = Vec::with_capacity(trace.len());
        let mut symptoms = Vec::with_capacity(trace.len());
        for event in &trace.events {
            events.push(activity(&event.activity)?);
            backgrounds.push(background.encode(event)?);
            symptoms.push(symptom.encode(event)?);
        }
        traces.push(EncodedTrace {
            case_id: trace.case_id.clone(),
            events,
            backgrounds,
            symptoms,
        });
    }
    Ok(traces)
}

/// Encode a log, building fresh vocabularies from it.
pub fn encode_log(log: &EventLog, roles: &RoleConfig) -> Result<EncodedLog> {
    validate_roles(log, roles)?;
    let mut activity_vocab = Vocab::new();
    let mut background = match &roles.background {
        Some(attr) => AttrEncoder::Building {
            attribute: attr,
            vocab: Vocab::new(),
        },
        None => AttrEncoder::Absent,
    };
    let mut symptom = match &roles.symptom {
        Some(attr) => AttrEncoder::Building {
            attribute: attr,
            vocab: Vocab::new(),
        },
        None => AttrEncoder::Absent,
    };

    let traces = encode_traces(
        log,
        &mut |a| activity_vocab.insert_or_get(a),
        &mut background,
        &mut symptom,
    )?;

    let wrap = |pair: Option<(String, Vocab)>| {
        pair.map(|(attribute, vocab)| RoleVocab { attribute, vocab })
    };
    Ok(EncodedLog {
        traces,
        vocabs: Vocabularies {
            activity: activity_vocab,
            background: wrap(background.into_vocab()),
            symptom: wrap(symptom.into_vocab()),
        },
    })
}

/// Encode a log against existing vocabularies. Unseen labels map to the
/// unknown-value slot; absent values map to the absent-value slot.
pub fn encode_with_vocabulary(log: &EventLog, vocabs: &Vocabularies) -> Result<EncodedLog> {
    validate_roles(log, &vocabs.roles())?;
    let mut background = match &vocabs.background {
        Some(r) => AttrEncoder::Fixed {
            attribute: &r.attribute,
            vocab: &r.vocab,
        },
        None => AttrEncoder::Absent,
    };
    let mut symptom = match &vocabs.symptom {
        Some(r) => AttrEncoder::Fixed {
            attribute: &r.attribute,
            vocab: &r.vocab,
        },
        None => AttrEncoder::Absent,
    };

    let traces = encode_traces(
        log,
        &mut |a| Ok(vocabs.activity.index_or_other(a)),
        &mut background,
        &mut symptom,
    )?;
    Ok(EncodedLog {
        traces,
        vocabs: vocabs.clone(),
    })
}
