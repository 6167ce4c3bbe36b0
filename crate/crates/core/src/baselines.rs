//! N-gram next-event baseline with longest-match backoff.
//!
//! An order-n model stores raw counts of every context of length 1..n-1
//! seen inside a trace, plus global unigram counts. Prediction uses the
//! longest stored context that matches the end of the prefix and falls
//! back to shorter contexts, then to the unigram distribution. Counts are
//! used as-is; there is no smoothing.

use std::collections::HashMap;

use crate::dbn::{argmax, PredictionDistribution, PredictionTarget};
use crate::error::{Error, Result};
use crate::eventlog::{EncodedLog, EncodedTrace};
use crate::evaluation::{evaluate_model, PointPredictor};

/// Frequency tables of an order-n model. `tables[l - 1]` maps a context of
/// length `l` to next-event counts; only observed pairs are stored, so
/// every stored count is at least 1. Contexts never span trace boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramModel {
    pub order: usize,
    pub num_events: usize,
    tables: Vec<HashMap<Vec<usize>, HashMap<usize, u64>>>,
    unigram: Vec<u64>,
}

impl NgramModel {
    /// Next-event counts stored for `context`, if any.
    pub fn context_counts(&self, context: &[usize]) -> Option<&HashMap<usize, u64>> {
        self.tables
            .get(context.len().wrapping_sub(1))
            .and_then(|t| t.get(context))
    }

    /// Occurrence count of every event index across the training log.
    pub fn unigram_counts(&self) -> &[u64] {
        &self.unigram
    }

    /// Number of distinct stored contexts of length `len`.
    pub fn num_contexts(&self, len: usize) -> usize {
        self.tables.get(len.wrapping_sub(1)).map_or(0, |t| t.len())
    }

    /// Sum of all stored counts at context length `len`.
    pub fn total_count(&self, len: usize) -> u64 {
        self.tables
            .get(len.wrapping_sub(1))
            .map_or(0, |t| t.values().flat_map(|c| c.values()).sum())
    }
}

/// Count contexts of length 1..n-1 from every trace of `train`.
pub fn fit_ngram(train: &EncodedLog, n: usize) -> Result<NgramModel> {
    if n < 2 {
        return Err(Error::Config(format!(
            "n-gram order must be at least 2, got {n}"
        )));
    }
    if train.traces.is_empty() {
        return Err(Error::Config("training log has no traces".into()));
    }
    let num_events = train.vocabs.num_activities();
    let mut tables: Vec<HashMap<Vec<usize>, HashMap<usize, u64>>> = vec![HashMap::new(); n - 1];
    let mut unigram = vec![0u64; num_events];

    for trace in &train.traces {
        for (t, &event) in trace.events.iter().enumerate() {
            unigram[event] += 1;
            for len in 1..n {
                if t < len {
                    break;
                }
                let context = trace.events[t - len..t].to_vec();
                *tables[len - 1]
                    .entry(context)
                    .or_default()
                    .entry(event)
                    .or_insert(0) += 1;
            }
        }
    }

    if unigram.iter().all(|&c| c == 0) {
        return Err(Error::Config("training log contains no events".into()));
    }

    Ok(NgramModel {
        order: n,
        num_events,
        tables,
        unigram,
    })
}

/// Count-proportional next-event distribution for `prefix`.
///
/// The longest stored context matching the prefix tail wins; if no context
/// of any length is stored, the global unigram distribution is used. Ties
/// in the argmax go to the lowest event index.
pub fn ngram_predict(model: &NgramModel, prefix: &[usize]) -> Result<PredictionDistribution> {
    if prefix.is_empty() {
        return Err(Error::Config(
            "n-gram prediction requires a non-empty prefix".into(),
        ));
    }
    if let Some(&bad) = prefix.iter().find(|&&e| e >= model.num_events) {
        return Err(Error::Config(format!(
            "event index {bad} is outside the activity vocabulary (size {})",
            model.num_events
        )));
    }

    let mut probs = vec![0.0; model.num_events];
    let longest = (model.order - 1).min(prefix.len());
    let matched = (1..=longest).rev().find_map(|len| {
        model.context_counts(&prefix[prefix.len() - len..])
    });
    match matched {
        Some(counts) => {
            let total: u64 = counts.values().sum();
            for (&event, &count) in counts {
                probs[event] = count as f64 / total as f64;
            }
        }
        None => {
            let total: u64 = model.unigram.iter().sum();
            for (event, &count) in model.unigram.iter().enumerate() {
                probs[event] = count as f64 / total as f64;
            }
        }
    }

    let argmax = argmax(&probs);
    Ok(PredictionDistribution {
        target: PredictionTarget::NextEvent,
        probs,
        argmax,
    })
}

impl PointPredictor for NgramModel {
    fn predict_point(
        &self,
        trace: &EncodedTrace,
        position: usize,
        target: PredictionTarget,
    ) -> Result<PredictionDistribution> {
        match target {
            PredictionTarget::NextEvent => ngram_predict(self, &trace.events[..position - 1]),
            PredictionTarget::CurrentSymptom => Err(Error::Config(
                "n-gram models predict next events only".into(),
            )),
        }
    }

    fn num_classes(&self, target: PredictionTarget) -> Result<usize> {
        match target {
            PredictionTarget::NextEvent => Ok(self.num_events),
            PredictionTarget::CurrentSymptom => Err(Error::Config(
                "n-gram models predict next events only".into(),
            )),
        }
    }
}

/// Test-set score of one order in a sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NgramSweepRow {
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub best_accuracy: bool,
    pub best_f1: bool,
}

/// Scores for a range of orders on the same train/test pair. The best
/// order by accuracy and the best by macro-F1 are flagged independently;
/// ties go to the smaller order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NgramSweep {
    pub rows: Vec<NgramSweepRow>,
    pub best_accuracy_n: usize,
    pub best_f1_n: usize,
}

pub fn ngram_sweep(train: &EncodedLog, test: &EncodedLog, orders: &[usize]) -> Result<NgramSweep> {
    if orders.is_empty() {
        return Err(Error::Config("n-gram sweep needs at least one order".into()));
    }
    let mut ns: Vec<usize> = orders.to_vec();
    ns.sort_unstable();
    ns.dedup();

    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        let model = fit_ngram(train, n)?;
        let report = evaluate_model(&model, test, PredictionTarget::NextEvent)?;
        rows.push(NgramSweepRow {
            n,
            accuracy: report.metrics.accuracy,
            macro_f1: report.metrics.macro_f1,
            best_accuracy: false,
            best_f1: false,
        });
    }

    // Rows are in ascending order, so strict comparison keeps the smaller
    // order on ties.
    let mut best_acc = 0usize;
    let mut best_f1 = 0usize;
    for (i, row) in rows.iter().enumerate() {
        if row.accuracy > rows[best_acc].accuracy {
            best_acc = i;
        }
        if row.macro_f1 > rows[best_f1].macro_f1 {
            best_f1 = i;
        }
    }
    rows[best_acc].best_accuracy = true;
    rows[best_f1].best_f1 = true;

    Ok(NgramSweep {
        best_accuracy_n: rows[best_acc].n,
        best_f1_n: rows[best_f1].n,
        rows,
    })
}
