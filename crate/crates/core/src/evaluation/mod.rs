//! Prediction scoring and the repeated-split benchmark.
//!
//! The evaluation protocol is shared by every predictor: for each test
//! trace of length T, positions 3..=T are predicted one at a time from the
//! preceding prefix, and argmax predictions are scored against the observed
//! value. Accuracy is exact-match rate; macro-F1 averages per-class F1 over
//! the classes that actually occur.

mod benchmark;

pub use benchmark::{
    run_benchmark, BenchmarkConfig, BenchmarkFailure, BenchmarkReport, BenchmarkRow, ContextRole,
    NgramRepRow, StructureSpec,
};

use serde::{Deserialize, Serialize};

use crate::dbn::{
    predict_next_event, predict_symptom, DbnModel, PredictionDistribution, PredictionTarget,
    SymptomQuery,
};
use crate::error::{Error, Result};
use crate::eventlog::{EncodedLog, EncodedTrace};

/// Anything that can predict one slice of a trace from its prefix.
pub trait PointPredictor {
    /// Distribution for the 1-based `position` of `trace`, given everything
    /// the protocol allows the predictor to see before that slice.
    fn predict_point(
        &self,
        trace: &EncodedTrace,
        position: usize,
        target: PredictionTarget,
    ) -> Result<PredictionDistribution>;

    /// Size of the target axis (prediction vectors have this length).
    fn num_classes(&self, target: PredictionTarget) -> Result<usize>;
}

/// Evaluation adapter for a trained model.
///
/// Next-event queries condition on the predicted slice's observed
/// background when the model has one; symptom queries use the configured
/// reading.
pub struct DbnPredictor<'a> {
    pub model: &'a DbnModel,
    pub symptom_query: SymptomQuery,
}

impl<'a> DbnPredictor<'a> {
    pub fn new(model: &'a DbnModel) -> Self {
        DbnPredictor {
            model,
            symptom_query: SymptomQuery::default(),
        }
    }

    pub fn with_symptom_query(model: &'a DbnModel, symptom_query: SymptomQuery) -> Self {
        DbnPredictor {
            model,
            symptom_query,
        }
    }
}

impl PointPredictor for DbnPredictor<'_> {
    fn predict_point(
        &self,
        trace: &EncodedTrace,
        position: usize,
        target: PredictionTarget,
    ) -> Result<PredictionDistribution> {
        match target {
            PredictionTarget::NextEvent => {
                let next_background = self
                    .model
                    .variant
                    .has_background()
                    .then(|| trace.backgrounds[position - 1]);
                predict_next_event(self.model, trace, position - 1, next_background)
            }
            PredictionTarget::CurrentSymptom => {
                predict_symptom(self.model, trace, position, self.symptom_query)
            }
        }
    }

    fn num_classes(&self, target: PredictionTarget) -> Result<usize> {
        match target {
            PredictionTarget::NextEvent => Ok(self.model.num_events()),
            PredictionTarget::CurrentSymptom => {
                if !self.model.variant.has_symptom() {
                    return Err(Error::Config(format!(
                        "variant '{}' has no symptom variable to predict",
                        self.model.variant
                    )));
                }
                Ok(self.model.num_symptoms())
            }
        }
    }
}

/// Per-class precision/recall/F1 with truth support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_index: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Classification metrics over a set of (predicted, actual) outcomes.
/// `None` predictions (the predictor could not answer) count as wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Mean per-class F1 over classes with support > 0; per-class F1 is 0
    /// when precision + recall = 0.
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// confusion[actual][predicted]; unanswered predictions are not
    /// recorded here.
    pub confusion: Vec<Vec<u64>>,
}

pub fn summarize_classification(
    outcomes: &[(Option<usize>, usize)],
    num_classes: usize,
) -> MetricSummary {
    let total = outcomes.len();
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    let mut support = vec![0usize; num_classes];
    let mut predicted_count = vec![0u64; num_classes];
    let mut correct = 0usize;

    for &(predicted, actual) in outcomes {
        support[actual] += 1;
        if let Some(p) = predicted {
            confusion[actual][p] += 1;
            predicted_count[p] += 1;
            if p == actual {
                correct += 1;
            }
        }
    }

    let mut per_class = Vec::with_capacity(num_classes);
    let mut f1_sum = 0.0;
    let mut f1_classes = 0usize;
    for c in 0..num_classes {
        let tp = confusion[c][c] as f64;
        let precision = if predicted_count[c] > 0 {
            tp / predicted_count[c] as f64
        } else {
            0.0
        };
        let recall = if support[c] > 0 {
            tp / support[c] as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if support[c] > 0 {
            f1_sum += f1;
            f1_classes += 1;
        }
        per_class.push(ClassMetrics {
            class_index: c,
            precision,
            recall,
            f1,
            support: support[c],
        });
    }

    MetricSummary {
        total,
        correct,
        accuracy: if total > 0 {
            correct as f64 / total as f64
        } else {
            0.0
        },
        macro_f1: if f1_classes > 0 {
            f1_sum / f1_classes as f64
        } else {
            0.0
        },
        per_class,
        confusion,
    }
}

/// Full scoring result of one predictor on one test log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub target: PredictionTarget,
    #[serde(flatten)]
    pub metrics: MetricSummary,
    /// Positions where the predictor raised impossible evidence; these are
    /// included in `total` as wrong answers.
    pub unanswerable: usize,
}

/// Score a predictor at positions 3..=T of every test trace.
pub fn evaluate_model<P: PointPredictor + ?Sized>(
    predictor: &P,
    test: &EncodedLog,
    target: PredictionTarget,
) -> Result<EvaluationReport> {
    let num_classes = predictor.num_classes(target)?;
    let mut outcomes: Vec<(Option<usize>, usize)> = Vec::new();
    let mut unanswerable = 0usize;

    for trace in &test.traces {
        for position in 3..=trace.len() {
            let actual = match target {
                PredictionTarget::NextEvent => trace.events[position - 1],
                PredictionTarget::CurrentSymptom => trace.symptoms[position - 1],
            };
            match predictor.predict_point(trace, position, target) {
                Ok(pred) => outcomes.push((Some(pred.argmax), actual)),
                Err(Error::ImpossibleEvidence { .. }) => {
                    unanswerable += 1;
                    outcomes.push((None, actual));
                }
                Err(e) => return Err(e),
            }
        }
    }

    if outcomes.is_empty() {
        return Err(Error::Config(
            "no evaluable positions: every test trace is shorter than 3 events".into(),
        ));
    }

    Ok(EvaluationReport {
        target,
        metrics: summarize_classification(&outcomes, num_classes),
        unanswerable,
    })
}
