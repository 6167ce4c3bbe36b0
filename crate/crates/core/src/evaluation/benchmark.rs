//! Repeated random-split comparison of model structures and baselines.
//!
//! Each repetition draws a fresh train/test split of the raw log, trains
//! every requested structure (plus a context-free model and an n-gram
//! sweep) on the train side, and scores next-event predictions on the
//! test side. Rows aggregate per-repetition scores into mean and sample
//! standard deviation. Everything is seeded, so a report is reproducible
//! byte for byte.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbn::{PredictionTarget, StructureVariant};
use crate::error::{Error, Result};
use crate::eventlog::{
    encode_log, encode_with_vocabulary, split_log, validate_roles, EventLog, RoleConfig,
};
use crate::evaluation::{evaluate_model, DbnPredictor};
use crate::learning::{select_hidden_states, EmConfig};

/// How a context attribute enters a benchmarked structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextRole {
    Background,
    Symptom,
}

impl std::fmt::Display for ContextRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ContextRole::Background => "background",
            ContextRole::Symptom => "symptom",
        })
    }
}

impl std::str::FromStr for ContextRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "background" => Ok(ContextRole::Background),
            "symptom" => Ok(ContextRole::Symptom),
            other => Err(Error::Config(format!(
                "unknown context role '{other}'; expected 'background' or 'symptom'"
            ))),
        }
    }
}

/// One attribute/role combination to benchmark as its own model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub attribute: String,
    pub role: ContextRole,
}

impl StructureSpec {
    pub fn new(attribute: impl Into<String>, role: ContextRole) -> Self {
        StructureSpec {
            attribute: attribute.into(),
            role,
        }
    }

    fn variant(&self) -> StructureVariant {
        match self.role {
            ContextRole::Background => StructureVariant::Background,
            ContextRole::Symptom => StructureVariant::Symptom,
        }
    }

    fn roles(&self) -> RoleConfig {
        match self.role {
            ContextRole::Background => RoleConfig::background(&self.attribute),
            ContextRole::Symptom => RoleConfig::symptom(&self.attribute),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Context structures to compare; a context-free model and the n-gram
    /// sweep are always included.
    pub structures: Vec<StructureSpec>,
    pub k_grid: Vec<usize>,
    pub em: EmConfig,
    pub repetitions: usize,
    pub split_ratio: f64,
    /// Split seed for repetition r is `seed + r`.
    pub seed: u64,
    pub ngram_orders: Vec<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            structures: Vec::new(),
            k_grid: vec![2, 4, 6, 8, 10],
            em: EmConfig::default(),
            repetitions: 10,
            split_ratio: 0.7,
            seed: 0,
            ngram_orders: (3..=7).collect(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.em.validate()?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must be strictly between 0 and 1, got {}",
                self.split_ratio
            )));
        }
        if self.k_grid.is_empty() {
            return Err(Error::Config("k_grid must not be empty".into()));
        }
        if self.ngram_orders.is_empty() {
            return Err(Error::Config("ngram_orders must not be empty".into()));
        }
        Ok(())
    }
}

/// Aggregated score of one structure or baseline across repetitions.
///
/// `raw_*` vectors hold one entry per successful repetition, in repetition
/// order. `chosen_complexity` records the selected hidden-state count for
/// model rows and the best-accuracy order for the n-gram row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub label: String,
    pub attribute: Option<String>,
    pub role: Option<ContextRole>,
    pub repetitions_used: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub raw_accuracy: Vec<f64>,
    pub raw_macro_f1: Vec<f64>,
    pub chosen_complexity: Vec<usize>,
}

/// Score of one n-gram order in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramRepRow {
    pub repetition: usize,
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFailure {
    pub repetition: usize,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub protocol: String,
    pub rows: Vec<BenchmarkRow>,
    pub ngram_table: Vec<NgramRepRow>,
    pub failures: Vec<BenchmarkFailure>,
}

struct StructureScore {
    accuracy: f64,
    macro_f1: f64,
    complexity: usize,
}

struct RepOutcome {
    repetition: usize,
    scores: Vec<StructureScore>,
    ngram_rows: Vec<(usize, f64, f64)>,
    ngram_best_acc: (usize, f64),
    ngram_best_f1: (usize, f64),
}

fn run_repetition(
    dataset: &EventLog,
    config: &BenchmarkConfig,
    rep: usize,
) -> std::result::Result<RepOutcome, BenchmarkFailure> {
    let fail = |stage: &str, e: Error| BenchmarkFailure {
        repetition: rep,
        stage: stage.to_string(),
        message: e.to_string(),
    };

    let split_seed = config.seed.wrapping_add(rep as u64);
    let (train_raw, test_raw) =
        split_log(dataset, config.split_ratio, split_seed).map_err(|e| fail("split", e))?;
    let mut em = config.em.clone();
    em.seed = config.em.seed.wrapping_add(rep as u64);

    let mut scores = Vec::new();
    let mut pfa_encoding = None;
    let all_roles: Vec<(StructureVariant, RoleConfig, String)> =
        std::iter::once((StructureVariant::Pfa, RoleConfig::none(), "pfa".to_string()))
            .chain(config.structures.iter().map(|s| {
                (
                    s.variant(),
                    s.roles(),
                    format!("{}:{}", s.role, s.attribute),
                )
            }))
            .collect();

    for (variant, roles, label) in &all_roles {
        let stage = label.as_str();
        let enc_train =
            encode_log(&train_raw, roles).map_err(|e| fail(stage, e))?;
        let enc_test = encode_with_vocabulary(&test_raw, &enc_train.vocabs)
            .map_err(|e| fail(stage, e))?;
        let (model, _, _) = select_hidden_states(*variant, &enc_train, &config.k_grid, &em)
            .map_err(|e| fail(stage, e))?;
        let report = evaluate_model(
            &DbnPredictor::new(&model),
            &enc_test,
            PredictionTarget::NextEvent,
        )
        .map_err(|e| fail(stage, e))?;
        scores.push(StructureScore {
            accuracy: report.metrics.accuracy,
            macro_f1: report.metrics.macro_f1,
            complexity: model.hidden_states,
        });
        if *variant == StructureVariant::Pfa {
            pfa_encoding = Some((enc_train, enc_test));
        }
    }

    let (enc_train, enc_test) = pfa_encoding.expect("context-free encoding always present");
    let sweep = crate::baselines::ngram_sweep(&enc_train, &enc_test, &config.ngram_orders)
        .map_err(|e| fail("ngram", e))?;
    let best_acc_row = sweep.rows.iter().find(|r| r.best_accuracy).unwrap();
    let best_f1_row = sweep.rows.iter().find(|r| r.best_f1).unwrap();

    Ok(RepOutcome {
        repetition: rep,
        scores,
        ngram_rows: sweep
            .rows
            .iter()
            .map(|r| (r.n, r.accuracy, r.macro_f1))
            .collect(),
        ngram_best_acc: (best_acc_row.n, best_acc_row.accuracy),
        ngram_best_f1: (best_f1_row.n, best_f1_row.macro_f1),
    })
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn finish_row(
    label: String,
    attribute: Option<String>,
    role: Option<ContextRole>,
    raw: Vec<(f64, f64, usize)>,
) -> BenchmarkRow {
    let raw_accuracy: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let raw_macro_f1: Vec<f64> = raw.iter().map(|r| r.1).collect();
    let chosen_complexity: Vec<usize> = raw.iter().map(|r| r.2).collect();
    let (mean_accuracy, std_accuracy) = mean_and_std(&raw_accuracy);
    let (mean_macro_f1, std_macro_f1) = mean_and_std(&raw_macro_f1);
    BenchmarkRow {
        label,
        attribute,
        role,
        repetitions_used: raw.len(),
        mean_accuracy,
        std_accuracy,
        mean_macro_f1,
        std_macro_f1,
        raw_accuracy,
        raw_macro_f1,
        chosen_complexity,
    }
}

/// Run the full comparison on a raw log.
///
/// A failed repetition is dropped from every row and recorded under
/// `failures`; successful repetitions keep their original indices in the
/// n-gram table.
pub fn run_benchmark(dataset: &EventLog, config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    if dataset.traces.is_empty() {
        return Err(Error::Config("benchmark dataset has no traces".into()));
    }
    for spec in &config.structures {
        validate_roles(dataset, &spec.roles())?;
    }

    let outcomes: Vec<std::result::Result<RepOutcome, BenchmarkFailure>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(dataset, config, rep))
        .collect();

    let num_structures = config.structures.len() + 1;
    let mut per_structure: Vec<Vec<(f64, f64, usize)>> = vec![Vec::new(); num_structures];
    let mut ngram_raw: Vec<(f64, f64, usize)> = Vec::new();
    let mut ngram_table = Vec::new();
    let mut failures = Vec::new();

    for outcome in outcomes {
        match outcome {
            Ok(rep) => {
                for (i, score) in rep.scores.iter().enumerate() {
                    per_structure[i].push((score.accuracy, score.macro_f1, score.complexity));
                }
                ngram_raw.push((rep.ngram_best_acc.1, rep.ngram_best_f1.1, rep.ngram_best_acc.0));
                for (n, accuracy, macro_f1) in rep.ngram_rows {
                    ngram_table.push(NgramRepRow {
                        repetition: rep.repetition,
                        n,
                        accuracy,
                        macro_f1,
                    });
                }
            }
            Err(failure) => failures.push(failure),
        }
    }

    let mut rows = Vec::with_capacity(num_structures + 1);
    let mut raw_iter = per_structure.into_iter();
    rows.push(finish_row(
        "pfa".into(),
        None,
        None,
        raw_iter.next().unwrap(),
    ));
    for (spec, raw) in config.structures.iter().zip(raw_iter) {
        rows.push(finish_row(
            format!("{}:{}", spec.role, spec.attribute),
            Some(spec.attribute.clone()),
            Some(spec.role),
            raw,
        ));
    }
    rows.push(finish_row("ngram".into(), None, None, ngram_raw));

    Ok(BenchmarkReport {
        config: config.clone(),
        protocol: format!(
            "{} independent {:.0}/{:.0} trace-level splits (split seeds {}..{}); next-event \
             predictions scored at positions 3..T of each test trace; rows report mean and \
             sample standard deviation over successful repetitions; the n-gram row takes each \
             repetition's best order by accuracy and by macro-F1 separately",
            config.repetitions,
            config.split_ratio * 100.0,
            (1.0 - config.split_ratio) * 100.0,
            config.seed,
            config.seed + config.repetitions as u64 - 1,
        ),
        rows,
        ngram_table,
        failures,
    })
}
