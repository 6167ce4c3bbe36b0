//! Parameter fitting by expectation-maximization.
//!
//! The E-step runs exact forward-backward per trace and accumulates
//! expected counts in a fixed trace order; the M-step adds a smoothing
//! constant to every count cell and renormalizes rows. Each iteration first
//! evaluates the current parameters, so the recorded likelihood history is
//! non-decreasing; if a smoothed update ever lowers the likelihood the
//! update is rolled back and the fit stops at the better model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbn::{
    init_model, predict_next_event, trace_posteriors, Cpd, DbnModel, StructureVariant,
};
use crate::error::{Error, Result};
use crate::eventlog::EncodedLog;

/// Slack for the non-decreasing likelihood guarantee.
const MONOTONICITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub smoothing_epsilon: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 200,
            rel_tol: 1e-6,
            smoothing_epsilon: 1e-6,
            restarts: 5,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if !(self.smoothing_epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "smoothing_epsilon must be non-negative, got {}",
                self.smoothing_epsilon
            )));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one fit: the likelihood trajectory and how it ended.
///
/// `history[i]` is the training log-likelihood of the parameters in force
/// at iteration i; the returned model is the one achieving the last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restart_seed: u64,
    pub smoothing_epsilon: f64,
    pub smoothing_note: String,
}

fn smoothing_note(epsilon: f64) -> String {
    if epsilon > 0.0 {
        format!(
            "expected counts smoothed by {epsilon} per cell before row normalization so that \
             held-out observations keep nonzero probability; unvisited conditioning rows become \
             uniform; set epsilon to 0 for raw maximum-likelihood updates"
        )
    } else {
        "no count smoothing (epsilon = 0); unvisited conditioning rows become uniform".into()
    }
}

/// Expected-count tables of one E-step.
struct Counts {
    initial: Vec<f64>,
    background: Cpd,
    event: Cpd,
    symptom: Cpd,
    transition: Cpd,
}

/// One E-step: expected counts under the current parameters plus the
/// training log-likelihood of those parameters. Accumulates in trace order.
fn expected_counts(model: &DbnModel, train: &EncodedLog) -> Result<(Counts, f64)> {
    let k = model.num_hidden();
    let (ne, nb, ns) = (
        model.num_events(),
        model.num_backgrounds(),
        model.num_symptoms(),
    );
    let mut counts = Counts {
        initial: vec![0.0; k],
        background: Cpd::zeros(k, nb),
        event: Cpd::zeros(k * nb, ne),
        symptom: Cpd::zeros(ne, ns),
        transition: Cpd::zeros(k * ne * nb * ns, k),
    };
    let mut log_likelihood = 0.0;

    for trace in &train.traces {
        let post = trace_posteriors(model, trace)?;
        log_likelihood += post.log_likelihood;

        for h in 0..k {
            counts.initial[h] += post.gammas[0][h];
        }
        for t in 0..trace.len() {
            let (e, b, s) = trace.slice(t);
            for h in 0..k {
                let g = post.gammas[t][h];
                counts.background.add(h, b, g);
                counts.event.add(model.event_row(h, b), e, g);
            }
            counts.symptom.add(e, s, 1.0);
        }
        for t in 0..trace.len() - 1 {
            let (e, b, s) = trace.slice(t);
            for h in 0..k {
                let row = model.transition_row(h, e, b, s);
                for h2 in 0..k {
                    counts.transition.add(row, h2, post.xis[t][h][h2]);
                }
            }
        }
    }
    Ok((counts, log_likelihood))
}

/// M-step: smooth every count cell and renormalize into the model.
fn apply_m_step(model: &mut DbnModel, mut counts: Counts, epsilon: f64) {
    for x in &mut counts.initial {
        *x += epsilon;
    }
    let total: f64 = counts.initial.iter().sum();
    let k = counts.initial.len();
    if total > 0.0 {
        for x in &mut counts.initial {
            *x /= total;
        }
    } else {
        counts.initial.fill(1.0 / k as f64);
    }
    for cpd in [
        &mut counts.background,
        &mut counts.event,
        &mut counts.symptom,
        &mut counts.transition,
    ] {
        cpd.add_constant(epsilon);
        cpd.normalize_rows();
    }
    model.initial_h = counts.initial;
    model.background_emit = counts.background;
    model.event_emit = counts.event;
    model.symptom_emit = counts.symptom;
    model.transition = counts.transition;
}

/// Fit parameters from the given starting point.
pub fn em_fit(
    initial: &DbnModel,
    train: &EncodedLog,
    config: &EmConfig,
) -> Result<(DbnModel, FitReport)> {
    config.validate()?;
    if train.traces.is_empty() {
        return Err(Error::Config("cannot fit on an empty training log".into()));
    }
    if initial.vocabs != train.vocabs {
        return Err(Error::Config(
            "model and training log vocabularies do not match".into(),
        ));
    }
    if train.traces.iter().any(|t| t.is_empty()) {
        return Err(Error::Config("training log contains an empty trace".into()));
    }

    let mut model = initial.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut previous: Option<(f64, DbnModel)> = None;

    for _ in 0..config.max_iters {
        let (counts, ll) = expected_counts(&model, train)?;
        if let Some((prev_ll, prev_model)) = &previous {
            if ll < prev_ll - MONOTONICITY_SLACK {
                // The smoothed update lowered the likelihood; keep the
                // better previous parameters.
                model = prev_model.clone();
                converged = true;
                break;
            }
            history.push(ll);
            let denom = prev_ll.abs().max(f64::MIN_POSITIVE);
            if (ll - prev_ll).abs() / denom < config.rel_tol {
                converged = true;
                break;
            }
        } else {
            history.push(ll);
        }
        previous = Some((ll, model.clone()));
        apply_m_step(&mut model, counts, config.smoothing_epsilon);
    }

    let final_ll = *history.last().unwrap();
    model.metadata.em_iterations = history.len();
    model.metadata.final_log_likelihood = Some(final_ll);
    let report = FitReport {
        iterations: history.len(),
        history,
        converged,
        restart_seed: initial.metadata.seed,
        smoothing_epsilon: config.smoothing_epsilon,
        smoothing_note: smoothing_note(config.smoothing_epsilon),
    };
    Ok((model, report))
}

/// Fit from `config.restarts` random initializations seeded `seed`,
/// `seed+1`, … and keep the one with the highest final training
/// log-likelihood (ties to the earliest restart).
pub fn train_with_restarts(
    variant: StructureVariant,
    hidden_states: usize,
    train: &EncodedLog,
    config: &EmConfig,
) -> Result<(DbnModel, FitReport)> {
    config.validate()?;
    let fits: Vec<Result<(DbnModel, FitReport)>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = config.seed.wrapping_add(r as u64);
            let initial = init_model(variant, hidden_states, &train.vocabs, seed)?;
            em_fit(&initial, train, config)
        })
        .collect();

    let mut best: Option<(DbnModel, FitReport)> = None;
    for fit in fits {
        let (model, report) = fit?;
        let ll = *report.history.last().unwrap();
        let better = match &best {
            None => true,
            Some((_, best_report)) => ll > *best_report.history.last().unwrap(),
        };
        if better {
            best = Some((model, report));
        }
    }
    Ok(best.unwrap())
}

/// One row of the hidden-state-count selection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionRow {
    pub hidden_states: usize,
    pub validation_accuracy: f64,
    pub validation_positions: usize,
    pub final_log_likelihood: f64,
    pub chosen: bool,
}

/// Next-event accuracy over positions 3..=T of every trace, conditioning
/// on each predicted slice's observed background when the model has one.
/// Predictions the model cannot make (impossible evidence) count as wrong.
fn next_event_accuracy(model: &DbnModel, log: &EncodedLog) -> Result<(f64, usize)> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for trace in &log.traces {
        for position in 3..=trace.len() {
            let target = trace.events[position - 1];
            let next_background = model
                .variant
                .has_background()
                .then(|| trace.backgrounds[position - 1]);
            total += 1;
            match predict_next_event(model, trace, position - 1, next_background) {
                Ok(pred) if pred.argmax == target => correct += 1,
                Ok(_) => {}
                Err(Error::ImpossibleEvidence { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let accuracy = if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    };
    Ok((accuracy, total))
}

/// Pick the hidden-state count from a grid by internal-validation
/// next-event accuracy, then retrain the winner on the full training set.
///
/// The internal split is 80/20 at trace level, seeded by `config.seed`.
/// Ties go to the smaller count.
pub fn select_hidden_states(
    variant: StructureVariant,
    train: &EncodedLog,
    k_grid: &[usize],
    config: &EmConfig,
) -> Result<(DbnModel, FitReport, Vec<KSelectionRow>)> {
    config.validate()?;
    if k_grid.is_empty() {
        return Err(Error::Config("hidden-state grid must not be empty".into()));
    }
    if k_grid.iter().any(|&k| k == 0) {
        return Err(Error::Config("hidden-state counts must be at least 1".into()));
    }
    let mut grid: Vec<usize> = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();

    let (inner_train, inner_val) = train.split_traces(0.8, config.seed)?;

    let fits: Vec<Result<(usize, f64, usize, f64)>> = grid
        .par_iter()
        .map(|&k| {
            let (model, report) = train_with_restarts(variant, k, &inner_train, config)?;
            let (accuracy, positions) = next_event_accuracy(&model, &inner_val)?;
            Ok((k, accuracy, positions, *report.history.last().unwrap()))
        })
        .collect();

    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for fit in fits {
        let (k, accuracy, positions, ll) = fit?;
        table.push(KSelectionRow {
            hidden_states: k,
            validation_accuracy: accuracy,
            validation_positions: positions,
            final_log_likelihood: ll,
            chosen: false,
        });
        // Strict improvement required: on ties the earlier (smaller) count
        // stays.
        if best.map_or(true, |(_, best_acc)| accuracy > best_acc) {
            best = Some((k, accuracy));
        }
    }
    let (best_k, _) = best.unwrap();
    for row in &mut table {
        row.chosen = row.hidden_states == best_k;
    }

    let (model, report) = train_with_restarts(variant, best_k, train, config)?;
    Ok((model, report, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dbn::log_likelihood;
    use crate::eventlog::{EncodedLog, EncodedTrace};
    use crate::testutil::{event_trace, raw_trace, vocabs_for};
    use approx::assert_abs_diff_eq;

    fn log_from_traces(traces: Vec<EncodedTrace>, vocabs: crate::eventlog::Vocabularies) -> EncodedLog {
        EncodedLog { traces, vocabs }
    }

    fn quick_config(seed: u64) -> EmConfig {
        EmConfig {
            max_iters: 50,
            restarts: 1,
            seed,
            ..EmConfig::default()
        }
    }

    #[test]
    fn k1_counts_give_closed_form_emissions() {
        let vocabs = vocabs_for(2, None, None);
        let train = log_from_traces(vec![event_trace(&[0, 1])], vocabs.clone());
        let initial = init_model(StructureVariant::Pfa, 1, &vocabs, 0).unwrap();
        let config = EmConfig {
            smoothing_epsilon: 0.0,
            max_iters: 10,
            restarts: 1,
            seed: 0,
            ..EmConfig::default()
        };
        let (model, report) = em_fit(&initial, &train, &config).unwrap();
        assert_eq!(model.event_emit.row(0), &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(model.initial_h, vec![1.0]);
        assert!(report.converged);
    }

    fn two_regime_log(n_each: usize) -> EncodedLog {
        // Regime 1: s0 a x a; regime 2: s1 b x b. The event after x is
        // determined by the first event, which a single last-event state
        // cannot carry.
        let vocabs = vocabs_for(5, None, None);
        let (s0, s1, a, b, x) = (0, 1, 2, 3, 4);
        let mut traces = Vec::new();
        for i in 0..n_each {
            let mut t1 = event_trace(&[s0, a, x, a]);
            t1.case_id = format!("r1_{i}");
            let mut t2 = event_trace(&[s1, b, x, b]);
            t2.case_id = format!("r2_{i}");
            traces.push(t1);
            traces.push(t2);
        }
        log_from_traces(traces, vocabs)
    }

    #[test]
    fn history_is_non_decreasing() {
        let train = two_regime_log(10);
        for seed in 0..4 {
            let initial = init_model(StructureVariant::Pfa, 3, &train.vocabs, seed).unwrap();
            let (_, report) = em_fit(&initial, &train, &quick_config(seed)).unwrap();
            for w in report.history.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-9,
                    "seed {seed}: history decreased {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn final_model_achieves_last_history_entry() {
        let train = two_regime_log(5);
        let initial = init_model(StructureVariant::Pfa, 2, &train.vocabs, 7).unwrap();
        let (model, report) = em_fit(&initial, &train, &quick_config(7)).unwrap();
        let ll = log_likelihood(&model, &train).unwrap();
        assert_abs_diff_eq!(ll.total, *report.history.last().unwrap(), epsilon = 1e-9);
        assert_eq!(model.metadata.final_log_likelihood, Some(*report.history.last().unwrap()));
        model.validate().unwrap();
    }

    #[test]
    fn expected_counts_conserve_mass() {
        let vocabs = vocabs_for(3, Some(2), Some(2));
        let traces = vec![
            raw_trace(&[0, 1, 2, 1], &[0, 1, 2, 3], &[1, 0, 2, 3]),
            raw_trace(&[2, 0, 1], &[1, 1, 0], &[0, 0, 1]),
            raw_trace(&[1, 1], &[2, 2], &[3, 1]),
        ];
        let total_events: usize = traces.iter().map(|t| t.len()).sum();
        let total_transitions = total_events - traces.len();
        let train = log_from_traces(traces, vocabs.clone());
        let model = init_model(StructureVariant::Full, 3, &vocabs, 11).unwrap();

        let (counts, _) = expected_counts(&model, &train).unwrap();
        let sum = |cpd: &Cpd| -> f64 {
            (0..cpd.num_rows()).map(|r| cpd.row(r).iter().sum::<f64>()).sum()
        };
        assert_abs_diff_eq!(counts.initial.iter().sum::<f64>(), 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sum(&counts.transition), total_transitions as f64, epsilon = 1e-9);
        assert_abs_diff_eq!(sum(&counts.event), total_events as f64, epsilon = 1e-9);
        assert_abs_diff_eq!(sum(&counts.background), total_events as f64, epsilon = 1e-9);
        assert_abs_diff_eq!(sum(&counts.symptom), total_events as f64, epsilon = 1e-9);
    }

    #[test]
    fn single_restart_equals_plain_fit() {
        let train = two_regime_log(5);
        let config = quick_config(3);
        let initial = init_model(StructureVariant::Pfa, 2, &train.vocabs, 3).unwrap();
        let (direct, direct_report) = em_fit(&initial, &train, &config).unwrap();
        let (restarted, restart_report) =
            train_with_restarts(StructureVariant::Pfa, 2, &train, &config).unwrap();
        assert_eq!(direct, restarted);
        assert_eq!(direct_report, restart_report);
    }

    #[test]
    fn restarts_pick_the_highest_likelihood() {
        let train = two_regime_log(5);
        let config = EmConfig {
            restarts: 3,
            ..quick_config(40)
        };
        let (_, chosen) = train_with_restarts(StructureVariant::Pfa, 2, &train, &config).unwrap();
        let chosen_ll = *chosen.history.last().unwrap();
        for r in 0..3 {
            let seed = 40 + r;
            let initial = init_model(StructureVariant::Pfa, 2, &train.vocabs, seed).unwrap();
            let (_, report) = em_fit(&initial, &train, &quick_config(seed)).unwrap();
            assert!(*report.history.last().unwrap() <= chosen_ll + 1e-9);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let train = two_regime_log(6);
        let config = EmConfig {
            restarts: 2,
            ..quick_config(9)
        };
        let a = train_with_restarts(StructureVariant::Pfa, 2, &train, &config).unwrap();
        let b = train_with_restarts(StructureVariant::Pfa, 2, &train, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selection_returns_singleton_grid_unconditionally() {
        let train = two_regime_log(10);
        let (model, _, table) =
            select_hidden_states(StructureVariant::Pfa, &train, &[3], &quick_config(1)).unwrap();
        assert_eq!(model.hidden_states, 3);
        assert_eq!(table.len(), 1);
        assert!(table[0].chosen);
    }

    #[test]
    fn selection_prefers_more_states_when_memory_is_needed() {
        let train = two_regime_log(20);
        let config = EmConfig {
            restarts: 3,
            max_iters: 100,
            seed: 5,
            ..EmConfig::default()
        };
        let (model, _, table) =
            select_hidden_states(StructureVariant::Pfa, &train, &[1, 2], &config).unwrap();
        assert_eq!(model.hidden_states, 2, "selection table: {table:?}");
        let acc = |k: usize| {
            table
                .iter()
                .find(|row| row.hidden_states == k)
                .unwrap()
                .validation_accuracy
        };
        assert!(acc(2) > acc(1));
    }

    #[test]
    fn selection_breaks_ties_toward_fewer_states() {
        // Strict alternation: two states suffice for perfect prediction,
        // so two and three states tie on validation accuracy.
        let vocabs = vocabs_for(2, None, None);
        let traces = (0..20)
            .map(|i| {
                let mut t = event_trace(&[0, 1, 0, 1, 0, 1]);
                t.case_id = format!("c{i}");
                t
            })
            .collect();
        let train = log_from_traces(traces, vocabs);
        let config = EmConfig {
            restarts: 3,
            max_iters: 100,
            seed: 2,
            ..EmConfig::default()
        };
        let (model, _, table) =
            select_hidden_states(StructureVariant::Pfa, &train, &[3, 2], &config).unwrap();
        let acc = |k: usize| {
            table
                .iter()
                .find(|row| row.hidden_states == k)
                .unwrap()
                .validation_accuracy
        };
        assert_eq!(acc(2), 1.0, "selection table: {table:?}");
        assert_eq!(acc(2), acc(3));
        assert_eq!(model.hidden_states, 2);
    }

    #[test]
    fn config_and_input_validation() {
        let train = two_regime_log(2);
        let bad = EmConfig {
            max_iters: 0,
            ..EmConfig::default()
        };
        let initial = init_model(StructureVariant::Pfa, 1, &train.vocabs, 0).unwrap();
        assert!(matches!(em_fit(&initial, &train, &bad), Err(Error::Config(_))));

        let empty = EncodedLog {
            traces: vec![],
            vocabs: train.vocabs.clone(),
        };
        assert!(matches!(
            em_fit(&initial, &empty, &quick_config(0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            select_hidden_states(StructureVariant::Pfa, &train, &[], &quick_config(0)),
            Err(Error::Config(_))
        ));
    }
}
