//! Exact inference on the single hidden chain.
//!
//! All context variables are observed, so filtering and smoothing reduce to
//! scaled forward-backward over H at O(T·K²) per trace. Alphas are
//! renormalized per slice and the log scale factors accumulate into the
//! trace log-likelihood.

use serde::{Deserialize, Serialize};

use super::DbnModel;
use crate::error::{Error, Result};
use crate::eventlog::{EncodedLog, EncodedTrace};

/// Filtered belief over the hidden state after some prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    /// Normalized P(H at the last slice | observations so far).
    pub alpha: Vec<f64>,
    /// log P(observations so far).
    pub log_likelihood: f64,
}

/// Smoothed posteriors over one full trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    /// Per slice t: P(H at t | whole trace). Length T.
    pub gammas: Vec<Vec<f64>>,
    /// Per transition t: joint P(H at t, H at t+1 | whole trace). Length T−1.
    pub xis: Vec<Vec<Vec<f64>>>,
    pub log_likelihood: f64,
}

/// What a prediction ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionTarget {
    NextEvent,
    CurrentSymptom,
}

/// How to read the symptom query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymptomQuery {
    /// Condition on the current slice's observed event.
    #[default]
    Conditional,
    /// Marginalize the current event out of the next-event prediction made
    /// one slice earlier.
    Marginal,
}

/// A normalized distribution over a prediction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub target: PredictionTarget,
    pub probs: Vec<f64>,
    /// Index of the largest probability; ties resolve to the lowest index.
    pub argmax: usize,
}

/// Corpus log-likelihood with the count of traces the model assigns
/// probability zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    /// Σ over traces of log P(trace); −∞ when any trace is impossible.
    pub total: f64,
    pub impossible_traces: usize,
}

pub(crate) fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn check_trace(model: &DbnModel, trace: &EncodedTrace) -> Result<()> {
    let (ne, nb, ns) = (
        model.num_events(),
        model.num_backgrounds(),
        model.num_symptoms(),
    );
    if trace.backgrounds.len() != trace.events.len() || trace.symptoms.len() != trace.events.len()
    {
        return Err(Error::Config(format!(
            "trace '{}': context sequences do not match the event sequence length",
            trace.case_id
        )));
    }
    for t in 0..trace.len() {
        let (e, b, s) = trace.slice(t);
        if e >= ne || b >= nb || s >= ns {
            return Err(Error::Config(format!(
                "trace '{}': index out of range at position {} (event {e} < {ne}, \
                 background {b} < {nb}, symptom {s} < {ns} required)",
                trace.case_id,
                t + 1
            )));
        }
    }
    Ok(())
}

/// Per-hidden-state observation weight of one slice:
/// P(b|h)·P(e|h,b)·P(s|e).
fn slice_weights(model: &DbnModel, e: usize, b: usize, s: usize) -> Vec<f64> {
    let k = model.num_hidden();
    let sym = model.symptom_emit.get(e, s);
    (0..k)
        .map(|h| {
            model.background_emit.get(h, b) * model.event_emit.get(model.event_row(h, b), e) * sym
        })
        .collect()
}

struct Sweep {
    /// Normalized alpha per slice.
    alphas: Vec<Vec<f64>>,
    /// Observation weights per slice.
    weights: Vec<Vec<f64>>,
    /// Per-slice scale factors c_t; log_likelihood = Σ ln c_t.
    scales: Vec<f64>,
    log_likelihood: f64,
}

fn forward_sweep(model: &DbnModel, trace: &EncodedTrace, prefix_len: usize) -> Result<Sweep> {
    if prefix_len == 0 || prefix_len > trace.len() {
        return Err(Error::Config(format!(
            "prefix length {prefix_len} outside 1..={}",
            trace.len()
        )));
    }
    check_trace(model, trace)?;

    let k = model.num_hidden();
    let mut alphas: Vec<Vec<f64>> = Vec::with_capacity(prefix_len);
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(prefix_len);
    let mut scales: Vec<f64> = Vec::with_capacity(prefix_len);
    let mut log_likelihood = 0.0;

    for t in 0..prefix_len {
        let (e, b, s) = trace.slice(t);
        let w = slice_weights(model, e, b, s);
        let mut a = vec![0.0; k];
        if t == 0 {
            for h in 0..k {
                a[h] = model.initial_h[h] * w[h];
            }
        } else {
            let prev = &alphas[t - 1];
            let (pe, pb, ps) = trace.slice(t - 1);
            for h in 0..k {
                let mass = prev[h];
                if mass == 0.0 {
                    continue;
                }
                let row = model.transition.row(model.transition_row(h, pe, pb, ps));
                for h2 in 0..k {
                    a[h2] += mass * row[h2];
                }
            }
            for h2 in 0..k {
                a[h2] *= w[h2];
            }
        }
        let c: f64 = a.iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::ImpossibleEvidence {
                case_id: trace.case_id.clone(),
                slice: t + 1,
            });
        }
        for x in &mut a {
            *x /= c;
        }
        log_likelihood += c.ln();
        alphas.push(a);
        weights.push(w);
        scales.push(c);
    }

    Ok(Sweep {
        alphas,
        weights,
        scales,
        log_likelihood,
    })
}

/// Filter the hidden state through the first `prefix_len` slices.
pub fn forward_pass(
    model: &DbnModel,
    trace: &EncodedTrace,
    prefix_len: usize,
) -> Result<ForwardState> {
    let sweep = forward_sweep(model, trace, prefix_len)?;
    Ok(ForwardState {
        alpha: sweep.alphas.into_iter().next_back().unwrap(),
        log_likelihood: sweep.log_likelihood,
    })
}

/// Smoothed per-slice and per-transition hidden-state posteriors over a
/// whole trace.
pub fn trace_posteriors(model: &DbnModel, trace: &EncodedTrace) -> Result<Posteriors> {
    let t_len = trace.len();
    let sweep = forward_sweep(model, trace, t_len)?;
    let k = model.num_hidden();

    let mut betas = vec![vec![1.0; k]; t_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        let (e, b, s) = trace.slice(t);
        let c_next = sweep.scales[t + 1];
        let w_next = &sweep.weights[t + 1];
        let beta_next: Vec<f64> = (0..k).map(|h2| betas[t + 1][h2] * w_next[h2] / c_next).collect();
        for h in 0..k {
            let row = model.transition.row(model.transition_row(h, e, b, s));
            betas[t][h] = (0..k).map(|h2| row[h2] * beta_next[h2]).sum();
        }
    }

    let gammas: Vec<Vec<f64>> = (0..t_len)
        .map(|t| (0..k).map(|h| sweep.alphas[t][h] * betas[t][h]).collect())
        .collect();

    let mut xis = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 0..t_len.saturating_sub(1) {
        let (e, b, s) = trace.slice(t);
        let c_next = sweep.scales[t + 1];
        let w_next = &sweep.weights[t + 1];
        let mut xi = vec![vec![0.0; k]; k];
        for h in 0..k {
            let row = model.transition.row(model.transition_row(h, e, b, s));
            let mass = sweep.alphas[t][h];
            for h2 in 0..k {
                xi[h][h2] = mass * row[h2] * w_next[h2] * betas[t + 1][h2] / c_next;
            }
        }
        xis.push(xi);
    }

    Ok(Posteriors {
        gammas,
        xis,
        log_likelihood: sweep.log_likelihood,
    })
}

/// Distribution over the event of the slice after the prefix.
///
/// When the model carries a background variable, its value at the predicted
/// slice conditions the query; `None` then stands for an absent value.
/// Supplying `next_background` to a model without that variable is a
/// configuration error.
pub fn predict_next_event(
    model: &DbnModel,
    trace: &EncodedTrace,
    prefix_len: usize,
    next_background: Option<usize>,
) -> Result<PredictionDistribution> {
    if prefix_len < 2 {
        return Err(Error::Config(format!(
            "next-event prediction needs a prefix of at least 2 events, got {prefix_len}"
        )));
    }
    if next_background.is_some() && !model.variant.has_background() {
        return Err(Error::Config(format!(
            "variant '{}' has no background variable to condition on",
            model.variant
        )));
    }
    if let Some(b) = next_background {
        if b >= model.num_backgrounds() {
            return Err(Error::Config(format!(
                "background index {b} out of range (< {})",
                model.num_backgrounds()
            )));
        }
    }

    let sweep = forward_sweep(model, trace, prefix_len)?;
    let alpha = sweep.alphas.last().unwrap();
    let (e, b, s) = trace.slice(prefix_len - 1);
    let k = model.num_hidden();
    let ne = model.num_events();
    let nb = model.num_backgrounds();

    // Predicted belief over the next hidden state.
    let mut rho = vec![0.0; k];
    for h in 0..k {
        let mass = alpha[h];
        if mass == 0.0 {
            continue;
        }
        let row = model.transition.row(model.transition_row(h, e, b, s));
        for h2 in 0..k {
            rho[h2] += mass * row[h2];
        }
    }

    let mut probs = vec![0.0; ne];
    if model.variant.has_background() {
        let b_next = next_background.unwrap_or_else(|| {
            model.vocabs.background.as_ref().unwrap().vocab.missing_index()
        });
        let total: f64 = (0..k).map(|h2| rho[h2] * model.background_emit.get(h2, b_next)).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ImpossibleEvidence {
                case_id: trace.case_id.clone(),
                slice: prefix_len + 1,
            });
        }
        for h2 in 0..k {
            let mass = rho[h2] * model.background_emit.get(h2, b_next) / total;
            if mass == 0.0 {
                continue;
            }
            let row = model.event_emit.row(model.event_row(h2, b_next));
            for ev in 0..ne {
                probs[ev] += mass * row[ev];
            }
        }
    } else {
        for h2 in 0..k {
            let mass = rho[h2];
            if mass == 0.0 {
                continue;
            }
            for bv in 0..nb {
                let joint = mass * model.background_emit.get(h2, bv);
                if joint == 0.0 {
                    continue;
                }
                let row = model.event_emit.row(model.event_row(h2, bv));
                for ev in 0..ne {
                    probs[ev] += joint * row[ev];
                }
            }
        }
    }

    let total: f64 = probs.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ImpossibleEvidence {
            case_id: trace.case_id.clone(),
            slice: prefix_len + 1,
        });
    }
    for p in &mut probs {
        *p /= total;
    }
    let argmax = argmax(&probs);
    Ok(PredictionDistribution {
        target: PredictionTarget::NextEvent,
        probs,
        argmax,
    })
}

/// Distribution over the symptom of the slice at the end of the prefix.
pub fn predict_symptom(
    model: &DbnModel,
    trace: &EncodedTrace,
    prefix_len: usize,
    query: SymptomQuery,
) -> Result<PredictionDistribution> {
    if !model.variant.has_symptom() {
        return Err(Error::Config(format!(
            "variant '{}' has no symptom variable to predict",
            model.variant
        )));
    }
    if prefix_len == 0 || prefix_len > trace.len() {
        return Err(Error::Config(format!(
            "prefix length {prefix_len} outside 1..={}",
            trace.len()
        )));
    }
    check_trace(model, trace)?;

    let ns = model.num_symptoms();
    let probs = match query {
        SymptomQuery::Conditional => {
            let e = trace.events[prefix_len - 1];
            model.symptom_emit.row(e).to_vec()
        }
        SymptomQuery::Marginal => {
            if prefix_len < 3 {
                return Err(Error::Config(format!(
                    "marginal symptom prediction needs a prefix of at least 3 events, \
                     got {prefix_len}"
                )));
            }
            let next_background = if model.variant.has_background() {
                Some(trace.backgrounds[prefix_len - 1])
            } else {
                None
            };
            let next = predict_next_event(model, trace, prefix_len - 1, next_background)?;
            let mut probs = vec![0.0; ns];
            for (e, &pe) in next.probs.iter().enumerate() {
                if pe == 0.0 {
                    continue;
                }
                let row = model.symptom_emit.row(e);
                for s in 0..ns {
                    probs[s] += pe * row[s];
                }
            }
            probs
        }
    };

    let argmax = argmax(&probs);
    Ok(PredictionDistribution {
        target: PredictionTarget::CurrentSymptom,
        probs,
        argmax,
    })
}

/// Corpus log-likelihood. Traces the model cannot generate are counted
/// rather than raised; any such trace makes the total −∞.
pub fn log_likelihood(model: &DbnModel, log: &EncodedLog) -> Result<LogLikelihood> {
    if log.traces.is_empty() {
        return Err(Error::Config("log-likelihood of an empty log".into()));
    }
    let mut total = 0.0;
    let mut impossible_traces = 0;
    for trace in &log.traces {
        match forward_pass(model, trace, trace.len()) {
            Ok(state) => total += state.log_likelihood,
            Err(Error::ImpossibleEvidence { .. }) => impossible_traces += 1,
            Err(e) => return Err(e),
        }
    }
    if impossible_traces > 0 {
        total = f64::NEG_INFINITY;
    }
    Ok(LogLikelihood {
        total,
        impossible_traces,
    })
}
