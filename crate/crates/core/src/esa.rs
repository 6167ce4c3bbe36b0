//! Evidence-sensitivity analysis: how much the context changes a
//! next-event probability.
//!
//! For a point (trace, position p) the normalized likelihood NL is the
//! ratio of two probabilities of the observed event at p: the numerator
//! conditions on everything the model can see (prefix events, context
//! values, and for background models the context of slice p itself); the
//! denominator conditions on the prefix events only, with every context
//! variable marginalized out. NL > 1 means the context pushed probability
//! toward what actually happened, NL < 1 means it pushed away, NL = 1
//! means it made no difference.

use serde::{Deserialize, Serialize};

use crate::dbn::{predict_next_event, DbnModel, StructureVariant};
use crate::error::{Error, Result};
use crate::eventlog::{EncodedLog, EncodedTrace};

/// Tolerance for counting a point as "context made no difference".
pub const NL_EQUAL_TOL: f64 = 1e-6;

/// Next-event distribution after `prefix_len` slices with all context
/// variables marginalized out.
///
/// Each prefix slice contributes the joint factor over (background,
/// symptom, next hidden state) given the observed event; the query slice
/// marginalizes the background out of the event emission. The result is a
/// proper distribution over the activity axis.
pub fn context_free_event_distribution(
    model: &DbnModel,
    trace: &EncodedTrace,
    prefix_len: usize,
) -> Result<Vec<f64>> {
    let k = model.num_hidden();
    let (ne, nb, ns) = (
        model.num_events(),
        model.num_backgrounds(),
        model.num_symptoms(),
    );
    if prefix_len == 0 || prefix_len >= trace.len() {
        return Err(Error::Config(format!(
            "prefix length {prefix_len} must be in 1..{} for trace '{}'",
            trace.len(),
            trace.case_id
        )));
    }
    if let Some(&bad) = trace.events[..prefix_len].iter().find(|&&e| e >= ne) {
        return Err(Error::Config(format!(
            "event index {bad} is outside the activity vocabulary (size {ne})"
        )));
    }

    let mut rho = model.initial_h.clone();
    for t in 0..prefix_len {
        let e = trace.events[t];
        let mut next = vec![0.0; k];
        for h in 0..k {
            if rho[h] == 0.0 {
                continue;
            }
            for b in 0..nb {
                let pb = model.background_emit.get(h, b);
                if pb == 0.0 {
                    continue;
                }
                let pe = model.event_emit.get(model.event_row(h, b), e);
                if pe == 0.0 {
                    continue;
                }
                let base = rho[h] * pb * pe;
                for s in 0..ns {
                    let ps = model.symptom_emit.get(e, s);
                    if ps == 0.0 {
                        continue;
                    }
                    let row = model.transition_row(h, e, b, s);
                    let w = base * ps;
                    for (h2, x) in next.iter_mut().enumerate() {
                        *x += w * model.transition.get(row, h2);
                    }
                }
            }
        }
        let c: f64 = next.iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::ImpossibleEvidence {
                case_id: trace.case_id.clone(),
                slice: t + 1,
            });
        }
        for x in &mut next {
            *x /= c;
        }
        rho = next;
    }

    let mut probs = vec![0.0; ne];
    for (h, &r) in rho.iter().enumerate() {
        for b in 0..nb {
            let pb = r * model.background_emit.get(h, b);
            if pb == 0.0 {
                continue;
            }
            let row = model.event_row(h, b);
            for (e, p) in probs.iter_mut().enumerate() {
                *p += pb * model.event_emit.get(row, e);
            }
        }
    }
    Ok(probs)
}

/// Normalized likelihood of the observed event at the 1-based `position`.
///
/// Requires a model with at least one context variable and `position` in
/// 3..=T. Returns `f64::INFINITY` when the context-free probability of the
/// observed event is zero.
pub fn nl_at_point(model: &DbnModel, trace: &EncodedTrace, position: usize) -> Result<f64> {
    if model.variant == StructureVariant::Pfa {
        return Err(Error::Config(
            "evidence sensitivity needs a model with a context variable; this one has none"
                .into(),
        ));
    }
    if position < 3 || position > trace.len() {
        return Err(Error::Config(format!(
            "position {position} must be in 3..={} for trace '{}'",
            trace.len(),
            trace.case_id
        )));
    }

    let next_background = model
        .variant
        .has_background()
        .then(|| trace.backgrounds[position - 1]);
    let full = predict_next_event(model, trace, position - 1, next_background)?;
    let free = context_free_event_distribution(model, trace, position - 1)?;
    let e_true = trace.events[position - 1];
    let denominator = free[e_true];
    if denominator <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(full.probs[e_true] / denominator)
}

/// One evaluated point. `nl` is `None` when the lift is infinite (the
/// context-free probability of the observed event is zero), which JSON
/// cannot represent as a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlPoint {
    pub case_id: String,
    pub position: usize,
    pub nl: Option<f64>,
}

/// Five-number summary of the finite NL values, with quartiles by
/// inclusive linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsaReport {
    pub points: Vec<NlPoint>,
    /// Absent when every point is infinite.
    pub summary: Option<NlSummary>,
    /// Points with NL > 1 + tolerance; infinite points count here.
    pub count_above: usize,
    /// Points with |NL - 1| <= 1e-6.
    pub count_equal: usize,
    pub count_below: usize,
    pub infinite_points: usize,
    /// Points whose full-evidence prefix has zero probability under the
    /// model; these produce no NL value.
    pub skipped_points: usize,
}

fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = (sorted.len() - 1) as f64 * q;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    sorted[lo] + (idx - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Evaluate NL at positions 3..=T of every trace and summarize.
pub fn esa_report(model: &DbnModel, log: &EncodedLog) -> Result<EsaReport> {
    if model.variant == StructureVariant::Pfa {
        return Err(Error::Config(
            "evidence sensitivity needs a model with a context variable; this one has none"
                .into(),
        ));
    }
    if model.vocabs != log.vocabs {
        return Err(Error::Config(
            "model and log vocabularies do not match".into(),
        ));
    }

    let mut points = Vec::new();
    let mut skipped_points = 0usize;
    for trace in &log.traces {
        for position in 3..=trace.len() {
            match nl_at_point(model, trace, position) {
                Ok(nl) => points.push(NlPoint {
                    case_id: trace.case_id.clone(),
                    position,
                    nl: nl.is_finite().then_some(nl),
                }),
                Err(Error::ImpossibleEvidence { .. }) => skipped_points += 1,
                Err(e) => return Err(e),
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Config(format!(
            "no evaluable points: {skipped_points} skipped, every other trace is shorter than \
             3 events"
        )));
    }

    let mut finite: Vec<f64> = points.iter().filter_map(|p| p.nl).collect();
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let infinite_points = points.len() - finite.len();

    let mut count_above = infinite_points;
    let mut count_equal = 0usize;
    let mut count_below = 0usize;
    for &nl in &finite {
        if (nl - 1.0).abs() <= NL_EQUAL_TOL {
            count_equal += 1;
        } else if nl > 1.0 {
            count_above += 1;
        } else {
            count_below += 1;
        }
    }

    let summary = (!finite.is_empty()).then(|| NlSummary {
        min: finite[0],
        q1: interpolated_quantile(&finite, 0.25),
        median: interpolated_quantile(&finite, 0.5),
        q3: interpolated_quantile(&finite, 0.75),
        max: finite[finite.len() - 1],
    });

    Ok(EsaReport {
        points,
        summary,
        count_above,
        count_equal,
        count_below,
        infinite_points,
        skipped_points,
    })
}
