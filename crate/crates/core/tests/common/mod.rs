//! Shared fixtures and independent oracles for the integration tests.
//!
//! The oracles deliberately avoid the library's recursions: posteriors come
//! from exhaustive enumeration over hidden paths, and baseline
//! distributions from direct counting. Tests compare the fast
//! implementations against these.

#![allow(dead_code)]

use procdbn::dbn::{DbnModel, StructureVariant};
use procdbn::eventlog::{EncodedLog, EncodedTrace, RoleVocab, Vocab, Vocabularies};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Vocabularies with the given numbers of observed labels; every present
/// axis also carries the two reserved trailing slots.
pub fn vocabs_for(
    n_events: usize,
    n_backgrounds: Option<usize>,
    n_symptoms: Option<usize>,
) -> Vocabularies {
    Vocabularies {
        activity: Vocab::from_values(labels("e", n_events)).unwrap(),
        background: n_backgrounds.map(|n| RoleVocab {
            attribute: "bg".into(),
            vocab: Vocab::from_values(labels("b", n)).unwrap(),
        }),
        symptom: n_symptoms.map(|n| RoleVocab {
            attribute: "sy".into(),
            vocab: Vocab::from_values(labels("s", n)).unwrap(),
        }),
    }
}

pub fn raw_trace(events: &[usize], backgrounds: &[usize], symptoms: &[usize]) -> EncodedTrace {
    EncodedTrace {
        case_id: "t".into(),
        events: events.to_vec(),
        backgrounds: backgrounds.to_vec(),
        symptoms: symptoms.to_vec(),
    }
}

pub fn event_trace(events: &[usize]) -> EncodedTrace {
    raw_trace(events, &vec![0; events.len()], &vec![0; events.len()])
}

pub fn single_trace_log(trace: EncodedTrace, vocabs: Vocabularies) -> EncodedLog {
    EncodedLog {
        traces: vec![trace],
        vocabs,
    }
}

/// Random observation indices over the full axes of a model, reserved
/// slots included.
pub fn random_trace(model: &DbnModel, len: usize, rng: &mut ChaCha8Rng) -> EncodedTrace {
    let events = (0..len).map(|_| rng.gen_range(0..model.num_events())).collect();
    let backgrounds = (0..len)
        .map(|_| rng.gen_range(0..model.num_backgrounds()))
        .collect();
    let symptoms = (0..len)
        .map(|_| rng.gen_range(0..model.num_symptoms()))
        .collect();
    EncodedTrace {
        case_id: "r".into(),
        events,
        backgrounds,
        symptoms,
    }
}

/// Observation factor of one slice for hidden state `h`:
/// P(b|h)·P(e|h,b)·P(s|e).
pub fn slice_factor(model: &DbnModel, h: usize, e: usize, b: usize, s: usize) -> f64 {
    model.background_emit.get(h, b)
        * model.event_emit.get(model.event_row(h, b), e)
        * model.symptom_emit.get(e, s)
}

pub struct EnumeratedPosteriors {
    pub log_likelihood: f64,
    pub gammas: Vec<Vec<f64>>,
    pub xis: Vec<Vec<Vec<f64>>>,
}

/// Exact posteriors by summing the full joint over all K^T hidden paths.
pub fn enumerate_posteriors(model: &DbnModel, trace: &EncodedTrace) -> EnumeratedPosteriors {
    let t_len = trace.len();
    let k = model.num_hidden();
    assert!(t_len >= 1);

    let mut total = 0.0;
    let mut gammas = vec![vec![0.0; k]; t_len];
    let mut xis = vec![vec![vec![0.0; k]; k]; t_len.saturating_sub(1)];

    let mut path = vec![0usize; t_len];
    loop {
        let (e0, b0, s0) = trace.slice(0);
        let mut weight = model.initial_h[path[0]] * slice_factor(model, path[0], e0, b0, s0);
        for t in 1..t_len {
            let (pe, pb, ps) = trace.slice(t - 1);
            let (e, b, s) = trace.slice(t);
            weight *= model
                .transition
                .get(model.transition_row(path[t - 1], pe, pb, ps), path[t])
                * slice_factor(model, path[t], e, b, s);
        }

        total += weight;
        for t in 0..t_len {
            gammas[t][path[t]] += weight;
        }
        for t in 0..t_len - 1 {
            xis[t][path[t]][path[t + 1]] += weight;
        }

        // Odometer increment over the K^T path space.
        let mut pos = 0;
        loop {
            if pos == t_len {
                break;
            }
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
        if pos == t_len {
            break;
        }
    }

    for slice in &mut gammas {
        for x in slice.iter_mut() {
            *x /= total;
        }
    }
    for xi in &mut xis {
        for row in xi.iter_mut() {
            for x in row.iter_mut() {
                *x /= total;
            }
        }
    }
    EnumeratedPosteriors {
        log_likelihood: total.ln(),
        gammas,
        xis,
    }
}

/// Trace log-likelihood from an unscaled backward-only recursion.
pub fn backward_only_log_likelihood(model: &DbnModel, trace: &EncodedTrace) -> f64 {
    let t_len = trace.len();
    let k = model.num_hidden();
    let mut beta = vec![1.0; k];
    for t in (0..t_len - 1).rev() {
        let (e, b, s) = trace.slice(t);
        let (ne, nb, ns) = trace.slice(t + 1);
        let mut prev = vec![0.0; k];
        for h in 0..k {
            let row = model.transition.row(model.transition_row(h, e, b, s));
            prev[h] = (0..k)
                .map(|h2| row[h2] * slice_factor(model, h2, ne, nb, ns) * beta[h2])
                .sum();
        }
        beta = prev;
    }
    let (e0, b0, s0) = trace.slice(0);
    let total: f64 = (0..k)
        .map(|h| model.initial_h[h] * slice_factor(model, h, e0, b0, s0) * beta[h])
        .sum();
    total.ln()
}

/// Next-event distribution by exhaustive joint enumeration: extend the
/// prefix with every candidate (h-path, next event) and, when the model has
/// a background variable, the given next-background observation.
pub fn enumerate_next_event(
    model: &DbnModel,
    trace: &EncodedTrace,
    prefix_len: usize,
    next_background: Option<usize>,
) -> Vec<f64> {
    let k = model.num_hidden();
    let ne = model.num_events();
    let nb = model.num_backgrounds();

    // Joint mass over the hidden state at the last prefix slice.
    let post = {
        let sub = EncodedTrace {
            case_id: trace.case_id.clone(),
            events: trace.events[..prefix_len].to_vec(),
            backgrounds: trace.backgrounds[..prefix_len].to_vec(),
            symptoms: trace.symptoms[..prefix_len].to_vec(),
        };
        enumerate_posteriors(model, &sub)
    };
    let alpha = &post.gammas[prefix_len - 1];

    let (e, b, s) = trace.slice(prefix_len - 1);
    let mut probs = vec![0.0; ne];
    for h in 0..k {
        for h2 in 0..k {
            let reach = alpha[h] * model.transition.get(model.transition_row(h, e, b, s), h2);
            if model.variant.has_background() {
                let bn = next_background.unwrap_or_else(|| {
                    model
                        .vocabs
                        .background
                        .as_ref()
                        .unwrap()
                        .vocab
                        .missing_index()
                });
                let pb = model.background_emit.get(h2, bn);
                for ev in 0..ne {
                    probs[ev] +=
                        reach * pb * model.event_emit.get(model.event_row(h2, bn), ev);
                }
            } else {
                for bv in 0..nb {
                    let pb = model.background_emit.get(h2, bv);
                    for ev in 0..ne {
                        probs[ev] +=
                            reach * pb * model.event_emit.get(model.event_row(h2, bv), ev);
                    }
                }
            }
        }
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// A random valid model for a given seed, cycling structure variants and
/// small axis sizes.
pub fn random_small_model(seed: u64, max_hidden: usize) -> DbnModel {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD_EF01);
    let variant = StructureVariant::ALL[(seed % 4) as usize];
    let k = rng.gen_range(1..=max_hidden);
    let n_events = rng.gen_range(2..=3);
    let n_bg = variant.has_background().then(|| rng.gen_range(1..=2));
    let n_sym = variant.has_symptom().then(|| rng.gen_range(1..=2));
    let vocabs = vocabs_for(n_events, n_bg, n_sym);
    procdbn::dbn::init_model(variant, k, &vocabs, seed).unwrap()
}
