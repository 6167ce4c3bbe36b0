//! Inference checked against exhaustive path enumeration.

mod common;

use common::*;
use procdbn::dbn::{forward_pass, predict_next_event, trace_posteriors};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

#[test]
fn posteriors_match_enumeration_on_random_models() {
    for seed in 0..50u64 {
        let model = random_small_model(seed, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
        let t_len = rng.gen_range(2..=4);
        let trace = random_trace(&model, t_len, &mut rng);

        let oracle = enumerate_posteriors(&model, &trace);
        let fast = trace_posteriors(&model, &trace).unwrap();

        assert!(
            (fast.log_likelihood - oracle.log_likelihood).abs() <= TOL,
            "seed {seed}: log-likelihood {} vs oracle {}",
            fast.log_likelihood,
            oracle.log_likelihood
        );
        for t in 0..t_len {
            for h in 0..model.num_hidden() {
                assert!(
                    (fast.gammas[t][h] - oracle.gammas[t][h]).abs() <= TOL,
                    "seed {seed}: gamma[{t}][{h}] {} vs oracle {}",
                    fast.gammas[t][h],
                    oracle.gammas[t][h]
                );
            }
        }
        for t in 0..t_len - 1 {
            for h in 0..model.num_hidden() {
                for h2 in 0..model.num_hidden() {
                    assert!(
                        (fast.xis[t][h][h2] - oracle.xis[t][h][h2]).abs() <= TOL,
                        "seed {seed}: xi[{t}][{h}][{h2}] {} vs oracle {}",
                        fast.xis[t][h][h2],
                        oracle.xis[t][h][h2]
                    );
                }
            }
        }
    }
}

#[test]
fn forward_and_backward_likelihoods_agree() {
    for seed in 0..30u64 {
        let model = random_small_model(seed, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2000));
        let t_len = rng.gen_range(2..=6);
        let trace = random_trace(&model, t_len, &mut rng);

        let forward = forward_pass(&model, &trace, t_len).unwrap().log_likelihood;
        let backward = backward_only_log_likelihood(&model, &trace);
        assert!(
            (forward - backward).abs() <= TOL,
            "seed {seed}: forward {forward} vs backward {backward}"
        );
    }
}

#[test]
fn next_event_prediction_matches_enumeration() {
    for seed in 0..40u64 {
        let model = random_small_model(seed, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3000));
        let t_len = rng.gen_range(2..=4);
        let trace = random_trace(&model, t_len, &mut rng);
        let prefix_len = rng.gen_range(2..=t_len);
        let next_background = if model.variant.has_background() && rng.gen_bool(0.5) {
            Some(rng.gen_range(0..model.num_backgrounds()))
        } else {
            None
        };

        let fast = predict_next_event(&model, &trace, prefix_len, next_background).unwrap();
        let oracle = enumerate_next_event(&model, &trace, prefix_len, next_background);
        for e in 0..model.num_events() {
            assert!(
                (fast.probs[e] - oracle[e]).abs() <= TOL,
                "seed {seed}: P(next={e}) {} vs oracle {}",
                fast.probs[e],
                oracle[e]
            );
        }
    }
}
