mod common;

use common::*;
use percheck_core::model::Distribution;
use percheck_core::simulate::{estimate_error_probability, sample_trajectory};
use percheck_core::summary::{apply, summarize_sequence, ChainSet, Scenario, ScenarioSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn estimates_agree_with_summaries_across_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut trials, mut within) = (0, 0);
    for cfg in 0..5 {
        let n = rng.gen_range(2..=6);
        let mut chains = ChainSet::new();
        chains.insert("e".into(), random_chain(&mut rng, n, 3));
        let seq = ScenarioSequence::single(Scenario::new("e", rng.gen_range(1..=5)).unwrap());
        let x = Distribution::new(random_distribution(&mut rng, n)).unwrap();
        let (xb, _) = apply(&summarize_sequence(&seq, &chains).unwrap(), &x).unwrap();
        for seed in 0..20u64 {
            let r = estimate_error_probability(&seq, &chains, &x, 20_000, seed * 31 + cfg).unwrap();
            assert_eq!(r.error_hits as f64 / r.runs as f64, r.estimate);
            trials += 1;
            if (r.estimate - xb).abs() <= 4.0 * r.std_error + 1e-15 {
                within += 1;
            }
        }
    }
    assert!(within * 100 >= trials * 99, "{within} of {trials} within 4 standard errors");
}

#[test]
fn trajectories_are_seed_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut chains = ChainSet::new();
    chains.insert("e".into(), random_chain(&mut rng, 5, 3));
    let seq = ScenarioSequence::single(Scenario::new("e", 6).unwrap());
    for seed in 0..50 {
        let a = sample_trajectory(&seq, &chains, seed as usize % 5, seed).unwrap();
        let b = sample_trajectory(&seq, &chains, seed as usize % 5, seed).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0, a.1 == 5);
    }
}
