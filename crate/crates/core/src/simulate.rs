//! Monte Carlo sampling of scenario sequences.
//!
//! Randomness comes from ChaCha8 (`rand_chacha` 0.3), which is portable and
//! value-stable across platforms. Runs are grouped in fixed batches of
//! [`BATCH`]; batch `i` draws from its own generator seeded with
//! `splitmix64(seed + (i + 1) · γ)`, so the report does not depend on the
//! number of threads or the order in which batches finish.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClosedLoopDtmc, Distribution};
use crate::summary::{ChainSet, ScenarioSequence};

pub const BATCH: u64 = 4096;
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub runs: u64,
    pub error_hits: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub seed: u64,
}

impl SimReport {
    fn new(runs: u64, error_hits: u64, seed: u64) -> Self {
        let estimate = error_hits as f64 / runs as f64;
        Self {
            runs,
            error_hits,
            estimate,
            std_error: (estimate * (1.0 - estimate) / runs as f64).sqrt(),
            seed,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of batch `i` under master seed `seed`.
pub fn batch_seed(seed: u64, i: u64) -> u64 {
    splitmix64(seed.wrapping_add((i + 1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Inverse-CDF draw over `(index, weight)` pairs in their stored order.
/// Rounding slack at the top of the CDF goes to the last positive entry.
fn categorical(items: impl Iterator<Item = (usize, f64)>, rng: &mut impl Rng) -> Option<usize> {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last = None;
    for (i, p) in items {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last = Some(i);
        if u < cum {
            return last;
        }
    }
    last
}

fn resolve<'a>(seq: &ScenarioSequence, chains: &'a ChainSet) -> Result<Vec<(&'a ClosedLoopDtmc, u32)>> {
    let steps: Vec<_> = seq
        .scenarios()
        .iter()
        .map(|s| {
            chains
                .get(&s.env)
                .map(|m| (m, s.horizon))
                .ok_or_else(|| Error::UnknownEnvironment(s.env.clone()))
        })
        .collect::<Result<_>>()?;
    let n = steps[0].0.space().len();
    if let Some((m, _)) = steps.iter().find(|(m, _)| m.space().len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.space().len(),
        });
    }
    Ok(steps)
}

fn run(steps: &[(&ClosedLoopDtmc, u32)], start: usize, rng: &mut impl Rng) -> (bool, usize) {
    let err = steps[0].0.error_index();
    let mut s = start;
    for &(m, h) in steps {
        for _ in 0..h {
            if s == err {
                return (true, s);
            }
            s = categorical(m.row(s), rng).expect("validated rows carry mass");
        }
    }
    (s == err, s)
}

/// One trajectory from `start`; returns whether the error state was hit and
/// the final state.
pub fn sample_trajectory(
    seq: &ScenarioSequence,
    chains: &ChainSet,
    start: usize,
    seed: u64,
) -> Result<(bool, usize)> {
    let steps = resolve(seq, chains)?;
    let space = steps[0].0.space();
    if start >= space.non_error_len() {
        return Err(Error::InvalidParameter(format!(
            "start state #{start} is not a non-error state"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(run(&steps, start, &mut rng))
}

/// `n` independent runs with starts drawn from `init` over the non-error
/// states.
pub fn estimate_error_probability(
    seq: &ScenarioSequence,
    chains: &ChainSet,
    init: &Distribution,
    n: u64,
    seed: u64,
) -> Result<SimReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("at least one run is required".into()));
    }
    let steps = resolve(seq, chains)?;
    let dim = steps[0].0.space().non_error_len();
    if init.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: init.len(),
        });
    }
    let batches = n.div_ceil(BATCH);
    let hits: u64 = (0..batches)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(batch_seed(seed, i));
            let size = BATCH.min(n - i * BATCH);
            (0..size)
                .filter(|_| {
                    let start = categorical(init.weights().iter().copied().enumerate(), &mut rng)
                        .expect("distribution has mass");
                    run(&steps, start, &mut rng).0
                })
                .count() as u64
        })
        .sum();
    Ok(SimReport::new(n, hits, seed))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::StateSpace;
    use crate::sparse::CsrMatrix;
    use crate::summary::Scenario;

    fn example() -> ChainSet {
        let space = Arc::new(StateSpace::new(vec!["s1".into(), "s2".into()], "err").unwrap());
        let p = CsrMatrix::from_dense(&[
            vec![0.6, 0.2, 0.2],
            vec![0.2, 0.7, 0.1],
            vec![0.0, 0.0, 1.0],
        ]);
        let mut c = ChainSet::new();
        c.insert("e".into(), ClosedLoopDtmc::new(space, p).unwrap());
        c
    }

    fn seq(h: u32) -> ScenarioSequence {
        ScenarioSequence::single(Scenario::new("e", h).unwrap())
    }

    #[test]
    fn identity_chain_stays_put() {
        let space = Arc::new(StateSpace::new(vec!["a".into(), "b".into()], "err").unwrap());
        let mut c = ChainSet::new();
        c.insert("e".into(), ClosedLoopDtmc::new(space, CsrMatrix::identity(3)).unwrap());
        for seed in 0..20 {
            let seq = ScenarioSequence::single(Scenario::new("e", 7).unwrap());
            assert_eq!(sample_trajectory(&seq, &c, 1, seed).unwrap(), (false, 1));
        }
    }

    #[test]
    fn certain_failure() {
        let space = Arc::new(StateSpace::new(vec!["a".into()], "err").unwrap());
        let p = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![0.0, 1.0]]);
        let mut c = ChainSet::new();
        c.insert("e".into(), ClosedLoopDtmc::new(space, p).unwrap());
        let seq = ScenarioSequence::single(Scenario::new("e", 3).unwrap());
        assert_eq!(sample_trajectory(&seq, &c, 0, 9).unwrap(), (true, 1));
    }

    #[test]
    fn seeded_runs_repeat() {
        let c = example();
        let a: Vec<_> = (0..50).map(|s| sample_trajectory(&seq(1), &c, 0, s).unwrap()).collect();
        let b: Vec<_> = (0..50).map(|s| sample_trajectory(&seq(1), &c, 0, s).unwrap()).collect();
        assert_eq!(a, b);
        let r1 = estimate_error_probability(&seq(2), &c, &Distribution::uniform(2), 10_000, 3).unwrap();
        let r2 = estimate_error_probability(&seq(2), &c, &Distribution::uniform(2), 10_000, 3).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn report_is_thread_count_independent() {
        let c = example();
        let init = Distribution::uniform(2);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let r1 = one.install(|| estimate_error_probability(&seq(2), &c, &init, 20_000, 5).unwrap());
        let r2 = estimate_error_probability(&seq(2), &c, &init, 20_000, 5).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn one_step_estimate_matches_summary() {
        let r = estimate_error_probability(&seq(1), &example(), &Distribution::uniform(2), 100_000, 42)
            .unwrap();
        assert!((r.estimate - 0.15).abs() <= 3.0 * r.std_error, "{r:?}");
        assert_eq!(r.estimate, r.error_hits as f64 / r.runs as f64);
    }

    #[test]
    fn two_step_estimate_matches_composed_summary() {
        let r = estimate_error_probability(&seq(2), &example(), &Distribution::point(2, 0), 100_000, 7)
            .unwrap();
        assert!((r.estimate - 0.34).abs() <= 3.0 * r.std_error, "{r:?}");
    }

    #[test]
    fn bad_inputs() {
        let c = example();
        assert!(estimate_error_probability(&seq(1), &c, &Distribution::uniform(2), 0, 1).is_err());
        assert!(sample_trajectory(&seq(1), &c, 2, 1).is_err());
        let other = ScenarioSequence::single(Scenario::new("x", 1).unwrap());
        assert!(matches!(
            sample_trajectory(&other, &c, 0, 1),
            Err(Error::UnknownEnvironment(_))
        ));
    }
}
