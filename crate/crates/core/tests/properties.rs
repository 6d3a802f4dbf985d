#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use percheck_core::analysis::{
    accelerate, acceleration_bound, backward_weakest_precondition, check_assertion, forward_worst_case,
    rule1_compose, trivial_epsilon, HoareAssertion, Obligation,
};
use percheck_core::linprog::{maximize_over_simplex, AffinePredicate, LpStatus};
use percheck_core::summary::{compose, summarize, summarize_with, PowerMethod, Summary};
use percheck_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Survivor distribution `norm(xA)` and error `x·b`, computed densely.
fn run_dense(c: &Summary, x: &[f64]) -> (f64, Option<Vec<f64>>) {
    let a = c.a().to_dense();
    let err = dot(x, c.b());
    let n = x.len();
    let y: Vec<f64> = (0..n).map(|j| (0..n).map(|i| x[i] * a[i][j]).sum()).collect();
    let mass: f64 = y.iter().sum();
    (err, (mass > 1e-12).then(|| y.iter().map(|v| v / mass).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lp_matches_vertex_enumeration(seed in any::<u64>(), n in 1usize..=4, k in 0usize..=3) {
        let mut r = rng(seed);
        let c: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let pred = if r.gen_bool(0.8) {
            random_feasible_predicate(&mut r, n, k)
        } else {
            // arbitrary thresholds, often infeasible
            let mut p = AffinePredicate::top();
            for _ in 0..k {
                p = p.with((0..n).map(|_| r.gen_range(-1.0..1.0)).collect(), r.gen_range(-0.5..0.5));
            }
            p
        };
        let sol = maximize_over_simplex(&c, &pred).unwrap();
        match vertex_max(&c, &pred) {
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            Some((v, _)) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective_value - v).abs() < 1e-7, "{} vs {}", sol.objective_value, v);
                prop_assert!(pred.holds_at(&sol.witness, 1e-7));
                prop_assert!((sol.witness.iter().sum::<f64>() - 1.0).abs() < 1e-7);
                prop_assert!(sol.witness.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn summary_matches_path_enumeration(seed in any::<u64>(), n in 1usize..=5, h in 1u32..=6) {
        let mut r = rng(seed);
        let m = random_chain(&mut r, n, 3);
        let c = summarize(&m, h).unwrap();
        let b = path_enumeration_b(&m, h);
        for (x, y) in c.b().iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let pow = dense_power(&m.transitions().to_dense(), h);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((c.a().get(i, j) - pow[i][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn power_methods_agree(seed in any::<u64>(), n in 1usize..=12, h in 1u32..=40) {
        let m = random_chain(&mut rng(seed), n, 4);
        let a = summarize_with(&m, h, PowerMethod::RowPropagation).unwrap();
        let b = summarize_with(&m, h, PowerMethod::Squaring).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn segmentation_law(seed in any::<u64>(), n in 1usize..=10, h1 in 1u32..=8, h2 in 1u32..=8) {
        let m = random_chain(&mut rng(seed), n, 4);
        let whole = summarize(&m, h1 + h2).unwrap();
        let parts = compose(&summarize(&m, h1).unwrap(), &summarize(&m, h2).unwrap()).unwrap();
        prop_assert!(whole.max_abs_diff(&parts) < 1e-9);
    }

    #[test]
    fn composition_is_associative(seed in any::<u64>(), n in 1usize..=6) {
        let mut r = rng(seed);
        let (c1, c2, c3) = (random_summary(&mut r, n), random_summary(&mut r, n), random_summary(&mut r, n));
        let left = compose(&compose(&c1, &c2).unwrap(), &c3).unwrap();
        let right = compose(&c1, &compose(&c2, &c3).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
        let id = Summary::identity(n);
        prop_assert!(compose(&id, &c1).unwrap().max_abs_diff(&c1) < 1e-15);
        prop_assert!(compose(&c1, &id).unwrap().max_abs_diff(&c1) < 1e-15);
    }

    #[test]
    fn check_assertion_agrees_with_sampling(seed in any::<u64>(), n in 2usize..=4) {
        let mut r = rng(seed);
        let c = random_summary(&mut r, n);
        let k_pre = r.gen_range(0..=2);
        let pre = random_feasible_predicate(&mut r, n, k_pre);
        let k_post = r.gen_range(1..=2);
        let post = random_feasible_predicate(&mut r, n, k_post);
        let eps = r.gen_range(0.0..1.0);
        let v = check_assertion(&HoareAssertion::new(&pre, &c, &post, eps).unwrap()).unwrap();
        prop_assert!(!v.vacuous);
        if v.holds {
            let mut checked = 0;
            for _ in 0..10_000 {
                let x = random_distribution(&mut r, n);
                if !pre.holds_at(&x, 0.0) {
                    continue;
                }
                checked += 1;
                let (err, y) = run_dense(&c, &x);
                prop_assert!(err <= eps + 1e-9);
                if let Some(y) = y {
                    prop_assert!(post.holds_at(&y, 1e-9), "x = {:?}, y = {:?}", x, y);
                }
            }
            prop_assume!(checked > 0);
        } else {
            let x = v.counterexample.clone().unwrap();
            prop_assert!(pre.holds_at(&x, 1e-7));
            let (err, y) = run_dense(&c, &x);
            match v.violated_obligation.unwrap() {
                Obligation::ErrorBound => prop_assert!(err > eps),
                Obligation::Postcondition { index } => {
                    let k = &post.constraints[index];
                    // multiplied-through form, exact for err < 1
                    let lhs = dot(&x, &c.a().mul_vec(&k.a)) + k.theta * err;
                    prop_assert!(lhs > k.theta);
                    if let Some(y) = y {
                        prop_assert!(k.eval(&y) > k.theta - 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn weakest_precondition_is_weakest(seed in any::<u64>(), n in 1usize..=5, t in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let c = random_summary(&mut r, n);
        let lo = c.b().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.b().iter().copied().fold(0.0, f64::max);
        let eps = lo + t * (hi - lo);
        let wp = backward_weakest_precondition(&c, eps).unwrap();
        let wc = forward_worst_case(&c, &wp).unwrap();
        prop_assert!((wc.value - eps).abs() < 1e-7, "{} vs {}", wc.value, eps);
        for _ in 0..200 {
            let x = random_distribution(&mut r, n);
            prop_assert_eq!(wp.holds_at(&x, 0.0), dot(&x, c.b()) <= eps);
        }
    }

    #[test]
    fn trivial_epsilon_premise_always_holds(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=4) {
        let mut r = rng(seed);
        let sums: Vec<Summary> = (0..m).map(|_| random_summary(&mut r, n)).collect();
        let cert = accelerate(&sums, &AffinePredicate::top(), trivial_epsilon(&sums)).unwrap();
        prop_assert!(cert.premise_checked);
    }

    #[test]
    fn bound_is_monotone_and_at_most_one(eps in 0.0f64..=1.0, k in 1u32..200) {
        let a = acceleration_bound(eps, k);
        let b = acceleration_bound(eps, k + 1);
        prop_assert!(a <= b && b <= 1.0 && a >= 0.0);
        prop_assert!((acceleration_bound(eps, 1) - eps).abs() < 1e-15);
    }

    #[test]
    fn rule1_is_sound(seed in any::<u64>(), n in 2usize..=4) {
        let mut r = rng(seed);
        let (c1, c2) = (random_summary(&mut r, n), random_summary(&mut r, n));
        let k_phi = r.gen_range(0..=2);
        let phi = random_feasible_predicate(&mut r, n, k_phi);
        let eps1 = forward_worst_case(&c1, &phi).unwrap().value.min(1.0);
        // tightest psi = {y·a ≤ θ} with {phi} C1 {psi} {eps1}, by bisection on θ
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let holds = |theta: f64| {
            let psi = AffinePredicate::single(a.clone(), theta);
            check_assertion(&HoareAssertion::new(&phi, &c1, &psi, eps1).unwrap()).unwrap().holds
        };
        let (mut lo, mut hi) = (a.iter().copied().fold(f64::INFINITY, f64::min) - 1e-9, a.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1e-9);
        prop_assert!(holds(hi));
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if holds(mid) { hi = mid } else { lo = mid }
        }
        // widen past the entailment slack so the premise holds exactly
        let psi = AffinePredicate::single(a.clone(), hi + 1e-7);
        let eps2 = match forward_worst_case(&c2, &psi) {
            Ok(w) => w.value.min(1.0),
            Err(Error::VacuousPrecondition) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let truth = forward_worst_case(&compose(&c1, &c2).unwrap(), &phi).unwrap().value;
        prop_assert!(truth <= rule1_compose(eps1, eps2) + 1e-9, "{} > {}", truth, rule1_compose(eps1, eps2));
    }
}
