//! Forward and backward analyses, assertion checking and acceleration.
//!
//! An assertion `{φ} C {ψ} {ε}` over a summary `C = (A, b)` holds when every
//! distribution `x` satisfying `φ` has `x·b ≤ ε` and `ψ(xA / (1 − x·b))`.
//! For an affine constraint `y·a ≤ θ` of `ψ` the normalized obligation is
//! multiplied through by the positive mass `1 − x·b`, which yields the linear
//! obligation `x·(A a + θ b) ≤ θ`. At `x·b = 1` this form reads `0 ≤ 0` and
//! is accepted. Each obligation is one LP over `φ ∩ Δ`.

use std::borrow::Borrow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linprog::{
    dot, entails_with_witness, is_feasible, maximize_over_simplex, AffinePredicate, LpStatus,
};
use crate::model::Distribution;
use crate::summary::Summary;

/// Upper limit on `m^k` for [`worst_case_interleaving`].
pub const INTERLEAVING_BUDGET: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub value: f64,
    pub witness: Distribution,
}

/// `max x·b` over `pre ∩ Δ` with a maximizing distribution.
pub fn forward_worst_case(c: &Summary, pre: &AffinePredicate) -> Result<WorstCase> {
    let sol = maximize_over_simplex(c.b(), pre)?;
    match sol.status {
        LpStatus::Optimal => Ok(WorstCase {
            value: sol.objective_value,
            witness: to_distribution(sol.witness),
        }),
        _ => Err(Error::VacuousPrecondition),
    }
}

fn to_distribution(mut w: Vec<f64>) -> Distribution {
    // LP witnesses sum to one up to solver noise; renormalize exactly
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        for v in &mut w {
            *v /= s;
        }
    }
    Distribution::new(w).expect("LP witness is a distribution")
}

/// `{x : x·b ≤ ε}`, the weakest precondition for error at most `ε`.
pub fn backward_weakest_precondition(c: &Summary, epsilon: f64) -> Result<AffinePredicate> {
    check_epsilon(epsilon)?;
    Ok(AffinePredicate::single(c.b().to_vec(), epsilon))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if (0.0..=1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("epsilon {epsilon} is outside [0, 1]")))
    }
}

/// Error probability from each point distribution, i.e. `b` keyed by label.
pub fn point_distribution_error_map(c: &Summary, labels: &[String]) -> Result<Vec<(String, f64)>> {
    if labels.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: labels.len(),
        });
    }
    Ok(labels.iter().cloned().zip(c.b().iter().copied()).collect())
}

#[derive(Clone, Copy, Debug)]
pub struct HoareAssertion<'a> {
    pub pre: &'a AffinePredicate,
    pub summary: &'a Summary,
    pub post: &'a AffinePredicate,
    pub epsilon: f64,
}

impl<'a> HoareAssertion<'a> {
    pub fn new(
        pre: &'a AffinePredicate,
        summary: &'a Summary,
        post: &'a AffinePredicate,
        epsilon: f64,
    ) -> Result<Self> {
        check_epsilon(epsilon)?;
        pre.check_dim(summary.dim())?;
        post.check_dim(summary.dim())?;
        Ok(Self {
            pre,
            summary,
            post,
            epsilon,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obligation {
    ErrorBound,
    /// Index of the failing postcondition constraint.
    Postcondition { index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionVerdict {
    pub holds: bool,
    /// The precondition admits no distribution; the assertion holds vacuously.
    pub vacuous: bool,
    /// Worst-case error under the precondition (absent when vacuous).
    pub max_error: Option<f64>,
    pub violated_obligation: Option<Obligation>,
    /// Value of the violated obligation's left-hand side at the counterexample.
    pub violation_value: Option<f64>,
    /// Right-hand side the violation exceeds.
    pub violation_bound: Option<f64>,
    pub counterexample: Option<Vec<f64>>,
}

/// Linear form of the postcondition constraint `y·a ≤ θ` applied to
/// `norm(xA)`: returns the coefficients `A a + θ b`.
pub fn postcondition_coefficients(c: &Summary, a: &[f64], theta: f64) -> Vec<f64> {
    c.a()
        .mul_vec(a)
        .into_iter()
        .zip(c.b())
        .map(|(aa, b)| aa + theta * b)
        .collect()
}

pub fn check_assertion(h: &HoareAssertion<'_>) -> Result<AssertionVerdict> {
    let c = h.summary;
    let (ok, sol) = entails_with_witness(h.pre, c.b(), h.epsilon)?;
    if sol.status == LpStatus::Infeasible {
        return Ok(AssertionVerdict {
            holds: true,
            vacuous: true,
            max_error: None,
            violated_obligation: None,
            violation_value: None,
            violation_bound: None,
            counterexample: None,
        });
    }
    let max_error = sol.objective_value;
    if !ok {
        return Ok(AssertionVerdict {
            holds: false,
            vacuous: false,
            max_error: Some(max_error),
            violated_obligation: Some(Obligation::ErrorBound),
            violation_value: Some(max_error),
            violation_bound: Some(h.epsilon),
            counterexample: Some(sol.witness),
        });
    }
    for (index, k) in h.post.constraints.iter().enumerate() {
        let coeff = postcondition_coefficients(c, &k.a, k.theta);
        let (ok, sol) = entails_with_witness(h.pre, &coeff, k.theta)?;
        if !ok {
            return Ok(AssertionVerdict {
                holds: false,
                vacuous: false,
                max_error: Some(max_error),
                violated_obligation: Some(Obligation::Postcondition { index }),
                violation_value: Some(sol.objective_value),
                violation_bound: Some(k.theta),
                counterexample: Some(sol.witness),
            });
        }
    }
    Ok(AssertionVerdict {
        holds: true,
        vacuous: false,
        max_error: Some(max_error),
        violated_obligation: None,
        violation_value: None,
        violation_bound: None,
        counterexample: None,
    })
}

/// Error bound of a sequential composition: `1 − (1 − ε₁)(1 − ε₂)`.
pub fn rule1_compose(eps1: f64, eps2: f64) -> f64 {
    1.0 - (1.0 - eps1) * (1.0 - eps2)
}

/// Error bound of any `k`-fold interleaving: `1 − (1 − ε)^k`.
pub fn acceleration_bound(epsilon: f64, k: u32) -> f64 {
    1.0 - (1.0 - epsilon).powi(k as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelerationCertificate {
    /// Number of summaries the invariant was checked against.
    pub m: usize,
    pub invariant: AffinePredicate,
    pub epsilon: f64,
    pub premise_checked: bool,
    pub premises: Vec<AssertionVerdict>,
    pub bound_formula: String,
}

impl AccelerationCertificate {
    pub fn bound(&self, k: u32) -> f64 {
        acceleration_bound(self.epsilon, k)
    }

    /// `(k, bound)` for `k = 1..=k_max`.
    pub fn bound_table(&self, k_max: u32) -> Vec<(u32, f64)> {
        (1..=k_max).map(|k| (k, self.bound(k))).collect()
    }
}

/// Checks `{φ} C_i {φ} {ε}` for every summary; on success the certificate
/// bounds every interleaving of length `k` by `1 − (1 − ε)^k`.
pub fn accelerate<S: Borrow<Summary>>(
    summaries: &[S],
    phi: &AffinePredicate,
    epsilon: f64,
) -> Result<AccelerationCertificate> {
    if summaries.is_empty() {
        return Err(Error::InvalidParameter("acceleration needs at least one summary".into()));
    }
    let mut premises = Vec::with_capacity(summaries.len());
    for (index, c) in summaries.iter().enumerate() {
        let h = HoareAssertion::new(phi, c.borrow(), phi, epsilon)?;
        let v = check_assertion(&h)?;
        if !v.holds {
            let reason = match v.violated_obligation {
                Some(Obligation::ErrorBound) => format!(
                    "error {} exceeds epsilon {epsilon}",
                    v.violation_value.unwrap_or(f64::NAN)
                ),
                Some(Obligation::Postcondition { index: j }) => {
                    format!("invariant constraint {j} is not preserved")
                }
                None => "assertion failed".into(),
            };
            return Err(Error::PremiseFailed {
                index,
                reason,
                counterexample: v.counterexample.unwrap_or_default(),
            });
        }
        premises.push(v);
    }
    Ok(AccelerationCertificate {
        m: summaries.len(),
        invariant: phi.clone(),
        epsilon,
        premise_checked: true,
        premises,
        bound_formula: format!("1 - (1 - {epsilon})^k"),
    })
}

/// Worst local error `max_i ‖b_i‖∞`; with `φ = ⊤` it always satisfies the
/// acceleration premise.
pub fn trivial_epsilon<S: Borrow<Summary>>(summaries: &[S]) -> f64 {
    summaries
        .iter()
        .flat_map(|c| c.borrow().b().iter().copied())
        .fold(0.0, f64::max)
        .min(1.0)
}

/// `∧_i x·b_i ≤ ε`.
pub fn invariant_candidate<S: Borrow<Summary>>(summaries: &[S], epsilon: f64) -> AffinePredicate {
    AffinePredicate::new(
        summaries
            .iter()
            .map(|c| crate::linprog::Constraint::new(c.borrow().b().to_vec(), epsilon))
            .collect(),
    )
}

/// `{0, 0.01, …, 0.99}`.
pub fn default_eps_grid() -> Vec<f64> {
    (0..100).map(|i| i as f64 / 100.0).collect()
}

/// Whether `φ_ε` is feasible and invariant with local error `ε` for every
/// summary.
pub fn invariant_holds<S: Borrow<Summary>>(summaries: &[S], epsilon: f64) -> Result<bool> {
    let dim = summaries[0].borrow().dim();
    let phi = invariant_candidate(summaries, epsilon);
    if !is_feasible(&phi, dim)? {
        return Ok(false);
    }
    for c in summaries {
        let v = check_assertion(&HoareAssertion::new(&phi, c.borrow(), &phi, epsilon)?)?;
        if !v.holds {
            return Ok(false);
        }
    }
    Ok(true)
}

/// First `ε` of `grid` (in the given order) whose candidate is invariant.
pub fn find_invariant<S: Borrow<Summary> + Sync>(
    summaries: &[S],
    grid: &[f64],
) -> Result<Option<(AffinePredicate, f64)>> {
    if summaries.is_empty() {
        return Err(Error::InvalidParameter("invariant search needs at least one summary".into()));
    }
    for &e in grid {
        check_epsilon(e)?;
    }
    let found = grid
        .par_iter()
        .map(|&e| invariant_holds(summaries, e).map(|ok| ok.then_some(e)))
        .find_map_first(|r| match r {
            Ok(None) => None,
            other => Some(other),
        });
    match found {
        None => Ok(None),
        Some(Err(e)) => Err(e),
        Some(Ok(e)) => {
            let e = e.expect("filtered");
            Ok(Some((invariant_candidate(summaries, e), e)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interleaving {
    pub value: f64,
    /// Summary indices in execution order.
    pub sequence: Vec<usize>,
    pub witness: Distribution,
}

/// Exhaustive worst case over all `m^k` orderings and all distributions
/// satisfying `phi`. Ties resolve to the lexicographically smallest
/// sequence.
pub fn worst_case_interleaving<S: Borrow<Summary> + Sync>(
    summaries: &[S],
    phi: &AffinePredicate,
    k: u32,
) -> Result<Interleaving> {
    let m = summaries.len();
    if m == 0 || k == 0 {
        return Err(Error::InvalidParameter("need m ≥ 1 and k ≥ 1".into()));
    }
    let count = (m as u128).checked_pow(k).unwrap_or(u128::MAX);
    if count > INTERLEAVING_BUDGET {
        return Err(Error::BudgetExceeded {
            count,
            budget: INTERLEAVING_BUDGET,
        });
    }
    let dim = summaries[0].borrow().dim();
    phi.check_dim(dim)?;
    if summaries.iter().any(|c| c.borrow().dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: summaries.iter().map(|c| c.borrow().dim()).find(|&d| d != dim).unwrap(),
        });
    }
    if !is_feasible(phi, dim)? {
        return Err(Error::VacuousPrecondition);
    }

    // The error column of C_{i1} … C_{ik} is v_1 where v_k = b_{ik} and
    // v_j = b_{ij} + A_{ij} v_{j+1}; enumerate suffixes from the back.
    let results: Vec<Result<Interleaving>> = (0..m)
        .into_par_iter()
        .map(|last| {
            let v = summaries[last].borrow().b().to_vec();
            let mut suffix = vec![last];
            let mut best: Option<Interleaving> = None;
            extend_suffix(summaries, phi, k as usize, &mut suffix, &v, &mut best)?;
            Ok(best.expect("at least one sequence"))
        })
        .collect();
    let mut best: Option<Interleaving> = None;
    for r in results {
        best = Some(better(best, r?));
    }
    Ok(best.expect("m ≥ 1"))
}

fn better(current: Option<Interleaving>, cand: Interleaving) -> Interleaving {
    match current {
        None => cand,
        Some(c) => {
            if cand.value > c.value || (cand.value == c.value && cand.sequence < c.sequence) {
                cand
            } else {
                c
            }
        }
    }
}

fn extend_suffix<S: Borrow<Summary>>(
    summaries: &[S],
    phi: &AffinePredicate,
    k: usize,
    suffix: &mut Vec<usize>,
    v: &[f64],
    best: &mut Option<Interleaving>,
) -> Result<()> {
    if suffix.len() == k {
        let sol = maximize_over_simplex(v, phi)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::VacuousPrecondition);
        }
        let sequence: Vec<usize> = suffix.iter().rev().copied().collect();
        let value = dot(v, &sol.witness);
        *best = Some(better(
            best.take(),
            Interleaving {
                value,
                sequence,
                witness: to_distribution(sol.witness),
            },
        ));
        return Ok(());
    }
    for (i, c) in summaries.iter().enumerate() {
        let c = c.borrow();
        let next: Vec<f64> = c
            .a()
            .mul_vec(v)
            .into_iter()
            .zip(c.b())
            .map(|(av, b)| av + b)
            .collect();
        suffix.push(i);
        extend_suffix(summaries, phi, k, suffix, &next, best)?;
        suffix.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linprog::Constraint;

    fn example() -> Summary {
        Summary::from_dense(&[vec![0.6, 0.2], vec![0.2, 0.7]], vec![0.2, 0.1]).unwrap()
    }

    fn boxed() -> AffinePredicate {
        AffinePredicate::new(vec![
            Constraint::new(vec![1.0, 0.0], 0.7),
            Constraint::new(vec![0.0, 1.0], 0.7),
        ])
    }

    #[test]
    fn forward_examples() {
        let w = forward_worst_case(&example(), &boxed()).unwrap();
        assert!((w.value - 0.17).abs() < 1e-12);
        assert!((w.witness.weights()[0] - 0.7).abs() < 1e-12);

        let unit = AffinePredicate::single(vec![0.0, 1.0], 0.0);
        assert!((forward_worst_case(&example(), &unit).unwrap().value - 0.2).abs() < 1e-12);
        assert_eq!(forward_worst_case(&Summary::identity(2), &boxed()).unwrap().value, 0.0);

        let empty = AffinePredicate::single(vec![1.0, 1.0], 0.5);
        assert!(matches!(
            forward_worst_case(&example(), &empty),
            Err(Error::VacuousPrecondition)
        ));
    }

    #[test]
    fn backward_examples() {
        let p = backward_weakest_precondition(&example(), 0.15).unwrap();
        assert_eq!(p, AffinePredicate::single(vec![0.2, 0.1], 0.15));
        let all = backward_weakest_precondition(&example(), 1.0).unwrap();
        assert!(all.holds_at(&[1.0, 0.0], 0.0) && all.holds_at(&[0.0, 1.0], 0.0));
        let zero = Summary::from_dense(&[vec![1.0, 0.0], vec![0.0, 0.5]], vec![0.0, 0.5]).unwrap();
        let p0 = backward_weakest_precondition(&zero, 0.0).unwrap();
        assert!(p0.holds_at(&[1.0, 0.0], 0.0));
        assert!(!p0.holds_at(&[0.9, 0.1], 0.0));
        assert!(backward_weakest_precondition(&example(), 1.5).is_err());
    }

    #[test]
    fn error_map_examples() {
        let labels = vec!["s1".to_string(), "s2".to_string()];
        let map = point_distribution_error_map(&example(), &labels).unwrap();
        assert_eq!(map, vec![("s1".to_string(), 0.2), ("s2".to_string(), 0.1)]);
        let cc = crate::summary::compose(&example(), &example()).unwrap();
        let map = point_distribution_error_map(&cc, &labels).unwrap();
        assert!((map[0].1 - 0.34).abs() < 1e-12 && (map[1].1 - 0.21).abs() < 1e-12);
        let map = point_distribution_error_map(&Summary::identity(2), &labels).unwrap();
        assert!(map.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn worked_assertion() {
        let c = example();
        let phi = boxed();
        let v = check_assertion(&HoareAssertion::new(&phi, &c, &phi, 0.17).unwrap()).unwrap();
        assert!(v.holds && !v.vacuous);

        let v = check_assertion(&HoareAssertion::new(&phi, &c, &phi, 0.15).unwrap()).unwrap();
        assert!(!v.holds);
        assert_eq!(v.violated_obligation, Some(Obligation::ErrorBound));
        let x = v.counterexample.unwrap();
        assert!((x[0] - 0.7).abs() < 1e-12 && (x[1] - 0.3).abs() < 1e-12);
        assert!((v.violation_value.unwrap() - 0.17).abs() < 1e-12);
    }

    #[test]
    fn top_with_max_b_holds() {
        let top = AffinePredicate::top();
        let c = example();
        let v = check_assertion(&HoareAssertion::new(&top, &c, &top, 0.2).unwrap()).unwrap();
        assert!(v.holds);
    }

    #[test]
    fn vacuous_precondition_is_flagged() {
        let bad = AffinePredicate::single(vec![1.0, 1.0], 0.5);
        let c = example();
        let v = check_assertion(&HoareAssertion::new(&bad, &c, &bad, 0.0).unwrap()).unwrap();
        assert!(v.holds && v.vacuous);
    }

    #[test]
    fn postcondition_failure_names_constraint() {
        // everything drifts to s2
        let c = Summary::from_dense(&[vec![0.0, 1.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        let pre = AffinePredicate::top();
        let post = AffinePredicate::single(vec![0.0, 1.0], 0.5);
        let v = check_assertion(&HoareAssertion::new(&pre, &c, &post, 0.0).unwrap()).unwrap();
        assert_eq!(v.violated_obligation, Some(Obligation::Postcondition { index: 0 }));
    }

    #[test]
    fn rule1_examples() {
        assert!((rule1_compose(0.2, 0.1) - 0.28).abs() < 1e-15);
        assert_eq!(rule1_compose(0.0, 0.37), 0.37);
        assert_eq!(rule1_compose(1.0, 0.4), 1.0);
    }

    #[test]
    fn acceleration_examples() {
        let cert = accelerate(&[Summary::identity(3)], &AffinePredicate::top(), 0.0).unwrap();
        assert!(cert.premise_checked);
        assert!(cert.bound_table(10).iter().all(|&(_, b)| b == 0.0));
        assert!((acceleration_bound(0.01, 10) - (1.0 - 0.99f64.powi(10))).abs() < 1e-15);
        assert!((acceleration_bound(0.01, 10) - 0.095_617_924_991).abs() < 1e-11);

        let phi = boxed();
        match accelerate(&[example()], &phi, 0.15) {
            Err(Error::PremiseFailed { index, counterexample, .. }) => {
                assert_eq!(index, 0);
                assert!((counterexample[0] - 0.7).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trivial_epsilon_examples() {
        assert_eq!(trivial_epsilon(&[example()]), 0.2);
        assert_eq!(trivial_epsilon(&[Summary::identity(2), Summary::identity(2)]), 0.0);
        let c1 = Summary::from_dense(&[vec![0.7, 0.0], vec![0.0, 0.9]], vec![0.3, 0.1]).unwrap();
        let c2 = Summary::from_dense(&[vec![0.95, 0.0], vec![0.0, 0.75]], vec![0.05, 0.25]).unwrap();
        assert_eq!(trivial_epsilon(&[c1, c2]), 0.3);
    }

    #[test]
    fn invariant_search_examples() {
        let found = find_invariant(&[Summary::identity(2)], &default_eps_grid()).unwrap();
        assert_eq!(found.map(|(_, e)| e), Some(0.0));
        let found = find_invariant(&[example()], &[1.0]).unwrap().unwrap();
        assert_eq!(found.1, 1.0);
    }

    #[test]
    fn interleaving_small_cases() {
        let c = example();
        let phi = boxed();
        let one = worst_case_interleaving(std::slice::from_ref(&c), &phi, 2).unwrap();
        let cc = crate::summary::compose(&c, &c).unwrap();
        let direct = forward_worst_case(&cc, &phi).unwrap();
        assert!((one.value - direct.value).abs() < 1e-12);
        assert_eq!(one.sequence, vec![0, 0]);

        let other = Summary::from_dense(&[vec![0.5, 0.0], vec![0.0, 0.5]], vec![0.5, 0.5]).unwrap();
        let k1 = worst_case_interleaving(&[c.clone(), other.clone()], &phi, 1).unwrap();
        assert_eq!(k1.sequence, vec![1]);
        assert!((k1.value - 0.5).abs() < 1e-12);

        let r = worst_case_interleaving(&[c.clone(), c.clone(), c.clone()], &phi, 13);
        assert!(matches!(r, Err(Error::BudgetExceeded { .. })));
    }
}
