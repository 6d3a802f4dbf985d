//! Generators and brute-force oracles shared by the integration tests.
//!
//! The oracles deliberately avoid the library's algorithms: summaries are
//! checked against explicit path enumeration and LP optima against
//! enumeration of the polytope's vertices.

#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use percheck_core::linprog::AffinePredicate;
use percheck_core::model::{ClosedLoopDtmc, StateSpace};
use percheck_core::sparse::CsrMatrix;
use percheck_core::summary::Summary;
use rand::seq::index::sample;
use rand::Rng;

pub fn space(n: usize) -> Arc<StateSpace> {
    Arc::new(StateSpace::new((0..n).map(|i| format!("s{i}")).collect(), "err").unwrap())
}

/// Random chain over `n` non-error states; each row has at most
/// `max_support` successors, possibly including the error state.
pub fn random_chain(rng: &mut impl Rng, n: usize, max_support: usize) -> ClosedLoopDtmc {
    let total = n + 1;
    let mut rows = Vec::with_capacity(total);
    for _ in 0..n {
        let k = rng.gen_range(1..=max_support.min(total));
        let cols = sample(rng, total, k).into_vec();
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        rows.push(cols.into_iter().zip(w.into_iter().map(|v| v / s)).collect());
    }
    rows.push(vec![(n, 1.0)]);
    ClosedLoopDtmc::new(space(n), CsrMatrix::from_rows(total, rows)).unwrap()
}

/// Random summary whose rows are drawn like chain rows.
pub fn random_summary(rng: &mut impl Rng, n: usize) -> Summary {
    let m = random_chain(rng, n, n + 1);
    percheck_core::summary::summarize(&m, 1).unwrap()
}

/// Random distribution over `n` states, sometimes sparse.
pub fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[rng.gen_range(0..n)] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Error probability within `h` steps from each non-error state, by summing
/// the probability of every path that reaches the error state.
pub fn path_enumeration_b(m: &ClosedLoopDtmc, h: u32) -> Vec<f64> {
    let err = m.error_index();
    let p = m.transitions().to_dense();
    fn walk(p: &[Vec<f64>], err: usize, s: usize, left: u32, prob: f64) -> f64 {
        if s == err {
            return prob;
        }
        if left == 0 {
            return 0.0;
        }
        p[s]
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > 0.0)
            .map(|(t, &q)| walk(p, err, t, left - 1, prob * q))
            .sum()
    }
    (0..err).map(|s| walk(&p, err, s, h, 1.0)).collect()
}

/// Dense `P^h` by repeated multiplication.
pub fn dense_power(p: &[Vec<f64>], h: u32) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut r: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    for _ in 0..h {
        r = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| r[i][k] * p[k][j]).sum()).collect())
            .collect();
    }
    r
}

/// Solves the square system `m x = rhs` by Gaussian elimination with
/// partial pivoting; `None` when singular.
fn solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..n {
                        m[r][c] -= f * m[col][c];
                    }
                    rhs[r] -= f * rhs[col];
                }
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// `max c·x` over `pred ∩ Δ` by vertex enumeration: every vertex makes
/// `Σx = 1` and `n − 1` further inequalities tight. `None` if infeasible.
pub fn vertex_max(c: &[f64], pred: &AffinePredicate) -> Option<(f64, Vec<f64>)> {
    let n = c.len();
    // rows a·x ≤ θ: the predicate, then −x_i ≤ 0
    let mut rows: Vec<(Vec<f64>, f64)> = pred.constraints.iter().map(|k| (k.a.clone(), k.theta)).collect();
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = -1.0;
        rows.push((a, 0.0));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for tight in subsets(rows.len(), n - 1) {
        let mut m = vec![vec![1.0; n]];
        let mut rhs = vec![1.0];
        for &t in &tight {
            m.push(rows[t].0.clone());
            rhs.push(rows[t].1);
        }
        let Some(x) = solve(m, rhs) else { continue };
        let feasible = rows
            .iter()
            .all(|(a, th)| a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() <= th + 1e-9);
        if !feasible {
            continue;
        }
        let v: f64 = c.iter().zip(&x).map(|(u, w)| u * w).sum();
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, x));
        }
    }
    best
}

/// Random predicate with `k` constraints that keeps a random interior point
/// feasible.
pub fn random_feasible_predicate(rng: &mut impl Rng, n: usize, k: usize) -> AffinePredicate {
    let x = random_distribution(rng, n);
    let mut p = AffinePredicate::top();
    for _ in 0..k {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let at_x: f64 = a.iter().zip(&x).map(|(u, v)| u * v).sum();
        p = p.with(a, at_x + rng.gen_range(0.0..0.3));
    }
    p
}
