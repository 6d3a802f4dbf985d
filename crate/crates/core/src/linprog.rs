//! Affine predicates over distributions and a dense simplex solver.
//!
//! Every query here optimizes over `pred ∩ Δ`, where `Δ = {x ≥ 0, Σx = 1}`
//! is the probability simplex. The feasible set is compact, so a query is
//! either infeasible or attains its optimum at a vertex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for constraint satisfaction of LP witnesses.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Slack used by semantic entailment checks.
pub const ENTAILMENT_SLACK: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;

/// One half-space `x·a ≤ theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub a: Vec<f64>,
    pub theta: f64,
}

impl Constraint {
    pub fn new(a: Vec<f64>, theta: f64) -> Self {
        Self { a, theta }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.a, x)
    }
}

/// Conjunction of half-spaces. The empty conjunction is `⊤`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffinePredicate {
    pub constraints: Vec<Constraint>,
}

impl AffinePredicate {
    pub fn top() -> Self {
        Self::default()
    }

    pub fn new(constraints: Vec<Constraint>) -> Self {
        Self { constraints }
    }

    pub fn single(a: Vec<f64>, theta: f64) -> Self {
        Self::new(vec![Constraint::new(a, theta)])
    }

    /// `Σ_{i ∈ support} x_i ≤ theta`.
    pub fn indicator(dim: usize, support: impl IntoIterator<Item = usize>, theta: f64) -> Self {
        let mut a = vec![0.0; dim];
        for i in support {
            a[i] = 1.0;
        }
        Self::single(a, theta)
    }

    pub fn and(mut self, other: &AffinePredicate) -> Self {
        self.constraints.extend(other.constraints.iter().cloned());
        self
    }

    pub fn with(mut self, a: Vec<f64>, theta: f64) -> Self {
        self.constraints.push(Constraint::new(a, theta));
        self
    }

    pub fn is_top(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self.constraints.iter().find(|c| c.a.len() != dim) {
            Some(c) => Err(Error::DimensionMismatch {
                expected: dim,
                found: c.a.len(),
            }),
            None => Ok(()),
        }
    }

    /// Whether `x` satisfies every constraint within `tol`.
    pub fn holds_at(&self, x: &[f64], tol: f64) -> bool {
        self.constraints.iter().all(|c| c.eval(x) <= c.theta + tol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective at the witness; meaningful only when `Optimal`.
    pub objective_value: f64,
    pub witness: Vec<f64>,
    /// One non-negative multiplier per inequality row, in input order.
    pub duals: Vec<f64>,
}

impl LpSolution {
    fn non_optimal(status: LpStatus) -> Self {
        Self {
            status,
            objective_value: f64::NAN,
            witness: Vec::new(),
            duals: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `objective·x` subject to `pred`, `x ≥ 0` and `Σx = 1`.
///
/// The equality is passed to the solver as the pair `Σx ≤ 1`, `−Σx ≤ −1`;
/// the duals of the result follow the predicate's constraints and then
/// those two rows.
pub fn maximize_over_simplex(objective: &[f64], pred: &AffinePredicate) -> Result<LpSolution> {
    let n = objective.len();
    pred.check_dim(n)?;
    let mut rows: Vec<(&[f64], f64)> = pred
        .constraints
        .iter()
        .map(|c| (c.a.as_slice(), c.theta))
        .collect();
    let ones = vec![1.0; n];
    let neg_ones = vec![-1.0; n];
    rows.push((&ones, 1.0));
    rows.push((&neg_ones, -1.0));
    Ok(maximize(objective, &rows))
}

/// Whether `pred` admits a probability distribution of dimension `dim`.
pub fn is_feasible(pred: &AffinePredicate, dim: usize) -> Result<bool> {
    let sol = maximize_over_simplex(&vec![0.0; dim], pred)?;
    Ok(sol.status == LpStatus::Optimal)
}

/// Whether every distribution satisfying `pred` has `x·coeff ≤ offset`
/// (up to [`ENTAILMENT_SLACK`]). Returns the maximizing solution alongside.
pub fn entails_with_witness(
    pred: &AffinePredicate,
    coeff: &[f64],
    offset: f64,
) -> Result<(bool, LpSolution)> {
    let sol = maximize_over_simplex(coeff, pred)?;
    let ok = match sol.status {
        LpStatus::Infeasible => true,
        LpStatus::Optimal => sol.objective_value <= offset + ENTAILMENT_SLACK,
        LpStatus::Unbounded => false,
    };
    Ok((ok, sol))
}

pub fn entails(pred: &AffinePredicate, coeff: &[f64], offset: f64) -> Result<bool> {
    entails_with_witness(pred, coeff, offset).map(|(ok, _)| ok)
}

/// Maximizes `c·x` subject to `a_i·x ≤ b_i` for every row and `x ≥ 0`.
///
/// Two-phase dense tableau simplex. Pricing is by largest reduced cost
/// with lowest-index tie-breaking until the first degenerate pivot, after
/// which Bland's rule is used for the rest of the solve.
pub fn maximize(c: &[f64], rows: &[(&[f64], f64)]) -> LpSolution {
    Tableau::build(c, rows).solve(c)
}

struct Tableau {
    n: usize,
    m: usize,
    /// Column count without the right-hand side.
    width: usize,
    /// Row-major `m × (width + 1)`; the last entry of each row is the rhs.
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    artificial_start: usize,
    bland: bool,
}

impl Tableau {
    fn build(c: &[f64], rows: &[(&[f64], f64)]) -> Self {
        let n = c.len();
        let m = rows.len();
        let n_art = rows.iter().filter(|(_, b)| *b < 0.0).count();
        let width = n + m + n_art;
        let stride = width + 1;
        let mut t = vec![0.0; m * stride];
        let mut basis = vec![0; m];
        let mut next_art = n + m;
        for (i, (a, b)) in rows.iter().enumerate() {
            assert_eq!(a.len(), n, "constraint row {i} has the wrong length");
            let row = &mut t[i * stride..(i + 1) * stride];
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                row[j] = sign * a[j];
            }
            row[n + i] = sign;
            row[width] = sign * b;
            if *b < 0.0 {
                row[next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            } else {
                basis[i] = n + i;
            }
        }
        Self {
            n,
            m,
            width,
            t,
            obj: vec![0.0; stride],
            basis,
            artificial_start: n + m,
            bland: false,
        }
    }

    fn stride(&self) -> usize {
        self.width + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.stride() + j]
    }

    /// Recomputes the reduced-cost row for objective `cost` (maximization).
    fn price(&mut self, cost: &dyn Fn(usize) -> f64) {
        let stride = self.stride();
        for j in 0..stride {
            self.obj[j] = if j < self.width { -cost(j) } else { 0.0 };
        }
        for i in 0..self.m {
            let cb = cost(self.basis[i]);
            if cb != 0.0 {
                let row = &self.t[i * stride..(i + 1) * stride];
                for (o, r) in self.obj.iter_mut().zip(row) {
                    *o += cb * r;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let stride = self.stride();
        let p = self.at(r, e);
        {
            let row = &mut self.t[r * stride..(r + 1) * stride];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[e] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * stride..(r + 1) * stride].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * stride + e];
            if f != 0.0 {
                let row = &mut self.t[i * stride..(i + 1) * stride];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[e] = 0.0;
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn entering(&self, allowed: usize) -> Option<usize> {
        if self.bland {
            (0..allowed).find(|&j| self.obj[j] < -COST_TOL)
        } else {
            let mut best = None;
            let mut best_val = -COST_TOL;
            for j in 0..allowed {
                if self.obj[j] < best_val {
                    best_val = self.obj[j];
                    best = Some(j);
                }
            }
            best
        }
    }

    fn leaving(&self, e: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, e);
            if a > PIVOT_TOL {
                let ratio = self.at(i, self.width) / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12
                            || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi])
                        {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        best.map(|(i, _)| i)
    }

    /// Runs simplex iterations over columns `0..allowed`.
    fn iterate(&mut self, allowed: usize) -> LpStatus {
        loop {
            let Some(e) = self.entering(allowed) else {
                return LpStatus::Optimal;
            };
            let Some(r) = self.leaving(e) else {
                return LpStatus::Unbounded;
            };
            if self.at(r, self.width) <= PIVOT_TOL {
                self.bland = true;
            }
            self.pivot(r, e);
        }
    }

    fn solve(mut self, c: &[f64]) -> LpSolution {
        let art = self.artificial_start;
        if self.width > art {
            self.price(&|j| if j >= art { -1.0 } else { 0.0 });
            self.iterate(self.width);
            // obj rhs holds the phase-one optimum, -(sum of artificials)
            if -self.obj[self.width] > FEASIBILITY_TOL {
                return LpSolution::non_optimal(LpStatus::Infeasible);
            }
            self.expel_artificials();
        }
        self.bland = false;
        let cost = |j: usize| if j < c.len() { c[j] } else { 0.0 };
        self.price(&cost);
        match self.iterate(art) {
            LpStatus::Optimal => {}
            s => return LpSolution::non_optimal(s),
        }
        let mut witness = vec![0.0; self.n];
        for i in 0..self.m {
            let j = self.basis[i];
            if j < self.n {
                witness[j] = self.at(i, self.width).max(0.0);
            }
        }
        let duals = (self.n..art).map(|j| self.obj[j].max(0.0)).collect();
        LpSolution {
            status: LpStatus::Optimal,
            objective_value: dot(c, &witness),
            witness,
            duals,
        }
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are redundant and are dropped.
    fn expel_artificials(&mut self) {
        let art = self.artificial_start;
        let mut i = 0;
        while i < self.m {
            if self.basis[i] >= art {
                match (0..art).find(|&j| self.at(i, j).abs() > 1e-9) {
                    Some(j) => self.pivot(i, j),
                    None => {
                        let stride = self.stride();
                        self.t.drain(i * stride..(i + 1) * stride);
                        self.basis.remove(i);
                        self.m -= 1;
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
}
