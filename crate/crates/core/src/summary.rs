//! Scenarios and their summaries.
//!
//! The summary `(A, b)` of a scenario `(e, H)` is the block form of the
//! `H`-th power of the environment's chain, with the error state last:
//!
//! ```text
//! P_e^H = [ A  b ]
//!         [ 0  1 ]
//! ```
//!
//! Running the scenario from `x` loses `x·b` to error and leaves the
//! subdistribution `xA`. Sequential composition is `(A1 A2, b1 + A1 b2)`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClosedLoopDtmc, Distribution, SubDistribution, STOCHASTIC_TOL};
use crate::sparse::{Accumulator, CsrMatrix};

/// An environment condition held for a fixed number of steps.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scenario {
    pub env: String,
    pub horizon: u32,
}

impl Scenario {
    pub fn new(env: impl Into<String>, horizon: u32) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::ZeroHorizon);
        }
        Ok(Self {
            env: env.into(),
            horizon,
        })
    }
}

/// Non-empty ordered list of scenarios, executed left to right.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Scenario>", into = "Vec<Scenario>")]
pub struct ScenarioSequence(Vec<Scenario>);

impl ScenarioSequence {
    pub fn new(scenarios: Vec<Scenario>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::EmptySequence);
        }
        if scenarios.iter().any(|s| s.horizon == 0) {
            return Err(Error::ZeroHorizon);
        }
        Ok(Self(scenarios))
    }

    pub fn single(s: Scenario) -> Self {
        Self(vec![s])
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.0
    }

    /// `self ; other`
    pub fn then(mut self, other: &ScenarioSequence) -> Self {
        self.0.extend(other.0.iter().cloned());
        self
    }
}

impl TryFrom<Vec<Scenario>> for ScenarioSequence {
    type Error = Error;

    fn try_from(v: Vec<Scenario>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ScenarioSequence> for Vec<Scenario> {
    fn from(s: ScenarioSequence) -> Self {
        s.0
    }
}

/// Survivor matrix and error column of a scenario (sequence).
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    a: CsrMatrix,
    b: Vec<f64>,
}

impl Summary {
    /// Validates entry ranges and per-row mass conservation.
    pub fn new(a: CsrMatrix, b: Vec<f64>) -> Result<Self> {
        let n = b.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::InvalidSummary(format!(
                "A is {}x{} but b has {n} entries",
                a.nrows(),
                a.ncols()
            )));
        }
        let in_range = |v: f64| v.is_finite() && (-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&v);
        for (i, &bi) in b.iter().enumerate() {
            if let Some((j, v)) = a.row(i).find(|&(_, v)| !in_range(v)) {
                return Err(Error::InvalidSummary(format!("A({i}, {j}) = {v}")));
            }
            if !in_range(bi) {
                return Err(Error::InvalidSummary(format!("b({i}) = {bi}")));
            }
            let mass = a.row_sum(i) + b[i];
            if (mass - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidSummary(format!(
                    "row {i} has total mass {mass}"
                )));
            }
        }
        Ok(Self { a, b })
    }

    pub fn from_dense(a: &[Vec<f64>], b: Vec<f64>) -> Result<Self> {
        Self::new(CsrMatrix::from_dense(a), b)
    }

    /// The unit `(I, 0)` of sequential composition.
    pub fn identity(n: usize) -> Self {
        Self {
            a: CsrMatrix::identity(n),
            b: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Largest entrywise difference over both blocks.
    pub fn max_abs_diff(&self, other: &Summary) -> f64 {
        let db = self
            .b
            .iter()
            .zip(&other.b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        self.a.max_abs_diff(&other.a).max(db)
    }
}

/// How `P^H` is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PowerMethod {
    /// Propagate each unit vector `e_i` for `H` steps (row-parallel).
    #[default]
    RowPropagation,
    /// Square-and-multiply on the full transition matrix.
    Squaring,
}

/// Summary of running `m` for `horizon` steps.
pub fn summarize(m: &ClosedLoopDtmc, horizon: u32) -> Result<Summary> {
    summarize_with(m, horizon, PowerMethod::RowPropagation)
}

pub fn summarize_with(m: &ClosedLoopDtmc, horizon: u32, method: PowerMethod) -> Result<Summary> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let (a, b) = match method {
        PowerMethod::RowPropagation => propagate_rows(m, horizon),
        PowerMethod::Squaring => by_squaring(m, horizon),
    };
    Ok(Summary { a, b })
}

fn propagate_rows(m: &ClosedLoopDtmc, horizon: u32) -> (CsrMatrix, Vec<f64>) {
    let n = m.space().non_error_len();
    let err = m.error_index();
    let p = m.transitions();
    let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..n)
        .into_par_iter()
        .map_init(
            || Accumulator::new(n + 1),
            |acc, i| {
                let mut x = vec![(i, 1.0)];
                let mut lost = 0.0;
                for _ in 0..horizon {
                    let mut next = p.sparse_vec_mul(&x, acc);
                    // absorbed mass never returns; keep it out of the vector
                    if let Some(&(j, v)) = next.last() {
                        if j == err {
                            lost += v;
                            next.pop();
                        }
                    }
                    x = next;
                    if x.is_empty() {
                        break;
                    }
                }
                // accumulated rounding can push the lost mass past one
                (x, lost.min(1.0))
            },
        )
        .collect();
    let (a_rows, b): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    (CsrMatrix::from_rows(n, a_rows), b)
}

fn by_squaring(m: &ClosedLoopDtmc, horizon: u32) -> (CsrMatrix, Vec<f64>) {
    let full = m.transitions();
    let mut result: Option<CsrMatrix> = None;
    let mut base = full.clone();
    let mut h = horizon;
    loop {
        if h & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.matmul(&base),
            });
        }
        h >>= 1;
        if h == 0 {
            break;
        }
        base = base.matmul(&base);
    }
    let pow = result.expect("horizon >= 1");
    let n = m.space().non_error_len();
    let err = m.error_index();
    let mut b = vec![0.0; n];
    let rows = (0..n)
        .map(|i| {
            pow.row(i)
                .filter(|&(j, v)| {
                    if j == err {
                        b[i] = v.min(1.0);
                        false
                    } else {
                        true
                    }
                })
                .collect()
        })
        .collect();
    (CsrMatrix::from_rows(n, rows), b)
}

/// `C1 C2 = (A1 A2, b1 + A1 b2)`: run `c1`, then `c2`.
pub fn compose(c1: &Summary, c2: &Summary) -> Result<Summary> {
    if c1.dim() != c2.dim() {
        return Err(Error::DimensionMismatch {
            expected: c1.dim(),
            found: c2.dim(),
        });
    }
    let a = c1.a.matmul(&c2.a);
    let a1b2 = c1.a.mul_vec(&c2.b);
    let b = c1.b.iter().zip(a1b2).map(|(x, y)| (x + y).min(1.0)).collect();
    Ok(Summary { a, b })
}

/// Chains keyed by environment id.
pub type ChainSet = BTreeMap<String, ClosedLoopDtmc>;

/// Left-to-right fold of [`compose`] over the scenarios of `seq`.
pub fn summarize_sequence(seq: &ScenarioSequence, chains: &ChainSet) -> Result<Summary> {
    let mut space = None;
    for s in seq.scenarios() {
        let chain = chains
            .get(&s.env)
            .ok_or_else(|| Error::UnknownEnvironment(s.env.clone()))?;
        match space {
            None => space = Some(chain.space()),
            Some(sp) if sp.labels() != chain.space().labels() => {
                return Err(Error::DomainMismatch(format!(
                    "environment `{}` uses a different state space",
                    s.env
                )))
            }
            Some(_) => {}
        }
    }
    let mut cache: HashMap<&Scenario, Summary> = HashMap::new();
    let mut acc: Option<Summary> = None;
    for s in seq.scenarios() {
        if !cache.contains_key(s) {
            cache.insert(s, summarize(&chains[&s.env], s.horizon)?);
        }
        let c = &cache[s];
        acc = Some(match acc {
            None => c.clone(),
            Some(prev) => compose(&prev, c)?,
        });
    }
    Ok(acc.expect("sequence is non-empty"))
}

/// Error probability `x·b` and surviving subdistribution `xA`.
pub fn apply(c: &Summary, x: &Distribution) -> Result<(f64, SubDistribution)> {
    if x.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: x.len(),
        });
    }
    let w = x.weights();
    let err: f64 = w.iter().zip(&c.b).map(|(x, b)| x * b).sum();
    let survivors = SubDistribution::new(c.a.vec_mul(w))?;
    Ok((err.clamp(0.0, 1.0), survivors))
}
