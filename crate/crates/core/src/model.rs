//! State spaces, distributions, perception abstractions and closed-loop
//! chain construction.
//!
//! A closed-loop chain for environment condition `e` is obtained by pushing
//! each state's estimate distribution through the controller and the
//! dynamics:
//!
//! ```text
//! P_e(s, s') = sum_y alpha_e(s)(y) * [f(e, s, g(e, y)) = s']
//! ```
//!
//! The error state is always stored last and is absorbing.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Tolerance for stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Below this total mass a subdistribution is considered lost to error.
pub const VANISHING_MASS: f64 = 1e-12;

/// Ordered state labels; the last label is the error state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl StateSpace {
    /// Builds `non_error ++ [error_label]`.
    pub fn new(non_error: Vec<String>, error_label: impl Into<String>) -> Result<Self> {
        if non_error.is_empty() {
            return Err(Error::EmptyStateSpace);
        }
        let mut labels = non_error;
        labels.push(error_label.into());
        Self::from_labels(labels)
    }

    /// Builds from a complete label list whose last entry is the error state.
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::EmptyStateSpace);
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::EmptyLabel);
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of non-error states.
    pub fn non_error_len(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn error_index(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn non_error_labels(&self) -> &[String] {
        &self.labels[..self.error_index()]
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

fn check_weights(w: &[f64], what: &str) -> Result<()> {
    for (i, &v) in w.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "{what} weight {i} is {v}"
            )));
        }
    }
    Ok(())
}

/// Probability distribution over the non-error states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, "distribution")?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    /// Unit mass on state `i` of `n`.
    pub fn point(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

/// Non-negative weights with total mass at most one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubDistribution(Vec<f64>);

impl SubDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, "subdistribution")?;
        let total: f64 = weights.iter().sum();
        if total > 1.0 + STOCHASTIC_TOL {
            return Err(Error::InvalidDistribution(format!(
                "subdistribution mass {total} exceeds 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn mass(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Rescales to a proper distribution.
    pub fn normalize(&self) -> Result<Distribution> {
        normalize_subdistribution(self)
    }
}

impl From<Distribution> for SubDistribution {
    fn from(d: Distribution) -> Self {
        Self(d.0)
    }
}

/// `x / |x|`; fails with [`Error::VanishingMass`] when `|x| <= 1e-12`.
pub fn normalize_subdistribution(x: &SubDistribution) -> Result<Distribution> {
    let mass = x.mass();
    if mass <= VANISHING_MASS {
        return Err(Error::VanishingMass(mass));
    }
    Ok(Distribution(x.0.iter().map(|v| v / mass).collect()))
}

/// Raw (true state, estimate) counts for one environment condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyMatrix {
    states: Vec<String>,
    estimates: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ContingencyMatrix {
    pub fn new(states: Vec<String>, estimates: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        for labels in [&states, &estimates] {
            let mut seen = std::collections::HashSet::new();
            for l in labels {
                if !seen.insert(l.as_str()) {
                    return Err(Error::DuplicateLabel(l.clone()));
                }
            }
        }
        if counts.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                found: counts.len(),
            });
        }
        for row in &counts {
            if row.len() != estimates.len() {
                return Err(Error::DimensionMismatch {
                    expected: estimates.len(),
                    found: row.len(),
                });
            }
        }
        Ok(Self {
            states,
            estimates,
            counts,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn estimates(&self) -> &[String] {
        &self.estimates
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Reorders rows to follow the non-error labels of `space`.
    pub fn aligned_to(&self, space: &StateSpace) -> Result<Self> {
        if self.states.len() != space.non_error_len() {
            return Err(Error::DimensionMismatch {
                expected: space.non_error_len(),
                found: self.states.len(),
            });
        }
        let by_label: HashMap<&str, usize> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut counts = Vec::with_capacity(self.states.len());
        for l in space.non_error_labels() {
            let i = by_label
                .get(l.as_str())
                .ok_or_else(|| Error::UnknownLabel(l.clone()))?;
            counts.push(self.counts[*i].clone());
        }
        Ok(Self {
            states: space.non_error_labels().to_vec(),
            estimates: self.estimates.clone(),
            counts,
        })
    }
}

/// Row-stochastic map from non-error states to estimate distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionAbstraction {
    probs: CsrMatrix,
}

impl PerceptionAbstraction {
    pub fn new(probs: CsrMatrix) -> Result<Self> {
        for i in 0..probs.nrows() {
            if let Some((j, v)) = probs.row(i).find(|&(_, v)| v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "abstraction entry ({i}, {j}) is {v}"
                )));
            }
            let sum = probs.row_sum(i);
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "abstraction row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self { probs })
    }

    /// Perfect perception on a space where estimates coincide with states.
    pub fn identity(n: usize) -> Self {
        Self {
            probs: CsrMatrix::identity(n),
        }
    }

    pub fn num_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_estimates(&self) -> usize {
        self.probs.ncols()
    }

    pub fn row(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.row(s)
    }

    pub fn probs(&self) -> &CsrMatrix {
        &self.probs
    }
}

/// `alpha(s)(y) = C(s, y) / sum_y' C(s, y')`.
pub fn normalize_counts(cm: &ContingencyMatrix) -> Result<PerceptionAbstraction> {
    let rows = cm
        .counts
        .iter()
        .zip(&cm.states)
        .map(|(row, label)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Err(Error::ZeroRowTotal(label.clone()));
            }
            let t = total as f64;
            Ok(row
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(j, &c)| (j, c as f64 / t))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    PerceptionAbstraction::new(CsrMatrix::from_rows(cm.estimates.len(), rows))
}

/// Normalizes `cm` after reordering its rows to the non-error states of
/// `space` and its columns to `estimates`. Estimates absent from `cm` get
/// probability zero; columns not in `estimates` are an error.
pub fn abstraction_for(
    cm: &ContingencyMatrix,
    space: &StateSpace,
    estimates: &[String],
) -> Result<PerceptionAbstraction> {
    let aligned = cm.aligned_to(space)?;
    let col: HashMap<&str, usize> = estimates
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let target = cm
        .estimates
        .iter()
        .map(|e| col.get(e.as_str()).copied().ok_or_else(|| Error::UnknownLabel(e.clone())))
        .collect::<Result<Vec<_>>>()?;
    let counts = aligned
        .counts
        .iter()
        .map(|row| {
            let mut out = vec![0; estimates.len()];
            for (&j, &c) in target.iter().zip(row) {
                out[j] = c;
            }
            out
        })
        .collect();
    normalize_counts(&ContingencyMatrix::new(aligned.states, estimates.to_vec(), counts)?)
}

/// Maps an estimate to a control input under environment `env`.
pub trait Controller {
    fn control(&self, env: &str, estimate: usize) -> Result<usize>;
}

/// Maps a non-error state and control input to a successor index in the
/// full state space (the error state included).
pub trait Dynamics {
    fn successor(&self, env: &str, state: usize, control: usize) -> Result<usize>;
}

/// Key for table entries shared by every environment without its own table.
pub const ANY_ENV: &str = "*";

/// Labeled table contents: environment -> key -> value.
pub type LabeledTable = BTreeMap<String, BTreeMap<String, String>>;

/// Tabulated controller `g(e, y)`; the `*` environment is the fallback.
#[derive(Clone, Debug)]
pub struct ControllerTable {
    per_env: HashMap<String, Vec<Option<usize>>>,
}

impl Controller for ControllerTable {
    fn control(&self, env: &str, estimate: usize) -> Result<usize> {
        let lookup = |e: &str| self.per_env.get(e).and_then(|t| t.get(estimate).copied().flatten());
        lookup(env).or_else(|| lookup(ANY_ENV)).ok_or_else(|| {
            Error::DomainMismatch(format!(
                "controller has no entry for estimate #{estimate} in environment `{env}`"
            ))
        })
    }
}

/// Tabulated dynamics `f(e, s, u)`; the `*` environment is the fallback.
#[derive(Clone, Debug)]
pub struct DynamicsTable {
    num_controls: usize,
    per_env: HashMap<String, Vec<Option<usize>>>,
}

impl Dynamics for DynamicsTable {
    fn successor(&self, env: &str, state: usize, control: usize) -> Result<usize> {
        let k = state * self.num_controls + control;
        let lookup = |e: &str| self.per_env.get(e).and_then(|t| t.get(k).copied().flatten());
        lookup(env).or_else(|| lookup(ANY_ENV)).ok_or_else(|| {
            Error::DomainMismatch(format!(
                "dynamics has no entry for state #{state}, control #{control} in environment `{env}`"
            ))
        })
    }
}

/// Controller and dynamics tables compiled against shared label sets.
#[derive(Clone, Debug)]
pub struct TableModel {
    pub controls: Vec<String>,
    pub controller: ControllerTable,
    pub dynamics: DynamicsTable,
}

/// Separator between the state and control parts of a dynamics key.
pub const KEY_SEP: char = '|';

impl TableModel {
    /// Compiles labeled tables. Controller entries map estimate labels to
    /// control labels; dynamics entries map `state|control` to a successor
    /// label. The control alphabet is the sorted union of labels used.
    pub fn compile(
        space: &StateSpace,
        estimates: &[String],
        controller: &LabeledTable,
        dynamics: &LabeledTable,
    ) -> Result<Self> {
        let mut controls: Vec<String> = controller
            .values()
            .flat_map(|t| t.values().cloned())
            .collect();
        let mut parsed_dyn = Vec::new();
        for (env, table) in dynamics {
            for (key, succ) in table {
                let (s, u) = key.rsplit_once(KEY_SEP).ok_or_else(|| {
                    Error::DomainMismatch(format!("dynamics key `{key}` lacks `{KEY_SEP}`"))
                })?;
                controls.push(u.to_string());
                parsed_dyn.push((env.as_str(), s, u, succ.as_str()));
            }
        }
        controls.sort();
        controls.dedup();
        let control_index: HashMap<&str, usize> = controls
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let estimate_index: HashMap<&str, usize> = estimates
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();

        let mut ctrl_env = HashMap::new();
        for (env, table) in controller {
            let mut t = vec![None; estimates.len()];
            for (y, u) in table {
                let yi = *estimate_index.get(y.as_str()).ok_or_else(|| {
                    Error::DomainMismatch(format!("controller estimate `{y}` is not an estimate label"))
                })?;
                t[yi] = Some(control_index[u.as_str()]);
            }
            ctrl_env.insert(env.clone(), t);
        }

        let n = space.non_error_len();
        let nu = controls.len();
        let mut dyn_env: HashMap<String, Vec<Option<usize>>> = HashMap::new();
        for (env, s, u, succ) in parsed_dyn {
            let si = space
                .index_of(s)
                .filter(|&i| i < n)
                .ok_or_else(|| Error::DomainMismatch(format!("dynamics state `{s}` is not a non-error state")))?;
            let ti = space
                .index_of(succ)
                .ok_or_else(|| Error::DomainMismatch(format!("dynamics successor `{succ}` is not a state")))?;
            let t = dyn_env
                .entry(env.to_string())
                .or_insert_with(|| vec![None; n * nu]);
            t[si * nu + control_index[u]] = Some(ti);
        }

        Ok(Self {
            controller: ControllerTable { per_env: ctrl_env },
            dynamics: DynamicsTable {
                num_controls: nu,
                per_env: dyn_env,
            },
            controls,
        })
    }
}

/// Closed-loop chain over a [`StateSpace`] with an absorbing error state.
#[derive(Clone, Debug)]
pub struct ClosedLoopDtmc {
    space: Arc<StateSpace>,
    transitions: CsrMatrix,
}

/// A defect found by [`validate_dtmc`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Shape { rows: usize, cols: usize, states: usize },
    NegativeEntry { row: usize, col: usize, value: f64 },
    RowSumViolation { row: usize, sum: f64 },
    NotAbsorbing { error_index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { rows, cols, states } => {
                write!(f, "matrix is {rows}x{cols} but the space has {states} states")
            }
            Violation::NegativeEntry { row, col, value } => {
                write!(f, "entry ({row}, {col}) is {value}")
            }
            Violation::RowSumViolation { row, sum } => write!(f, "row {row} sums to {sum}"),
            Violation::NotAbsorbing { error_index } => {
                write!(f, "error state {error_index} is not absorbing")
            }
        }
    }
}

impl ClosedLoopDtmc {
    /// Validates and wraps a transition matrix.
    pub fn new(space: Arc<StateSpace>, transitions: CsrMatrix) -> Result<Self> {
        let m = Self::from_parts_unchecked(space, transitions);
        let v = validate_dtmc(&m);
        if v.is_empty() {
            Ok(m)
        } else {
            Err(Error::InvalidChain(v))
        }
    }

    pub fn from_parts_unchecked(space: Arc<StateSpace>, transitions: CsrMatrix) -> Self {
        Self { space, transitions }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn shared_space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn transitions(&self) -> &CsrMatrix {
        &self.transitions
    }

    pub fn error_index(&self) -> usize {
        self.space.error_index()
    }

    pub fn row(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.transitions.row(s)
    }
}

/// Lists every violated chain invariant; empty iff the chain is valid.
pub fn validate_dtmc(m: &ClosedLoopDtmc) -> Vec<Violation> {
    let n = m.space.len();
    let p = &m.transitions;
    if p.nrows() != n || p.ncols() != n {
        return vec![Violation::Shape {
            rows: p.nrows(),
            cols: p.ncols(),
            states: n,
        }];
    }
    let mut out = Vec::new();
    for i in 0..n {
        for (j, v) in p.row(i) {
            if v < 0.0 || !v.is_finite() {
                out.push(Violation::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        let sum = p.row_sum(i);
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            out.push(Violation::RowSumViolation { row: i, sum });
        }
    }
    let err = m.space.error_index();
    let absorbing = p.row(err).eq(std::iter::once((err, 1.0)));
    if !absorbing {
        out.push(Violation::NotAbsorbing { error_index: err });
    }
    out
}

/// Builds the chain for environment `env` by pushing every estimate
/// distribution through `controller` and `dynamics`.
pub fn compose_closed_loop(
    space: Arc<StateSpace>,
    alpha: &PerceptionAbstraction,
    controller: &(impl Controller + ?Sized),
    dynamics: &(impl Dynamics + ?Sized),
    env: &str,
) -> Result<ClosedLoopDtmc> {
    let n = space.non_error_len();
    if alpha.num_states() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: alpha.num_states(),
        });
    }
    let err = space.error_index();
    let mut rows = Vec::with_capacity(n + 1);
    for s in 0..n {
        // successors per row are few (at most one per control), so a linear
        // scan keeps the accumulation order deterministic
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut last_control: Option<(usize, usize)> = None;
        for (y, p) in alpha.row(s) {
            let u = controller.control(env, y)?;
            let succ = match last_control {
                Some((cu, cs)) if cu == u => cs,
                _ => {
                    let t = dynamics.successor(env, s, u)?;
                    if t > err {
                        return Err(Error::DomainMismatch(format!(
                            "successor #{t} outside the state space"
                        )));
                    }
                    last_control = Some((u, t));
                    t
                }
            };
            match row.iter_mut().find(|(j, _)| *j == succ) {
                Some(e) => e.1 += p,
                None => row.push((succ, p)),
            }
        }
        rows.push(row);
    }
    rows.push(vec![(err, 1.0)]);
    let m = ClosedLoopDtmc::from_parts_unchecked(space.clone(), CsrMatrix::from_rows(space.len(), rows));
    let violations = validate_dtmc(&m);
    if violations.is_empty() {
        Ok(m)
    } else {
        Err(Error::InvalidChain(violations))
    }
}
