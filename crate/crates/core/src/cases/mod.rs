//! Built-in case studies and synthetic perception noise.

pub mod f1tenth;
pub mod taxinet;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{compose_closed_loop, ClosedLoopDtmc, PerceptionAbstraction, StateSpace};
use crate::sparse::CsrMatrix;
use crate::summary::ChainSet;

pub use f1tenth::{F1TenthConfig, F1TenthModel, Segment};
pub use taxinet::{taxinet_discretize, TaxiNetModel, TaxiState};

/// How true states relate to the estimate space: the correct estimate of
/// each non-error state and the adjacency between estimates.
#[derive(Clone, Debug)]
pub struct EstimateLayout {
    pub num_estimates: usize,
    pub truth: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticNoiseModel {
    /// The correct estimate with probability one.
    Perfect,
    /// `1 − p` on the correct estimate, `p` spread evenly over all others.
    Uniform { p: f64 },
    /// `1 − p` on the correct estimate, `p` spread evenly over its
    /// neighbors in the estimate grid.
    Neighbor { p: f64 },
}

impl SyntheticNoiseModel {
    fn rate(&self) -> Option<f64> {
        match *self {
            SyntheticNoiseModel::Perfect => None,
            SyntheticNoiseModel::Uniform { p } | SyntheticNoiseModel::Neighbor { p } => Some(p),
        }
    }
}

/// Builds an abstraction from a noise model. A state with no alternative
/// estimates (no neighbors, or a single estimate overall) keeps all of its
/// mass on the correct estimate.
pub fn synthetic_abstraction(
    layout: &EstimateLayout,
    noise: SyntheticNoiseModel,
) -> Result<PerceptionAbstraction> {
    if let Some(p) = noise.rate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("noise rate {p} is outside [0, 1]")));
        }
    }
    let ny = layout.num_estimates;
    let rows = layout
        .truth
        .iter()
        .map(|&t| match noise {
            SyntheticNoiseModel::Perfect => vec![(t, 1.0)],
            SyntheticNoiseModel::Uniform { p } => {
                if ny <= 1 || p == 0.0 {
                    vec![(t, 1.0)]
                } else {
                    let share = p / (ny - 1) as f64;
                    (0..ny).map(|y| (y, if y == t { 1.0 - p } else { share })).collect()
                }
            }
            SyntheticNoiseModel::Neighbor { p } => {
                let nbrs = &layout.neighbors[t];
                if nbrs.is_empty() || p == 0.0 {
                    vec![(t, 1.0)]
                } else {
                    let share = p / nbrs.len() as f64;
                    let mut row = vec![(t, 1.0 - p)];
                    row.extend(nbrs.iter().map(|&y| (y, share)));
                    row
                }
            }
        })
        .collect();
    PerceptionAbstraction::new(CsrMatrix::from_rows(ny, rows))
}

/// One of the built-in case studies.
#[derive(Clone, Debug)]
pub enum Case {
    TaxiNet(TaxiNetModel),
    F1Tenth(F1TenthModel),
}

impl Case {
    pub fn space(&self) -> &Arc<StateSpace> {
        match self {
            Case::TaxiNet(m) => m.space(),
            Case::F1Tenth(m) => m.space(),
        }
    }

    pub fn environments(&self) -> Vec<String> {
        match self {
            Case::TaxiNet(m) => m.environments().to_vec(),
            Case::F1Tenth(_) => Segment::ALL.iter().map(|s| s.id().to_string()).collect(),
        }
    }

    pub fn layout(&self) -> EstimateLayout {
        match self {
            Case::TaxiNet(m) => m.layout(),
            Case::F1Tenth(m) => m.layout(),
        }
    }

    /// Closed-loop chain of environment `env` under `alpha`.
    pub fn chain(&self, env: &str, alpha: &PerceptionAbstraction) -> Result<ClosedLoopDtmc> {
        match self {
            Case::TaxiNet(m) => compose_closed_loop(
                m.space().clone(),
                alpha,
                &m.tables().controller,
                &m.tables().dynamics,
                env,
            ),
            Case::F1Tenth(m) => compose_closed_loop(m.space().clone(), alpha, m, m, env),
        }
    }
}

/// One validated chain per environment of `case`.
pub fn build_case_chains(
    case: &Case,
    abstractions: &BTreeMap<String, PerceptionAbstraction>,
) -> Result<ChainSet> {
    let mut out = ChainSet::new();
    for env in case.environments() {
        let alpha = abstractions
            .get(&env)
            .ok_or_else(|| Error::MissingEnvironment(env.clone()))?;
        let chain = case.chain(&env, alpha)?;
        out.insert(env, chain);
    }
    Ok(out)
}

/// The same noise model for every environment of `case`.
pub fn uniform_abstractions(
    case: &Case,
    noise: SyntheticNoiseModel,
) -> Result<BTreeMap<String, PerceptionAbstraction>> {
    let alpha = synthetic_abstraction(&case.layout(), noise)?;
    Ok(case
        .environments()
        .into_iter()
        .map(|e| (e, alpha.clone()))
        .collect())
}
