//! Taxiway centerline tracking with a discretized pose.
//!
//! Cross-track error (meters) and heading error (degrees) are binned into
//! `cte ∈ {0..4}` and `he ∈ {0..2}`:
//!
//! | cte | range                  |  | he | range                     |
//! |-----|------------------------|--|----|---------------------------|
//! | 3   | −8.0 ≤ cte < −4.8      |  | 1  | −35.0 ≤ he < −11.67       |
//! | 1   | −4.8 ≤ cte < −1.6      |  | 0  | −11.67 ≤ he ≤ 11.66       |
//! | 0   | −1.6 ≤ cte ≤ 1.6       |  | 2  | 11.66 < he ≤ 35.0         |
//! | 2   | 1.6 < cte ≤ 4.8        |  |    |                           |
//! | 4   | 4.8 < cte ≤ 8.0        |  |    |                           |
//!
//! Poses outside these ranges are the error state.
//!
//! The closed-loop controller and dynamics of the real system are not
//! public. [`TaxiNetModel::illustrative`] ships small hand-written tables so
//! the pipeline can run end to end; they are not a model of any aircraft.
//! Real analyses supply their own tables.

use std::sync::Arc;

use crate::cases::EstimateLayout;
use crate::error::Result;
use crate::model::{LabeledTable, StateSpace, TableModel, ANY_ENV, KEY_SEP};

pub const CTE_CLASSES: u8 = 5;
pub const HE_CLASSES: u8 = 3;
pub const ERROR_LABEL: &str = "err";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaxiState {
    Pose { cte: u8, he: u8 },
    Error,
}

impl TaxiState {
    pub fn label(&self) -> String {
        match self {
            TaxiState::Pose { cte, he } => format!("({cte},{he})"),
            TaxiState::Error => ERROR_LABEL.to_string(),
        }
    }
}

/// Bins a continuous pose.
pub fn taxinet_discretize(cte_m: f64, he_deg: f64) -> TaxiState {
    let cte = if (-8.0..-4.8).contains(&cte_m) {
        3
    } else if (-4.8..-1.6).contains(&cte_m) {
        1
    } else if (-1.6..=1.6).contains(&cte_m) {
        0
    } else if cte_m > 1.6 && cte_m <= 4.8 {
        2
    } else if cte_m > 4.8 && cte_m <= 8.0 {
        4
    } else {
        return TaxiState::Error;
    };
    let he = if (-35.0..-11.67).contains(&he_deg) {
        1
    } else if (-11.67..=11.66).contains(&he_deg) {
        0
    } else if he_deg > 11.66 && he_deg <= 35.0 {
        2
    } else {
        // out of range or NaN
        return TaxiState::Error;
    };
    TaxiState::Pose { cte, he }
}

/// Signed lateral position of a cte class, left to right.
fn cte_offset(cte: u8) -> i32 {
    [0, -1, 1, -2, 2][cte as usize]
}

fn cte_class(offset: i32) -> Option<u8> {
    match offset {
        -2 => Some(3),
        -1 => Some(1),
        0 => Some(0),
        1 => Some(2),
        2 => Some(4),
        _ => None,
    }
}

fn he_offset(he: u8) -> i32 {
    [0, -1, 1][he as usize]
}

fn he_class(offset: i32) -> Option<u8> {
    match offset {
        -1 => Some(1),
        0 => Some(0),
        1 => Some(2),
        _ => None,
    }
}

/// Non-error states in index order, `cte` major.
pub fn poses() -> Vec<TaxiState> {
    (0..CTE_CLASSES)
        .flat_map(|cte| (0..HE_CLASSES).map(move |he| TaxiState::Pose { cte, he }))
        .collect()
}

pub fn state_space() -> StateSpace {
    StateSpace::new(poses().iter().map(TaxiState::label).collect(), ERROR_LABEL)
        .expect("static labels are unique")
}

/// Estimates coincide with poses; neighbors are adjacent in lateral or
/// heading offset.
pub fn layout() -> EstimateLayout {
    let ps = poses();
    let index_of = |cte: u8, he: u8| (cte as usize) * HE_CLASSES as usize + he as usize;
    let neighbors = ps
        .iter()
        .map(|p| {
            let TaxiState::Pose { cte, he } = *p else { unreachable!() };
            let (c, h) = (cte_offset(cte), he_offset(he));
            let mut v: Vec<usize> = [(c - 1, h), (c + 1, h), (c, h - 1), (c, h + 1)]
                .into_iter()
                .filter_map(|(c, h)| Some(index_of(cte_class(c)?, he_class(h)?)))
                .collect();
            v.sort_unstable();
            v
        })
        .collect();
    EstimateLayout {
        num_estimates: ps.len(),
        truth: (0..ps.len()).collect(),
        neighbors,
    }
}

/// Illustrative tables: steer against the heading error, otherwise steer
/// toward the centerline. A steering input shifts the heading offset by one;
/// the lateral offset then moves by the new heading offset.
pub fn illustrative_tables() -> (LabeledTable, LabeledTable) {
    let control_label = |u: i32| match u {
        -1 => "steer_left",
        0 => "hold",
        _ => "steer_right",
    };
    let mut controller = std::collections::BTreeMap::new();
    let mut dynamics = std::collections::BTreeMap::new();
    for p in poses() {
        let TaxiState::Pose { cte, he } = p else { unreachable!() };
        let (c, h) = (cte_offset(cte), he_offset(he));
        let u = if h != 0 { -h } else { -c.signum() };
        controller.insert(p.label(), control_label(u).to_string());
        for u in -1..=1 {
            let next = he_class(h + u)
                .and_then(|nh| Some(TaxiState::Pose { cte: cte_class(c + h + u)?, he: nh }))
                .unwrap_or(TaxiState::Error);
            dynamics.insert(
                format!("{}{KEY_SEP}{}", p.label(), control_label(u)),
                next.label(),
            );
        }
    }
    let mut c = LabeledTable::new();
    c.insert(ANY_ENV.to_string(), controller);
    let mut d = LabeledTable::new();
    d.insert(ANY_ENV.to_string(), dynamics);
    (c, d)
}

#[derive(Clone, Debug)]
pub struct TaxiNetModel {
    space: Arc<StateSpace>,
    estimates: Vec<String>,
    environments: Vec<String>,
    tables: TableModel,
}

impl TaxiNetModel {
    /// Model over user tables; `environments` names the lighting conditions.
    pub fn new(
        environments: Vec<String>,
        controller: &LabeledTable,
        dynamics: &LabeledTable,
    ) -> Result<Self> {
        let space = state_space();
        let estimates = space.non_error_labels().to_vec();
        let tables = TableModel::compile(&space, &estimates, controller, dynamics)?;
        Ok(Self {
            space: Arc::new(space),
            estimates,
            environments,
            tables,
        })
    }

    /// The illustrative tables with conditions `bright` and `dark`.
    pub fn illustrative() -> Self {
        let (c, d) = illustrative_tables();
        Self::new(vec!["bright".into(), "dark".into()], &c, &d).expect("static tables compile")
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn estimates(&self) -> &[String] {
        &self.estimates
    }

    pub fn environments(&self) -> &[String] {
        &self.environments
    }

    pub fn tables(&self) -> &TableModel {
        &self.tables
    }

    pub fn layout(&self) -> EstimateLayout {
        layout()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{build_case_chains, uniform_abstractions, Case, SyntheticNoiseModel};
    use crate::summary::summarize;

    fn pose(cte: u8, he: u8) -> TaxiState {
        TaxiState::Pose { cte, he }
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(taxinet_discretize(0.0, 0.0), pose(0, 0));
        assert_eq!(taxinet_discretize(-5.0, 20.0), pose(3, 2));
        assert_eq!(taxinet_discretize(9.0, 0.0), TaxiState::Error);
        assert_eq!(taxinet_discretize(0.0, -36.0), TaxiState::Error);
        assert_eq!(taxinet_discretize(f64::NAN, 0.0), TaxiState::Error);
    }

    #[test]
    fn discretize_bin_edges() {
        assert_eq!(taxinet_discretize(-8.0, 0.0), pose(3, 0));
        assert_eq!(taxinet_discretize(-4.8, 0.0), pose(1, 0));
        assert_eq!(taxinet_discretize(-1.6, 0.0), pose(0, 0));
        assert_eq!(taxinet_discretize(1.6, 0.0), pose(0, 0));
        assert_eq!(taxinet_discretize(4.8, 0.0), pose(2, 0));
        assert_eq!(taxinet_discretize(8.0, 0.0), pose(4, 0));
        assert_eq!(taxinet_discretize(8.000_001, 0.0), TaxiState::Error);
        assert_eq!(taxinet_discretize(0.0, -35.0), pose(0, 1));
        assert_eq!(taxinet_discretize(0.0, -11.67), pose(0, 0));
        assert_eq!(taxinet_discretize(0.0, 11.66), pose(0, 0));
        assert_eq!(taxinet_discretize(0.0, 11.665), pose(0, 2));
        assert_eq!(taxinet_discretize(0.0, 35.0), pose(0, 2));
    }

    #[test]
    fn layout_neighbors_are_symmetric() {
        let l = layout();
        for (i, ns) in l.neighbors.iter().enumerate() {
            for &j in ns {
                assert!(l.neighbors[j].contains(&i));
            }
        }
        // center pose (0,0) has four neighbors
        assert_eq!(l.neighbors[0].len(), 4);
    }

    #[test]
    fn illustrative_controller_is_safe_with_perfect_perception() {
        let case = Case::TaxiNet(TaxiNetModel::illustrative());
        let alphas = uniform_abstractions(&case, SyntheticNoiseModel::Perfect).unwrap();
        let chains = build_case_chains(&case, &alphas).unwrap();
        for chain in chains.values() {
            let c = summarize(chain, 20).unwrap();
            assert!(c.b().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn noisy_perception_leaks_mass() {
        let case = Case::TaxiNet(TaxiNetModel::illustrative());
        let alphas =
            uniform_abstractions(&case, SyntheticNoiseModel::Uniform { p: 0.3 }).unwrap();
        let chains = build_case_chains(&case, &alphas).unwrap();
        let c = summarize(&chains["dark"], 20).unwrap();
        assert!(c.b().iter().any(|&b| b > 0.0));
    }
}
