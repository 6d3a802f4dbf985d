use std::collections::BTreeSet;

use percheck_core::cases::f1tenth::CONTROLS;
use percheck_core::cases::{
    build_case_chains, synthetic_abstraction, taxinet_discretize, uniform_abstractions, Case, F1TenthConfig,
    F1TenthModel, Segment, SyntheticNoiseModel, TaxiNetModel, TaxiState,
};
use percheck_core::summary::summarize;
use percheck_core::Error;

fn pose(cte: u8, he: u8) -> TaxiState {
    TaxiState::Pose { cte, he }
}

#[test]
fn taxinet_bins_follow_the_bracket_rules() {
    assert_eq!(taxinet_discretize(0.0, 0.0), pose(0, 0));
    assert_eq!(taxinet_discretize(-5.0, 20.0), pose(3, 2));
    assert_eq!(taxinet_discretize(9.0, 0.0), TaxiState::Error);
    assert_eq!(taxinet_discretize(-4.8, 0.0), pose(1, 0));
    assert_eq!(taxinet_discretize(1.6, 0.0), pose(0, 0));
    assert_eq!(taxinet_discretize(0.0, 40.0), TaxiState::Error);
}

#[test]
fn missing_segment_abstraction_is_reported() {
    let case = Case::F1Tenth(F1TenthModel::new(F1TenthConfig::reduced()).unwrap());
    let mut alphas = uniform_abstractions(&case, SyntheticNoiseModel::Perfect).unwrap();
    alphas.remove("right");
    match build_case_chains(&case, &alphas) {
        Err(Error::MissingEnvironment(e)) => assert_eq!(e, "right"),
        other => panic!("expected MissingEnvironment, got {other:?}"),
    }
}

#[test]
fn error_state_is_fixed_for_every_segment_and_control() {
    let m = F1TenthModel::new(F1TenthConfig::reduced()).unwrap();
    for seg in Segment::ALL {
        for u in CONTROLS {
            assert_eq!(m.step(seg, None, u), None);
        }
    }
}

#[test]
fn dynamics_are_total_over_the_reduced_grid() {
    let m = F1TenthModel::new(F1TenthConfig::reduced()).unwrap();
    let n = m.space().non_error_len();
    for seg in Segment::ALL {
        for i in 0..n {
            let s = m.decode(i).unwrap();
            for u in CONTROLS {
                if let Some(t) = m.step(seg, Some(s), u) {
                    assert!(m.index(&t) < n, "{seg:?} {s:?} {u} left the grid");
                }
            }
        }
    }
}

#[test]
fn uniform_noise_sweep_is_monotone_on_straight() {
    let m = F1TenthModel::new(F1TenthConfig::reduced()).unwrap();
    let case = Case::F1Tenth(m.clone());
    let starts = m.nominal_starts();
    let mut last = vec![0.0; starts.len()];
    for step in 0..=5 {
        let p = f64::from(step) / 10.0;
        let alphas = uniform_abstractions(&case, SyntheticNoiseModel::Uniform { p }).unwrap();
        let c = summarize(&case.chain("straight", &alphas["straight"]).unwrap(), m.config().horizon).unwrap();
        let b: Vec<f64> = starts.iter().map(|&s| c.b()[s]).collect();
        if p == 0.0 {
            assert!(b.iter().all(|&v| v == 0.0));
        }
        for (old, new) in last.iter().zip(&b) {
            assert!(new + 1e-12 >= *old, "p = {p}: {new} < {old}");
        }
        last = b;
    }
}

#[test]
fn perfect_perception_never_fails_from_a_nominal_start() {
    let m = F1TenthModel::new(F1TenthConfig::reduced()).unwrap();
    let case = Case::F1Tenth(m.clone());
    let chains = build_case_chains(&case, &uniform_abstractions(&case, SyntheticNoiseModel::Perfect).unwrap()).unwrap();
    // explicit reachability from the nominal starts through one segment
    for (env, chain) in &chains {
        let mut seen: BTreeSet<usize> = m.nominal_starts().into_iter().collect();
        let mut frontier: Vec<usize> = seen.iter().copied().collect();
        for _ in 0..m.config().horizon {
            let mut next = Vec::new();
            for s in frontier {
                for (t, _) in chain.transitions().row(s) {
                    assert_ne!(t, m.error_index(), "{env}: error reachable from a nominal start");
                    if seen.insert(t) {
                        next.push(t);
                    }
                }
            }
            frontier = next;
        }
    }
}

#[test]
fn synthetic_rows_match_the_noise_arithmetic() {
    let case = Case::TaxiNet(TaxiNetModel::illustrative());
    let layout = case.layout();
    let alpha = synthetic_abstraction(&layout, SyntheticNoiseModel::Uniform { p: 0.2 }).unwrap();
    let ny = layout.num_estimates as f64;
    for (s, &t) in layout.truth.iter().enumerate() {
        for (y, q) in alpha.row(s) {
            let want = if y == t { 0.8 } else { 0.2 / (ny - 1.0) };
            assert!((q - want).abs() < 1e-15);
        }
    }
    let alpha = synthetic_abstraction(&layout, SyntheticNoiseModel::Neighbor { p: 0.1 }).unwrap();
    for (s, &t) in layout.truth.iter().enumerate() {
        let k = layout.neighbors[t].len() as f64;
        let row: Vec<(usize, f64)> = alpha.row(s).collect();
        assert_eq!(row.len(), layout.neighbors[t].len() + 1);
        assert!((row.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-12);
        for (y, q) in row {
            let want = if y == t { 0.9 } else { 0.1 / k };
            assert!((q - want).abs() < 1e-15);
        }
    }
    assert!(matches!(
        synthetic_abstraction(&layout, SyntheticNoiseModel::Uniform { p: 1.5 }),
        Err(Error::InvalidParameter(_))
    ));
}
