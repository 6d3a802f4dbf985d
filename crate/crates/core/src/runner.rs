//! Batch execution of scenario spec files.
//!
//! A spec names the environments and how to obtain their chains, optional
//! named preconditions, a default scenario sequence and a list of queries:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "model": {"kind": "f1tenth", "reduced": true},
//!   "environments": [
//!     {"id": "straight", "noise": {"kind": "uniform", "p": 0.1}}
//!   ],
//!   "sequence": [{"env": "straight", "horizon": 12}],
//!   "preconditions": {"phi": {"constraints": [{"terms": {"(0,8,0,1)": 1}, "theta": 1}]}},
//!   "queries": [{"kind": "forward", "pre": "nominal"}]
//! }
//! ```
//!
//! Environment sources are `contingency` (a CSV, normalized against the
//! model's estimate labels), `noise` (a synthetic abstraction for a
//! built-in case) or `chain` (an explicit chain file, no model needed).
//! Relative paths resolve against the spec file's directory.
//!
//! Predicate names `top` and, for the F1Tenth model, `nominal` (all mass on
//! nominal segment starts) are predefined.
//!
//! Each query writes `qNN_<kind>.csv` (plus JSON artifacts for some kinds)
//! into the output directory; `report.json` collects every query's result or
//! error. A failing query does not stop the others.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    accelerate, check_assertion, default_eps_grid, find_invariant, forward_worst_case,
    invariant_holds, point_distribution_error_map, trivial_epsilon, worst_case_interleaving,
    AccelerationCertificate, HoareAssertion,
};
use crate::cases::{synthetic_abstraction, Case, F1TenthConfig, F1TenthModel, SyntheticNoiseModel, TaxiNetModel};
use crate::error::{Error, Result};
use crate::io::{
    csv_string, fmt_prob, load_contingency_csv, load_explicit_chain, parse_eps_grid, predicate_to_json,
    read_json, read_tables, summary_to_json, write_json, write_text, PredicateSpec, Prob, FORMAT_VERSION,
};
use crate::linprog::AffinePredicate;
use crate::model::{abstraction_for, compose_closed_loop, Distribution, TableModel};
use crate::simulate::estimate_error_probability;
use crate::summary::{summarize_sequence, ChainSet, Scenario, ScenarioSequence, Summary};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpecFile {
    pub format_version: u32,
    #[serde(default)]
    pub model: Option<ModelRef>,
    pub environments: Vec<EnvironmentSpec>,
    /// Default sequence for queries that do not name their own.
    #[serde(default)]
    pub sequence: Option<ScenarioSequence>,
    #[serde(default)]
    pub preconditions: BTreeMap<String, PredicateSpec>,
    #[serde(default)]
    pub queries: Vec<Query>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// `a:b:step`; defaults to `0:0.99:0.01`.
    #[serde(default)]
    pub eps_grid: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelRef {
    /// Controller and dynamics tables file.
    Tables { path: PathBuf },
    /// TaxiNet discretization; illustrative tables unless `tables` is given.
    Taxinet {
        #[serde(default)]
        tables: Option<PathBuf>,
    },
    F1tenth {
        #[serde(default)]
        config: Option<F1TenthConfig>,
        /// Use the reduced grid when no `config` is given.
        #[serde(default)]
        reduced: bool,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub id: String,
    #[serde(default)]
    pub contingency: Option<PathBuf>,
    #[serde(default)]
    pub noise: Option<SyntheticNoiseModel>,
    #[serde(default)]
    pub chain: Option<PathBuf>,
}

/// Initial distribution for simulation.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    #[default]
    Uniform,
    /// Uniform over the listed states.
    Support { states: Vec<String> },
    /// Dense weights over the non-error states.
    Weights { weights: Vec<Prob> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Query {
    Summarize {
        #[serde(default)]
        sequence: Option<ScenarioSequence>,
    },
    Forward {
        #[serde(default)]
        pre: Option<String>,
        #[serde(default)]
        sequence: Option<ScenarioSequence>,
    },
    Backward {
        eps: f64,
        #[serde(default)]
        sequence: Option<ScenarioSequence>,
    },
    Check {
        #[serde(default)]
        pre: Option<String>,
        #[serde(default)]
        post: Option<String>,
        eps: f64,
        #[serde(default)]
        sequence: Option<ScenarioSequence>,
    },
    /// Acceleration over the scenarios (default: those of the sequence).
    /// `invariant` is `auto` (grid search, falling back to `top` with the
    /// trivial epsilon), `top`, or a precondition name.
    Accelerate {
        #[serde(default)]
        scenarios: Option<ScenarioSequence>,
        #[serde(default = "auto")]
        invariant: String,
        #[serde(default)]
        eps: Option<f64>,
        k: u32,
        /// Also compute the exhaustive worst case for `k ≤ brute_force_k`.
        #[serde(default)]
        brute_force_k: u32,
    },
    Invariant {
        #[serde(default)]
        scenarios: Option<ScenarioSequence>,
        #[serde(default)]
        grid: Option<String>,
    },
    Interleave {
        #[serde(default)]
        scenarios: Option<ScenarioSequence>,
        #[serde(default)]
        pre: Option<String>,
        k: u32,
    },
    Simulate {
        #[serde(default)]
        sequence: Option<ScenarioSequence>,
        #[serde(default)]
        init: InitSpec,
        runs: u64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn auto() -> String {
    "auto".into()
}

impl Query {
    pub fn kind(&self) -> &'static str {
        match self {
            Query::Summarize { .. } => "summarize",
            Query::Forward { .. } => "forward",
            Query::Backward { .. } => "backward",
            Query::Check { .. } => "check",
            Query::Accelerate { .. } => "accelerate",
            Query::Invariant { .. } => "invariant",
            Query::Interleave { .. } => "interleave",
            Query::Simulate { .. } => "simulate",
        }
    }

    fn sequences(&self) -> Vec<&ScenarioSequence> {
        match self {
            Query::Summarize { sequence }
            | Query::Forward { sequence, .. }
            | Query::Backward { sequence, .. }
            | Query::Check { sequence, .. }
            | Query::Simulate { sequence, .. } => sequence.iter().collect(),
            Query::Accelerate { scenarios, .. }
            | Query::Invariant { scenarios, .. }
            | Query::Interleave { scenarios, .. } => scenarios.iter().collect(),
        }
    }
}

/// Overrides from the command line.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub eps_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub index: usize,
    pub kind: String,
    pub ok: bool,
    /// The analysis answered "no" (assertion fails, no invariant found, ...).
    pub negative: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub seed: u64,
    pub environments: Vec<String>,
    pub queries: Vec<QueryReport>,
}

impl RunReport {
    pub fn all_ok(&self) -> bool {
        self.queries.iter().all(|q| q.ok)
    }

    pub fn any_negative(&self) -> bool {
        self.queries.iter().any(|q| q.negative)
    }
}

/// Chains and named predicates resolved from a spec.
pub struct Resolved {
    pub chains: ChainSet,
    /// Non-error labels shared by every chain.
    pub states: Vec<String>,
    pub preconditions: BTreeMap<String, AffinePredicate>,
    pub sequence: Option<ScenarioSequence>,
}

pub fn load_spec(path: &Path) -> Result<ScenarioSpecFile> {
    let spec: ScenarioSpecFile = read_json(path)?;
    if spec.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion(spec.format_version));
    }
    Ok(spec)
}

fn rel(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

enum Built {
    None,
    Tables(crate::model::StateSpace, Vec<String>, TableModel),
    Case(Case),
}

/// Loads every environment's chain and checks that all references resolve.
pub fn resolve(spec: &ScenarioSpecFile, base: &Path) -> Result<Resolved> {
    let mut ids = BTreeSet::new();
    for e in &spec.environments {
        if !ids.insert(e.id.as_str()) {
            return Err(Error::DuplicateLabel(e.id.clone()));
        }
        let sources = [e.contingency.is_some(), e.noise.is_some(), e.chain.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::InvalidParameter(format!(
                "environment `{}` needs exactly one of `contingency`, `noise`, `chain`",
                e.id
            )));
        }
    }
    let model_envs: Vec<String> = spec
        .environments
        .iter()
        .filter(|e| e.chain.is_none())
        .map(|e| e.id.clone())
        .collect();
    let built = match &spec.model {
        None => Built::None,
        Some(ModelRef::Tables { path }) => {
            let t = read_tables(&rel(base, path))?;
            let space = t.space()?;
            let est = t.estimate_labels().to_vec();
            let tm = TableModel::compile(&space, &est, &t.controller, &t.dynamics)?;
            Built::Tables(space, est, tm)
        }
        Some(ModelRef::Taxinet { tables }) => {
            let (c, d) = match tables {
                Some(p) => {
                    let t = read_tables(&rel(base, p))?;
                    (t.controller, t.dynamics)
                }
                None => crate::cases::taxinet::illustrative_tables(),
            };
            Built::Case(Case::TaxiNet(TaxiNetModel::new(model_envs.clone(), &c, &d)?))
        }
        Some(ModelRef::F1tenth { config, reduced }) => {
            let cfg = match (config, reduced) {
                (Some(c), _) => c.clone(),
                (None, true) => F1TenthConfig::reduced(),
                (None, false) => F1TenthConfig::default(),
            };
            for id in &model_envs {
                if crate::cases::Segment::parse(id).is_none() {
                    return Err(Error::UnknownEnvironment(id.clone()));
                }
            }
            Built::Case(Case::F1Tenth(F1TenthModel::new(cfg)?))
        }
    };

    let mut chains = ChainSet::new();
    for e in &spec.environments {
        let chain = if let Some(p) = &e.chain {
            load_explicit_chain(&rel(base, p))?
        } else {
            let need_model = || {
                Error::InvalidParameter(format!("environment `{}` needs a `model`", e.id))
            };
            match &built {
                Built::None => return Err(need_model()),
                Built::Tables(space, est, tm) => {
                    let Some(csv) = &e.contingency else {
                        return Err(Error::InvalidParameter(format!(
                            "environment `{}`: noise models need a built-in case model",
                            e.id
                        )));
                    };
                    let alpha = abstraction_for(&load_contingency_csv(&rel(base, csv))?, space, est)?;
                    compose_closed_loop(
                        std::sync::Arc::new(space.clone()),
                        &alpha,
                        &tm.controller,
                        &tm.dynamics,
                        &e.id,
                    )?
                }
                Built::Case(case) => {
                    let alpha = match (&e.noise, &e.contingency, case) {
                        (Some(n), _, _) => synthetic_abstraction(&case.layout(), *n)?,
                        (None, Some(csv), Case::TaxiNet(m)) => {
                            abstraction_for(&load_contingency_csv(&rel(base, csv))?, m.space(), m.estimates())?
                        }
                        _ => {
                            return Err(Error::InvalidParameter(format!(
                                "environment `{}`: F1Tenth environments take a noise model",
                                e.id
                            )))
                        }
                    };
                    case.chain(&e.id, &alpha)?
                }
            }
        };
        chains.insert(e.id.clone(), chain);
    }

    let states = match chains.values().next() {
        Some(c) => c.space().non_error_labels().to_vec(),
        None => return Err(Error::InvalidParameter("spec defines no environments".into())),
    };
    if let Some((id, _)) = chains.iter().find(|(_, c)| c.space().non_error_labels() != states) {
        return Err(Error::DomainMismatch(format!(
            "environment `{id}` uses a different state space"
        )));
    }

    let seqs = spec.sequence.iter().chain(spec.queries.iter().flat_map(Query::sequences));
    for seq in seqs {
        for s in seq.scenarios() {
            if !chains.contains_key(&s.env) {
                return Err(Error::UnknownEnvironment(s.env.clone()));
            }
        }
    }

    let mut preconditions = BTreeMap::new();
    preconditions.insert("top".to_string(), AffinePredicate::top());
    if let Built::Case(Case::F1Tenth(m)) = &built {
        let nominal: BTreeSet<usize> = m.nominal_starts().into_iter().collect();
        let others = (0..states.len()).filter(|i| !nominal.contains(i));
        preconditions.insert("nominal".to_string(), AffinePredicate::indicator(states.len(), others, 0.0));
    }
    for (name, p) in &spec.preconditions {
        preconditions.insert(name.clone(), p.resolve(&states)?);
    }

    Ok(Resolved {
        chains,
        states,
        preconditions,
        sequence: spec.sequence.clone(),
    })
}

struct Outcome {
    result: Value,
    negative: bool,
    files: Vec<(String, String)>,
}

struct Ctx<'a> {
    r: &'a Resolved,
    seed: u64,
    grid: &'a [f64],
}

impl Ctx<'_> {
    fn sequence<'s>(&'s self, s: &'s Option<ScenarioSequence>) -> Result<&'s ScenarioSequence> {
        s.as_ref()
            .or(self.r.sequence.as_ref())
            .ok_or_else(|| Error::InvalidParameter("query has no sequence and the spec has no default".into()))
    }

    fn predicate(&self, name: &Option<String>) -> Result<&AffinePredicate> {
        let name = name.as_deref().unwrap_or("top");
        self.r
            .preconditions
            .get(name)
            .ok_or_else(|| Error::UnknownLabel(format!("precondition {name}")))
    }

    /// Distinct scenarios, in first-appearance order, each summarized alone.
    fn scenario_summaries(&self, s: &Option<ScenarioSequence>) -> Result<(Vec<Scenario>, Vec<Summary>)> {
        let mut seen = Vec::new();
        for sc in self.sequence(s)?.scenarios() {
            if !seen.contains(sc) {
                seen.push(sc.clone());
            }
        }
        let sums = seen
            .iter()
            .map(|sc| summarize_sequence(&ScenarioSequence::single(sc.clone()), &self.r.chains))
            .collect::<Result<_>>()?;
        Ok((seen, sums))
    }
}

fn label_weights(states: &[String], w: &[f64]) -> Value {
    Value::Array(
        states
            .iter()
            .zip(w)
            .filter(|(_, &v)| v != 0.0)
            .map(|(s, &v)| json!([s, fmt_prob(v)]))
            .collect(),
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_prob).unwrap_or_default()
}

fn scenario_id(s: &Scenario) -> String {
    format!("{}:{}", s.env, s.horizon)
}

fn run_query(q: &Query, ctx: &Ctx<'_>, stem: &str) -> Result<Outcome> {
    let states = &ctx.r.states;
    let csv = |h: &[&str], rows: Vec<Vec<String>>| (format!("{stem}.csv"), csv_string(h, &rows));
    match q {
        Query::Summarize { sequence } => {
            let c = summarize_sequence(ctx.sequence(sequence)?, &ctx.r.chains)?;
            let rows = point_distribution_error_map(&c, states)?
                .into_iter()
                .map(|(l, b)| vec![l, fmt_prob(b)])
                .collect();
            Ok(Outcome {
                result: json!({ "dim": c.dim(), "max_error": trivial_epsilon(&[&c]) }),
                negative: false,
                files: vec![
                    csv(&["state", "error_probability"], rows),
                    (format!("{stem}.json"), summary_to_json(&c, states)?),
                ],
            })
        }
        Query::Forward { pre, sequence } => {
            let c = summarize_sequence(ctx.sequence(sequence)?, &ctx.r.chains)?;
            let name = pre.clone().unwrap_or_else(|| "top".into());
            let wc = forward_worst_case(&c, ctx.predicate(pre)?)?;
            Ok(Outcome {
                result: json!({ "value": wc.value, "witness": label_weights(states, wc.witness.weights()) }),
                negative: false,
                files: vec![csv(&["pre", "value"], vec![vec![name, fmt_prob(wc.value)]])],
            })
        }
        Query::Backward { eps, sequence } => {
            let c = summarize_sequence(ctx.sequence(sequence)?, &ctx.r.chains)?;
            let wp = crate::analysis::backward_weakest_precondition(&c, *eps)?;
            let rows: Vec<Vec<String>> = states
                .iter()
                .zip(c.b())
                .map(|(l, &b)| vec![l.clone(), fmt_prob(b), (b <= *eps).to_string()])
                .collect();
            let admissible = c.b().iter().filter(|&&b| b <= *eps).count();
            Ok(Outcome {
                result: json!({ "eps": eps, "admissible_point_states": admissible }),
                negative: false,
                files: vec![
                    csv(&["state", "error_probability", "within_eps"], rows),
                    (format!("{stem}.json"), predicate_to_json(&wp)),
                ],
            })
        }
        Query::Check { pre, post, eps, sequence } => {
            let c = summarize_sequence(ctx.sequence(sequence)?, &ctx.r.chains)?;
            let h = HoareAssertion::new(ctx.predicate(pre)?, &c, ctx.predicate(post)?, *eps)?;
            let v = check_assertion(&h)?;
            let obligation = match v.violated_obligation {
                None => String::new(),
                Some(crate::analysis::Obligation::ErrorBound) => "error_bound".into(),
                Some(crate::analysis::Obligation::Postcondition { index }) => format!("postcondition:{index}"),
            };
            let row = vec![
                v.holds.to_string(),
                v.vacuous.to_string(),
                opt(v.max_error),
                obligation,
                opt(v.violation_value),
                opt(v.violation_bound),
            ];
            let h = ["holds", "vacuous", "max_error", "violated_obligation", "violation_value", "violation_bound"];
            Ok(Outcome {
                negative: !v.holds,
                result: serde_json::to_value(&v).expect("plain data"),
                files: vec![csv(&h, vec![row])],
            })
        }
        Query::Accelerate {
            scenarios,
            invariant,
            eps,
            k,
            brute_force_k,
        } => {
            let (ids, sums) = ctx.scenario_summaries(scenarios)?;
            let (phi, e) = match invariant.as_str() {
                "auto" => match find_invariant(&sums, ctx.grid)? {
                    Some(found) => found,
                    None => (AffinePredicate::top(), trivial_epsilon(&sums)),
                },
                name => (
                    ctx.predicate(&Some(name.to_string()))?.clone(),
                    eps.unwrap_or_else(|| trivial_epsilon(&sums)),
                ),
            };
            let cert = match accelerate(&sums, &phi, e) {
                Ok(c) => c,
                Err(Error::PremiseFailed {
                    index,
                    reason,
                    counterexample,
                }) => {
                    return Ok(Outcome {
                        negative: true,
                        result: json!({
                            "premise_checked": false,
                            "failed_scenario": scenario_id(&ids[index]),
                            "reason": reason,
                            "counterexample": label_weights(states, &counterexample),
                        }),
                        files: Vec::new(),
                    })
                }
                Err(other) => return Err(other),
            };
            let rows = (1..=*k)
                .map(|kk| {
                    let truth = if kk <= *brute_force_k {
                        fmt_prob(worst_case_interleaving(&sums, &phi, kk)?.value)
                    } else {
                        String::new()
                    };
                    Ok(vec![kk.to_string(), fmt_prob(cert.bound(kk)), truth])
                })
                .collect::<Result<_>>()?;
            let names: Vec<String> = ids.iter().map(scenario_id).collect();
            let cert_json = certificate_json(&cert, &names, *k);
            Ok(Outcome {
                negative: false,
                result: cert_json.clone(),
                files: vec![
                    csv(&["k", "bound", "brute_force"], rows),
                    (
                        format!("{stem}.json"),
                        serde_json::to_string_pretty(&cert_json).expect("plain data") + "\n",
                    ),
                ],
            })
        }
        Query::Invariant { scenarios, grid } => {
            let (ids, sums) = ctx.scenario_summaries(scenarios)?;
            let grid = match grid {
                Some(g) => parse_eps_grid(g)?,
                None => ctx.grid.to_vec(),
            };
            let verdicts: Vec<bool> = grid
                .par_iter()
                .map(|&e| invariant_holds(&sums, e))
                .collect::<Result<_>>()?;
            let first = grid.iter().zip(&verdicts).find(|(_, &ok)| ok).map(|(&e, _)| e);
            let rows = grid
                .iter()
                .zip(&verdicts)
                .map(|(&e, ok)| vec![fmt_prob(e), ok.to_string()])
                .collect();
            Ok(Outcome {
                negative: first.is_none(),
                result: json!({
                    "scenarios": ids.iter().map(scenario_id).collect::<Vec<_>>(),
                    "epsilon": first,
                }),
                files: vec![csv(&["epsilon", "holds"], rows)],
            })
        }
        Query::Interleave { scenarios, pre, k } => {
            let (ids, sums) = ctx.scenario_summaries(scenarios)?;
            let phi = ctx.predicate(pre)?;
            let mut rows = Vec::new();
            let mut last = Value::Null;
            for kk in 1..=*k {
                let w = worst_case_interleaving(&sums, phi, kk)?;
                let seq: Vec<String> = w.sequence.iter().map(|&i| scenario_id(&ids[i])).collect();
                rows.push(vec![kk.to_string(), fmt_prob(w.value), seq.join(";")]);
                last = json!({ "k": kk, "value": w.value, "sequence": seq });
            }
            Ok(Outcome {
                negative: false,
                result: last,
                files: vec![csv(&["k", "value", "sequence"], rows)],
            })
        }
        Query::Simulate {
            sequence,
            init,
            runs,
            seed,
        } => {
            let n = states.len();
            let init = match init {
                InitSpec::Uniform => Distribution::uniform(n),
                InitSpec::Weights { weights } => Distribution::new(weights.iter().map(|p| p.0).collect())?,
                InitSpec::Support { states: support } => {
                    if support.is_empty() {
                        return Err(Error::InvalidParameter("empty support".into()));
                    }
                    let mut w = vec![0.0; n];
                    for l in support {
                        let i = states
                            .iter()
                            .position(|s| s == l)
                            .ok_or_else(|| Error::UnknownLabel(l.clone()))?;
                        w[i] = 1.0;
                    }
                    let total: f64 = w.iter().sum();
                    Distribution::new(w.into_iter().map(|v| v / total).collect())?
                }
            };
            let seed = seed.unwrap_or(ctx.seed);
            let r = estimate_error_probability(ctx.sequence(sequence)?, &ctx.r.chains, &init, *runs, seed)?;
            let row = vec![
                r.runs.to_string(),
                r.error_hits.to_string(),
                fmt_prob(r.estimate),
                fmt_prob(r.std_error),
                r.seed.to_string(),
            ];
            Ok(Outcome {
                negative: false,
                result: serde_json::to_value(&r).expect("plain data"),
                files: vec![csv(&["runs", "error_hits", "estimate", "std_error", "seed"], vec![row])],
            })
        }
    }
}

/// JSON form of a certificate with its bound table.
pub fn certificate_json(cert: &AccelerationCertificate, scenarios: &[String], k_max: u32) -> Value {
    json!({
        "format_version": FORMAT_VERSION,
        "scenarios": scenarios,
        "m": cert.m,
        "epsilon": cert.epsilon,
        "invariant": PredicateSpec::from_predicate(&cert.invariant),
        "premise_checked": cert.premise_checked,
        "premises": cert.premises,
        "bound_formula": cert.bound_formula,
        "bounds": cert.bound_table(k_max).into_iter().map(|(k, b)| json!([k, b])).collect::<Vec<_>>(),
    })
}

/// Runs every query of `spec` and writes the reports into `out`. Relative
/// paths in the spec resolve against `base`.
pub fn run_spec(spec: &ScenarioSpecFile, base: &Path, out: &Path, opts: &RunOptions) -> Result<RunReport> {
    if spec.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion(spec.format_version));
    }
    let resolved = resolve(spec, base)?;
    let grid = match (&opts.eps_grid, &spec.eps_grid) {
        (Some(g), _) => g.clone(),
        (None, Some(s)) => parse_eps_grid(s)?,
        (None, None) => default_eps_grid(),
    };
    let ctx = Ctx {
        r: &resolved,
        seed: opts.seed.or(spec.seed).unwrap_or(0),
        grid: &grid,
    };
    let outcomes: Vec<_> = spec
        .queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| run_query(q, &ctx, &format!("q{i:02}_{}", q.kind())))
        .collect();
    let mut reports = Vec::with_capacity(outcomes.len());
    for (i, (q, o)) in spec.queries.iter().zip(outcomes).enumerate() {
        let report = match o {
            Ok(o) => {
                let mut files = Vec::new();
                for (name, text) in &o.files {
                    write_text(&out.join(name), text)?;
                    files.push(name.clone());
                }
                QueryReport {
                    index: i,
                    kind: q.kind().into(),
                    ok: true,
                    negative: o.negative,
                    error: None,
                    result: Some(o.result),
                    files,
                }
            }
            Err(e) => QueryReport {
                index: i,
                kind: q.kind().into(),
                ok: false,
                negative: false,
                error: Some(e.to_string()),
                result: None,
                files: Vec::new(),
            },
        };
        reports.push(report);
    }
    let report = RunReport {
        format_version: FORMAT_VERSION,
        seed: ctx.seed,
        environments: resolved.chains.keys().cloned().collect(),
        queries: reports,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
