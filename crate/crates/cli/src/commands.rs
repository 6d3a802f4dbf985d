use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use percheck_core::analysis::{
    accelerate, backward_weakest_precondition, check_assertion, default_eps_grid, forward_worst_case,
    invariant_holds, trivial_epsilon, worst_case_interleaving, HoareAssertion, Obligation,
};
use percheck_core::cases::{build_case_chains, uniform_abstractions, Case, F1TenthConfig, F1TenthModel, SyntheticNoiseModel, TaxiNetModel};
use percheck_core::io::{
    csv_string, export_explicit_chain, fmt_prob, parse_eps_grid, read_predicate, read_summary, write_json,
    write_predicate, write_summary, write_text, TablesFile, FORMAT_VERSION,
};
use percheck_core::linprog::AffinePredicate;
use percheck_core::model::Distribution;
use percheck_core::runner::{certificate_json, load_spec, resolve, run_spec, RunOptions};
use percheck_core::simulate::estimate_error_probability;
use percheck_core::summary::{summarize_sequence, ChainSet, Scenario, ScenarioSequence, Summary};
use percheck_core::Error;
use serde_json::json;

use crate::{ChainArgs, Cli, Command};

pub enum Status {
    Ok,
    Negative,
}

impl Status {
    fn from_holds(holds: bool) -> Self {
        if holds {
            Status::Ok
        } else {
            Status::Negative
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<Status> {
    let Some(cmd) = &cli.command else {
        return run_spec_file(cli);
    };
    match cmd {
        Command::Summarize { chains, output, table } => summarize(cli, chains, output.as_deref(), *table),
        Command::Forward { summary, pre } => {
            let (c, states) = load_summary(summary)?;
            let pre = load_pred(pre.as_deref(), &states)?;
            let wc = forward_worst_case(&c, &pre)?;
            println!("value {}", fmt_prob(wc.value));
            for (s, w) in states.iter().zip(wc.witness.weights()) {
                if *w != 0.0 {
                    println!("witness {s} {}", fmt_prob(*w));
                }
            }
            Ok(Status::Ok)
        }
        Command::Backward { summary, eps, output } => {
            let (c, states) = load_summary(summary)?;
            let wp = backward_weakest_precondition(&c, *eps)?;
            let path = output.clone().unwrap_or_else(|| cli.out.join("weakest_pre.json"));
            write_predicate(&path, &wp)?;
            for (s, b) in states.iter().zip(c.b()) {
                println!("{s} {} {}", fmt_prob(*b), if *b <= *eps { "ok" } else { "exceeds" });
            }
            eprintln!("wrote {}", path.display());
            Ok(Status::Ok)
        }
        Command::Check { summary, pre, post, eps } => {
            let (c, states) = load_summary(summary)?;
            let pre = load_pred(pre.as_deref(), &states)?;
            let post = load_pred(post.as_deref(), &states)?;
            let v = check_assertion(&HoareAssertion::new(&pre, &c, &post, *eps)?)?;
            println!("verdict {}", if v.holds { "holds" } else { "fails" });
            if v.vacuous {
                println!("vacuous true");
            }
            if let Some(m) = v.max_error {
                println!("max_error {}", fmt_prob(m));
            }
            if !v.holds {
                let ob = match v.violated_obligation {
                    Some(Obligation::ErrorBound) => "error_bound".to_string(),
                    Some(Obligation::Postcondition { index }) => format!("postcondition {index}"),
                    None => "unknown".to_string(),
                };
                println!("violated {ob}");
                if let (Some(val), Some(bound)) = (v.violation_value, v.violation_bound) {
                    println!("value {} > {}", fmt_prob(val), fmt_prob(bound));
                }
                if let Some(x) = &v.counterexample {
                    println!("counterexample [{}]", x.iter().map(|v| fmt_prob(*v)).collect::<Vec<_>>().join(", "));
                }
            }
            Ok(Status::from_holds(v.holds))
        }
        Command::Accelerate {
            summaries,
            invariant,
            eps,
            k,
            brute_force_k,
        } => accelerate_cmd(cli, summaries, invariant, *eps, *k, *brute_force_k),
        Command::Invariant { summaries } => {
            let (sums, _) = load_summaries(summaries)?;
            let grid = eps_grid(cli)?;
            let mut first = None;
            for &e in &grid {
                let ok = invariant_holds(&sums, e)?;
                println!("{} {ok}", fmt_prob(e));
                if ok {
                    first = Some(e);
                    break;
                }
            }
            match first {
                Some(e) => println!("invariant {}", fmt_prob(e)),
                None => println!("invariant none"),
            }
            Ok(Status::from_holds(first.is_some()))
        }
        Command::Interleave { summaries, pre, k } => {
            let (sums, states) = load_summaries(summaries)?;
            let pre = load_pred(pre.as_deref(), &states)?;
            for kk in 1..=*k {
                let w = worst_case_interleaving(&sums, &pre, kk)?;
                let seq: Vec<String> = w.sequence.iter().map(usize::to_string).collect();
                println!("{kk} {} {}", fmt_prob(w.value), seq.join(","));
            }
            Ok(Status::Ok)
        }
        Command::Simulate { chains, runs, start } => {
            let (set, seq) = load_chains(cli, chains)?;
            let states = first_states(&set)?;
            let init = match start {
                None => Distribution::uniform(states.len()),
                Some(l) => {
                    let i = states
                        .iter()
                        .position(|s| s == l)
                        .ok_or_else(|| anyhow!("unknown start state `{l}`"))?;
                    Distribution::point(states.len(), i)
                }
            };
            let seq = seq.ok_or_else(|| anyhow!("no scenario sequence: pass --seq or a spec with `sequence`"))?;
            let r = estimate_error_probability(&seq, &set, &init, *runs, cli.seed.unwrap_or(0))?;
            println!(
                "estimate {} ± {} ({}/{}, seed {})",
                fmt_prob(r.estimate),
                fmt_prob(r.std_error),
                r.error_hits,
                r.runs,
                r.seed
            );
            write_json(&cli.out.join("simulation.json"), &r)?;
            Ok(Status::Ok)
        }
        Command::Export { chains } => {
            let (set, _) = load_chains(cli, chains)?;
            for (env, m) in &set {
                let path = cli.out.join(format!("{env}.tra"));
                export_explicit_chain(m, &path)?;
                println!("{env} {}", path.display());
            }
            Ok(Status::Ok)
        }
        Command::CaseGen { case, noise, reduced } => case_gen(cli, case, noise, *reduced),
    }
}

fn run_spec_file(cli: &Cli) -> Result<Status> {
    let Some(path) = &cli.spec else {
        bail!("nothing to do: pass --spec FILE or a subcommand (see --help)");
    };
    let spec = load_spec(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let opts = RunOptions {
        seed: cli.seed,
        eps_grid: cli.eps_grid.as_deref().map(parse_eps_grid).transpose()?,
    };
    let report = run_spec(&spec, base, &cli.out, &opts)?;
    for q in &report.queries {
        let status = match (q.ok, q.negative) {
            (false, _) => "error",
            (true, true) => "negative",
            (true, false) => "ok",
        };
        let detail = q.error.clone().unwrap_or_else(|| q.files.join(" "));
        println!("q{:02} {:<10} {:<8} {detail}", q.index, q.kind, status);
    }
    println!("report {}", cli.out.join("report.json").display());
    if !report.all_ok() {
        bail!("{} of {} queries failed", report.queries.iter().filter(|q| !q.ok).count(), report.queries.len());
    }
    Ok(Status::from_holds(!report.any_negative()))
}

fn eps_grid(cli: &Cli) -> Result<Vec<f64>> {
    Ok(match &cli.eps_grid {
        Some(g) => parse_eps_grid(g)?,
        None => default_eps_grid(),
    })
}

fn load_summary(path: &Path) -> Result<(Summary, Vec<String>)> {
    read_summary(path).with_context(|| format!("reading summary {}", path.display()))
}

fn load_summaries(paths: &[PathBuf]) -> Result<(Vec<Summary>, Vec<String>)> {
    let mut sums = Vec::new();
    let mut states: Option<Vec<String>> = None;
    for p in paths {
        let (c, s) = load_summary(p)?;
        match &states {
            Some(prev) if *prev != s => bail!("{} uses different state labels", p.display()),
            Some(_) => {}
            None => states = Some(s),
        }
        sums.push(c);
    }
    Ok((sums, states.unwrap_or_default()))
}

fn load_pred(path: Option<&Path>, states: &[String]) -> Result<AffinePredicate> {
    match path {
        None => Ok(AffinePredicate::top()),
        Some(p) => read_predicate(p, states).with_context(|| format!("reading predicate {}", p.display())),
    }
}

fn parse_seq(s: &str) -> Result<ScenarioSequence> {
    let scenarios = s
        .split(',')
        .map(|part| {
            let (env, h) = part
                .trim()
                .rsplit_once(':')
                .ok_or_else(|| anyhow!("scenario `{part}` is not ENV:H"))?;
            let h: u32 = h.parse().with_context(|| format!("horizon in `{part}`"))?;
            Ok(Scenario::new(env, h)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSequence::new(scenarios)?)
}

fn load_chains(cli: &Cli, args: &ChainArgs) -> Result<(ChainSet, Option<ScenarioSequence>)> {
    let seq = args.seq.as_deref().map(parse_seq).transpose()?;
    if !args.chains.is_empty() {
        let mut set = ChainSet::new();
        for c in &args.chains {
            let (env, path) = c
                .split_once('=')
                .ok_or_else(|| anyhow!("--chain `{c}` is not ENV=PATH"))?;
            let m = percheck_core::io::load_explicit_chain(Path::new(path))
                .with_context(|| format!("loading chain for `{env}`"))?;
            set.insert(env.to_string(), m);
        }
        return Ok((set, seq));
    }
    let Some(path) = &cli.spec else {
        bail!("no chains: pass --chain ENV=PATH or --spec FILE");
    };
    let spec = load_spec(path)?;
    let r = resolve(&spec, path.parent().unwrap_or(Path::new(".")))?;
    Ok((r.chains, seq.or(r.sequence)))
}

fn first_states(set: &ChainSet) -> Result<Vec<String>> {
    set.values()
        .next()
        .map(|m| m.space().non_error_labels().to_vec())
        .ok_or_else(|| anyhow!("no environments"))
}

fn summarize(cli: &Cli, args: &ChainArgs, output: Option<&Path>, table: bool) -> Result<Status> {
    let (set, seq) = load_chains(cli, args)?;
    let seq = seq.ok_or_else(|| anyhow!("no scenario sequence: pass --seq or a spec with `sequence`"))?;
    let c = summarize_sequence(&seq, &set)?;
    let states = first_states(&set)?;
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| cli.out.join("summary.json"));
    write_summary(&path, &c, &states)?;
    println!("states {}", c.dim());
    println!("max_error {}", fmt_prob(trivial_epsilon(&[&c])));
    if table {
        for (s, b) in states.iter().zip(c.b()) {
            println!("{s} {}", fmt_prob(*b));
        }
    }
    println!("summary {}", path.display());
    Ok(Status::Ok)
}

fn accelerate_cmd(cli: &Cli, paths: &[PathBuf], invariant: &str, eps: Option<f64>, k: u32, bf: u32) -> Result<Status> {
    let (sums, states) = load_summaries(paths)?;
    let (phi, e) = match invariant {
        "auto" => match percheck_core::analysis::find_invariant(&sums, &eps_grid(cli)?)? {
            Some(found) => found,
            None => (AffinePredicate::top(), trivial_epsilon(&sums)),
        },
        "top" => (AffinePredicate::top(), eps.unwrap_or_else(|| trivial_epsilon(&sums))),
        file => (
            load_pred(Some(Path::new(file)), &states)?,
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
            println!("premise {index} fails: {reason}");
            println!(
                "counterexample [{}]",
                counterexample.iter().map(|v| fmt_prob(*v)).collect::<Vec<_>>().join(", ")
            );
            return Ok(Status::Negative);
        }
        Err(other) => return Err(other.into()),
    };
    println!("epsilon {}", fmt_prob(cert.epsilon));
    println!("bound_formula {}", cert.bound_formula);
    let mut rows = Vec::new();
    for kk in 1..=k {
        let truth = if kk <= bf {
            fmt_prob(worst_case_interleaving(&sums, &phi, kk)?.value)
        } else {
            String::new()
        };
        let b = fmt_prob(cert.bound(kk));
        println!("{kk} {b}{}", if truth.is_empty() { String::new() } else { format!(" {truth}") });
        rows.push(vec![kk.to_string(), b, truth]);
    }
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    write_json(&cli.out.join("certificate.json"), &certificate_json(&cert, &names, k))?;
    write_text(&cli.out.join("bounds.csv"), &csv_string(&["k", "bound", "brute_force"], &rows))?;
    Ok(Status::Ok)
}

fn parse_noise(s: &str) -> Result<SyntheticNoiseModel> {
    let (kind, p) = match s.split_once(':') {
        Some((k, p)) => (k, Some(p.parse::<f64>().with_context(|| format!("noise rate in `{s}`"))?)),
        None => (s, None),
    };
    Ok(match (kind, p) {
        ("perfect", None) => SyntheticNoiseModel::Perfect,
        ("uniform", Some(p)) => SyntheticNoiseModel::Uniform { p },
        ("neighbor", Some(p)) => SyntheticNoiseModel::Neighbor { p },
        _ => bail!("noise `{s}` is not perfect, uniform:P or neighbor:P"),
    })
}

fn case_gen(cli: &Cli, case: &str, noise: &str, reduced: bool) -> Result<Status> {
    let noise = parse_noise(noise)?;
    let (case, horizon) = match case {
        "taxinet" => {
            let m = TaxiNetModel::illustrative();
            let (controller, dynamics) = percheck_core::cases::taxinet::illustrative_tables();
            let tables = TablesFile {
                format_version: FORMAT_VERSION,
                states: m.space().non_error_labels().to_vec(),
                error_label: m.space().label(m.space().error_index()).to_string(),
                estimates: None,
                controller,
                dynamics,
            };
            write_json(&cli.out.join("tables.json"), &tables)?;
            (Case::TaxiNet(m), 20)
        }
        _ => {
            let cfg = if reduced { F1TenthConfig::reduced() } else { F1TenthConfig::default() };
            write_json(&cli.out.join("f1tenth.json"), &cfg)?;
            let h = cfg.horizon;
            (Case::F1Tenth(F1TenthModel::new(cfg)?), h)
        }
    };
    let chains = build_case_chains(&case, &uniform_abstractions(&case, noise)?)?;
    let mut envs = Vec::new();
    for (env, m) in &chains {
        let file = format!("{env}.tra");
        export_explicit_chain(m, &cli.out.join(&file))?;
        println!("{env} {} states, {} transitions", m.space().len(), m.transitions().nnz());
        envs.push(json!({ "id": env, "chain": file }));
    }
    let sequence: Vec<_> = chains.keys().map(|e| json!({ "env": e, "horizon": horizon })).collect();
    let spec = json!({
        "format_version": FORMAT_VERSION,
        "environments": envs,
        "sequence": sequence,
        "queries": [
            { "kind": "summarize" },
            { "kind": "accelerate", "invariant": "auto", "k": 10 },
        ],
    });
    write_json(&cli.out.join("spec.json"), &spec)?;
    println!("spec {}", cli.out.join("spec.json").display());
    Ok(Status::Ok)
}
