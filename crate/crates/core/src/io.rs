//! On-disk formats.
//!
//! Every JSON document carries `"format_version": 1`. Probabilities in
//! summaries and explicit chains are written as the shortest decimal that
//! parses back to the same `f64`, so every export/load pair is lossless.
//!
//! # Contingency CSV
//!
//! ```text
//! state,y0,y1,...
//! s0,8,2,...
//! ```
//!
//! The header's first cell is ignored; the remaining cells name estimates.
//! Each following row is a state label and one non-negative integer count
//! per estimate.
//!
//! # Explicit chain
//!
//! ```text
//! STATES 3
//! 0 0 0.6
//! 0 1 0.2
//! ...
//! ```
//!
//! One `src dst prob` line per nonzero transition in row order. State labels
//! live in a sidecar `<file>.labels`, one per line in index order, with the
//! error state last.
//!
//! # Summary JSON
//!
//! `{"format_version", "states", "a", "b"}` with `states` the non-error
//! labels, `a` a list of rows and every number a decimal string. Above
//! [`DENSE_SUMMARY_LIMIT`] states, `a` is replaced by `a_rows`: per row, a
//! list of `[column, "value"]` pairs for the nonzero entries.
//!
//! # Predicate JSON
//!
//! `{"format_version", "constraints": [...]}`, each constraint either
//! `{"a": [...], "theta": t}` (dense over the non-error states) or
//! `{"terms": {"label": coeff, ...}, "theta": t}`. Numbers may be JSON
//! numbers or decimal strings.
//!
//! # Tables JSON
//!
//! `{"format_version", "states", "error_label", "estimates", "controller",
//! "dynamics"}`. `estimates` defaults to `states`. `controller` maps an
//! environment id (or `"*"` for all) to `{estimate: control}`; `dynamics`
//! maps an environment id to `{"state|control": successor}`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::{self, DeserializeOwned};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linprog::{AffinePredicate, Constraint};
use crate::model::{ClosedLoopDtmc, ContingencyMatrix, LabeledTable, StateSpace};
use crate::sparse::CsrMatrix;
use crate::summary::Summary;

pub const FORMAT_VERSION: u32 = 1;
/// Largest summary written with a dense `a`.
pub const DENSE_SUMMARY_LIMIT: usize = 4096;

/// Shortest round-trip decimal; integral values print without a fraction.
pub fn fmt_prob(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:?}")
    }
}

/// A probability serialized as a decimal string; deserializes from a
/// string or a number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prob(pub f64);

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_prob(self.0))
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Prob;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a decimal string")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Prob, E> {
                Ok(Prob(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Prob, E> {
                Ok(Prob(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Prob, E> {
                Ok(Prob(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Prob, E> {
                v.trim()
                    .parse()
                    .map(Prob)
                    .map_err(|_| E::custom(format!("`{v}` is not a decimal number")))
            }
        }
        d.deserialize_any(V)
    }
}

fn check_version(v: u32) -> Result<()> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::FormatVersion(v))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// CSV text from a header and string rows.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_text(path, &csv_string(header, rows))
}

// ---------------------------------------------------------------- contingency

pub fn load_contingency_csv(path: &Path) -> Result<ContingencyMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_contingency_csv(&text)
}

fn parse_count(cell: &str, line: usize) -> Result<u64> {
    let t = cell.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let negative = t.strip_prefix('-').or_else(|| t.strip_prefix('\u{2212}'));
    if negative.is_some_and(|r| !r.is_empty() && r.parse::<f64>().is_ok()) {
        return Err(Error::NegativeCount {
            line,
            count: t.to_string(),
        });
    }
    Err(Error::Parse {
        line,
        reason: format!("`{t}` is not a non-negative integer count"),
    })
}

pub fn parse_contingency_csv(text: &str) -> Result<ContingencyMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
        None => {
            return Err(Error::Parse {
                line: 1,
                reason: "missing header row".into(),
            })
        }
    };
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            reason: "header needs a state column and at least one estimate".into(),
        });
    }
    let estimates: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut states = Vec::new();
    let mut counts = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                reason: format!("expected {} cells, found {}", header.len(), rec.len()),
            });
        }
        let label = &rec[0];
        if label.is_empty() {
            return Err(Error::Parse {
                line,
                reason: "empty state label".into(),
            });
        }
        if states.iter().any(|s| s == label) {
            return Err(Error::DuplicateLabel(label.to_string()));
        }
        states.push(label.to_string());
        counts.push(rec.iter().skip(1).map(|c| parse_count(c, line)).collect::<Result<Vec<_>>>()?);
    }
    ContingencyMatrix::new(states, estimates, counts)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        reason: e.to_string(),
    }
}

pub fn contingency_csv_string(cm: &ContingencyMatrix) -> String {
    let mut header = vec!["state"];
    header.extend(cm.estimates().iter().map(String::as_str));
    let rows: Vec<Vec<String>> = cm
        .states()
        .iter()
        .zip(cm.counts())
        .map(|(s, row)| std::iter::once(s.clone()).chain(row.iter().map(u64::to_string)).collect())
        .collect();
    csv_string(&header, &rows)
}

// ---------------------------------------------------------------- explicit chains

/// Path of the label sidecar for an explicit chain file.
pub fn labels_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

pub fn export_explicit_chain(m: &ClosedLoopDtmc, path: &Path) -> Result<()> {
    let write = |path: &Path, f: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    };
    let t = m.transitions();
    write(path, &|w| {
        writeln!(w, "STATES {}", t.nrows())?;
        for i in 0..t.nrows() {
            for (j, p) in t.row(i) {
                writeln!(w, "{i} {j} {}", fmt_prob(p))?;
            }
        }
        Ok(())
    })?;
    write(&labels_path(path), &|w| {
        for l in m.space().labels() {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

pub fn load_explicit_chain(path: &Path) -> Result<ClosedLoopDtmc> {
    let lpath = labels_path(path);
    let labels: Vec<String> = fs::read_to_string(&lpath)
        .map_err(|e| Error::io(&lpath, e))?
        .lines()
        .map(str::to_string)
        .collect();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (n, rows) = parse_explicit_transitions(BufReader::new(file), path)?;
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let space = Arc::new(StateSpace::from_labels(labels)?);
    ClosedLoopDtmc::new(space, CsrMatrix::from_rows(n, rows))
}

type Rows = Vec<Vec<(usize, f64)>>;

fn parse_explicit_transitions(r: impl BufRead, path: &Path) -> Result<(usize, Rows)> {
    let parse_err = |line: usize, reason: String| Error::Parse { line, reason };
    let mut n = None;
    let mut rows: Rows = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let Some(size) = n else {
            let size = t
                .strip_prefix("STATES")
                .and_then(|r| r.trim().parse::<usize>().ok())
                .ok_or_else(|| parse_err(lineno, "expected `STATES <n>` header".into()))?;
            n = Some(size);
            rows = vec![Vec::new(); size];
            continue;
        };
        let parts: Vec<&str> = t.split_whitespace().collect();
        let [src, dst, p] = parts[..] else {
            return Err(parse_err(lineno, "expected `src dst prob`".into()));
        };
        let idx = |s: &str| {
            s.parse::<usize>()
                .ok()
                .filter(|&i| i < size)
                .ok_or_else(|| parse_err(lineno, format!("`{s}` is not a state index below {size}")))
        };
        let (src, dst) = (idx(src)?, idx(dst)?);
        let p: f64 = p
            .parse()
            .map_err(|_| parse_err(lineno, format!("`{p}` is not a probability")))?;
        rows[src].push((dst, p));
    }
    let n = n.ok_or_else(|| parse_err(1, "empty file".into()))?;
    Ok((n, rows))
}

// ---------------------------------------------------------------- summaries

#[derive(Serialize, Deserialize)]
struct SummaryFile {
    format_version: u32,
    states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<Prob>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a_rows: Option<Vec<Vec<(usize, Prob)>>>,
    b: Vec<Prob>,
}

pub fn summary_to_json(c: &Summary, states: &[String]) -> Result<String> {
    if states.len() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: states.len(),
        });
    }
    let n = c.dim();
    let (a, a_rows) = if n <= DENSE_SUMMARY_LIMIT {
        let rows = c
            .a()
            .to_dense()
            .into_iter()
            .map(|r| r.into_iter().map(Prob).collect())
            .collect();
        (Some(rows), None)
    } else {
        let rows = (0..n)
            .map(|i| c.a().row(i).map(|(j, v)| (j, Prob(v))).collect())
            .collect();
        (None, Some(rows))
    };
    let file = SummaryFile {
        format_version: FORMAT_VERSION,
        states: states.to_vec(),
        a,
        a_rows,
        b: c.b().iter().copied().map(Prob).collect(),
    };
    let mut s = serde_json::to_string(&file).expect("plain data serializes");
    s.push('\n');
    Ok(s)
}

pub fn summary_from_json(text: &str) -> Result<(Summary, Vec<String>)> {
    let f: SummaryFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        reason: e.to_string(),
    })?;
    check_version(f.format_version)?;
    let n = f.states.len();
    let a = match (f.a, f.a_rows) {
        (Some(rows), None) => {
            if let Some(r) = rows.iter().find(|r| r.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            CsrMatrix::from_rows(
                n,
                rows.into_iter()
                    .map(|r| r.into_iter().enumerate().map(|(j, p)| (j, p.0)).collect())
                    .collect(),
            )
        }
        (None, Some(rows)) => {
            if rows.iter().flatten().any(|&(j, _)| j >= n) {
                return Err(Error::InvalidSummary("column index out of range in `a_rows`".into()));
            }
            CsrMatrix::from_rows(
                n,
                rows.into_iter()
                    .map(|r| r.into_iter().map(|(j, p)| (j, p.0)).collect())
                    .collect(),
            )
        }
        _ => {
            return Err(Error::InvalidSummary(
                "exactly one of `a` and `a_rows` is required".into(),
            ))
        }
    };
    let b = f.b.into_iter().map(|p| p.0).collect();
    Ok((Summary::new(a, b)?, f.states))
}

pub fn write_summary(path: &Path, c: &Summary, states: &[String]) -> Result<()> {
    write_text(path, &summary_to_json(c, states)?)
}

pub fn read_summary(path: &Path) -> Result<(Summary, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    summary_from_json(&text).map_err(|e| match e {
        Error::Parse { line, reason } => Error::Parse {
            line,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

// ---------------------------------------------------------------- predicates

/// One constraint as written in a file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Prob>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<BTreeMap<String, Prob>>,
    pub theta: Prob,
}

/// Predicate body, shared by predicate files and inline specs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredicateSpec {
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
}

impl PredicateSpec {
    /// Resolves labeled terms against the non-error `states`.
    pub fn resolve(&self, states: &[String]) -> Result<AffinePredicate> {
        let index: BTreeMap<&str, usize> = states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut out = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let a = match (&c.a, &c.terms) {
                (Some(a), None) => {
                    if a.len() != states.len() {
                        return Err(Error::DimensionMismatch {
                            expected: states.len(),
                            found: a.len(),
                        });
                    }
                    a.iter().map(|p| p.0).collect()
                }
                (None, Some(terms)) => {
                    let mut a = vec![0.0; states.len()];
                    for (l, p) in terms {
                        let i = index.get(l.as_str()).ok_or_else(|| Error::UnknownLabel(l.clone()))?;
                        a[*i] += p.0;
                    }
                    a
                }
                _ => {
                    return Err(Error::InvalidParameter(
                        "a constraint needs exactly one of `a` and `terms`".into(),
                    ))
                }
            };
            if !c.theta.0.is_finite() || a.iter().any(|v: &f64| !v.is_finite()) {
                return Err(Error::InvalidParameter("constraint coefficients must be finite".into()));
            }
            out.push(Constraint::new(a, c.theta.0));
        }
        Ok(AffinePredicate::new(out))
    }

    pub fn from_predicate(p: &AffinePredicate) -> Self {
        Self {
            constraints: p
                .constraints
                .iter()
                .map(|c| ConstraintSpec {
                    a: Some(c.a.iter().copied().map(Prob).collect()),
                    terms: None,
                    theta: Prob(c.theta),
                })
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PredicateFile {
    format_version: u32,
    #[serde(flatten)]
    body: PredicateSpec,
}

pub fn predicate_from_json(text: &str, states: &[String]) -> Result<AffinePredicate> {
    let f: PredicateFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        reason: e.to_string(),
    })?;
    check_version(f.format_version)?;
    f.body.resolve(states)
}

pub fn predicate_to_json(p: &AffinePredicate) -> String {
    let f = PredicateFile {
        format_version: FORMAT_VERSION,
        body: PredicateSpec::from_predicate(p),
    };
    let mut s = serde_json::to_string_pretty(&f).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn read_predicate(path: &Path, states: &[String]) -> Result<AffinePredicate> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    predicate_from_json(&text, states)
}

pub fn write_predicate(path: &Path, p: &AffinePredicate) -> Result<()> {
    write_text(path, &predicate_to_json(p))
}

// ---------------------------------------------------------------- tables

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TablesFile {
    pub format_version: u32,
    /// Non-error state labels.
    pub states: Vec<String>,
    pub error_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<String>>,
    pub controller: LabeledTable,
    pub dynamics: LabeledTable,
}

impl TablesFile {
    pub fn space(&self) -> Result<StateSpace> {
        StateSpace::new(self.states.clone(), self.error_label.clone())
    }

    pub fn estimate_labels(&self) -> &[String] {
        self.estimates.as_deref().unwrap_or(&self.states)
    }
}

pub fn read_tables(path: &Path) -> Result<TablesFile> {
    let t: TablesFile = read_json(path)?;
    check_version(t.format_version)?;
    Ok(t)
}

// ---------------------------------------------------------------- misc

/// Parses `a:b:step` into the inclusive grid `a, a + step, …, b`. Grid
/// points are computed as `a + i·step`, rounded to 12 decimals.
pub fn parse_eps_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("`{s}` is not an `a:b:step` grid"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [a, b, step] = parts[..] else {
        return Err(bad());
    };
    if step.is_nan() || step <= 0.0 || !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
        return Err(Error::InvalidParameter(format!(
            "grid `{s}` needs 0 ≤ a ≤ b ≤ 1 and step > 0"
        )));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}
