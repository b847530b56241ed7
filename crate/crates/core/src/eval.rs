//! Insert-then-query benchmark protocol.
//!
//! For each cell: build a fresh index, time the full batch insert, time the
//! loop over every query, and count a query correct when its expected
//! document is ranked first. Total time is insert time plus query time.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::db::Database;
use crate::error::{Error, Result};
use crate::index::{BackendKind, BackendParams, DocRecord, IndexConfig};
use crate::vecmath::Embedding;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub query_id: String,
    #[serde(rename = "vector")]
    pub query: Embedding,
    pub expected_id: String,
}

/// One line of a pairs file before embedding: the query may be text-only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairLine {
    pub query_id: String,
    pub expected_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
}

pub fn read_pair_lines(path: impl AsRef<Path>) -> Result<Vec<PairLine>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads a pairs file in which every query carries a vector.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<EvalPair>> {
    let path = path.as_ref();
    read_pair_lines(path)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message,
            };
            let v = p.vector.ok_or_else(|| {
                err("query has no vector (use sidecar embedding for text)".into())
            })?;
            Ok(EvalPair {
                query_id: p.query_id,
                query: Embedding::new(v).map_err(|e| err(e.to_string()))?,
                expected_id: p.expected_id,
            })
        })
        .collect()
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[EvalPair]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut out, p).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backend: BackendKind,
    pub n: usize,
    pub queries: usize,
    pub correct: usize,
    /// Fraction of queries whose expected document is ranked first.
    pub accuracy: f64,
    /// Fraction of queries whose expected document is anywhere in the top k.
    pub hit_rate_at_k: f64,
    /// Queries that returned no hits at all.
    pub misses: usize,
    /// Mean overlap of the top-k with the exact top-k of the same metric.
    pub recall_vs_exact: Option<f64>,
    pub mean_distance_evals: f64,
    pub insert_time_s: f64,
    pub query_time_s: f64,
    pub total_time_s: f64,
    pub k: usize,
    pub params: BackendParams,
    pub normalize_on_insert: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    /// Compare approximate backends against exact search (untimed).
    pub recall_vs_exact: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: 1,
            recall_vs_exact: true,
        }
    }
}

fn params_seed(params: &BackendParams) -> u64 {
    match params {
        BackendParams::Flat => 0,
        BackendParams::Hnsw(h) => h.seed,
        BackendParams::Lsh(l) => l.seed,
    }
}

fn check_expected(records: &[DocRecord], pairs: &[EvalPair]) -> Result<()> {
    let ids: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    match pairs.iter().find(|p| !ids.contains(p.expected_id.as_str())) {
        Some(p) => Err(Error::MissingExpected(p.expected_id.clone())),
        None => Ok(()),
    }
}

/// Runs one evaluation cell on a fresh index.
pub fn run_eval(
    records: &[DocRecord],
    pairs: &[EvalPair],
    config: &IndexConfig,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    check_expected(records, pairs)?;
    let reference = if opts.recall_vs_exact && !config.backend.is_exact() {
        Some(exact_reference(records, pairs, config, opts.k)?)
    } else {
        None
    };
    evaluate(records, pairs, config, opts, reference.as_deref())
}

fn exact_reference(
    records: &[DocRecord],
    pairs: &[EvalPair],
    config: &IndexConfig,
    k: usize,
) -> Result<Vec<Vec<String>>> {
    let exact = IndexConfig::new(config.backend.exact_counterpart(), config.dim)
        .with_normalize(config.normalize_on_insert);
    let mut db = Database::new(exact)?;
    db.load(records.to_vec())?;
    pairs
        .iter()
        .map(|p| {
            Ok(db
                .query(&p.query, k)?
                .hits
                .into_iter()
                .map(|h| h.id)
                .collect())
        })
        .collect()
}

fn evaluate(
    records: &[DocRecord],
    pairs: &[EvalPair],
    config: &IndexConfig,
    opts: &EvalOptions,
    reference: Option<&[Vec<String>]>,
) -> Result<EvalReport> {
    if opts.k == 0 {
        return Err(Error::InvalidK);
    }
    let mut db = Database::new(config.clone())?;
    let batch = records.to_vec();

    let start = Instant::now();
    db.load(batch)?;
    let insert_time_s = start.elapsed().as_secs_f64();

    let mut results = Vec::with_capacity(pairs.len());
    let start = Instant::now();
    for p in pairs {
        results.push(db.query_with_stats(&p.query, opts.k)?);
    }
    let query_time_s = start.elapsed().as_secs_f64();

    let mut correct = 0;
    let mut hits_at_k = 0;
    let mut misses = 0;
    let mut evals = 0usize;
    let mut recall_sum = 0.0;
    for (i, (p, (result, stats))) in pairs.iter().zip(&results).enumerate() {
        evals += stats.distance_evals;
        if result.is_empty() {
            misses += 1;
        }
        if result.top().is_some_and(|h| h.id == p.expected_id) {
            correct += 1;
        }
        if result.ids().any(|id| id == p.expected_id) {
            hits_at_k += 1;
        }
        if let Some(reference) = reference {
            let truth = &reference[i];
            if !truth.is_empty() {
                let found = result
                    .ids()
                    .filter(|id| truth.iter().any(|t| t == id))
                    .count();
                recall_sum += found as f64 / truth.len() as f64;
            }
        }
    }
    let q = pairs.len();
    let frac = |x: usize| if q == 0 { 0.0 } else { x as f64 / q as f64 };
    let recall_vs_exact = if config.backend.is_exact() && opts.recall_vs_exact {
        Some(1.0)
    } else {
        reference.map(|_| if q == 0 { 0.0 } else { recall_sum / q as f64 })
    };
    Ok(EvalReport {
        backend: config.backend,
        n: records.len(),
        queries: q,
        correct,
        accuracy: frac(correct),
        hit_rate_at_k: frac(hits_at_k),
        misses,
        recall_vs_exact,
        mean_distance_evals: if q == 0 { 0.0 } else { evals as f64 / q as f64 },
        insert_time_s,
        query_time_s,
        total_time_s: insert_time_s + query_time_s,
        k: opts.k,
        params: config.params.clone(),
        normalize_on_insert: config.normalize_on_insert,
        seed: params_seed(&config.params),
    })
}

/// One report per (size, backend) cell, sizes outermost.
///
/// Cell `N` indexes the first `N` records and runs the pairs whose expected
/// document is among them.
pub fn run_matrix(
    records: &[DocRecord],
    pairs: &[EvalPair],
    configs: &[IndexConfig],
    sizes: &[usize],
    opts: &EvalOptions,
) -> Result<Vec<EvalReport>> {
    check_expected(records, pairs)?;
    if let Some(&max) = sizes.iter().max() {
        if max > records.len() {
            return Err(Error::Config(format!(
                "size {max} exceeds corpus of {} records",
                records.len()
            )));
        }
    }
    for c in configs {
        c.validate()?;
    }
    let positions: HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();

    let mut reports = Vec::with_capacity(sizes.len() * configs.len());
    for &n in sizes {
        let subset = &records[..n];
        let cell_pairs: Vec<EvalPair> = pairs
            .iter()
            .filter(|p| positions[p.expected_id.as_str()] < n)
            .cloned()
            .collect();
        let mut references: HashMap<(BackendKind, bool), Vec<Vec<String>>> = HashMap::new();
        for config in configs {
            let reference = if opts.recall_vs_exact && !config.backend.is_exact() {
                let key = (
                    config.backend.exact_counterpart(),
                    config.normalize_on_insert,
                );
                if let Entry::Vacant(slot) = references.entry(key) {
                    slot.insert(exact_reference(subset, &cell_pairs, config, opts.k)?);
                }
                references.get(&key).map(Vec::as_slice)
            } else {
                None
            };
            reports.push(evaluate(subset, &cell_pairs, config, opts, reference)?);
        }
    }
    Ok(reports)
}

pub fn write_reports(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in reports {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<EvalReport>> {
    let path = path.as_ref();
    BufReader::new(File::open(path)?)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            serde_json::from_str(&l?).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Fixed-width comparison table.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<15} {:>7} {:>7} {:>9} {:>9} {:>9} {:>10} {:>10} {:>10}",
        "backend",
        "N",
        "queries",
        "accuracy",
        "hit@k",
        "recall@k",
        "insert_s",
        "query_s",
        "total_s"
    );
    for r in reports {
        let recall = r
            .recall_vs_exact
            .map_or_else(|| "-".to_owned(), |x| format!("{x:.4}"));
        let _ = writeln!(
            s,
            "{:<15} {:>7} {:>7} {:>9.4} {:>9.4} {:>9} {:>10.4} {:>10.4} {:>10.4}",
            r.backend.name(),
            r.n,
            r.queries,
            r.accuracy,
            r.hit_rate_at_k,
            recall,
            r.insert_time_s,
            r.query_time_s,
            r.total_time_s
        );
    }
    s
}
