mod sidecar;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thistle_core::corpus::ingest;
use thistle_core::eval::{read_pair_lines, render_table, write_reports};
use thistle_core::plot::write_plots;
use thistle_core::snapshot::FORMAT_VERSION;
use thistle_core::synthetic::NoisyDuplicates;
use thistle_core::{
    load_snapshot, run_matrix, save_snapshot, BackendKind, BackendParams, Database, DocRecord,
    Embedding, EvalOptions, EvalPair, HnswParams, IndexConfig, LshParams,
};

use sidecar::Sidecar;

const DEFAULT_SIZES: [usize; 3] = [100, 1000, 10_000];

#[derive(Parser)]
#[command(
    name = "thistle",
    version,
    about = "Embedding store with exact, HNSW and LSH search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a corpus file and write a snapshot.
    Load(LoadArgs),
    /// Query a snapshot.
    Query(QueryArgs),
    /// Run the insert-then-query benchmark over backends and corpus sizes.
    Bench(BenchArgs),
    /// Print a snapshot's header.
    Info(InfoArgs),
}

#[derive(Args)]
struct LoadArgs {
    /// Corpus file, one JSON object per line.
    corpus: PathBuf,
    /// Snapshot to write.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "iter-cosine")]
    backend: BackendKind,
    /// Expected embedding dimension; taken from the corpus when omitted.
    #[arg(long)]
    dim: Option<usize>,
    #[command(flatten)]
    index: IndexFlags,
    #[command(flatten)]
    embed: EmbedFlags,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("input").required(true).multiple(false))]
struct QueryArgs {
    snapshot: PathBuf,
    /// Query vector as comma-separated numbers.
    #[arg(long, group = "input", allow_hyphen_values = true)]
    vector: Option<String>,
    /// File holding the query vector (comma, whitespace or JSON array).
    #[arg(long, group = "input")]
    vector_file: Option<PathBuf>,
    /// Query text; requires `--embedder sidecar`.
    #[arg(long, group = "input")]
    text: Option<String>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Print one JSON object per hit.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    embed: EmbedFlags,
}

#[derive(Args)]
struct BenchArgs {
    /// Corpus file; the built-in synthetic workload is used when omitted.
    #[arg(long, requires = "pairs")]
    corpus: Option<PathBuf>,
    /// Query/expected-id pairs, one JSON object per line.
    #[arg(long, requires = "corpus")]
    pairs: Option<PathBuf>,
    /// Corpus sizes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Backends, comma-separated, or `all`.
    #[arg(long, default_value = "all")]
    backends: String,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Where to write the JSON-lines report.
    #[arg(long, default_value = "thistle-bench.jsonl")]
    report: PathBuf,
    /// Directory for accuracy and timing plots.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Skip the untimed recall comparison against exact search.
    #[arg(long)]
    no_recall: bool,
    #[command(flatten)]
    index: IndexFlags,
    #[command(flatten)]
    embed: EmbedFlags,
}

#[derive(Args)]
struct InfoArgs {
    snapshot: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct IndexFlags {
    /// HNSW neighbors per node (layer 0 keeps twice as many).
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    ef_construction: Option<usize>,
    #[arg(long)]
    ef_search: Option<usize>,
    /// LSH hyperplanes per table.
    #[arg(long)]
    projections: Option<usize>,
    /// LSH hash tables.
    #[arg(long)]
    tables: Option<usize>,
    #[arg(long, env = "THISTLE_SEED", default_value_t = 42)]
    seed: u64,
    /// Store unit-length vectors and normalize queries.
    #[arg(long)]
    normalize: bool,
}

impl IndexFlags {
    fn config(&self, backend: BackendKind, dim: usize) -> IndexConfig {
        let params = match BackendParams::default_for(backend) {
            BackendParams::Flat => BackendParams::Flat,
            BackendParams::Hnsw(d) => {
                let base = self.m.map_or(d, HnswParams::with_m);
                BackendParams::Hnsw(HnswParams {
                    ef_construction: self.ef_construction.unwrap_or(base.ef_construction),
                    ef_search: self.ef_search.unwrap_or(base.ef_search),
                    seed: self.seed,
                    ..base
                })
            }
            BackendParams::Lsh(d) => BackendParams::Lsh(LshParams {
                n_projections: self.projections.unwrap_or(d.n_projections),
                n_tables: self.tables.unwrap_or(d.n_tables),
                seed: self.seed,
            }),
        };
        IndexConfig::new(backend, dim)
            .with_params(params)
            .with_normalize(self.normalize)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Embedder {
    /// Vectors come precomputed in the input files.
    File,
    /// Text is embedded by an external command.
    Sidecar,
}

#[derive(Args)]
struct EmbedFlags {
    #[arg(long, value_enum, default_value = "file")]
    embedder: Embedder,
    /// Embedding command, run as `<cmd> <input> <output> --pooling <p>`.
    #[arg(long, env = "THISTLE_SIDECAR_CMD")]
    sidecar_cmd: Option<String>,
    #[arg(long, default_value = "mean", value_parser = ["cls", "mean", "max"])]
    pooling: String,
    /// Model name passed through to the sidecar.
    #[arg(long)]
    model: Option<String>,
}

impl EmbedFlags {
    fn sidecar(&self) -> Result<Option<Sidecar>, Failure> {
        match self.embedder {
            Embedder::File => Ok(None),
            Embedder::Sidecar => {
                let cmd = self
                    .sidecar_cmd
                    .as_deref()
                    .ok_or_else(|| Failure::usage("--embedder sidecar needs --sidecar-cmd"))?;
                Sidecar::new(cmd, &self.pooling, self.model.as_deref()).map(Some)
            }
        }
    }
}

/// An error reported as one JSON line on stderr.
#[derive(Debug)]
pub struct Failure {
    kind: String,
    message: String,
}

impl Failure {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Failure {
            kind: kind.to_owned(),
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure::new("usage", message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}",
            json!({ "error": self.kind, "message": self.message })
        )
    }
}

impl From<thistle_core::Error> for Failure {
    fn from(e: thistle_core::Error) -> Self {
        Failure::new(e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io", e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default();
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", Failure::usage(first));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Load(a) => cmd_load(a),
        Command::Query(a) => cmd_query(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Info(a) => cmd_info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_load(a: LoadArgs) -> Result<(), Failure> {
    a.index.config(a.backend, a.dim.unwrap_or(1)).validate()?;
    let sidecar = a.embed.sidecar()?;

    let records = match &sidecar {
        Some(s) => s.embed_file(&a.corpus, None)?,
        None => ingest(&a.corpus, None)?,
    };
    let dim = match (a.dim, records.first()) {
        (Some(d), _) => d,
        (None, Some(r)) => r.embedding.dim(),
        (None, None) => {
            return Err(Failure::usage(
                "corpus is empty; pass --dim to build an empty index",
            ))
        }
    };
    let mut db = Database::new(a.index.config(a.backend, dim))?;
    let start = Instant::now();
    let report = db.load(records)?;
    let elapsed = start.elapsed().as_secs_f64();
    save_snapshot(&db, &a.output)?;
    println!(
        "loaded {} records into {} in {elapsed:.3}s -> {}",
        report.count,
        a.backend,
        a.output.display()
    );
    Ok(())
}

fn parse_vector(s: &str) -> Result<Vec<f32>, Failure> {
    let s = s.trim();
    if s.starts_with('[') {
        return serde_json::from_str(s)
            .map_err(|e| Failure::new("parse", format!("query vector: {e}")));
    }
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f32>()
                .map_err(|e| Failure::new("parse", format!("query vector element {t:?}: {e}")))
        })
        .collect()
}

fn cmd_query(a: QueryArgs) -> Result<(), Failure> {
    let sidecar = a.embed.sidecar()?;
    if a.text.is_some() && sidecar.is_none() {
        return Err(Failure::new(
            "embedder",
            "text queries need an embedding model: rerun with --embedder sidecar --sidecar-cmd <cmd>, \
             or pass --vector",
        ));
    }
    let db = load_snapshot(&a.snapshot)?;
    let values = match (&a.vector, &a.vector_file, &a.text) {
        (Some(v), _, _) => parse_vector(v)?,
        (_, Some(path), _) => parse_vector(&std::fs::read_to_string(path)?)?,
        (_, _, Some(text)) => {
            let items = [("query".to_owned(), text.clone())];
            let s = sidecar.as_ref().expect("checked above");
            s.embed_texts(&items, Some(db.config().dim))?.remove(0)
        }
        _ => unreachable!("clap requires one input"),
    };
    let query = Embedding::new(values)?;
    let result = db.query(&query, a.k)?;
    for (rank, hit) in result.hits.iter().enumerate() {
        let text = db.text(&hit.id).unwrap_or("");
        if a.json {
            println!(
                "{}",
                json!({ "rank": rank + 1, "id": hit.id, "distance": hit.distance, "text": text })
            );
        } else if text.is_empty() {
            println!("{}\t{}\t{:.6}", rank + 1, hit.id, hit.distance);
        } else {
            println!("{}\t{}\t{:.6}\t{}", rank + 1, hit.id, hit.distance, text);
        }
    }
    Ok(())
}

fn parse_backends(s: &str) -> Result<Vec<BackendKind>, Failure> {
    if s.trim() == "all" {
        return Ok(BackendKind::ALL.to_vec());
    }
    let kinds = s
        .split(',')
        .map(|t| t.trim().parse::<BackendKind>())
        .collect::<Result<Vec<_>, _>>()?;
    if kinds.is_empty() {
        return Err(Failure::usage("no backends selected"));
    }
    Ok(kinds)
}

fn load_pairs(
    path: &Path,
    sidecar: Option<&Sidecar>,
    dim: usize,
) -> Result<Vec<EvalPair>, Failure> {
    let lines = read_pair_lines(path)?;
    let mut vectors: Vec<Option<Vec<f32>>> = lines.iter().map(|l| l.vector.clone()).collect();
    let texts: Vec<(usize, (String, String))> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.vector.is_none())
        .map(|(i, l)| match &l.text {
            Some(t) => Ok((i, (l.query_id.clone(), t.clone()))),
            None => Err(Failure::new(
                "parse",
                format!(
                    "{}: pair {:?} has neither vector nor text",
                    path.display(),
                    l.query_id
                ),
            )),
        })
        .collect::<Result<_, _>>()?;
    if !texts.is_empty() {
        let s = sidecar.ok_or_else(|| {
            Failure::new(
                "embedder",
                format!(
                    "{}: text-only queries need --embedder sidecar --sidecar-cmd <cmd>",
                    path.display()
                ),
            )
        })?;
        let items: Vec<(String, String)> = texts.iter().map(|(_, it)| it.clone()).collect();
        for ((i, _), v) in texts.iter().zip(s.embed_texts(&items, Some(dim))?) {
            vectors[*i] = Some(v);
        }
    }
    lines
        .into_iter()
        .zip(vectors)
        .map(|(l, v)| {
            Ok(EvalPair {
                query_id: l.query_id,
                query: Embedding::new(v.expect("filled above"))?,
                expected_id: l.expected_id,
            })
        })
        .collect()
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let kinds = parse_backends(&a.backends)?;
    for &kind in &kinds {
        a.index.config(kind, 1).validate()?;
    }
    if a.k == 0 {
        return Err(thistle_core::Error::InvalidK.into());
    }
    let sidecar = a.embed.sidecar()?;

    let (records, pairs): (Vec<DocRecord>, Vec<EvalPair>) = match (&a.corpus, &a.pairs) {
        (Some(corpus), Some(pairs)) => {
            let records = match &sidecar {
                Some(s) => s.embed_file(corpus, None)?,
                None => ingest(corpus, None)?,
            };
            let dim = records
                .first()
                .map(|r| r.embedding.dim())
                .ok_or_else(|| Failure::usage("benchmark corpus is empty"))?;
            let pairs = load_pairs(pairs, sidecar.as_ref(), dim)?;
            (records, pairs)
        }
        _ => {
            let w = NoisyDuplicates {
                seed: a.index.seed,
                ..NoisyDuplicates::default()
            }
            .generate();
            (w.records, w.pairs)
        }
    };
    let sizes = if a.sizes.is_empty() {
        let mut s: Vec<usize> = DEFAULT_SIZES
            .into_iter()
            .filter(|&n| n <= records.len())
            .collect();
        if s.is_empty() {
            s.push(records.len());
        }
        s
    } else {
        a.sizes.clone()
    };
    if sizes.contains(&0) {
        return Err(Failure::usage("sizes must be positive"));
    }
    let dim = records[0].embedding.dim();
    let configs: Vec<IndexConfig> = kinds.iter().map(|&k| a.index.config(k, dim)).collect();
    let opts = EvalOptions {
        k: a.k,
        recall_vs_exact: !a.no_recall,
    };
    let reports = run_matrix(&records, &pairs, &configs, &sizes, &opts)?;
    write_reports(&a.report, &reports)?;
    print!("{}", render_table(&reports));
    println!("report: {}", a.report.display());
    if let Some(dir) = &a.plots {
        std::fs::create_dir_all(dir)?;
        for p in write_plots(&reports, dir)? {
            println!("plot: {}", p.display());
        }
    }
    Ok(())
}

fn params_seed(params: &BackendParams) -> Option<u64> {
    match params {
        BackendParams::Flat => None,
        BackendParams::Hnsw(h) => Some(h.seed),
        BackendParams::Lsh(l) => Some(l.seed),
    }
}

fn cmd_info(a: InfoArgs) -> Result<(), Failure> {
    let db = load_snapshot(&a.snapshot)?;
    let c = db.config();
    let params =
        serde_json::to_value(&c.params).map_err(|e| Failure::new("internal", e.to_string()))?;
    let seed = params_seed(&c.params);
    if a.json {
        println!(
            "{}",
            json!({
                "format_version": FORMAT_VERSION,
                "backend": c.backend.name(),
                "metric": c.metric().to_string(),
                "dim": c.dim,
                "records": db.len(),
                "normalize_on_insert": c.normalize_on_insert,
                "seed": seed,
                "params": params,
            })
        );
    } else {
        println!("format_version: {FORMAT_VERSION}");
        println!("backend: {}", c.backend);
        println!("metric: {}", c.metric());
        println!("dim: {}", c.dim);
        println!("records: {}", db.len());
        println!("normalize_on_insert: {}", c.normalize_on_insert);
        println!(
            "seed: {}",
            seed.map_or_else(|| "-".to_owned(), |s| s.to_string())
        );
        println!("params: {params}");
    }
    Ok(())
}
