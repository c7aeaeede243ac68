//! `ascx` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use ascx::clustering::{cluster_corpus, random_projection, DenseCounterparts, SegmentMethod};
use ascx::eval::{
    analyze_bounds, gen_corpus, latency_stats, mrr_at_k, recall_at_k, score_ratio_curve, write_bound_csv, Qrels, RankedList, Reference,
    SyntheticCorpusSpec,
};
use ascx::index::{build_index_from_raw, RawDoc};
use ascx::io;
use ascx::retrieval::{write_trace, SearchOptions, SearchReport, StrategyConfig, StrategyKind};
use ascx::{ClusterSkippingIndex, Query, Rational};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "ascx", version, about = "Cluster-skipping sparse retrieval with segmented maxima")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus with dense counterparts, queries and qrels.
    GenCorpus(GenCorpusArgs),
    /// Cluster dense counterparts and segment every cluster.
    Cluster(ClusterArgs),
    /// Build a cluster-skipping index file.
    BuildIndex(BuildIndexArgs),
    /// Run queries and write a TREC run.
    Search(SearchArgs),
    /// Score a run against an oracle run or qrels.
    Eval(EvalArgs),
    /// Compare actual cluster maxima with their estimated bounds.
    AnalyzeBounds(AnalyzeArgs),
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[arg(long, default_value_t = 50_000)]
    pub docs: u32,
    #[arg(long, default_value_t = 5_000)]
    pub vocab: u32,
    #[arg(long, default_value_t = 200)]
    pub topics: u32,
    /// Mean distinct terms per document.
    #[arg(long, default_value_t = 40.0)]
    pub nonzeros: f64,
    #[arg(long, default_value_t = 250)]
    pub topic_vocab: u32,
    #[arg(long, default_value_t = 1.0)]
    pub zipf: f64,
    #[arg(long, default_value_t = 0.2)]
    pub background: f64,
    #[arg(long, default_value_t = 200)]
    pub num_queries: u32,
    #[arg(long, default_value_t = 16)]
    pub query_length: u32,
    #[arg(long, default_value_t = 64)]
    pub dims: u32,
    #[arg(long)]
    pub disjoint_topics: bool,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Corpus path; dense vectors, queries and qrels go next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dense_out: Option<PathBuf>,
    #[arg(long)]
    pub queries_out: Option<PathBuf>,
    #[arg(long)]
    pub qrels_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClusteringArgs {
    /// Number of clusters m.
    #[arg(long, default_value_t = 128)]
    pub clusters: u32,
    /// Segments per cluster n.
    #[arg(long, default_value_t = 8)]
    pub segments: u32,
    #[arg(long, default_value = "random")]
    pub seg_method: SegmentMethod,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub dense: PathBuf,
    #[command(flatten)]
    pub clustering: ClusteringArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Assignment TSV; without it the corpus is clustered here.
    #[arg(long, conflicts_with = "dense")]
    pub assignment: Option<PathBuf>,
    /// Dense counterparts; defaults to `<corpus stem>.dense.jsonl` when that
    /// file exists, else a random projection of the sparse vectors.
    #[arg(long)]
    pub dense: Option<PathBuf>,
    #[command(flatten)]
    pub clustering: ClusteringArgs,
    #[arg(long, default_value_t = 8)]
    pub bits: u8,
    #[arg(long)]
    pub assignment_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value = "asc")]
    pub strategy: StrategyKind,
    /// Threshold factor `p/q` (anytime-star, asc).
    #[arg(long)]
    pub mu: Option<Rational>,
    /// Average-bound factor `p/q` (asc).
    #[arg(long)]
    pub eta: Option<Rational>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Stop after the current cluster once this many ms have elapsed.
    #[arg(long)]
    pub budget_ms: Option<f64>,
    /// TREC run output; standard output when absent.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub tag: Option<String>,
    /// JSON-lines prune-event log.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Per-run summary (clusters visited, documents scored, latency) as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Exact run used as the recall reference.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Parses `argv` (including the program name), honouring `--config FILE`.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut args: Vec<String> = match argv.into_iter().map(|a| a.into().into_string()).collect::<Result<_, _>>() {
        Ok(a) => a,
        Err(_) => {
            eprintln!("error: arguments must be valid UTF-8");
            return 1;
        }
    };
    if let Err(e) = apply_config(&mut args) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn apply_config(args: &mut Vec<String>) -> Result<(), CliError> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(());
    };
    let path = if let Some(v) = args[pos].strip_prefix("--config=") {
        let v = v.to_string();
        args.remove(pos);
        v
    } else {
        if pos + 1 >= args.len() {
            return Err(usage("--config needs a file"));
        }
        let v = args.remove(pos + 1);
        args.remove(pos);
        v
    };
    let text = fs::read_to_string(&path).map_err(|e| data(format!("{path}: {e}")))?;
    let entries = config::parse_config(&text).map_err(|e| usage(format!("{path}: {e}")))?;
    config::merge_into_args(args, &entries);
    Ok(())
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenCorpus(a) => cmd_gen_corpus(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::BuildIndex(a) => cmd_build_index(a),
        Command::Search(a) => cmd_search(a),
        Command::Eval(a) => cmd_eval(a),
        Command::AnalyzeBounds(a) => cmd_analyze(a),
    }
}

/// `dir/name.jsonl` -> `dir/name.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = io::create(path).map_err(data)?;
    f(&mut w).map_err(|e| data(format!("{}: {e}", path.display())))?;
    w.flush().map_err(|e| data(format!("{}: {e}", path.display())))
}

fn cmd_gen_corpus(a: GenCorpusArgs) -> Result<(), CliError> {
    let spec = SyntheticCorpusSpec {
        doc_count: a.docs,
        vocab_size: a.vocab,
        topics: a.topics,
        mean_nonzeros: a.nonzeros,
        zipf_exponent: a.zipf,
        topic_vocab: a.topic_vocab,
        background_fraction: a.background,
        query_count: a.num_queries,
        query_length: a.query_length,
        dense_dims: a.dims,
        disjoint_topics: a.disjoint_topics,
        seed: a.seed,
        ..Default::default()
    };
    spec.validate().map_err(usage)?;
    let corpus = gen_corpus(&spec).map_err(usage)?;
    let dense_out = a.dense_out.unwrap_or_else(|| sidecar(&a.out, "dense.jsonl"));
    let queries_out = a.queries_out.unwrap_or_else(|| sidecar(&a.out, "queries.jsonl"));
    let qrels_out = a.qrels_out.unwrap_or_else(|| sidecar(&a.out, "qrels"));
    write_file(&a.out, |w| io::write_corpus(w, &corpus.docs))?;
    write_file(&dense_out, |w| io::write_dense(w, &corpus.dense))?;
    write_file(&queries_out, |w| io::write_queries(w, &corpus.queries))?;
    write_file(&qrels_out, |w| io::write_qrels(w, &corpus.qrels))?;
    info!("wrote {} documents and {} queries", corpus.docs.len(), corpus.queries.len());
    Ok(())
}

fn validate_clustering(c: &ClusteringArgs) -> Result<(), CliError> {
    if c.clusters == 0 || c.segments == 0 {
        return Err(usage("--clusters and --segments must be positive"));
    }
    Ok(())
}

fn load_dense(path: &Path) -> Result<DenseCounterparts, CliError> {
    let pairs = io::read_dense(io::open(path).map_err(data)?).map_err(data)?;
    DenseCounterparts::new(pairs).map_err(data)
}

fn cmd_cluster(a: ClusterArgs) -> Result<(), CliError> {
    validate_clustering(&a.clustering)?;
    let dense = load_dense(&a.dense)?;
    let c = &a.clustering;
    let (clusters, segments) = cluster_corpus(&dense, c.clusters, c.segments, c.seg_method, c.seed).map_err(data)?;
    let mut w = io::create(&a.out).map_err(data)?;
    io::write_assignment(&mut w, &clusters, &segments).map_err(data)?;
    w.flush().map_err(data)
}

fn cmd_build_index(a: BuildIndexArgs) -> Result<(), CliError> {
    validate_clustering(&a.clustering)?;
    if !(4..=16).contains(&a.bits) {
        return Err(usage("--bits must lie in [4, 16]"));
    }
    let docs: Vec<RawDoc> = io::read_corpus(io::open(&a.corpus).map_err(data)?).map_err(data)?;
    let (clusters, segments) = match &a.assignment {
        Some(path) => io::read_assignment(io::open(path).map_err(data)?).map_err(data)?,
        None => {
            let dense = dense_for(&a, &docs)?;
            let c = &a.clustering;
            cluster_corpus(&dense, c.clusters, c.segments, c.seg_method, c.seed).map_err(data)?
        }
    };
    if let Some(path) = &a.assignment_out {
        let mut w = io::create(path).map_err(data)?;
        io::write_assignment(&mut w, &clusters, &segments).map_err(data)?;
        w.flush().map_err(data)?;
    }
    let index = build_index_from_raw(&docs, &clusters, &segments, a.bits).map_err(data)?;
    index.write_to(&a.out).map_err(data)?;
    info!("indexed {} documents into {} clusters x {} segments", index.doc_count(), index.cluster_count(), index.segments_per_cluster());
    Ok(())
}

fn dense_for(a: &BuildIndexArgs, docs: &[RawDoc]) -> Result<DenseCounterparts, CliError> {
    let path = a.dense.clone().or_else(|| Some(sidecar(&a.corpus, "dense.jsonl")).filter(|p| p.exists()));
    if let Some(path) = path {
        return load_dense(&path);
    }
    info!("no dense counterparts found; projecting sparse vectors");
    let max = docs.iter().map(RawDoc::max_weight).fold(0.0, f32::max);
    let quant = ascx::quant::Quantization::fit(a.bits, max).map_err(data)?;
    let pairs = docs
        .par_iter()
        .map(|d| Ok((d.doc_id, random_projection(&quant.quantize_vector(&d.terms)?, 64, a.clustering.seed))))
        .collect::<Result<Vec<_>, ascx::quant::QuantError>>()
        .map_err(data)?;
    DenseCounterparts::new(pairs).map_err(data)
}

/// Strategy parameters checked against the flags that were given.
pub fn strategy_from_args(a: &SearchArgs) -> Result<StrategyConfig, CliError> {
    let kind = a.strategy;
    if a.mu.is_some() && !kind.uses_mu() {
        return Err(usage(format!("--mu does not apply to strategy {kind}")));
    }
    if a.eta.is_some() && !kind.uses_eta() {
        return Err(usage(format!("--eta does not apply to strategy {kind}")));
    }
    if a.budget_ms.is_some() && !kind.uses_budget() {
        return Err(usage(format!("--budget-ms does not apply to strategy {kind}")));
    }
    if let Some(b) = a.budget_ms {
        if !(b.is_finite() && b > 0.0) {
            return Err(usage("--budget-ms must be a positive number"));
        }
    }
    if a.k == 0 {
        return Err(usage("--k must be positive"));
    }
    if a.threads == Some(0) {
        return Err(usage("--threads must be positive"));
    }
    StrategyConfig::new(kind, a.mu, a.eta).map_err(usage)
}

fn read_index(path: &Path) -> Result<ClusterSkippingIndex, CliError> {
    ClusterSkippingIndex::read_from(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_queries(path: &Path) -> Result<Vec<Query>, CliError> {
    io::read_queries(io::open(path).map_err(data)?).map_err(data)
}

fn cmd_search(a: SearchArgs) -> Result<(), CliError> {
    let strategy = strategy_from_args(&a)?;
    let index = read_index(&a.index)?;
    let index = if strategy.kind == StrategyKind::Maxscore { index.flatten() } else { index };
    let queries = load_queries(&a.queries)?;
    let options = SearchOptions { budget_ms: a.budget_ms, trace: a.trace.is_some() };
    let work =
        || -> Result<Vec<SearchReport>, CliError> { queries.par_iter().map(|q| strategy.run(&index, q, a.k, &options).map_err(data)).collect() };
    let started = Instant::now();
    let reports = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(data)?.install(work)?,
        None => work()?,
    };
    let wall = started.elapsed();

    let tag = a.tag.clone().unwrap_or_else(|| strategy.kind.to_string());
    let mut out: Box<dyn Write> = match &a.run {
        Some(p) => Box::new(io::create(p).map_err(data)?),
        None => Box::new(std::io::stdout().lock()),
    };
    for r in &reports {
        io::write_run(&mut out, r, &tag).map_err(data)?;
    }
    out.flush().map_err(data)?;
    if let Some(path) = &a.trace {
        write_file(path, |w| reports.iter().try_for_each(|r| write_trace(&mut *w, r)))?;
    }
    if let Some(path) = &a.report {
        let summary = run_summary(&reports, &strategy, a.k, wall.as_secs_f64() * 1000.0)?;
        write_file(path, |w| writeln!(w, "{}", serde_json::to_string_pretty(&summary).expect("json value")))?;
    }
    Ok(())
}

fn run_summary(reports: &[SearchReport], strategy: &StrategyConfig, k: usize, wall_ms: f64) -> Result<serde_json::Value, CliError> {
    let n = reports.len().max(1) as f64;
    let visited: f64 = reports.iter().map(SearchReport::visited_fraction).sum::<f64>() / n;
    let scored: f64 = reports.iter().map(|r| r.docs_scored as f64).sum::<f64>() / n;
    let latency = if reports.is_empty() { None } else { Some(latency_stats(&reports.iter().map(|r| r.elapsed).collect::<Vec<_>>()).map_err(data)?) };
    Ok(json!({
        "strategy": strategy.kind,
        "mu": strategy.mu.to_string(),
        "eta": strategy.eta.to_string(),
        "k": k,
        "queries": reports.len(),
        "clusters_visited_fraction": visited,
        "docs_scored_mean": scored,
        "terminated_by_budget": reports.iter().filter(|r| r.terminated_by_budget).count(),
        "latency": latency,
        "wall_ms": wall_ms,
    }))
}

fn load_run(path: &Path) -> Result<Vec<RankedList>, CliError> {
    let groups = io::read_run(io::open(path).map_err(data)?).map_err(data)?;
    Ok(groups.iter().map(|(q, lines)| RankedList::from_run_lines(q, lines)).collect())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    if a.oracle.is_none() && a.qrels.is_none() {
        return Err(usage("eval needs --oracle, --qrels or both"));
    }
    if a.k == 0 {
        return Err(usage("--k must be positive"));
    }
    let run = load_run(&a.run)?;
    let mut metrics = serde_json::Map::new();
    metrics.insert("queries".into(), json!(run.len()));
    metrics.insert("k".into(), json!(a.k));
    if let Some(path) = &a.oracle {
        let oracle = load_run(path)?;
        let recall = recall_at_k(&run, Reference::Oracle(&oracle), a.k).map_err(data)?;
        let curve = score_ratio_curve(&run, &oracle, a.k).map_err(data)?;
        let min_ratio = curve.iter().map(|&(_, r)| r).fold(f64::INFINITY, f64::min);
        metrics.insert("oracle_recall".into(), json!(recall));
        metrics.insert("min_score_ratio".into(), json!(min_ratio));
    }
    if let Some(path) = &a.qrels {
        let qrels: Qrels = io::read_qrels(io::open(path).map_err(data)?).map_err(data)?;
        metrics.insert("recall".into(), json!(recall_at_k(&run, Reference::Qrels(&qrels), a.k).map_err(data)?));
        metrics.insert("mrr".into(), json!(mrr_at_k(&run, &qrels, a.k).map_err(data)?));
    }
    let mut stdout = std::io::stdout().lock();
    if a.json {
        writeln!(stdout, "{}", serde_json::Value::Object(metrics)).map_err(data)?;
    } else {
        for (key, value) in &metrics {
            writeln!(stdout, "{key:<16} {value}").map_err(data)?;
        }
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let index = read_index(&a.index)?;
    let queries = load_queries(&a.queries)?;
    let (analysis, rows) = analyze_bounds(&index, &queries);
    if let Some(path) = &a.csv {
        write_file(path, |w| write_bound_csv(w, &rows))?;
    }
    println!("{}", serde_json::to_string(&analysis).expect("json value"));
    Ok(())
}
