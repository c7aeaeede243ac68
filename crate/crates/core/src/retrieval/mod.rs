//! Query execution strategies.
//!
//! | strategy       | cluster order | cluster pruned when                         | document pruned when   |
//! |----------------|---------------|---------------------------------------------|------------------------|
//! | `oracle`       | -             | never                                       | never                  |
//! | `maxscore`     | single view   | -                                           | `Bound <= theta`       |
//! | `anytime`      | BoundSum      | `BoundSum <= theta`                         | `Bound <= theta`       |
//! | `anytime-star` | BoundSum      | `BoundSum <= theta/mu`                      | `Bound <= theta/mu`    |
//! | `asc`          | MaxSBound     | `MaxSBound <= theta/mu` and `AvgSBound <= theta/eta` | `Bound <= theta/eta` |
//!
//! The threshold `theta` is shared across all clusters of one query.

mod maxscore;
pub mod trace;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{all_cluster_bounds, ClusterBounds, ClusterSkippingIndex};
use crate::topk::TopKAccumulator;
use crate::types::{rank_score, DocId, ParamError, PruneParams, Query, Rational, Score, ScoredDoc, SparseVector};
use maxscore::{scan_cluster, ScanStats};

pub use trace::{read_trace, write_trace, TraceLine};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("flat MaxScore needs a single-cluster view, index has {0} clusters")]
    NotFlat(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Oracle,
    Maxscore,
    Anytime,
    AnytimeStar,
    Asc,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] =
        [StrategyKind::Oracle, StrategyKind::Maxscore, StrategyKind::Anytime, StrategyKind::AnytimeStar, StrategyKind::Asc];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Oracle => "oracle",
            StrategyKind::Maxscore => "maxscore",
            StrategyKind::Anytime => "anytime",
            StrategyKind::AnytimeStar => "anytime-star",
            StrategyKind::Asc => "asc",
        }
    }

    pub fn uses_mu(self) -> bool {
        matches!(self, StrategyKind::AnytimeStar | StrategyKind::Asc)
    }

    pub fn uses_eta(self) -> bool {
        self == StrategyKind::Asc
    }

    pub fn uses_budget(self) -> bool {
        matches!(self, StrategyKind::Anytime | StrategyKind::AnytimeStar | StrategyKind::Asc)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// One instrumentation record. Cluster records are written for every
/// cluster-level decision, document records only for pruned candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum TraceEvent {
    Cluster { cluster_id: u32, theta: Score, pruned: bool, bound_sum: Score, max_sbound: Score, avg_sbound_sum: Score, segments: u32 },
    Document { cluster_id: u32, doc_id: DocId, theta: Score, bound: Score },
}

/// Source of elapsed time for budget checks.
pub trait Clock {
    fn elapsed(&self) -> Duration;
}

pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn elapsed(&self) -> Duration {
        self.0.elapsed()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SearchOptions {
    pub budget_ms: Option<f64>,
    /// Record cluster decisions and document prunes.
    pub trace: bool,
}

impl SearchOptions {
    pub fn traced() -> Self {
        Self { budget_ms: None, trace: true }
    }

    pub fn with_budget_ms(budget_ms: f64) -> Self {
        Self { budget_ms: Some(budget_ms), trace: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchReport {
    pub query_id: String,
    /// Sorted by `topk_compare`.
    pub results: Vec<ScoredDoc>,
    pub strategy: StrategyKind,
    pub mu: Rational,
    pub eta: Rational,
    pub k: usize,
    pub clusters_total: usize,
    pub clusters_visited: usize,
    /// Candidates for which scoring started.
    pub docs_scored: u64,
    pub events: Vec<TraceEvent>,
    pub elapsed: Duration,
    pub slowest_cluster: Duration,
    pub terminated_by_budget: bool,
}

impl SearchReport {
    fn new(query: &Query, strategy: StrategyKind, mu: Rational, eta: Rational, k: usize, clusters_total: usize) -> Self {
        Self {
            query_id: query.query_id.clone(),
            results: Vec::new(),
            strategy,
            mu,
            eta,
            k,
            clusters_total,
            clusters_visited: 0,
            docs_scored: 0,
            events: Vec::new(),
            elapsed: Duration::ZERO,
            slowest_cluster: Duration::ZERO,
            terminated_by_budget: false,
        }
    }

    pub fn doc_ids(&self) -> Vec<DocId> {
        self.results.iter().map(|d| d.doc_id).collect()
    }

    pub fn scores(&self) -> Vec<Score> {
        self.results.iter().map(|d| d.score).collect()
    }

    /// Fraction of clusters not pruned.
    pub fn visited_fraction(&self) -> f64 {
        if self.clusters_total == 0 {
            0.0
        } else {
            self.clusters_visited as f64 / self.clusters_total as f64
        }
    }
}

/// Two-parameter cluster rule: prune iff `mu * MaxSBound <= theta` and
/// `eta * AvgSBound <= theta`, both by exact cross-multiplication.
pub fn should_prune_cluster(bounds: &ClusterBounds, theta: Score, params: &PruneParams) -> bool {
    params.mu.bound_within(bounds.max_sbound, theta) && params.eta.mean_within(bounds.avg_sbound_sum, bounds.segments, theta)
}

/// Anytime rule: prune iff `mu * BoundSum <= theta` (`mu = 1` is the safe variant).
pub fn should_prune_cluster_bound_sum(bounds: &ClusterBounds, theta: Score, mu: Rational) -> bool {
    mu.bound_within(bounds.bound_sum, theta)
}

fn check_k(k: usize) -> Result<(), SearchError> {
    if k == 0 {
        Err(ParamError::ZeroK.into())
    } else {
        Ok(())
    }
}

/// Scores every document; exact top-k under `topk_compare`.
pub fn search_exhaustive(index: &ClusterSkippingIndex, query: &Query, k: usize) -> Result<SearchReport, SearchError> {
    check_k(k)?;
    let clock = WallClock::start();
    let mut report = SearchReport::new(query, StrategyKind::Oracle, Rational::ONE, Rational::ONE, k, index.cluster_count());
    let mut topk = TopKAccumulator::new(k);
    for cluster in index.clusters() {
        let mut scores: HashMap<DocId, Score> = HashMap::new();
        for &(t, q) in query.vector.entries() {
            if let Some(slot) = cluster.term_slot(t) {
                for (doc, w) in cluster.postings(slot).decode() {
                    *scores.entry(doc).or_insert(0) += q as Score * w as Score;
                }
            }
        }
        report.docs_scored += scores.len() as u64;
        for (doc, score) in scores {
            topk.push(ScoredDoc::new(doc, score));
        }
    }
    report.clusters_visited = index.cluster_count();
    report.results = topk.into_sorted_vec();
    report.elapsed = clock.elapsed();
    Ok(report)
}

/// Exhaustive scoring straight from document vectors.
pub fn search_exhaustive_corpus(docs: &[(DocId, SparseVector)], query: &Query, k: usize) -> Result<SearchReport, SearchError> {
    check_k(k)?;
    let clock = WallClock::start();
    let mut report = SearchReport::new(query, StrategyKind::Oracle, Rational::ONE, Rational::ONE, k, 1);
    let mut topk = TopKAccumulator::new(k);
    for (doc, vector) in docs {
        let score = rank_score(vector, query);
        if score > 0 {
            report.docs_scored += 1;
            topk.push(ScoredDoc::new(*doc, score));
        }
    }
    report.clusters_visited = 1;
    report.results = topk.into_sorted_vec();
    report.elapsed = clock.elapsed();
    Ok(report)
}

/// Flat MaxScore over a single-cluster index (see `ClusterSkippingIndex::flatten`).
pub fn search_maxscore(index: &ClusterSkippingIndex, query: &Query, k: usize) -> Result<SearchReport, SearchError> {
    check_k(k)?;
    if index.cluster_count() != 1 {
        return Err(SearchError::NotFlat(index.cluster_count()));
    }
    search_maxscore_traced(index, query, k, false)
}

fn search_maxscore_traced(index: &ClusterSkippingIndex, query: &Query, k: usize, trace: bool) -> Result<SearchReport, SearchError> {
    let clock = WallClock::start();
    let mut report = SearchReport::new(query, StrategyKind::Maxscore, Rational::ONE, Rational::ONE, k, 1);
    let mut topk = TopKAccumulator::new(k);
    let mut stats = ScanStats::default();
    let mut events = Vec::new();
    scan_cluster(index.cluster(0), 0, query, &mut topk, Rational::ONE, &mut stats, trace.then_some(&mut events));
    report.events = events;
    report.clusters_visited = 1;
    report.docs_scored = stats.docs_scored;
    report.results = topk.into_sorted_vec();
    report.elapsed = clock.elapsed();
    report.slowest_cluster = report.elapsed;
    Ok(report)
}

#[derive(Clone, Copy, Debug)]
enum ClusterRule {
    BoundSum(Rational),
    Segmented { mu: Rational, eta: Rational },
}

struct Plan {
    kind: StrategyKind,
    rule: ClusterRule,
    doc_factor: Rational,
    mu: Rational,
    eta: Rational,
}

/// Safe cluster-ordered retrieval: BoundSum ordering and pruning at `theta`.
pub fn search_anytime(index: &ClusterSkippingIndex, query: &Query, k: usize, options: &SearchOptions) -> Result<SearchReport, SearchError> {
    search_anytime_with_clock(index, query, k, options, &WallClock::start())
}

pub fn search_anytime_with_clock(
    index: &ClusterSkippingIndex,
    query: &Query,
    k: usize,
    options: &SearchOptions,
    clock: &dyn Clock,
) -> Result<SearchReport, SearchError> {
    check_k(k)?;
    check_budget(options)?;
    let plan = Plan {
        kind: StrategyKind::Anytime,
        rule: ClusterRule::BoundSum(Rational::ONE),
        doc_factor: Rational::ONE,
        mu: Rational::ONE,
        eta: Rational::ONE,
    };
    Ok(traverse(index, query, k, &plan, options, clock))
}

/// Anytime with threshold over-estimation by `1/mu` at both levels.
pub fn search_anytime_star(
    index: &ClusterSkippingIndex,
    query: &Query,
    k: usize,
    mu: Rational,
    options: &SearchOptions,
) -> Result<SearchReport, SearchError> {
    search_anytime_star_with_clock(index, query, k, mu, options, &WallClock::start())
}

pub fn search_anytime_star_with_clock(
    index: &ClusterSkippingIndex,
    query: &Query,
    k: usize,
    mu: Rational,
    options: &SearchOptions,
    clock: &dyn Clock,
) -> Result<SearchReport, SearchError> {
    check_k(k)?;
    check_budget(options)?;
    mu.check_factor()?;
    let plan = Plan { kind: StrategyKind::AnytimeStar, rule: ClusterRule::BoundSum(mu), doc_factor: mu, mu, eta: mu };
    Ok(traverse(index, query, k, &plan, options, clock))
}

/// (mu, eta)-approximate search with segmented cluster bounds. The
/// budget in `params` takes precedence over the one in `options`.
pub fn search_asc(index: &ClusterSkippingIndex, query: &Query, params: &PruneParams, options: &SearchOptions) -> Result<SearchReport, SearchError> {
    search_asc_with_clock(index, query, params, options, &WallClock::start())
}

pub fn search_asc_with_clock(
    index: &ClusterSkippingIndex,
    query: &Query,
    params: &PruneParams,
    options: &SearchOptions,
    clock: &dyn Clock,
) -> Result<SearchReport, SearchError> {
    params.validate()?;
    let options = SearchOptions { budget_ms: params.time_budget_ms.or(options.budget_ms), trace: options.trace };
    check_budget(&options)?;
    let plan = Plan {
        kind: StrategyKind::Asc,
        rule: ClusterRule::Segmented { mu: params.mu, eta: params.eta },
        doc_factor: params.eta,
        mu: params.mu,
        eta: params.eta,
    };
    Ok(traverse(index, query, params.k, &plan, &options, clock))
}

fn check_budget(options: &SearchOptions) -> Result<(), SearchError> {
    match options.budget_ms {
        Some(b) if !(b.is_finite() && b > 0.0) => Err(ParamError::BadBudget(b).into()),
        _ => Ok(()),
    }
}

/// Budget in milliseconds; an infinite budget never triggers.
fn budget_duration(options: &SearchOptions) -> Option<Duration> {
    options.budget_ms.map(|ms| Duration::from_secs_f64(ms / 1000.0))
}

fn traverse(index: &ClusterSkippingIndex, query: &Query, k: usize, plan: &Plan, options: &SearchOptions, clock: &dyn Clock) -> SearchReport {
    let started = clock.elapsed();
    let m = index.cluster_count();
    let mut report = SearchReport::new(query, plan.kind, plan.mu, plan.eta, k, m);
    let bounds = all_cluster_bounds(index, query);
    let mut order: Vec<usize> = (0..m).collect();
    match plan.rule {
        ClusterRule::BoundSum(_) => order.sort_by(|&a, &b| bounds[b].bound_sum.cmp(&bounds[a].bound_sum).then(a.cmp(&b))),
        ClusterRule::Segmented { .. } => order.sort_by(|&a, &b| bounds[b].max_sbound.cmp(&bounds[a].max_sbound).then(a.cmp(&b))),
    }

    let budget = budget_duration(options);
    let mut topk = TopKAccumulator::new(k);
    let mut stats = ScanStats::default();
    let mut events = Vec::new();
    for (position, &c) in order.iter().enumerate() {
        let b = &bounds[c];
        let theta = topk.threshold();
        let pruned = match plan.rule {
            ClusterRule::BoundSum(mu) => should_prune_cluster_bound_sum(b, theta, mu),
            ClusterRule::Segmented { mu, eta } => mu.bound_within(b.max_sbound, theta) && eta.mean_within(b.avg_sbound_sum, b.segments, theta),
        };
        if options.trace {
            events.push(TraceEvent::Cluster {
                cluster_id: c as u32,
                theta,
                pruned,
                bound_sum: b.bound_sum,
                max_sbound: b.max_sbound,
                avg_sbound_sum: b.avg_sbound_sum,
                segments: b.segments,
            });
        }
        if pruned {
            // BoundSum order is non-increasing and theta is fixed while
            // pruning, so every later cluster is pruned too.
            if matches!(plan.rule, ClusterRule::BoundSum(_)) && !options.trace {
                break;
            }
            continue;
        }
        let cluster_start = clock.elapsed();
        scan_cluster(index.cluster(c), c as u32, query, &mut topk, plan.doc_factor, &mut stats, options.trace.then_some(&mut events));
        report.clusters_visited += 1;
        let now = clock.elapsed();
        report.slowest_cluster = report.slowest_cluster.max(now.saturating_sub(cluster_start));
        if let Some(limit) = budget {
            if now.saturating_sub(started) >= limit && position + 1 < order.len() {
                report.terminated_by_budget = true;
                break;
            }
        }
    }
    report.events = events;
    report.docs_scored = stats.docs_scored;
    report.results = topk.into_sorted_vec();
    report.elapsed = clock.elapsed().saturating_sub(started);
    report
}

/// Strategy plus parameters, as selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub mu: Rational,
    pub eta: Rational,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, mu: Option<Rational>, eta: Option<Rational>) -> Result<Self, ParamError> {
        let mu = mu.unwrap_or(Rational::ONE);
        let eta = eta.unwrap_or(if kind == StrategyKind::AnytimeStar { mu } else { Rational::ONE });
        mu.check_factor()?;
        eta.check_factor()?;
        if kind == StrategyKind::Asc && !mu.le(eta) {
            return Err(ParamError::MuExceedsEta { mu, eta });
        }
        Ok(Self { kind, mu, eta })
    }

    /// Runs one query. `maxscore` expects a single-cluster view.
    pub fn run(&self, index: &ClusterSkippingIndex, query: &Query, k: usize, options: &SearchOptions) -> Result<SearchReport, SearchError> {
        match self.kind {
            StrategyKind::Oracle => search_exhaustive(index, query, k),
            StrategyKind::Maxscore => {
                check_k(k)?;
                if index.cluster_count() != 1 {
                    return Err(SearchError::NotFlat(index.cluster_count()));
                }
                search_maxscore_traced(index, query, k, options.trace)
            }
            StrategyKind::Anytime => search_anytime(index, query, k, options),
            StrategyKind::AnytimeStar => search_anytime_star(index, query, k, self.mu, options),
            StrategyKind::Asc => {
                let params = PruneParams::new(self.mu, self.eta, k)?;
                search_asc(index, query, &params, options)
            }
        }
    }
}

#[cfg(test)]
mod tests;
