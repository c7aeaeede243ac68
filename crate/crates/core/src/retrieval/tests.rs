use super::*;
use crate::clustering::{ClusterAssignment, SegmentAssignment, SegmentMethod};
use crate::index::{build_index, cluster_bounds};
use crate::quant::Quantization;
use crate::types::{topk_compare, TermId, Weight};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::Cell;
use std::collections::BTreeMap;

fn sv(e: &[(TermId, Weight)]) -> SparseVector {
    SparseVector::new(e.iter().copied()).unwrap()
}

/// Four clusters of two single-document segments; each document carries
/// exactly its segment's maxima for terms 1..=3.
fn figure_fixture() -> ClusterSkippingIndex {
    let maxima: [[[Weight; 3]; 2]; 4] =
        [[[11, 10, 10], [13, 8, 8]], [[40, 30, 26], [42, 24, 22]], [[60, 37, 0], [0, 15, 40]], [[50, 50, 36], [30, 19, 63]]];
    let mut corpus = Vec::new();
    let mut clusters = Vec::new();
    let mut segments = Vec::new();
    for (c, segs) in maxima.iter().enumerate() {
        for (s, w) in segs.iter().enumerate() {
            let doc = (c * 2 + s) as DocId;
            let entries: Vec<(TermId, Weight)> = (0..3).filter(|&t| w[t] > 0).map(|t| (t as TermId + 1, w[t])).collect();
            corpus.push((doc, sv(&entries)));
            clusters.push((doc, c as u32));
            segments.push((doc, s as u32));
        }
    }
    build_index(
        &corpus,
        &ClusterAssignment::new(4, clusters).unwrap(),
        &SegmentAssignment::new(2, SegmentMethod::RandomUniform, segments).unwrap(),
        Quantization::identity(8).unwrap(),
    )
    .unwrap()
}

fn figure_query() -> Query {
    Query::from_terms("q", &[1, 2, 3]).unwrap()
}

fn r(n: u32, d: u32) -> Rational {
    Rational::new(n, d).unwrap()
}

#[test]
fn figure_fixture_bounds() {
    let idx = figure_fixture();
    let q = figure_query();
    let got: Vec<(Score, Score, Score)> = (0..4)
        .map(|c| {
            let b = cluster_bounds(&idx, &q, c);
            (b.bound_sum, b.max_sbound, b.avg_sbound_sum)
        })
        .collect();
    assert_eq!(got, vec![(33, 31, 60), (98, 96, 184), (137, 97, 152), (163, 136, 248)]);
}

#[test]
fn figure_fixture_prune_decisions_at_theta_90() {
    let idx = figure_fixture();
    let q = figure_query();
    let decide = |f: &dyn Fn(&ClusterBounds) -> bool| -> Vec<usize> { (0..4).filter(|&c| f(&cluster_bounds(&idx, &q, c))).map(|c| c + 1).collect() };
    assert_eq!(decide(&|b| should_prune_cluster_bound_sum(b, 90, Rational::ONE)), vec![1]);
    assert_eq!(decide(&|b| should_prune_cluster_bound_sum(b, 90, r(9, 10))), vec![1, 2]);
    let asc = PruneParams::new(r(9, 10), Rational::ONE, 10).unwrap();
    assert_eq!(decide(&|b| should_prune_cluster(b, 90, &asc)), vec![1, 3]);
}

#[test]
fn figure_fixture_visit_order() {
    let idx = figure_fixture();
    let q = figure_query();
    let report = search_asc(&idx, &q, &PruneParams::safe(1).unwrap(), &SearchOptions::traced()).unwrap();
    let order: Vec<u32> = report
        .events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Cluster { cluster_id, .. } => Some(*cluster_id),
            _ => None,
        })
        .collect();
    // MaxSBound 136, 97, 96, 31
    assert_eq!(order, vec![3, 2, 1, 0]);
    let anytime = search_anytime(&idx, &q, 1, &SearchOptions::traced()).unwrap();
    let order: Vec<u32> = anytime
        .events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Cluster { cluster_id, .. } => Some(*cluster_id),
            _ => None,
        })
        .collect();
    assert_eq!(order, vec![3, 2, 1, 0]);
    // top document scores 50+50+36 = 136
    assert_eq!(report.results, vec![ScoredDoc::new(6, 136)]);
}

#[test]
fn exact_equality_boundary_is_pruned() {
    let b = ClusterBounds { bound_sum: 100, max_sbound: 100, avg_sbound_sum: 180, segments: 2 };
    let p = PruneParams::safe(10).unwrap();
    assert!(should_prune_cluster_bound_sum(&b, 100, Rational::ONE));
    assert!(!should_prune_cluster_bound_sum(&b, 99, Rational::ONE));
    assert!(should_prune_cluster(&b, 100, &p));
    // avg 90 is fine but max 100 > 99
    assert!(!should_prune_cluster(&b, 99, &p));
    let half = PruneParams::new(r(1, 2), r(1, 2), 10).unwrap();
    assert!(should_prune_cluster(&b, 50, &half));
    assert!(!should_prune_cluster(&b, 44, &half));
}

fn random_index(seed: u64, docs: u32, m: u32, n: u32, vocab: u32) -> (Vec<(DocId, SparseVector)>, ClusterSkippingIndex) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<(DocId, SparseVector)> = (0..docs)
        .map(|d| {
            let e: BTreeMap<TermId, Weight> = (0..rng.random_range(1..20)).map(|_| (rng.random_range(0..vocab), rng.random_range(1..256))).collect();
            (d * 2 + 1, SparseVector::new(e).unwrap())
        })
        .collect();
    let clusters = ClusterAssignment::new(m, corpus.iter().map(|(d, _)| (*d, rng.random_range(0..m))).collect()).unwrap();
    let segments =
        SegmentAssignment::new(n, SegmentMethod::RandomUniform, corpus.iter().map(|(d, _)| (*d, rng.random_range(0..n))).collect()).unwrap();
    let idx = build_index(&corpus, &clusters, &segments, Quantization::identity(8).unwrap()).unwrap();
    (corpus, idx)
}

fn random_query(rng: &mut ChaCha8Rng, vocab: u32) -> Query {
    let terms: Vec<TermId> = (0..rng.random_range(1..12)).map(|_| rng.random_range(0..vocab)).collect();
    Query::from_terms("q", &terms).unwrap()
}

/// Scores must match exactly; ids only when the k-th and (k+1)-th oracle
/// scores differ, since pruning at `bound <= theta` may drop a boundary tie.
fn assert_rank_safe(got: &[ScoredDoc], oracle_k_plus_1: &[ScoredDoc], k: usize) {
    let oracle = &oracle_k_plus_1[..oracle_k_plus_1.len().min(k)];
    let got_scores: Vec<Score> = got.iter().map(|d| d.score).collect();
    let want_scores: Vec<Score> = oracle.iter().map(|d| d.score).collect();
    assert_eq!(got_scores, want_scores);
    let tied = oracle_k_plus_1.len() > k && oracle_k_plus_1[k - 1].score == oracle_k_plus_1[k].score;
    if !tied {
        assert_eq!(got, oracle);
    }
}

#[test]
fn safe_strategies_match_oracle() {
    let (corpus, idx) = random_index(11, 600, 12, 4, 80);
    let flat = idx.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..80 {
        let q = random_query(&mut rng, 90);
        for k in [1, 5, 10, 50] {
            let oracle = search_exhaustive_corpus(&corpus, &q, k + 1).unwrap().results;
            let exact = search_exhaustive_corpus(&corpus, &q, k).unwrap().results;
            assert_eq!(search_exhaustive(&idx, &q, k).unwrap().results, exact);
            assert_rank_safe(&search_maxscore(&flat, &q, k).unwrap().results, &oracle, k);
            assert_rank_safe(&search_anytime(&idx, &q, k, &SearchOptions::default()).unwrap().results, &oracle, k);
            assert_rank_safe(&search_anytime_star(&idx, &q, k, Rational::ONE, &SearchOptions::default()).unwrap().results, &oracle, k);
            let asc = search_asc(&idx, &q, &PruneParams::safe(k).unwrap(), &SearchOptions::default()).unwrap();
            assert_rank_safe(&asc.results, &oracle, k);
        }
    }
}

#[test]
fn identical_term_maxima_terminate_and_match_oracle() {
    let corpus: Vec<(DocId, SparseVector)> = (0..200).map(|d| (d, sv(&[(1, 7), (2, 7), (3, 7)]))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clusters = ClusterAssignment::new(5, corpus.iter().map(|(d, _)| (*d, rng.random_range(0..5))).collect()).unwrap();
    let segments = SegmentAssignment::new(2, SegmentMethod::RandomUniform, corpus.iter().map(|(d, _)| (*d, d % 2)).collect()).unwrap();
    let idx = build_index(&corpus, &clusters, &segments, Quantization::identity(8).unwrap()).unwrap();
    let q = figure_query();
    let oracle = search_exhaustive_corpus(&corpus, &q, 11).unwrap().results;
    assert_rank_safe(&search_asc(&idx, &q, &PruneParams::safe(10).unwrap(), &SearchOptions::default()).unwrap().results, &oracle, 10);
    assert_rank_safe(&search_maxscore(&idx.flatten(), &q, 10).unwrap().results, &oracle, 10);
}

#[test]
fn ties_broken_by_ascending_id() {
    let corpus = vec![(0, sv(&[(1, 5)])), (1, sv(&[(1, 9)])), (2, sv(&[(1, 9)]))];
    let q = Query::from_terms("q", &[1]).unwrap();
    let rep = search_exhaustive_corpus(&corpus, &q, 2).unwrap();
    assert_eq!(rep.results, vec![ScoredDoc::new(1, 9), ScoredDoc::new(2, 9)]);
}

#[test]
fn results_sorted_and_unique() {
    let (_, idx) = random_index(21, 300, 6, 2, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..30 {
        let q = random_query(&mut rng, 30);
        let params = PruneParams::new(r(1, 2), r(3, 4), 20).unwrap();
        let rep = search_asc(&idx, &q, &params, &SearchOptions::default()).unwrap();
        assert!(rep.results.len() <= 20);
        for w in rep.results.windows(2) {
            assert_eq!(topk_compare(&w[0], &w[1]), std::cmp::Ordering::Less);
        }
    }
}

#[test]
fn empty_query_returns_nothing() {
    let (_, idx) = random_index(31, 50, 3, 2, 20);
    let q = Query::new("e", SparseVector::empty());
    let rep = search_asc(&idx, &q, &PruneParams::safe(5).unwrap(), &SearchOptions::default()).unwrap();
    assert!(rep.results.is_empty());
    assert!(search_anytime(&idx, &q, 5, &SearchOptions::default()).unwrap().results.is_empty());
}

#[test]
fn parameter_errors() {
    let (_, idx) = random_index(41, 50, 3, 2, 20);
    let q = figure_query();
    assert_eq!(search_exhaustive(&idx, &q, 0).unwrap_err(), SearchError::Params(ParamError::ZeroK));
    assert_eq!(search_maxscore(&idx, &q, 5).unwrap_err(), SearchError::NotFlat(3));
    let bad = SearchOptions::with_budget_ms(-1.0);
    assert!(matches!(search_anytime(&idx, &q, 5, &bad), Err(SearchError::Params(ParamError::BadBudget(_)))));
    assert!(StrategyConfig::new(StrategyKind::Asc, Some(r(1, 1)), Some(r(1, 2))).is_err());
    assert!(StrategyConfig::new(StrategyKind::AnytimeStar, Some(r(0, 1)), None).is_err());
}

#[test]
fn strategy_names_roundtrip() {
    for k in StrategyKind::ALL {
        assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
    }
    assert!("bm25".parse::<StrategyKind>().is_err());
}

/// Advances a fixed amount on every reading.
struct StepClock {
    now: Cell<Duration>,
    step: Duration,
}

impl Clock for StepClock {
    fn elapsed(&self) -> Duration {
        let t = self.now.get();
        self.now.set(t + self.step);
        t
    }
}

#[test]
fn budget_stops_after_visited_cluster() {
    let (_, idx) = random_index(51, 800, 16, 2, 10);
    let q = Query::from_terms("q", &[1, 2, 3, 4, 5, 6]).unwrap();
    let clock = StepClock { now: Cell::new(Duration::ZERO), step: Duration::from_millis(1) };
    let options = SearchOptions::with_budget_ms(2.0);
    let rep = search_asc_with_clock(&idx, &q, &PruneParams::safe(1000).unwrap(), &options, &clock).unwrap();
    assert!(rep.terminated_by_budget);
    assert!(rep.clusters_visited >= 1 && rep.clusters_visited < 16);

    let unlimited = search_asc(&idx, &q, &PruneParams::safe(1000).unwrap(), &SearchOptions::default()).unwrap();
    assert!(!unlimited.terminated_by_budget);
    assert_eq!(unlimited.clusters_visited, 16);
}

#[test]
fn infinite_budget_matches_unbudgeted() {
    let (_, idx) = random_index(61, 300, 8, 2, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    for _ in 0..20 {
        let q = random_query(&mut rng, 40);
        let a = search_anytime(&idx, &q, 10, &SearchOptions::default()).unwrap();
        let b = search_anytime(&idx, &q, 10, &SearchOptions::with_budget_ms(1e12)).unwrap();
        assert_eq!(a.results, b.results);
    }
}

#[test]
fn trace_roundtrip() {
    let idx = figure_fixture();
    let params = PruneParams::new(r(9, 10), Rational::ONE, 1).unwrap();
    let rep = search_asc(&idx, &figure_query(), &params, &SearchOptions::traced()).unwrap();
    let mut buf = Vec::new();
    write_trace(&mut buf, &rep).unwrap();
    let lines = read_trace(&buf[..]).unwrap();
    assert_eq!(lines.len(), rep.events.len());
    assert_eq!(lines[0].mu, "9/10");
    assert_eq!(lines[0].strategy, StrategyKind::Asc);
    assert_eq!(lines.iter().map(|l| l.event).collect::<Vec<_>>(), rep.events);
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().next().unwrap().contains("\"level\":\"cluster\""));
    assert!(read_trace("{\"level\":1}".as_bytes()).is_err());
}

fn audit(report: &SearchReport, params: &PruneParams) {
    for e in &report.events {
        match *e {
            TraceEvent::Cluster { theta, pruned: true, max_sbound, avg_sbound_sum, segments, .. } => {
                assert!(params.mu.num() as u128 * max_sbound as u128 <= params.mu.den() as u128 * theta as u128);
                assert!(params.eta.num() as u128 * avg_sbound_sum as u128 <= params.eta.den() as u128 * segments as u128 * theta as u128);
            }
            TraceEvent::Document { theta, bound, .. } => {
                assert!(params.eta.num() as u128 * bound as u128 <= params.eta.den() as u128 * theta as u128);
            }
            _ => {}
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn asc_decisions_follow_rule(seed in 0u64..1000, mu_n in 1u32..=10, eta_extra in 0u32..=10, k in 1usize..30) {
        let eta_n = (mu_n + eta_extra).min(10);
        let params = PruneParams::new(r(mu_n, 10), r(eta_n, 10), k).unwrap();
        let (_, idx) = random_index(seed, 200, 6, 3, 25);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let q = random_query(&mut rng, 25);
        let rep = search_asc(&idx, &q, &params, &SearchOptions::traced()).unwrap();
        audit(&rep, &params);
        let visited = rep.events.iter().filter(|e| matches!(e, TraceEvent::Cluster { pruned: false, .. })).count();
        prop_assert_eq!(visited, rep.clusters_visited);
    }

    #[test]
    fn approximate_scores_never_exceed_oracle(seed in 0u64..1000, mu_n in 1u32..=10, k in 1usize..20) {
        let (corpus, idx) = random_index(seed, 200, 5, 2, 25);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 9);
        let q = random_query(&mut rng, 25);
        let oracle = search_exhaustive_corpus(&corpus, &q, k).unwrap();
        let params = PruneParams::new(r(mu_n, 10), Rational::ONE, k).unwrap();
        let asc = search_asc(&idx, &q, &params, &SearchOptions::default()).unwrap();
        let star = search_anytime_star(&idx, &q, k, r(mu_n, 10), &SearchOptions::default()).unwrap();
        for rep in [&asc, &star] {
            prop_assert!(rep.results.len() <= oracle.results.len());
            for (a, o) in rep.results.iter().zip(&oracle.results) {
                prop_assert!(a.score <= o.score);
            }
            // each returned score is the document's true score
            for d in &rep.results {
                let v = &corpus.iter().find(|(id, _)| *id == d.doc_id).unwrap().1;
                prop_assert_eq!(rank_score(v, &q), d.score);
            }
        }
    }
}
