use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::io::RunLine;
use crate::retrieval::SearchReport;
use crate::types::{DocId, Score};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no reference for queries: {}", .0.join(", "))]
    MissingQueries(Vec<String>),
    #[error("duplicate judgement for query `{query}` doc {doc}")]
    DuplicateJudgement { query: String, doc: DocId },
    #[error("duplicate run for query `{0}`")]
    DuplicateRun(String),
    #[error("no latency samples")]
    Empty,
}

/// Relevance judgements; grade 0 (the lowest level) is irrelevant.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<DocId, u32>>,
}

impl Qrels {
    pub fn insert(&mut self, query: &str, doc: DocId, grade: u32) -> Result<(), EvalError> {
        let q = self.grades.entry(query.to_string()).or_default();
        if q.insert(doc, grade).is_some() {
            return Err(EvalError::DuplicateJudgement { query: query.to_string(), doc });
        }
        Ok(())
    }

    pub fn grade(&self, query: &str, doc: DocId) -> Option<u32> {
        self.grades.get(query).and_then(|g| g.get(&doc).copied())
    }

    pub fn contains_query(&self, query: &str) -> bool {
        self.grades.contains_key(query)
    }

    pub fn relevant(&self, query: &str) -> BTreeSet<DocId> {
        self.grades.get(query).map(|g| g.iter().filter(|(_, &v)| v > 0).map(|(&d, _)| d).collect()).unwrap_or_default()
    }

    pub fn query_count(&self) -> usize {
        self.grades.len()
    }

    /// (query, doc, grade) in query then doc order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, DocId, u32)> {
        self.grades.iter().flat_map(|(q, g)| g.iter().map(move |(&d, &v)| (q.as_str(), d, v)))
    }
}

/// Ranked output for one query, best first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedList {
    pub query_id: String,
    pub docs: Vec<(DocId, Score)>,
}

impl RankedList {
    pub fn from_report(report: &SearchReport) -> Self {
        Self { query_id: report.query_id.clone(), docs: report.results.iter().map(|d| (d.doc_id, d.score)).collect() }
    }

    /// Lines must already be sorted by rank.
    pub fn from_run_lines(query_id: &str, lines: &[RunLine]) -> Self {
        Self { query_id: query_id.to_string(), docs: lines.iter().map(|l| (l.doc_id, l.score)).collect() }
    }

    pub fn top(&self, k: usize) -> &[(DocId, Score)] {
        &self.docs[..self.docs.len().min(k)]
    }

    /// Mean of the `k` best scores, absent entries counting as zero.
    pub fn avg_score(&self, k: usize) -> f64 {
        self.top(k).iter().map(|&(_, s)| s as f64).sum::<f64>() / k as f64
    }

    pub fn score_sum(&self, k: usize) -> u128 {
        self.top(k).iter().map(|&(_, s)| s as u128).sum()
    }
}

pub enum Reference<'a> {
    /// Top-k ids of exact runs.
    Oracle(&'a [RankedList]),
    Qrels(&'a Qrels),
}

/// Runs sorted by query id; means are summed in that order so that results
/// do not depend on the caller's ordering.
fn by_query(runs: &[RankedList]) -> Result<Vec<&RankedList>, EvalError> {
    let mut sorted: Vec<&RankedList> = runs.iter().collect();
    sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].query_id == w[1].query_id) {
        return Err(EvalError::DuplicateRun(w[0].query_id.clone()));
    }
    Ok(sorted)
}

fn index_runs(runs: &[RankedList]) -> Result<HashMap<&str, &RankedList>, EvalError> {
    let mut map = HashMap::new();
    for r in runs {
        if map.insert(r.query_id.as_str(), r).is_some() {
            return Err(EvalError::DuplicateRun(r.query_id.clone()));
        }
    }
    Ok(map)
}

fn missing(runs: &[&RankedList], has: impl Fn(&str) -> bool) -> Result<(), EvalError> {
    let absent: Vec<String> = runs.iter().filter(|r| !has(&r.query_id)).map(|r| r.query_id.clone()).collect();
    if absent.is_empty() {
        Ok(())
    } else {
        Err(EvalError::MissingQueries(absent))
    }
}

/// Mean over queries of `|top-k(run) ∩ R| / |R|`. Queries whose reference
/// set is empty are skipped; with no usable query the result is 1.
pub fn recall_at_k(runs: &[RankedList], reference: Reference<'_>, k: usize) -> Result<f64, EvalError> {
    let sorted = by_query(runs)?;
    let reference_sets: Vec<HashSet<DocId>> = match reference {
        Reference::Oracle(oracle) => {
            let map = index_runs(oracle)?;
            missing(&sorted, |q| map.contains_key(q))?;
            sorted.iter().map(|r| map[r.query_id.as_str()].top(k).iter().map(|&(d, _)| d).collect()).collect()
        }
        Reference::Qrels(qrels) => {
            missing(&sorted, |q| qrels.contains_query(q))?;
            sorted.iter().map(|r| qrels.relevant(&r.query_id).into_iter().collect()).collect()
        }
    };
    let mut sum = 0.0;
    let mut counted = 0usize;
    for (run, reference) in sorted.iter().zip(&reference_sets) {
        if reference.is_empty() {
            continue;
        }
        let hits = run.top(k).iter().filter(|(d, _)| reference.contains(d)).count();
        sum += hits as f64 / reference.len() as f64;
        counted += 1;
    }
    Ok(if counted == 0 { 1.0 } else { sum / counted as f64 })
}

/// Mean reciprocal rank of the first relevant document within the top k.
pub fn mrr_at_k(runs: &[RankedList], qrels: &Qrels, k: usize) -> Result<f64, EvalError> {
    let sorted = by_query(runs)?;
    missing(&sorted, |q| qrels.contains_query(q))?;
    if sorted.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for run in &sorted {
        if let Some(pos) = run.top(k).iter().position(|&(d, _)| qrels.grade(&run.query_id, d).is_some_and(|g| g > 0)) {
            sum += 1.0 / (pos + 1) as f64;
        }
    }
    Ok(sum / sorted.len() as f64)
}

/// Depths swept by score-ratio checks: every k' up to 100, then about
/// twenty log-spaced points per decade, always ending at `k`.
pub fn k_sweep(k: usize) -> Vec<usize> {
    if k <= 100 {
        return (1..=k).collect();
    }
    let mut out: Vec<usize> = (1..=100).collect();
    let mut x = 100f64;
    loop {
        x *= 10f64.powf(1.0 / 20.0);
        let v = x.round() as usize;
        if v >= k {
            break;
        }
        if v > *out.last().unwrap() {
            out.push(v);
        }
    }
    out.push(k);
    out
}

/// For each swept k', the mean over queries of `Avg(k', run) / Avg(k', oracle)`;
/// a zero oracle average gives ratio 1.
pub fn score_ratio_curve(runs: &[RankedList], oracle: &[RankedList], k: usize) -> Result<Vec<(usize, f64)>, EvalError> {
    let sorted = by_query(runs)?;
    let map = index_runs(oracle)?;
    missing(&sorted, |q| map.contains_key(q))?;
    let sweep = k_sweep(k);
    if sorted.is_empty() {
        return Ok(sweep.into_iter().map(|kp| (kp, 1.0)).collect());
    }
    Ok(sweep
        .into_iter()
        .map(|kp| {
            let sum: f64 = sorted
                .iter()
                .map(|run| {
                    let o = map[run.query_id.as_str()].score_sum(kp);
                    if o == 0 {
                        1.0
                    } else {
                        run.score_sum(kp) as f64 / o as f64
                    }
                })
                .sum();
            (kp, sum / sorted.len() as f64)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p99_ms: f64,
}

/// Arithmetic mean and nearest-rank 99th percentile (the
/// `ceil(0.99 N)`-th smallest sample).
pub fn latency_stats(samples: &[Duration]) -> Result<LatencyStats, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1000.0).collect();
    let mean_ms = ms.iter().sum::<f64>() / ms.len() as f64;
    ms.sort_by(f64::total_cmp);
    let rank = (99 * ms.len()).div_ceil(100);
    Ok(LatencyStats { mean_ms, p99_ms: ms[rank.max(1) - 1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn list(q: &str, docs: &[(DocId, Score)]) -> RankedList {
        RankedList { query_id: q.into(), docs: docs.to_vec() }
    }

    fn ms(x: u64) -> Duration {
        Duration::from_millis(x)
    }

    #[test]
    fn recall_identical_and_disjoint() {
        let oracle = vec![list("a", &[(1, 9), (2, 8)]), list("b", &[(3, 5)])];
        assert_eq!(recall_at_k(&oracle, Reference::Oracle(&oracle), 2).unwrap(), 1.0);
        let none = vec![list("a", &[(7, 9)]), list("b", &[(8, 5)])];
        assert_eq!(recall_at_k(&none, Reference::Oracle(&oracle), 2).unwrap(), 0.0);
    }

    #[test]
    fn recall_hand_fixture() {
        // q1: 2 of 3, q2: 1 of 3, q3: 3 of 3 -> (2/3 + 1/3 + 1) / 3 = 2/3
        let oracle = vec![list("q1", &[(1, 9), (2, 8), (3, 7)]), list("q2", &[(4, 9), (5, 8), (6, 7)]), list("q3", &[(7, 9), (8, 8), (9, 7)])];
        let run = vec![list("q1", &[(1, 9), (3, 7), (10, 1)]), list("q2", &[(11, 9), (5, 8), (12, 7)]), list("q3", &[(9, 7), (8, 8), (7, 9)])];
        let r = recall_at_k(&run, Reference::Oracle(&oracle), 3).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn recall_with_qrels_and_missing() {
        let mut qrels = Qrels::default();
        qrels.insert("a", 1, 1).unwrap();
        qrels.insert("a", 2, 2).unwrap();
        qrels.insert("a", 3, 0).unwrap();
        qrels.insert("z", 3, 0).unwrap();
        let run = vec![list("a", &[(1, 5), (3, 4)]), list("z", &[(3, 1)])];
        // z has no relevant docs and is skipped
        assert_eq!(recall_at_k(&run, Reference::Qrels(&qrels), 10).unwrap(), 0.5);
        let bad = vec![list("x", &[]), list("y", &[])];
        assert_eq!(recall_at_k(&bad, Reference::Qrels(&qrels), 10), Err(EvalError::MissingQueries(vec!["x".into(), "y".into()])));
        assert!(qrels.insert("a", 1, 3).is_err());
    }

    #[test]
    fn mrr_examples() {
        let mut qrels = Qrels::default();
        qrels.insert("a", 4, 1).unwrap();
        let run = vec![list("a", &[(1, 9), (2, 8), (3, 7), (4, 6), (5, 5)])];
        assert_eq!(mrr_at_k(&run, &qrels, 10).unwrap(), 0.25);
        assert_eq!(mrr_at_k(&run, &qrels, 3).unwrap(), 0.0);
        let first = vec![list("a", &[(4, 9)])];
        assert_eq!(mrr_at_k(&first, &qrels, 10).unwrap(), 1.0);
    }

    /// Straightforward second MRR implementation.
    fn mrr_reference(runs: &[RankedList], qrels: &Qrels, k: usize) -> f64 {
        let mut rr = Vec::new();
        for r in runs {
            let mut v = 0.0;
            for (i, (d, _)) in r.docs.iter().enumerate().take(k) {
                if qrels.relevant(&r.query_id).contains(d) {
                    v = 1.0 / (i as f64 + 1.0);
                    break;
                }
            }
            rr.push(v);
        }
        rr.iter().sum::<f64>() / rr.len() as f64
    }

    proptest! {
        #[test]
        fn mrr_matches_reference(rels in proptest::collection::vec(proptest::collection::btree_set(0u32..30, 1..6), 1..8),
                                  perm_seed in any::<u64>(), k in 1usize..15) {
            let mut qrels = Qrels::default();
            let mut runs = Vec::new();
            for (i, r) in rels.iter().enumerate() {
                let q = format!("q{i}");
                for &d in r {
                    qrels.insert(&q, d, 1).unwrap();
                }
                let mut docs: Vec<u32> = (0..30).collect();
                let s = perm_seed.wrapping_add(i as u64);
                docs.sort_by_key(|d| crate::clustering::splitmix64(s ^ *d as u64));
                runs.push(list(&q, &docs.iter().map(|&d| (d, 1)).collect::<Vec<_>>()));
            }
            let got = mrr_at_k(&runs, &qrels, k).unwrap();
            let mut sorted = runs.clone();
            sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id));
            prop_assert!((got - mrr_reference(&sorted, &qrels, k)).abs() < 1e-12);
            // permutation invariance, bit-exact
            runs.reverse();
            prop_assert_eq!(mrr_at_k(&runs, &qrels, k).unwrap(), got);
            prop_assert_eq!(
                recall_at_k(&runs, Reference::Qrels(&qrels), k).unwrap(),
                recall_at_k(&sorted, Reference::Qrels(&qrels), k).unwrap()
            );
        }

        #[test]
        fn latency_matches_sort_based(samples in proptest::collection::vec(0u64..10_000, 1..400)) {
            let d: Vec<Duration> = samples.iter().map(|&x| Duration::from_micros(x)).collect();
            let stats = latency_stats(&d).unwrap();
            let mut v = samples.clone();
            v.sort();
            // smallest value with at least 99% of samples at or below it
            let p99 = v.iter().copied().find(|&x| v.iter().filter(|&&y| y <= x).count() * 100 >= 99 * v.len()).unwrap();
            prop_assert!((stats.p99_ms - p99 as f64 / 1000.0).abs() < 1e-9);
            let mean = samples.iter().sum::<u64>() as f64 / samples.len() as f64 / 1000.0;
            prop_assert!((stats.mean_ms - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn latency_examples() {
        let s = latency_stats(&[ms(5)]).unwrap();
        assert_eq!((s.mean_ms, s.p99_ms), (5.0, 5.0));
        // ceil(0.99 * 101) = 100: the 100th smallest of 100 x 1 ms and 1 x 50 ms is 1 ms
        let mut v = vec![ms(1); 100];
        v.push(ms(50));
        assert_eq!(latency_stats(&v).unwrap().p99_ms, 1.0);
        // below 100 samples the nearest rank is the maximum: ceil(0.99 * 50) = 50
        let mut v = vec![ms(1); 49];
        v.push(ms(50));
        assert_eq!(latency_stats(&v).unwrap().p99_ms, 50.0);
        assert_eq!(latency_stats(&[]), Err(EvalError::Empty));
    }

    #[test]
    fn sweep_shape() {
        assert_eq!(k_sweep(3), vec![1, 2, 3]);
        let s = k_sweep(1000);
        assert_eq!(&s[..100], &(1..=100).collect::<Vec<_>>()[..]);
        assert_eq!(*s.last().unwrap(), 1000);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.len() < 130);
    }

    #[test]
    fn ratio_curve_examples() {
        let oracle = vec![list("a", &[(1, 10), (2, 6)])];
        let same = score_ratio_curve(&oracle, &oracle, 2).unwrap();
        assert_eq!(same, vec![(1, 1.0), (2, 1.0)]);
        let missing_top = vec![list("a", &[(2, 6)])];
        let c = score_ratio_curve(&missing_top, &oracle, 2).unwrap();
        assert_eq!(c[0], (1, 0.6));
        assert_eq!(c[1], (2, 6.0 / 16.0));
        let zero = vec![list("a", &[])];
        assert_eq!(score_ratio_curve(&zero, &zero, 1).unwrap(), vec![(1, 1.0)]);
        assert!(score_ratio_curve(&zero, &[], 1).is_err());
    }
}
