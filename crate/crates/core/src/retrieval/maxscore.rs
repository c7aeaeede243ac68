//! Document-at-a-time MaxScore over one cluster's posting lists.
//!
//! Terms are ordered by their maximum contribution `q_t * max_w`. The
//! non-essential prefix is the longest prefix whose summed maxima cannot
//! pass the (scaled) threshold; only the remaining essential lists drive
//! candidate generation. A candidate is dropped as soon as its partial score
//! plus the remaining non-essential maxima satisfies `bound <= theta / f`.

use super::TraceEvent;
use crate::index::{Cluster, PostingCursor};
use crate::topk::TopKAccumulator;
use crate::types::{Query, Rational, Score, ScoredDoc, END_DOC};

struct TermCursor<'a> {
    cursor: PostingCursor<'a>,
    query_weight: Score,
    max_contribution: Score,
    term: u32,
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct ScanStats {
    pub docs_scored: u64,
}

fn non_essential_count(prefix: &[Score], from: usize, threshold: Score, factor: Rational) -> usize {
    let mut ne = from;
    while ne < prefix.len() && factor.bound_within(prefix[ne], threshold) {
        ne += 1;
    }
    ne
}

/// Scores cluster `cluster_id` into `topk`, pruning documents whose bound
/// satisfies `bound <= theta / factor`.
pub(crate) fn scan_cluster(
    cluster: &Cluster,
    cluster_id: u32,
    query: &Query,
    topk: &mut TopKAccumulator,
    factor: Rational,
    stats: &mut ScanStats,
    mut trace: Option<&mut Vec<TraceEvent>>,
) {
    let mut lists: Vec<TermCursor<'_>> = query
        .vector
        .entries()
        .iter()
        .filter_map(|&(t, q)| {
            cluster.term_slot(t).map(|slot| TermCursor {
                cursor: cluster.postings(slot).cursor(),
                query_weight: q as Score,
                max_contribution: q as Score * cluster.term_max(slot) as Score,
                term: t,
            })
        })
        .collect();
    if lists.is_empty() {
        return;
    }
    lists.sort_by_key(|l| (l.max_contribution, l.term));
    let prefix: Vec<Score> = lists
        .iter()
        .scan(0, |acc, l| {
            *acc += l.max_contribution;
            Some(*acc)
        })
        .collect();

    let mut threshold = topk.threshold();
    let mut ne = non_essential_count(&prefix, 0, threshold, factor);
    while ne < lists.len() {
        let current = lists[ne..].iter().map(|l| l.cursor.doc()).min().unwrap_or(END_DOC);
        if current == END_DOC {
            break;
        }
        stats.docs_scored += 1;
        let mut score: Score = 0;
        for l in lists[ne..].iter_mut() {
            if l.cursor.doc() == current {
                score += l.query_weight * l.cursor.weight() as Score;
                l.cursor.advance();
            }
        }
        let mut pruned_bound = None;
        for j in (0..ne).rev() {
            let bound = score + prefix[j];
            if factor.bound_within(bound, threshold) {
                pruned_bound = Some(bound);
                break;
            }
            let l = &mut lists[j];
            l.cursor.seek(current);
            if l.cursor.doc() == current {
                score += l.query_weight * l.cursor.weight() as Score;
            }
        }
        if pruned_bound.is_none() && factor.bound_within(score, threshold) {
            pruned_bound = Some(score);
        }
        if let Some(bound) = pruned_bound {
            if let Some(events) = trace.as_deref_mut() {
                events.push(TraceEvent::Document { cluster_id, doc_id: current, theta: threshold, bound });
            }
            continue;
        }
        topk.push(ScoredDoc::new(current, score));
        if topk.threshold() != threshold {
            threshold = topk.threshold();
            ne = non_essential_count(&prefix, ne, threshold, factor);
        }
    }
}
