use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::index::{cluster_bounds, ClusterSkippingIndex};
use crate::types::{DocId, Query, Score};

/// Actual and estimated maxima of one cluster for one query.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub cluster_id: u32,
    pub query_id: String,
    pub actual: Score,
    pub bound_sum: Score,
    pub max_sbound: Score,
    pub avg_sbound_sum: Score,
    pub segments: u32,
}

impl BoundRow {
    pub fn avg_sbound(&self) -> f64 {
        self.avg_sbound_sum as f64 / self.segments as f64
    }
}

/// Means over rows whose cluster shares at least one term with the query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BoundAnalysis {
    pub rows: usize,
    pub actual_over_bound_sum: f64,
    pub actual_over_max_sbound: f64,
    pub gap_over_actual: f64,
    pub avg_over_max_sbound: f64,
}

/// Highest score of any cluster member, by exhaustive accumulation.
pub fn cluster_actual_max(index: &ClusterSkippingIndex, query: &Query, cluster_id: usize) -> Score {
    let cluster = index.cluster(cluster_id);
    let mut acc: Vec<(DocId, Score)> = Vec::new();
    for &(t, q) in query.vector.entries() {
        if let Some(slot) = cluster.term_slot(t) {
            acc.extend(cluster.postings(slot).decode().into_iter().map(|(d, w)| (d, q as Score * w as Score)));
        }
    }
    acc.sort_unstable_by_key(|&(d, _)| d);
    let mut best = 0;
    let mut i = 0;
    while i < acc.len() {
        let mut s = 0;
        let d = acc[i].0;
        while i < acc.len() && acc[i].0 == d {
            s += acc[i].1;
            i += 1;
        }
        best = best.max(s);
    }
    best
}

/// One row per (query, cluster), queries in input order.
pub fn bound_rows(index: &ClusterSkippingIndex, queries: &[Query]) -> Vec<BoundRow> {
    queries
        .par_iter()
        .flat_map_iter(|q| {
            (0..index.cluster_count()).map(move |c| {
                let b = cluster_bounds(index, q, c);
                BoundRow {
                    cluster_id: c as u32,
                    query_id: q.query_id.clone(),
                    actual: cluster_actual_max(index, q, c),
                    bound_sum: b.bound_sum,
                    max_sbound: b.max_sbound,
                    avg_sbound_sum: b.avg_sbound_sum,
                    segments: b.segments,
                }
            })
        })
        .collect()
}

pub fn summarize(rows: &[BoundRow]) -> BoundAnalysis {
    let live: Vec<&BoundRow> = rows.iter().filter(|r| r.bound_sum > 0 && r.actual > 0).collect();
    if live.is_empty() {
        return BoundAnalysis::default();
    }
    let n = live.len() as f64;
    let mean = |f: &dyn Fn(&BoundRow) -> f64| live.iter().map(|r| f(r)).sum::<f64>() / n;
    BoundAnalysis {
        rows: live.len(),
        actual_over_bound_sum: mean(&|r| r.actual as f64 / r.bound_sum as f64),
        actual_over_max_sbound: mean(&|r| r.actual as f64 / r.max_sbound as f64),
        gap_over_actual: mean(&|r| (r.max_sbound as f64 - r.avg_sbound()) / r.actual as f64),
        avg_over_max_sbound: mean(&|r| r.avg_sbound() / r.max_sbound as f64),
    }
}

pub fn analyze_bounds(index: &ClusterSkippingIndex, queries: &[Query]) -> (BoundAnalysis, Vec<BoundRow>) {
    let rows = bound_rows(index, queries);
    (summarize(&rows), rows)
}

/// `cluster_id,query_id,actual,bound_sum,max_sbound,avg_sbound`; rows with
/// a zero BoundSum are omitted.
pub fn write_bound_csv<W: Write + ?Sized>(out: &mut W, rows: &[BoundRow]) -> std::io::Result<()> {
    writeln!(out, "cluster_id,query_id,actual,bound_sum,max_sbound,avg_sbound")?;
    for r in rows.iter().filter(|r| r.bound_sum > 0) {
        writeln!(out, "{},{},{},{},{},{:.6}", r.cluster_id, r.query_id, r.actual, r.bound_sum, r.max_sbound, r.avg_sbound())?;
    }
    Ok(())
}
