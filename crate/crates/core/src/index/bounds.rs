use serde::{Deserialize, Serialize};

use super::{Cluster, ClusterSkippingIndex, LexiconEntry};
use crate::types::{Query, Score, Weight};

/// Upper-bound estimates of one cluster for one query. AvgSBound is kept as
/// the exact rational `avg_sbound_sum / segments`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterBounds {
    pub bound_sum: Score,
    pub max_sbound: Score,
    pub avg_sbound_sum: Score,
    pub segments: u32,
}

impl ClusterBounds {
    pub fn avg_sbound(&self) -> f64 {
        self.avg_sbound_sum as f64 / self.segments as f64
    }
}

/// Per-segment bounds `B_j = sum_t q_t * max_{d in S_j} w_{t,d}`.
pub fn segment_bounds(index: &ClusterSkippingIndex, query: &Query, cluster_id: usize) -> Vec<Score> {
    let n = index.segments as usize;
    let cluster = &index.clusters[cluster_id];
    let mut out = vec![0; n];
    for &(t, q) in query.vector.entries() {
        if let Some(slot) = cluster.term_slot(t) {
            for (b, &w) in out.iter_mut().zip(cluster.segment_maxima(slot, n)) {
                *b += q as Score * w as Score;
            }
        }
    }
    out
}

pub fn cluster_bounds(index: &ClusterSkippingIndex, query: &Query, cluster_id: usize) -> ClusterBounds {
    let n = index.segments as usize;
    let cluster = &index.clusters[cluster_id];
    let mut segs = vec![0 as Score; n];
    let mut bound_sum = 0;
    for &(t, q) in query.vector.entries() {
        if let Some(slot) = cluster.term_slot(t) {
            bound_sum += q as Score * cluster.term_max(slot) as Score;
            for (b, &w) in segs.iter_mut().zip(cluster.segment_maxima(slot, n)) {
                *b += q as Score * w as Score;
            }
        }
    }
    ClusterBounds { bound_sum, max_sbound: segs.iter().copied().max().unwrap_or(0), avg_sbound_sum: segs.iter().sum(), segments: n as u32 }
}

/// Term-major copy of the cluster maxima: for every lexicon term, the
/// clusters holding it with `[term_max, seg_max_0 .. seg_max_n-1]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct BoundTable {
    offsets: Vec<usize>,
    clusters: Vec<u32>,
    maxima: Vec<Weight>,
}

impl BoundTable {
    /// `lexicon` must list exactly the terms of `clusters`.
    pub(crate) fn build(lexicon: &[LexiconEntry], clusters: &[Cluster], n: usize) -> Self {
        let mut offsets = Vec::with_capacity(lexicon.len() + 1);
        offsets.push(0);
        for e in lexicon {
            offsets.push(offsets.last().unwrap() + e.cluster_count as usize);
        }
        let total = *offsets.last().unwrap();
        let mut fill = offsets.clone();
        let mut table = Self { offsets, clusters: vec![0; total], maxima: vec![0; total * (n + 1)] };
        for (c, cluster) in clusters.iter().enumerate() {
            for (slot, &t) in cluster.terms.iter().enumerate() {
                let i = lexicon.binary_search_by_key(&t, |e| e.term).expect("lexicon covers cluster terms");
                let at = fill[i];
                fill[i] += 1;
                table.clusters[at] = c as u32;
                let row = &mut table.maxima[at * (n + 1)..(at + 1) * (n + 1)];
                row[0] = cluster.term_max[slot];
                row[1..].copy_from_slice(cluster.segment_maxima(slot, n));
            }
        }
        table
    }
}

/// Bounds of every cluster, indexed by cluster id. Same values as calling
/// `cluster_bounds` per cluster.
pub fn all_cluster_bounds(index: &ClusterSkippingIndex, query: &Query) -> Vec<ClusterBounds> {
    let m = index.clusters.len();
    let n = index.segments as usize;
    let table = &index.table;
    let mut bound_sum = vec![0 as Score; m];
    let mut segs = vec![0 as Score; m * n];
    for &(t, q) in query.vector.entries() {
        let Ok(i) = index.lexicon.binary_search_by_key(&t, |e| e.term) else {
            continue;
        };
        let q = q as Score;
        let (lo, hi) = (table.offsets[i], table.offsets[i + 1]);
        for (&c, row) in table.clusters[lo..hi].iter().zip(table.maxima[lo * (n + 1)..hi * (n + 1)].chunks_exact(n + 1)) {
            let c = c as usize;
            bound_sum[c] += q * row[0] as Score;
            for (b, &w) in segs[c * n..(c + 1) * n].iter_mut().zip(&row[1..]) {
                *b += q * w as Score;
            }
        }
    }
    (0..m)
        .map(|c| {
            let s = &segs[c * n..(c + 1) * n];
            ClusterBounds {
                bound_sum: bound_sum[c],
                max_sbound: s.iter().copied().max().unwrap_or(0),
                avg_sbound_sum: s.iter().sum(),
                segments: n as u32,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{ClusterAssignment, SegmentAssignment, SegmentMethod};
    use crate::index::build_index;
    use crate::quant::Quantization;
    use crate::types::{rank_score, DocId, SparseVector, TermId, Weight};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn random_setup(seed: u64, n: u32) -> (Vec<(DocId, SparseVector)>, ClusterAssignment, ClusterSkippingIndex) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus: Vec<(DocId, SparseVector)> = (0..400u32)
            .map(|d| {
                let e: BTreeMap<TermId, Weight> = (0..rng.random_range(1..15)).map(|_| (rng.random_range(0..60), rng.random_range(1..256))).collect();
                (d, SparseVector::new(e).unwrap())
            })
            .collect();
        let clusters = ClusterAssignment::new(8, corpus.iter().map(|(d, _)| (*d, rng.random_range(0..8))).collect()).unwrap();
        let segments =
            SegmentAssignment::new(n, SegmentMethod::RandomUniform, corpus.iter().map(|(d, _)| (*d, rng.random_range(0..n))).collect()).unwrap();
        let idx = build_index(&corpus, &clusters, &segments, Quantization::identity(8).unwrap()).unwrap();
        (corpus, clusters, idx)
    }

    fn random_query(rng: &mut ChaCha8Rng) -> Query {
        let terms: Vec<TermId> = (0..rng.random_range(1..10)).map(|_| rng.random_range(0..70)).collect();
        Query::from_terms("q", &terms).unwrap()
    }

    #[test]
    fn empty_query_gives_zero_bounds() {
        let (_, _, idx) = random_setup(1, 4);
        let q = Query::new("empty", SparseVector::empty());
        assert_eq!(segment_bounds(&idx, &q, 0), vec![0; 4]);
        let b = cluster_bounds(&idx, &q, 0);
        assert_eq!((b.bound_sum, b.max_sbound, b.avg_sbound_sum), (0, 0, 0));
    }

    #[test]
    fn term_major_bounds_match_per_cluster() {
        for n in [1, 3] {
            let (_, _, idx) = random_setup(6 + n as u64, n);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..100 {
                let q = random_query(&mut rng);
                let per: Vec<ClusterBounds> = (0..idx.cluster_count()).map(|c| cluster_bounds(&idx, &q, c)).collect();
                assert_eq!(all_cluster_bounds(&idx, &q), per);
            }
        }
    }

    #[test]
    fn single_segment_bounds_coincide() {
        let (_, _, idx) = random_setup(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = random_query(&mut rng);
            for c in 0..idx.cluster_count() {
                let b = cluster_bounds(&idx, &q, c);
                assert_eq!(b.bound_sum, b.max_sbound);
                assert_eq!(b.max_sbound, b.avg_sbound_sum);
            }
        }
    }

    #[test]
    fn bounds_dominate_member_scores() {
        let (corpus, clusters, idx) = random_setup(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let q = random_query(&mut rng);
            for c in 0..idx.cluster_count() {
                let segs = segment_bounds(&idx, &q, c);
                let b = cluster_bounds(&idx, &q, c);
                let mut actual = 0;
                for (d, v) in &corpus {
                    if clusters.cluster_of(*d) != Some(c as u32) {
                        continue;
                    }
                    let s = rank_score(v, &q);
                    let seg = idx.cluster(c).segment_of(*d).unwrap();
                    assert!(segs[seg as usize] >= s);
                    actual = actual.max(s);
                }
                assert!(b.bound_sum >= b.max_sbound);
                assert!(b.max_sbound >= actual);
                assert!(b.max_sbound * b.segments as u64 >= b.avg_sbound_sum);
            }
        }
    }
}
