use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{derive_seed, ClusterAssignment, ClusterError, DenseCounterparts, KMeans, SegmentAssignment, SegmentMethod, DEFAULT_MAX_ITERS};
use crate::types::DocId;

/// Shuffles each cluster with a per-cluster seeded PRNG and deals its
/// members round-robin into `n` segments.
pub fn random_uniform_segments(assignment: &ClusterAssignment, n: u32, seed: u64) -> Result<SegmentAssignment, ClusterError> {
    if n == 0 {
        return Err(ClusterError::ZeroSegments);
    }
    let labels: Vec<(DocId, u32)> = (0..assignment.m())
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut members = assignment.members(c).to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64));
            members.shuffle(&mut rng);
            members.into_iter().enumerate().map(|(pos, doc)| (doc, (pos % n as usize) as u32)).collect::<Vec<_>>()
        })
        .collect();
    SegmentAssignment::new(n, SegmentMethod::RandomUniform, labels)
}

/// Runs k-means with `min(n, cluster size)` centers inside every cluster;
/// the sub-cluster label becomes the segment index.
pub fn kmeans_subclusters(assignment: &ClusterAssignment, vectors: &DenseCounterparts, n: u32, seed: u64) -> Result<SegmentAssignment, ClusterError> {
    if n == 0 {
        return Err(ClusterError::ZeroSegments);
    }
    let per_cluster: Vec<Result<Vec<(DocId, u32)>, ClusterError>> = (0..assignment.m())
        .into_par_iter()
        .map(|c| {
            let members = assignment.members(c);
            if members.is_empty() {
                return Ok(Vec::new());
            }
            let points = members.iter().map(|&d| vectors.get(d).cloned().ok_or(ClusterError::MissingVector(d))).collect::<Result<Vec<_>, _>>()?;
            let k = (n as usize).min(points.len());
            let outcome = KMeans { k, max_iters: DEFAULT_MAX_ITERS, seed: derive_seed(seed, c as u64) }.fit(&points)?;
            Ok(members.iter().copied().zip(outcome.labels).collect())
        })
        .collect();
    let mut labels = Vec::with_capacity(assignment.len());
    for part in per_cluster {
        labels.extend(part?);
    }
    SegmentAssignment::new(n, SegmentMethod::KMeansSub, labels)
}
