use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ClusterError, DenseVector};

pub const DEFAULT_MAX_ITERS: usize = 50;

/// Lloyd's k-means with k-means++ seeding over squared Euclidean distance.
#[derive(Clone, Copy, Debug)]
pub struct KMeans {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansOutcome {
    /// Cluster label per input vector.
    pub labels: Vec<u32>,
    pub centroids: Vec<Vec<f32>>,
    /// Inertia after each update step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansOutcome {
    pub fn inertia(&self) -> f64 {
        self.inertia_trace.last().copied().unwrap_or(0.0)
    }
}

pub fn kmeans(vectors: &[DenseVector], m: usize, seed: u64) -> Result<KMeansOutcome, ClusterError> {
    KMeans { k: m, max_iters: DEFAULT_MAX_ITERS, seed }.fit(vectors)
}

fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(point: &[f32], centroids: &[Vec<f32>]) -> (u32, f32) {
    let mut best = (0u32, f32::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best
}

impl KMeans {
    pub fn fit(&self, vectors: &[DenseVector]) -> Result<KMeansOutcome, ClusterError> {
        let n = vectors.len();
        if self.k == 0 {
            return Err(ClusterError::ZeroClusters);
        }
        if self.k > n {
            return Err(ClusterError::TooManyClusters { k: self.k, n });
        }
        let dims = vectors[0].dims();
        for (i, v) in vectors.iter().enumerate() {
            if v.dims() != dims {
                return Err(ClusterError::DimensionMismatch { index: i, expected: dims, got: v.dims() });
            }
            if !v.is_finite() {
                return Err(ClusterError::NonFinite(i));
            }
        }
        let points: Vec<&[f32]> = vectors.iter().map(|v| v.values()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut centroids = plus_plus_init(&points, self.k, &mut rng);

        let mut labels = assign(&points, &centroids);
        let mut inertia_trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.max_iters {
            iterations += 1;
            centroids = update(&points, &labels, self.k, dims);
            repair_empty(&points, &mut labels, &mut centroids, self.k, dims);
            inertia_trace.push(inertia(&points, &labels, &centroids));
            let next = assign(&points, &centroids);
            if next == labels {
                converged = true;
                break;
            }
            labels = next;
        }
        if !converged {
            centroids = update(&points, &labels, self.k, dims);
            repair_empty(&points, &mut labels, &mut centroids, self.k, dims);
        }
        Ok(KMeansOutcome { labels, centroids, inertia_trace, iterations, converged })
    }
}

fn plus_plus_init(points: &[&[f32]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let n = points.len();
    let first = rng.random_range(0..n);
    let mut centroids = vec![points[first].to_vec()];
    let mut min_d: Vec<f64> = points.par_iter().map(|p| sq_dist(p, &centroids[0]) as f64).collect();
    while centroids.len() < k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in min_d.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].to_vec();
        min_d.par_iter_mut().zip(points.par_iter()).for_each(|(d, p)| *d = d.min(sq_dist(p, &c) as f64));
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[&[f32]], centroids: &[Vec<f32>]) -> Vec<u32> {
    points.par_iter().map(|p| nearest(p, centroids).0).collect()
}

fn update(points: &[&[f32]], labels: &[u32], k: usize, dims: usize) -> Vec<Vec<f32>> {
    let mut sums = vec![vec![0.0f64; dims]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l as usize] += 1;
        for (s, &v) in sums[l as usize].iter_mut().zip(p.iter()) {
            *s += v as f64;
        }
    }
    sums.into_iter().zip(counts).map(|(s, c)| if c == 0 { vec![0.0; dims] } else { s.into_iter().map(|v| (v / c as f64) as f32).collect() }).collect()
}

/// Fills each empty cluster with the point farthest from the centroid of
/// the currently largest cluster (lowest id on ties).
fn repair_empty(points: &[&[f32]], labels: &mut [u32], centroids: &mut [Vec<f32>], k: usize, dims: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l as usize] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = (0..k).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
        if counts[largest] < 2 {
            return;
        }
        let mut far = (usize::MAX, -1.0f32);
        for (i, p) in points.iter().enumerate() {
            if labels[i] as usize == largest {
                let d = sq_dist(p, &centroids[largest]);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        labels[far.0] = empty as u32;
        centroids[empty] = points[far.0].to_vec();
        // recompute the donor centroid
        let mut sum = vec![0.0f64; dims];
        let mut count = 0usize;
        for (p, &l) in points.iter().zip(labels.iter()) {
            if l as usize == largest {
                count += 1;
                for (s, &v) in sum.iter_mut().zip(p.iter()) {
                    *s += v as f64;
                }
            }
        }
        centroids[largest] = sum.into_iter().map(|v| (v / count as f64) as f32).collect();
    }
}

fn inertia(points: &[&[f32]], labels: &[u32], centroids: &[Vec<f32>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l as usize]) as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn dv(v: &[f32]) -> DenseVector {
        DenseVector(v.to_vec())
    }

    fn blobs(seed: u64, per_blob: usize) -> (Vec<DenseVector>, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0f32, 0.1).unwrap();
        let centers = [[0.0f32, 0.0, 0.0], [20.0, 20.0, 20.0]];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (b, c) in centers.iter().enumerate() {
            for _ in 0..per_blob {
                pts.push(DenseVector(c.iter().map(|&x| x + noise.sample(&mut rng)).collect()));
                truth.push(b as u32);
            }
        }
        (pts, truth)
    }

    #[test]
    fn square_corners_each_own_cluster() {
        let pts = vec![dv(&[0.0, 0.0]), dv(&[1.0, 0.0]), dv(&[0.0, 1.0]), dv(&[1.0, 1.0])];
        let out = kmeans(&pts, 4, 3).unwrap();
        let mut labels = out.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        assert_eq!(out.inertia(), 0.0);
    }

    #[test]
    fn recovers_separated_blobs() {
        let (pts, truth) = blobs(11, 20);
        let out = kmeans(&pts, 2, 5).unwrap();
        // labels equal truth up to renaming
        let flip = out.labels[0] != truth[0];
        for (l, t) in out.labels.iter().zip(&truth) {
            assert_eq!(*l, if flip { 1 - *t } else { *t });
        }
    }

    #[test]
    fn inertia_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<DenseVector> = (0..400).map(|_| DenseVector((0..8).map(|_| rng.random::<f32>()).collect())).collect();
        for seed in 0..5 {
            let out = kmeans(&pts, 12, seed).unwrap();
            for w in out.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", out.inertia_trace);
            }
        }
    }

    #[test]
    fn deterministic_and_nearest_after_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<DenseVector> = (0..300).map(|_| DenseVector((0..4).map(|_| rng.random::<f32>()).collect())).collect();
        let a = kmeans(&pts, 9, 42).unwrap();
        let b = kmeans(&pts, 9, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.converged);
        for (p, &l) in pts.iter().zip(&a.labels) {
            assert_eq!(nearest(p.values(), &a.centroids).0, l);
        }
    }

    #[test]
    fn duplicate_points_leave_no_empty_cluster() {
        let mut pts = vec![dv(&[1.0, 1.0]); 6];
        pts.push(dv(&[5.0, 5.0]));
        let out = kmeans(&pts, 3, 1).unwrap();
        for c in 0..3 {
            assert!(out.labels.contains(&c), "cluster {c} empty: {:?}", out.labels);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let pts = vec![dv(&[0.0]), dv(&[1.0])];
        assert_eq!(kmeans(&pts, 0, 0), Err(ClusterError::ZeroClusters));
        assert!(matches!(kmeans(&pts, 3, 0), Err(ClusterError::TooManyClusters { .. })));
        let mixed = vec![dv(&[0.0]), dv(&[1.0, 2.0])];
        assert!(matches!(kmeans(&mixed, 1, 0), Err(ClusterError::DimensionMismatch { .. })));
        let nan = vec![dv(&[f32::NAN])];
        assert_eq!(kmeans(&nan, 1, 0), Err(ClusterError::NonFinite(0)));
    }
}
