//! Offline partitioning: documents into clusters, clusters into segments.

mod kmeans;
mod projection;
mod segments;

use std::fmt;

use thiserror::Error;

use crate::types::DocId;

pub use kmeans::{kmeans, KMeans, KMeansOutcome, DEFAULT_MAX_ITERS};
pub(crate) use projection::project_raw;
pub use projection::random_projection;
pub use segments::{kmeans_subclusters, random_uniform_segments};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cluster count must be positive")]
    ZeroClusters,
    #[error("cannot form {k} clusters from {n} points")]
    TooManyClusters { k: usize, n: usize },
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("vector {0} has a non-finite entry")]
    NonFinite(usize),
    #[error("segment count must be positive")]
    ZeroSegments,
    #[error("document {0} assigned more than once")]
    DuplicateDoc(DocId),
    #[error("label {label} for document {doc} is out of range (< {limit})")]
    LabelOutOfRange { doc: DocId, label: u32, limit: u32 },
    #[error("no dense vector for document {0}")]
    MissingVector(DocId),
    #[error("document {0} has no cluster assignment")]
    Unassigned(DocId),
    #[error("{0} documents given with {1} labels")]
    LengthMismatch(usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector(pub Vec<f32>);

impl DenseVector {
    pub fn zeros(dims: usize) -> Self {
        Self(vec![0.0; dims])
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn cosine(&self, other: &DenseVector) -> f64 {
        let mut dot = 0.0f64;
        let mut na = 0.0f64;
        let mut nb = 0.0f64;
        for (&a, &b) in self.0.iter().zip(&other.0) {
            dot += a as f64 * b as f64;
            na += a as f64 * a as f64;
            nb += b as f64 * b as f64;
        }
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na.sqrt() * nb.sqrt())
        }
    }
}

/// Dense counterparts keyed by document id, sorted by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DenseCounterparts {
    doc_ids: Vec<DocId>,
    vectors: Vec<DenseVector>,
}

impl DenseCounterparts {
    pub fn new(mut pairs: Vec<(DocId, DenseVector)>) -> Result<Self, ClusterError> {
        pairs.sort_by_key(|(d, _)| *d);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ClusterError::DuplicateDoc(w[0].0));
            }
        }
        let (doc_ids, vectors) = pairs.into_iter().unzip();
        Ok(Self { doc_ids, vectors })
    }

    pub fn doc_ids(&self) -> &[DocId] {
        &self.doc_ids
    }

    pub fn vectors(&self) -> &[DenseVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn get(&self, doc: DocId) -> Option<&DenseVector> {
        self.doc_ids.binary_search(&doc).ok().map(|i| &self.vectors[i])
    }
}

/// Every document mapped to exactly one cluster id in `[0, m)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    m: u32,
    /// (doc, cluster), sorted by doc.
    labels: Vec<(DocId, u32)>,
    members: Vec<Vec<DocId>>,
}

impl ClusterAssignment {
    pub fn new(m: u32, mut labels: Vec<(DocId, u32)>) -> Result<Self, ClusterError> {
        if m == 0 {
            return Err(ClusterError::ZeroClusters);
        }
        labels.sort_by_key(|&(d, _)| d);
        let mut members = vec![Vec::new(); m as usize];
        for (i, &(doc, c)) in labels.iter().enumerate() {
            if i > 0 && labels[i - 1].0 == doc {
                return Err(ClusterError::DuplicateDoc(doc));
            }
            if c >= m {
                return Err(ClusterError::LabelOutOfRange { doc, label: c, limit: m });
            }
            members[c as usize].push(doc);
        }
        Ok(Self { m, labels, members })
    }

    /// Pairs parallel `doc_ids` and `labels`.
    pub fn from_parallel(m: u32, doc_ids: &[DocId], labels: &[u32]) -> Result<Self, ClusterError> {
        if doc_ids.len() != labels.len() {
            return Err(ClusterError::LengthMismatch(doc_ids.len(), labels.len()));
        }
        Self::new(m, doc_ids.iter().copied().zip(labels.iter().copied()).collect())
    }

    /// Everything in one cluster.
    pub fn single(doc_ids: &[DocId]) -> Result<Self, ClusterError> {
        Self::new(1, doc_ids.iter().map(|&d| (d, 0)).collect())
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn cluster_of(&self, doc: DocId) -> Option<u32> {
        self.labels.binary_search_by_key(&doc, |&(d, _)| d).ok().map(|i| self.labels[i].1)
    }

    /// Members of cluster `c`, ascending by doc id.
    pub fn members(&self, c: u32) -> &[DocId] {
        &self.members[c as usize]
    }

    pub fn labels(&self) -> &[(DocId, u32)] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentMethod {
    RandomUniform,
    KMeansSub,
}

impl SegmentMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentMethod::RandomUniform => "random",
            SegmentMethod::KMeansSub => "kmeans",
        }
    }
}

impl fmt::Display for SegmentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SegmentMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" | "random-uniform" => Ok(SegmentMethod::RandomUniform),
            "kmeans" | "kmeans-sub" => Ok(SegmentMethod::KMeansSub),
            other => Err(format!("unknown segmentation method `{other}`")),
        }
    }
}

/// Every document mapped to a segment index in `[0, n)` of its cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentAssignment {
    n: u32,
    method: SegmentMethod,
    /// (doc, segment), sorted by doc.
    labels: Vec<(DocId, u32)>,
}

impl SegmentAssignment {
    pub fn new(n: u32, method: SegmentMethod, mut labels: Vec<(DocId, u32)>) -> Result<Self, ClusterError> {
        if n == 0 {
            return Err(ClusterError::ZeroSegments);
        }
        labels.sort_by_key(|&(d, _)| d);
        for (i, &(doc, s)) in labels.iter().enumerate() {
            if i > 0 && labels[i - 1].0 == doc {
                return Err(ClusterError::DuplicateDoc(doc));
            }
            if s >= n {
                return Err(ClusterError::LabelOutOfRange { doc, label: s, limit: n });
            }
        }
        Ok(Self { n, method, labels })
    }

    /// One segment per cluster.
    pub fn single(doc_ids: &[DocId]) -> Self {
        let mut labels: Vec<_> = doc_ids.iter().map(|&d| (d, 0)).collect();
        labels.sort_unstable();
        labels.dedup();
        Self { n: 1, method: SegmentMethod::RandomUniform, labels }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn method(&self) -> SegmentMethod {
        self.method
    }

    pub fn segment_of(&self, doc: DocId) -> Option<u32> {
        self.labels.binary_search_by_key(&doc, |&(d, _)| d).ok().map(|i| self.labels[i].1)
    }

    pub fn labels(&self) -> &[(DocId, u32)] {
        &self.labels
    }
}

/// Top-level k-means over the dense counterparts, then segmentation inside
/// every cluster.
pub fn cluster_corpus(
    vectors: &DenseCounterparts,
    m: u32,
    n: u32,
    method: SegmentMethod,
    seed: u64,
) -> Result<(ClusterAssignment, SegmentAssignment), ClusterError> {
    let outcome = kmeans(vectors.vectors(), m as usize, derive_seed(seed, 0))?;
    let clusters = ClusterAssignment::from_parallel(m, vectors.doc_ids(), &outcome.labels)?;
    let segments = match method {
        SegmentMethod::RandomUniform => random_uniform_segments(&clusters, n, derive_seed(seed, 1))?,
        SegmentMethod::KMeansSub => kmeans_subclusters(&clusters, vectors, n, derive_seed(seed, 1))?,
    };
    Ok((clusters, segments))
}

/// Derives an independent seed for sub-task `index` of a seeded job.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
