//! Cluster-skipping inverted index with per-segment maximum term weights.
//!
//! Each cluster keeps its own posting lists plus, for every term present in
//! it, the maximum stored weight within each of its `n` segments. Cluster
//! term maxima are derived from the segment maxima.

mod bounds;
mod build;
mod format;
pub mod posting;

use crate::quant::Quantization;
use crate::types::{DocId, TermId, Weight};

pub(crate) use bounds::BoundTable;
pub use bounds::{all_cluster_bounds, cluster_bounds, segment_bounds, ClusterBounds};
pub use build::{build_index, build_index_from_raw, BuildError, RawDoc};
pub use format::{FormatError, FORMAT_VERSION, MAGIC};
pub use posting::{PostingCursor, PostingList};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub term: TermId,
    pub global_max: Weight,
    /// Number of clusters containing the term.
    pub cluster_count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    /// (doc, segment), ascending by doc.
    pub(crate) members: Vec<(DocId, u32)>,
    /// Terms present in the cluster, ascending.
    pub(crate) terms: Vec<TermId>,
    pub(crate) postings: Vec<PostingList>,
    /// `terms.len() * n` segment maxima, row-major by term.
    pub(crate) segment_max: Vec<Weight>,
    pub(crate) term_max: Vec<Weight>,
}

impl Cluster {
    pub fn doc_count(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[(DocId, u32)] {
        &self.members
    }

    pub fn terms(&self) -> &[TermId] {
        &self.terms
    }

    pub fn term_slot(&self, term: TermId) -> Option<usize> {
        self.terms.binary_search(&term).ok()
    }

    pub fn postings(&self, slot: usize) -> &PostingList {
        &self.postings[slot]
    }

    pub fn term_max(&self, slot: usize) -> Weight {
        self.term_max[slot]
    }

    pub fn segment_maxima(&self, slot: usize, n: usize) -> &[Weight] {
        &self.segment_max[slot * n..(slot + 1) * n]
    }

    pub fn segment_of(&self, doc: DocId) -> Option<u32> {
        self.members.binary_search_by_key(&doc, |&(d, _)| d).ok().map(|i| self.members[i].1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSkippingIndex {
    pub(crate) quant: Quantization,
    pub(crate) segments: u32,
    pub(crate) doc_count: u32,
    pub(crate) lexicon: Vec<LexiconEntry>,
    pub(crate) clusters: Vec<Cluster>,
    /// Derived from `lexicon` and `clusters`; not serialized.
    pub(crate) table: BoundTable,
}

impl ClusterSkippingIndex {
    pub(crate) fn with_bound_table(mut self) -> Self {
        self.table = BoundTable::build(&self.lexicon, &self.clusters, self.segments as usize);
        self
    }

    pub fn quantization(&self) -> Quantization {
        self.quant
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn segments_per_cluster(&self) -> u32 {
        self.segments
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count as usize
    }

    pub fn lexicon(&self) -> &[LexiconEntry] {
        &self.lexicon
    }

    pub fn lexicon_entry(&self, term: TermId) -> Option<&LexiconEntry> {
        self.lexicon.binary_search_by_key(&term, |e| e.term).ok().map(|i| &self.lexicon[i])
    }

    pub fn cluster(&self, id: usize) -> &Cluster {
        &self.clusters[id]
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn posting_count(&self) -> usize {
        self.clusters.iter().flat_map(|c| c.postings.iter()).map(|p| p.len()).sum()
    }

    /// Reconstructs the stored document vectors, ascending by doc id.
    pub fn documents(&self) -> Vec<(DocId, Vec<(TermId, Weight)>)> {
        let mut docs: Vec<(DocId, Vec<(TermId, Weight)>)> = Vec::with_capacity(self.doc_count());
        for cluster in &self.clusters {
            let mut local: Vec<(DocId, Vec<(TermId, Weight)>)> = cluster.members.iter().map(|&(d, _)| (d, Vec::new())).collect();
            for (slot, &term) in cluster.terms.iter().enumerate() {
                for (doc, w) in cluster.postings[slot].decode() {
                    let i = local.binary_search_by_key(&doc, |(d, _)| *d).expect("posting doc is a member");
                    local[i].1.push((term, w));
                }
            }
            docs.extend(local);
        }
        docs.sort_by_key(|(d, _)| *d);
        docs
    }

    /// The same corpus as one cluster with one segment; the view flat
    /// MaxScore runs against.
    pub fn flatten(&self) -> ClusterSkippingIndex {
        let docs = self.documents();
        let doc_ids: Vec<DocId> = docs.iter().map(|(d, _)| *d).collect();
        let corpus: Vec<(DocId, crate::types::SparseVector)> =
            docs.into_iter().map(|(d, e)| (d, crate::types::SparseVector::new(e).expect("stored vectors are valid"))).collect();
        let clusters = crate::clustering::ClusterAssignment::single(&doc_ids).expect("unique ids");
        let segments = crate::clustering::SegmentAssignment::single(&doc_ids);
        build_index(&corpus, &clusters, &segments, self.quant).expect("stored corpus rebuilds")
    }
}
