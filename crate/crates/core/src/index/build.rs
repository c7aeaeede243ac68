use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use super::{Cluster, ClusterSkippingIndex, LexiconEntry, PostingList};
use crate::clustering::{ClusterAssignment, SegmentAssignment};
use crate::quant::{QuantError, Quantization};
use crate::types::{DocId, SparseVector, TermId, Weight, END_DOC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("document {0} appears more than once")]
    DuplicateDoc(DocId),
    #[error("document {0} has no cluster assignment")]
    UnassignedCluster(DocId),
    #[error("document {0} has no segment assignment")]
    UnassignedSegment(DocId),
    #[error("document id {0} is reserved")]
    ReservedDocId(DocId),
    #[error("document {doc} term {term} weight {weight} exceeds the {bits}-bit range")]
    WeightOutOfRange { doc: DocId, term: TermId, weight: Weight, bits: u8 },
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// A corpus document before quantization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDoc {
    pub doc_id: DocId,
    pub terms: Vec<(TermId, f32)>,
}

impl RawDoc {
    pub fn max_weight(&self) -> f32 {
        self.terms.iter().map(|&(_, w)| w).fold(0.0, f32::max)
    }
}

/// Quantizes against the corpus maximum weight, then builds.
pub fn build_index_from_raw(
    corpus: &[RawDoc],
    clusters: &ClusterAssignment,
    segments: &SegmentAssignment,
    quant_bits: u8,
) -> Result<ClusterSkippingIndex, BuildError> {
    let max = corpus.iter().map(RawDoc::max_weight).fold(0.0, f32::max);
    let quant = Quantization::fit(quant_bits, max)?;
    let docs = corpus.par_iter().map(|d| Ok((d.doc_id, quant.quantize_vector(&d.terms)?))).collect::<Result<Vec<_>, QuantError>>()?;
    build_index(&docs, clusters, segments, quant)
}

/// Builds from already-quantized vectors.
pub fn build_index(
    corpus: &[(DocId, SparseVector)],
    clusters: &ClusterAssignment,
    segments: &SegmentAssignment,
    quant: Quantization,
) -> Result<ClusterSkippingIndex, BuildError> {
    if corpus.is_empty() {
        return Err(BuildError::EmptyCorpus);
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by_key(|&i| corpus[i].0);
    let m = clusters.m() as usize;
    let n = segments.n() as usize;
    let max_level = quant.max_level();

    let mut per_cluster: Vec<Vec<(DocId, u32, &SparseVector)>> = vec![Vec::new(); m];
    let mut prev: Option<DocId> = None;
    for &i in &order {
        let (doc, ref vector) = corpus[i];
        if doc == END_DOC {
            return Err(BuildError::ReservedDocId(doc));
        }
        if prev == Some(doc) {
            return Err(BuildError::DuplicateDoc(doc));
        }
        prev = Some(doc);
        let c = clusters.cluster_of(doc).ok_or(BuildError::UnassignedCluster(doc))?;
        let s = segments.segment_of(doc).ok_or(BuildError::UnassignedSegment(doc))?;
        if let Some(&(term, weight)) = vector.entries().iter().find(|&&(_, w)| w > max_level) {
            return Err(BuildError::WeightOutOfRange { doc, term, weight, bits: quant.bits() });
        }
        per_cluster[c as usize].push((doc, s, vector));
    }

    let weight_bytes = quant.weight_bytes();
    let built: Vec<Cluster> = per_cluster.par_iter().map(|docs| build_cluster(docs, n, weight_bytes, max_level)).collect();

    let mut lexicon: BTreeMap<TermId, (Weight, u32)> = BTreeMap::new();
    for cluster in &built {
        for (slot, &t) in cluster.terms.iter().enumerate() {
            let e = lexicon.entry(t).or_insert((0, 0));
            e.0 = e.0.max(cluster.term_max[slot]);
            e.1 += 1;
        }
    }
    Ok(ClusterSkippingIndex {
        quant,
        segments: n as u32,
        doc_count: corpus.len() as u32,
        lexicon: lexicon.into_iter().map(|(term, (global_max, cluster_count))| LexiconEntry { term, global_max, cluster_count }).collect(),
        clusters: built,
        table: Default::default(),
    }
    .with_bound_table())
}

/// Postings and per-segment maxima of one term.
type TermLists = (Vec<(DocId, Weight)>, Vec<Weight>);

/// `docs` must be ascending by doc id.
fn build_cluster(docs: &[(DocId, u32, &SparseVector)], n: usize, weight_bytes: usize, max_level: Weight) -> Cluster {
    let mut lists: BTreeMap<TermId, TermLists> = BTreeMap::new();
    for &(doc, seg, vector) in docs {
        for &(t, w) in vector.entries() {
            let (postings, maxima) = lists.entry(t).or_insert_with(|| (Vec::new(), vec![0; n]));
            postings.push((doc, w));
            let slot = &mut maxima[seg as usize];
            *slot = (*slot).max(w);
        }
    }
    let mut terms = Vec::with_capacity(lists.len());
    let mut postings = Vec::with_capacity(lists.len());
    let mut segment_max = Vec::with_capacity(lists.len() * n);
    let mut term_max = Vec::with_capacity(lists.len());
    for (t, (list, maxima)) in lists {
        terms.push(t);
        postings.push(PostingList::encode(&list, weight_bytes, max_level).expect("validated postings"));
        term_max.push(maxima.iter().copied().max().unwrap_or(0));
        segment_max.extend(maxima);
    }
    Cluster { members: docs.iter().map(|&(d, s, _)| (d, s)).collect(), terms, postings, segment_max, term_max }
}
