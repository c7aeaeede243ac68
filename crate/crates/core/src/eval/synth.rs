//! Topic-model corpus generator with dense counterparts.
//!
//! Each document draws a latent topic, then term occurrences from a Zipf
//! distribution over the topic's vocabulary (plus a background share from
//! a global Zipf over all terms). Every occurrence adds a log-normal
//! impact to its term. The dense counterpart is the topic embedding plus a
//! scaled projection of the document's own terms plus Gaussian noise, so
//! nearby dense vectors also share sparse content.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Qrels;
use crate::clustering::{derive_seed, project_raw, DenseVector};
use crate::index::RawDoc;
use crate::types::{DocId, Query, TermId};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid corpus spec: {0}")]
pub struct SpecError(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub doc_count: u32,
    pub vocab_size: u32,
    pub topics: u32,
    /// Mean distinct terms per document.
    pub mean_nonzeros: f64,
    pub zipf_exponent: f64,
    /// Terms per topic; ignored with `disjoint_topics`.
    pub topic_vocab: u32,
    /// Share of occurrences drawn from the global distribution.
    pub background_fraction: f64,
    pub weight_mu: f64,
    pub weight_sigma: f64,
    pub query_count: u32,
    /// Term draws per query; repeated draws raise the query weight.
    pub query_length: u32,
    pub dense_dims: u32,
    pub dense_noise: f64,
    /// Weight of the content projection in the dense counterpart.
    pub dense_content: f64,
    /// Partition the vocabulary between topics and drop the background.
    pub disjoint_topics: bool,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            doc_count: 50_000,
            vocab_size: 5_000,
            topics: 200,
            mean_nonzeros: 40.0,
            zipf_exponent: 1.0,
            topic_vocab: 250,
            background_fraction: 0.2,
            weight_mu: 0.0,
            weight_sigma: 0.6,
            query_count: 200,
            query_length: 16,
            dense_dims: 64,
            dense_noise: 0.02,
            dense_content: 0.5,
            disjoint_topics: false,
            seed: 7,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let err = |m: &str| Err(SpecError(m.to_string()));
        if self.doc_count == 0 || self.vocab_size == 0 || self.topics == 0 || self.topic_vocab == 0 {
            return err("doc_count, vocab_size, topics and topic_vocab must be positive");
        }
        if self.query_count == 0 || self.query_length == 0 || self.dense_dims == 0 {
            return err("query_count, query_length and dense_dims must be positive");
        }
        if !(self.mean_nonzeros.is_finite() && self.mean_nonzeros > 0.0) {
            return err("mean_nonzeros must be positive");
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return err("zipf_exponent must be positive");
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return err("background_fraction must lie in [0, 1)");
        }
        if !(self.weight_sigma.is_finite() && self.weight_sigma > 0.0 && self.weight_mu.is_finite()) {
            return err("weight_sigma must be positive and weight_mu finite");
        }
        if !(self.dense_noise.is_finite() && self.dense_noise >= 0.0 && self.dense_content.is_finite() && self.dense_content >= 0.0) {
            return err("dense_noise and dense_content must be non-negative");
        }
        if self.disjoint_topics && self.vocab_size < self.topics {
            return err("disjoint topics need at least one term per topic");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub docs: Vec<RawDoc>,
    pub dense: Vec<(DocId, DenseVector)>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub doc_topics: Vec<u32>,
    pub query_topics: Vec<u32>,
}

/// Term list of one topic, most probable first.
struct Topic {
    terms: Vec<TermId>,
    zipf: Zipf<f64>,
}

impl Topic {
    fn draw(&self, rng: &mut ChaCha8Rng) -> TermId {
        let rank = self.zipf.sample(rng) as usize;
        self.terms[rank.clamp(1, self.terms.len()) - 1]
    }
}

fn zipf(n: usize, s: f64) -> Zipf<f64> {
    Zipf::new(n as f64, s).expect("validated Zipf parameters")
}

const STREAM_TOPICS: u64 = 1;
const STREAM_DOCS: u64 = 2;
const STREAM_QUERIES: u64 = 3;
const STREAM_EMBED: u64 = 4;
const PROJECTION_SEED: u64 = 5;

/// Deterministic per `spec.seed`, independent of thread count.
pub fn gen_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus, SpecError> {
    spec.validate()?;
    let vocab = spec.vocab_size as usize;
    let t_count = spec.topics as usize;
    let dims = spec.dense_dims as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_TOPICS));
    let topics: Vec<Topic> = (0..t_count)
        .map(|t| {
            let mut terms: Vec<TermId> = if spec.disjoint_topics {
                let lo = t * vocab / t_count;
                let hi = (t + 1) * vocab / t_count;
                (lo as TermId..hi as TermId).collect()
            } else {
                let size = (spec.topic_vocab as usize).min(vocab);
                index::sample(&mut rng, vocab, size).into_iter().map(|i| i as TermId).collect()
            };
            terms.shuffle(&mut rng);
            let zipf = zipf(terms.len(), spec.zipf_exponent);
            Topic { terms, zipf }
        })
        .collect();
    let mut global_terms: Vec<TermId> = (0..vocab as TermId).collect();
    global_terms.shuffle(&mut rng);
    let background = Topic { zipf: zipf(vocab, spec.zipf_exponent), terms: global_terms };
    let background_fraction = if spec.disjoint_topics { 0.0 } else { spec.background_fraction };

    let mut embed_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_EMBED));
    let std_normal = Normal::new(0.0f64, 1.0).expect("unit normal");
    let embeddings: Vec<Vec<f32>> = (0..t_count).map(|_| normalized((0..dims).map(|_| std_normal.sample(&mut embed_rng)).collect())).collect();

    let weight = LogNormal::new(spec.weight_mu, spec.weight_sigma).expect("validated log-normal");
    let poisson = Poisson::new(spec.mean_nonzeros).expect("validated Poisson");
    let noise = Normal::new(0.0f64, spec.dense_noise.max(f64::MIN_POSITIVE)).expect("validated noise");

    let generated: Vec<(u32, RawDoc, DenseVector)> = (0..spec.doc_count)
        .into_par_iter()
        .map(|doc| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(spec.seed, STREAM_DOCS), doc as u64));
            let topic = rng.random_range(0..spec.topics);
            let own = &topics[topic as usize];
            let capacity = if spec.disjoint_topics { own.terms.len() } else { vocab };
            let target = (poisson.sample(&mut rng) as usize).clamp(1, capacity);
            let mut acc: std::collections::BTreeMap<TermId, f64> = std::collections::BTreeMap::new();
            let mut attempts = 0usize;
            while acc.len() < target && attempts < 50 * target {
                attempts += 1;
                let source = if rng.random::<f64>() < background_fraction { &background } else { own };
                *acc.entry(source.draw(&mut rng)).or_insert(0.0) += weight.sample(&mut rng);
            }
            let terms: Vec<(TermId, f32)> = acc.into_iter().map(|(t, w)| (t, w as f32)).collect();
            let content = normalized(project_raw(&terms, dims, derive_seed(spec.seed, PROJECTION_SEED)).into_iter().map(f64::from).collect());
            let embed = &embeddings[topic as usize];
            let dense: Vec<f32> = (0..dims)
                .map(|i| {
                    let n = if spec.dense_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    (embed[i] as f64 + spec.dense_content * content[i] as f64 + n) as f32
                })
                .collect();
            (topic, RawDoc { doc_id: doc, terms }, DenseVector(dense))
        })
        .collect();

    let mut qrng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_QUERIES));
    let mut queries = Vec::with_capacity(spec.query_count as usize);
    let mut query_topics = Vec::with_capacity(spec.query_count as usize);
    for i in 0..spec.query_count {
        let topic = qrng.random_range(0..spec.topics);
        let draws: Vec<TermId> = (0..spec.query_length).map(|_| topics[topic as usize].draw(&mut qrng)).collect();
        queries.push(Query::from_terms(format!("q{i}"), &draws).expect("multiplicities fit the weight range"));
        query_topics.push(topic);
    }

    let mut by_topic: Vec<Vec<DocId>> = vec![Vec::new(); t_count];
    for (topic, doc, _) in &generated {
        by_topic[*topic as usize].push(doc.doc_id);
    }
    let mut qrels = Qrels::default();
    for (q, &t) in queries.iter().zip(&query_topics) {
        for &d in &by_topic[t as usize] {
            qrels.insert(&q.query_id, d, 1).expect("docs listed once per topic");
        }
    }

    let mut docs = Vec::with_capacity(generated.len());
    let mut dense = Vec::with_capacity(generated.len());
    let mut doc_topics = Vec::with_capacity(generated.len());
    for (topic, doc, vector) in generated {
        dense.push((doc.doc_id, vector));
        docs.push(doc);
        doc_topics.push(topic);
    }
    Ok(SyntheticCorpus { docs, dense, queries, qrels, doc_topics, query_topics })
}

fn normalized(v: Vec<f64>) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.into_iter().map(|x| x as f32).collect();
    }
    v.into_iter().map(|x| (x / norm) as f32).collect()
}
