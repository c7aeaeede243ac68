//! Sparse top-k retrieval over a cluster-skipping inverted index whose
//! clusters carry segmented maximum term weights.
//!
//! Strategies range from exhaustive scoring through flat MaxScore and
//! cluster-ordered Anytime traversal to two-parameter approximate search
//! (`mu` over-estimates the threshold against the maximum segment bound,
//! `eta` guards it with the average segment bound).

pub mod clustering;
pub mod eval;
pub mod index;
pub mod io;
pub mod quant;
pub mod retrieval;
pub mod topk;
pub mod types;

pub use index::{ClusterBounds, ClusterSkippingIndex};
pub use retrieval::{SearchOptions, SearchReport, StrategyKind, TraceEvent};
pub use topk::TopKAccumulator;
pub use types::{rank_score, topk_compare, DocId, ParamError, PruneParams, Query, Rational, Score, ScoredDoc, SparseVector, TermId, Weight};
