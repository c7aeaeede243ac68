//! Effectiveness and latency metrics, bound-tightness analysis and the
//! synthetic corpus generator.

mod bounds;
mod metrics;
mod synth;

pub use bounds::{analyze_bounds, bound_rows, cluster_actual_max, summarize, write_bound_csv, BoundAnalysis, BoundRow};
pub use metrics::{k_sweep, latency_stats, mrr_at_k, recall_at_k, score_ratio_curve, EvalError, LatencyStats, Qrels, RankedList, Reference};
pub use synth::{gen_corpus, SpecError, SyntheticCorpus, SyntheticCorpusSpec};
