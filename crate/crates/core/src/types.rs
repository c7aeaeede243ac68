//! Domain types shared by every retrieval strategy: fixed-point sparse
//! vectors, queries, exact rational pruning factors and scored documents.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TermId = u32;
pub type DocId = u32;
/// Fixed-point term weight (quantized impact, or an integer query weight).
pub type Weight = u32;
/// Fixed-point rank score.
pub type Score = u64;

/// Reserved as the exhausted-cursor sentinel; never a valid document id.
pub const END_DOC: DocId = u32::MAX;

/// Largest accepted weight on either side of a dot product. With both
/// factors below 2^16 every product fits in 32 bits, so a sum over at most
/// 2^32 distinct terms cannot overflow a `u64`.
pub const MAX_WEIGHT: Weight = u16::MAX as Weight;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VectorError {
    #[error("duplicate term id {0}")]
    DuplicateTerm(TermId),
    #[error("weight {weight} for term {term} exceeds the maximum of {MAX_WEIGHT}")]
    WeightTooLarge { term: TermId, weight: Weight },
    #[error("query `{0}` has no terms with non-zero weight")]
    DegenerateQuery(String),
}

/// A sparse term-to-weight map with strictly increasing term ids and
/// strictly positive weights.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SparseVector {
    entries: Vec<(TermId, Weight)>,
}

impl SparseVector {
    /// Builds a vector from unordered entries. Zero weights are dropped,
    /// duplicate terms are rejected.
    pub fn new<I>(entries: I) -> Result<Self, VectorError>
    where
        I: IntoIterator<Item = (TermId, Weight)>,
    {
        let mut entries: Vec<_> = entries.into_iter().collect();
        entries.sort_unstable_by_key(|&(t, _)| t);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(VectorError::DuplicateTerm(pair[0].0));
            }
        }
        if let Some(&(term, weight)) = entries.iter().find(|&&(_, w)| w > MAX_WEIGHT) {
            return Err(VectorError::WeightTooLarge { term, weight });
        }
        entries.retain(|&(_, w)| w > 0);
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(TermId, Weight)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, term: TermId) -> Option<Weight> {
        self.entries.binary_search_by_key(&term, |&(t, _)| t).ok().map(|i| self.entries[i].1)
    }

    pub fn terms(&self) -> impl Iterator<Item = TermId> + '_ {
        self.entries.iter().map(|&(t, _)| t)
    }

    /// Merge-join dot product over shared terms.
    pub fn dot(&self, other: &SparseVector) -> Score {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        let mut sum: Score = 0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    sum += a[i].1 as Score * b[j].1 as Score;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }
}

/// A query: an identifier plus integer term weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub query_id: String,
    pub vector: SparseVector,
}

impl Query {
    pub fn new(query_id: impl Into<String>, vector: SparseVector) -> Self {
        Self { query_id: query_id.into(), vector }
    }

    /// Builds a query from a bag of terms; a term seen `j` times gets weight `j`.
    pub fn from_terms(query_id: impl Into<String>, terms: &[TermId]) -> Result<Self, VectorError> {
        let mut sorted = terms.to_vec();
        sorted.sort_unstable();
        let mut entries: Vec<(TermId, Weight)> = Vec::new();
        for t in sorted {
            match entries.last_mut() {
                Some((last, w)) if *last == t => *w += 1,
                _ => entries.push((t, 1)),
            }
        }
        Ok(Self::new(query_id, SparseVector::new(entries)?))
    }

    /// A query with no non-zero term weights matches nothing.
    pub fn is_degenerate(&self) -> bool {
        self.vector.is_empty()
    }

    pub fn ensure_non_degenerate(&self) -> Result<(), VectorError> {
        if self.is_degenerate() {
            Err(VectorError::DegenerateQuery(self.query_id.clone()))
        } else {
            Ok(())
        }
    }
}

/// Additive rank score: sum of `q_t * w_{t,d}` over terms shared by the
/// document and the query.
pub fn rank_score(doc: &SparseVector, query: &Query) -> Score {
    doc.dot(&query.vector)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("denominator must be positive")]
    ZeroDenominator,
    #[error("factor {0} must satisfy 0 < value <= 1")]
    FactorOutOfRange(Rational),
    #[error("mu ({mu}) must not exceed eta ({eta})")]
    MuExceedsEta { mu: Rational, eta: Rational },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("time budget must be a positive finite number of milliseconds, got {0}")]
    BadBudget(f64),
    #[error("cannot parse `{0}` as a rational (expected p/q or a decimal)")]
    Unparsable(String),
}

/// An exact non-negative rational used for pruning factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rational {
    num: u32,
    den: u32,
}

impl Rational {
    pub const ONE: Rational = Rational { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self, ParamError> {
        if den == 0 {
            return Err(ParamError::ZeroDenominator);
        }
        Ok(Self { num, den })
    }

    /// A factor in `(0, 1]`, as required for mu and eta.
    pub fn factor(num: u32, den: u32) -> Result<Self, ParamError> {
        let r = Self::new(num, den)?;
        r.check_factor()?;
        Ok(r)
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    pub fn is_one(self) -> bool {
        self.num == self.den
    }

    pub fn check_factor(self) -> Result<(), ParamError> {
        if self.num == 0 || self.num > self.den {
            Err(ParamError::FactorOutOfRange(self))
        } else {
            Ok(())
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Reduced form; keeps comparisons readable in logs.
    pub fn reduced(self) -> Self {
        let g = gcd(self.num, self.den).max(1);
        Self { num: self.num / g, den: self.den / g }
    }

    /// Exact test of `bound <= threshold / self`, evaluated as
    /// `num * bound <= den * threshold`.
    pub fn bound_within(self, bound: u64, threshold: u64) -> bool {
        self.num as u128 * bound as u128 <= self.den as u128 * threshold as u128
    }

    /// Exact test of `(sum / parts) <= threshold / self`.
    pub fn mean_within(self, sum: u64, parts: u32, threshold: u64) -> bool {
        self.num as u128 * sum as u128 <= self.den as u128 * parts as u128 * threshold as u128
    }

    /// `self <= other`, by cross-multiplication.
    pub fn le(self, other: Rational) -> bool {
        self.num as u64 * other.den as u64 <= other.num as u64 * self.den as u64
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Rational {
    type Err = ParamError;

    /// Accepts `p/q`, or a decimal rounded to the nearest thousandth.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ParamError::Unparsable(s.to_string());
        if let Some((p, q)) = s.split_once('/') {
            let num: u32 = p.trim().parse().map_err(|_| bad())?;
            let den: u32 = q.trim().parse().map_err(|_| bad())?;
            return Rational::new(num, den);
        }
        if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit() || c == '.') {
            return Err(bad());
        }
        let value: f64 = s.parse().map_err(|_| bad())?;
        let thousandths = (value * 1000.0).round();
        if !thousandths.is_finite() || thousandths > u32::MAX as f64 {
            return Err(bad());
        }
        Ok(Rational::new(thousandths as u32, 1000)?.reduced())
    }
}

/// Pruning parameters: mu governs MaxSBound over-estimation, eta governs
/// AvgSBound and document-level pruning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneParams {
    pub mu: Rational,
    pub eta: Rational,
    pub k: usize,
    pub time_budget_ms: Option<f64>,
}

impl PruneParams {
    pub fn new(mu: Rational, eta: Rational, k: usize) -> Result<Self, ParamError> {
        let params = Self { mu, eta, k, time_budget_ms: None };
        params.validate()?;
        Ok(params)
    }

    /// Rank-safe configuration, mu = eta = 1.
    pub fn safe(k: usize) -> Result<Self, ParamError> {
        Self::new(Rational::ONE, Rational::ONE, k)
    }

    pub fn with_budget_ms(mut self, budget_ms: Option<f64>) -> Result<Self, ParamError> {
        self.time_budget_ms = budget_ms;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.k == 0 {
            return Err(ParamError::ZeroK);
        }
        self.mu.check_factor()?;
        self.eta.check_factor()?;
        if !self.mu.le(self.eta) {
            return Err(ParamError::MuExceedsEta { mu: self.mu, eta: self.eta });
        }
        if let Some(b) = self.time_budget_ms {
            if !(b.is_finite() && b > 0.0) {
                return Err(ParamError::BadBudget(b));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: DocId,
    pub score: Score,
}

impl ScoredDoc {
    pub fn new(doc_id: DocId, score: Score) -> Self {
        Self { doc_id, score }
    }
}

/// Result ordering: higher score first, then lower doc id.
/// `Ordering::Less` means `a` ranks before `b`.
pub fn topk_compare(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score.cmp(&a.score).then(a.doc_id.cmp(&b.doc_id))
}
