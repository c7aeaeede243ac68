use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::types::{topk_compare, Score, ScoredDoc};

/// Heap entry ordered so that the worst-ranked document sits at the root.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Ranked(ScoredDoc);

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        topk_compare(&self.0, &other.0)
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded top-k collector. The threshold is 0 until `k` documents are
/// held, and the score of the worst held document afterwards.
#[derive(Clone, Debug)]
pub struct TopKAccumulator {
    k: usize,
    heap: BinaryHeap<Ranked>,
    threshold: Score,
}

impl TopKAccumulator {
    pub fn new(k: usize) -> Self {
        assert!(k > 0, "top-k capacity must be positive");
        Self { k, heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1), threshold: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    pub fn threshold(&self) -> Score {
        self.threshold
    }

    /// Offers a document; it is kept when the heap has room or when it ranks
    /// before the current worst entry. Returns whether it was kept.
    pub fn push(&mut self, doc: ScoredDoc) -> bool {
        if self.heap.len() < self.k {
            self.heap.push(Ranked(doc));
        } else {
            let mut worst = self.heap.peek_mut().expect("full heap is non-empty");
            if topk_compare(&doc, &worst.0) != Ordering::Less {
                return false;
            }
            *worst = Ranked(doc);
        }
        if self.heap.len() >= self.k {
            self.threshold = self.heap.peek().map_or(0, |r| r.0.score);
        }
        true
    }

    /// Held documents in result order.
    pub fn into_sorted_vec(self) -> Vec<ScoredDoc> {
        // packed keys sort ascending in result order: score desc, doc asc
        let mut keys: Vec<u128> = self.heap.into_iter().map(|r| ((!r.0.score as u128) << 32) | r.0.doc_id as u128).collect();
        radsort::sort(&mut keys);
        keys.into_iter().map(|k| ScoredDoc::new(k as u32, !((k >> 32) as u64))).collect()
    }
}
