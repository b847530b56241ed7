//! Exact kNN by full scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::Result;
use crate::index::{rank_cmp, Hit, SearchStats, VectorIndex, VectorStore};
use crate::vecmath::Metric;

#[derive(Clone, Debug)]
pub struct FlatIndex {
    metric: Metric,
    store: VectorStore,
}

struct Scored<'a> {
    distance: f64,
    id: &'a str,
}

impl PartialEq for Scored<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored<'_> {}

impl PartialOrd for Scored<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp((self.distance, self.id), (other.distance, other.id))
    }
}

impl FlatIndex {
    pub fn new(metric: Metric, dim: usize) -> Self {
        FlatIndex {
            metric,
            store: VectorStore::new(dim),
        }
    }

    pub(crate) fn from_store(metric: Metric, store: VectorStore) -> Self {
        FlatIndex { metric, store }
    }

    /// The `k` globally nearest entries. Every stored vector is scored; a
    /// max-heap of size `k` holds the current best.
    pub fn bf_query(&self, query: &[f32], k: usize) -> Vec<Hit> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Scored<'_>> = BinaryHeap::with_capacity(k + 1);
        for (id, v) in self.store.iter() {
            let cand = Scored {
                distance: self.metric.distance_unchecked(query, v),
                id,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if heap.peek().is_some_and(|worst| cand < *worst) {
                heap.pop();
                heap.push(cand);
            }
        }
        heap.into_sorted_vec()
            .into_iter()
            .map(|s| Hit {
                id: s.id.to_owned(),
                distance: s.distance,
            })
            .collect()
    }
}

impl VectorIndex for FlatIndex {
    fn metric(&self) -> Metric {
        self.metric
    }

    fn store(&self) -> &VectorStore {
        &self.store
    }

    fn insert(&mut self, id: String, vector: &[f32]) -> Result<()> {
        self.store.push(id, vector).map(|_| ())
    }

    fn search(&self, query: &[f32], k: usize) -> (Vec<Hit>, SearchStats) {
        let hits = self.bf_query(query, k);
        let n = self.store.len();
        (
            hits,
            SearchStats {
                distance_evals: n,
                candidates: n,
            },
        )
    }
}
