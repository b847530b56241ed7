//! Hierarchical navigable small world graph.
//!
//! Every node lives on layers `0..=top_layer`, where `top_layer` is drawn
//! from an exponentially decaying distribution. Queries descend greedily
//! from the entry point through the sparse upper layers, then run a beam
//! search of width `ef_search` on layer 0.
//!
//! Edges are undirected: whenever a node's neighbor list is pruned back to
//! its cap, the reverse edge is removed as well.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{finalize, Hit, SearchStats, VectorIndex, VectorStore};
use crate::vecmath::Metric;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Neighbor cap per node on layers above 0. Layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Scale of the level distribution; `1 / ln(m)` by default.
    pub level_norm: f64,
    /// Hard cap on the number of layers.
    pub max_layers: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams::with_m(16)
    }
}

impl HnswParams {
    /// Defaults with the given `m` and the matching level scale.
    pub fn with_m(m: usize) -> Self {
        HnswParams {
            m,
            ef_construction: 200,
            ef_search: 100,
            level_norm: default_level_norm(m),
            max_layers: 16,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.m == 0 {
            return fail("HNSW m must be at least 1".into());
        }
        if self.ef_construction < self.m {
            return fail(format!(
                "HNSW ef_construction ({}) must be at least m ({})",
                self.ef_construction, self.m
            ));
        }
        if self.ef_search == 0 {
            return fail("HNSW ef_search must be at least 1".into());
        }
        if !(self.level_norm.is_finite() && self.level_norm >= 0.0) {
            return fail(format!(
                "HNSW level_norm must be finite and >= 0, got {}",
                self.level_norm
            ));
        }
        if !(1..=u8::MAX as usize).contains(&self.max_layers) {
            return fail(format!(
                "HNSW max_layers must be in 1..=255, got {}",
                self.max_layers
            ));
        }
        Ok(())
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

pub fn default_level_norm(m: usize) -> f64 {
    if m > 1 {
        1.0 / (m as f64).ln()
    } else {
        0.0
    }
}

/// Draws `floor(-ln(u) * level_norm)` for `u` uniform in `(0, 1]`.
pub fn sample_level<R: Rng + ?Sized>(level_norm: f64, rng: &mut R) -> usize {
    let u = 1.0 - rng.random::<f64>();
    let level = (-u.ln() * level_norm).floor();
    if level >= usize::MAX as f64 {
        usize::MAX
    } else {
        level.max(0.0) as usize
    }
}

#[derive(Clone, Copy, Debug)]
struct Cand {
    dist: f64,
    node: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.node.cmp(&other.node))
    }
}

/// Per-search distance memo. Each stored vector is scored at most once.
struct Probe<'q> {
    query: &'q [f32],
    seen: HashMap<u32, f64>,
    evals: usize,
}

impl<'q> Probe<'q> {
    fn new(query: &'q [f32]) -> Self {
        Probe {
            query,
            seen: HashMap::new(),
            evals: 0,
        }
    }

    fn dist(&mut self, index: &HnswIndex, node: u32) -> f64 {
        let query = self.query;
        let evals = &mut self.evals;
        *self.seen.entry(node).or_insert_with(|| {
            *evals += 1;
            index
                .metric
                .distance_unchecked(query, index.store.vector(node as usize))
        })
    }
}

#[derive(Clone, Debug)]
pub struct HnswIndex {
    metric: Metric,
    params: HnswParams,
    store: VectorStore,
    /// `links[node][layer]` is the neighbor list; `links[node].len() - 1` is
    /// the node's top layer.
    links: Vec<Vec<Vec<u32>>>,
    entry_point: Option<u32>,
    rng: ChaCha8Rng,
}

/// Serializable graph state, excluding the vectors themselves.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct HnswRaw {
    pub links: Vec<Vec<Vec<u32>>>,
    pub entry_point: Option<u32>,
    pub rng_word_pos: u128,
}

impl HnswIndex {
    pub fn new(metric: Metric, dim: usize, params: HnswParams) -> Result<Self> {
        params.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Ok(HnswIndex {
            metric,
            params,
            store: VectorStore::new(dim),
            links: Vec::new(),
            entry_point: None,
            rng,
        })
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn entry_point(&self) -> Option<&str> {
        self.entry_point.map(|n| self.store.id(n as usize))
    }

    /// Highest layer present in the graph.
    pub fn max_layer(&self) -> Option<usize> {
        self.entry_point.map(|n| self.top(n))
    }

    pub fn top_layer(&self, id: &str) -> Option<usize> {
        self.store.position(id).map(|n| self.top(n as u32))
    }

    pub fn neighbors(&self, id: &str, layer: usize) -> Option<Vec<&str>> {
        let node = self.store.position(id)?;
        let list = self.links[node].get(layer)?;
        Some(list.iter().map(|&n| self.store.id(n as usize)).collect())
    }

    /// Ids of the nodes present on `layer`, in insertion order.
    pub fn layer_members(&self, layer: usize) -> Vec<&str> {
        (0..self.links.len())
            .filter(|&n| self.links[n].len() > layer)
            .map(|n| self.store.id(n))
            .collect()
    }

    pub fn is_layer_connected(&self, layer: usize) -> bool {
        let members: Vec<usize> = (0..self.links.len())
            .filter(|&n| self.links[n].len() > layer)
            .collect();
        let Some(&start) = members.first() else {
            return true;
        };
        let mut seen = HashSet::from([start as u32]);
        let mut queue = VecDeque::from([start as u32]);
        while let Some(n) = queue.pop_front() {
            for &m in &self.links[n as usize][layer] {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen.len() == members.len()
    }

    /// Greedy walk on one layer: moves to the closest neighbor while it is
    /// strictly closer than the current node.
    pub fn greedy_descend(&self, query: &[f32], start: &str, layer: usize) -> Option<&str> {
        let start = self.node_on_layer(start, layer)?;
        let mut probe = Probe::new(query);
        let found = self.descend(&mut probe, start, layer);
        Some(self.store.id(found as usize))
    }

    /// Best-first beam search of width `ef` on one layer, ascending.
    pub fn search_layer(
        &self,
        query: &[f32],
        entry: &str,
        ef: usize,
        layer: usize,
    ) -> Option<Vec<Hit>> {
        if ef == 0 {
            return None;
        }
        let entry = self.node_on_layer(entry, layer)?;
        let mut probe = Probe::new(query);
        let found = self.beam(&mut probe, entry, ef, layer);
        Some(
            found
                .into_iter()
                .map(|c| Hit {
                    id: self.store.id(c.node as usize).to_owned(),
                    distance: c.dist,
                })
                .collect(),
        )
    }

    /// Checks symmetry, degree caps, layer nesting and entry point maximality.
    pub fn check_structure(&self) -> std::result::Result<(), String> {
        let n = self.store.len();
        if self.links.len() != n {
            return Err(format!("{} link tables for {} nodes", self.links.len(), n));
        }
        for (node, layers) in self.links.iter().enumerate() {
            if layers.is_empty() || layers.len() > self.params.max_layers {
                return Err(format!("node {node} has {} layers", layers.len()));
            }
            for (layer, list) in layers.iter().enumerate() {
                if list.len() > self.params.cap(layer) {
                    return Err(format!(
                        "node {node} has degree {} on layer {layer} (cap {})",
                        list.len(),
                        self.params.cap(layer)
                    ));
                }
                let mut uniq = HashSet::new();
                for &m in list {
                    let m_us = m as usize;
                    if m_us == node || m_us >= n {
                        return Err(format!("node {node} has invalid neighbor {m}"));
                    }
                    if !uniq.insert(m) {
                        return Err(format!("node {node} lists neighbor {m} twice"));
                    }
                    if self.links[m_us].len() <= layer {
                        return Err(format!(
                            "neighbor {m} of {node} is absent from layer {layer}"
                        ));
                    }
                    if !self.links[m_us][layer].contains(&(node as u32)) {
                        return Err(format!(
                            "edge {node}->{m} on layer {layer} is not symmetric"
                        ));
                    }
                }
            }
        }
        match self.entry_point {
            None if n == 0 => Ok(()),
            None => Err("non-empty graph without entry point".into()),
            Some(ep) if ep as usize >= n => Err(format!("entry point {ep} out of range")),
            Some(ep) => {
                let top = self.top(ep);
                match (0..n).find(|&m| self.top(m as u32) > top) {
                    Some(m) => Err(format!("node {m} is above the entry point's layer {top}")),
                    None => Ok(()),
                }
            }
        }
    }

    fn top(&self, node: u32) -> usize {
        self.links[node as usize].len() - 1
    }

    fn node_on_layer(&self, id: &str, layer: usize) -> Option<u32> {
        let node = self.store.position(id)?;
        (self.links[node].len() > layer).then_some(node as u32)
    }

    fn descend(&self, probe: &mut Probe<'_>, start: u32, layer: usize) -> u32 {
        let mut cur = start;
        let mut cur_dist = probe.dist(self, cur);
        loop {
            let mut best = cur;
            for &n in &self.links[cur as usize][layer] {
                let d = probe.dist(self, n);
                if d < cur_dist {
                    cur_dist = d;
                    best = n;
                }
            }
            if best == cur {
                return cur;
            }
            cur = best;
        }
    }

    fn beam(&self, probe: &mut Probe<'_>, entry: u32, ef: usize, layer: usize) -> Vec<Cand> {
        let first = Cand {
            dist: probe.dist(self, entry),
            node: entry,
        };
        let mut visited = HashSet::from([entry]);
        let mut candidates = BinaryHeap::from([Reverse(first)]);
        let mut results = BinaryHeap::from([first]);

        while let Some(Reverse(c)) = candidates.pop() {
            let worst = results.peek().map_or(f64::INFINITY, |w| w.dist);
            if c.dist > worst {
                break;
            }
            for &n in &self.links[c.node as usize][layer] {
                if !visited.insert(n) {
                    continue;
                }
                let dist = probe.dist(self, n);
                let full = results.len() >= ef;
                if !full || results.peek().is_some_and(|w| dist < w.dist) {
                    let cand = Cand { dist, node: n };
                    candidates.push(Reverse(cand));
                    results.push(cand);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    fn link(&mut self, a: u32, b: u32, layer: usize) {
        self.links[a as usize][layer].push(b);
        self.links[b as usize][layer].push(a);
        for node in [b, a] {
            if self.links[node as usize][layer].len() > self.params.cap(layer) {
                self.prune(node, layer);
            }
        }
    }

    /// Keeps the `cap` nearest neighbors of `node`, dropping reverse edges of
    /// the rest.
    fn prune(&mut self, node: u32, layer: usize) {
        let base = self.store.vector(node as usize);
        let mut scored: Vec<Cand> = self.links[node as usize][layer]
            .iter()
            .map(|&n| Cand {
                dist: self
                    .metric
                    .distance_unchecked(base, self.store.vector(n as usize)),
                node: n,
            })
            .collect();
        scored.sort();
        let dropped = scored.split_off(self.params.cap(layer));
        self.links[node as usize][layer] = scored.into_iter().map(|c| c.node).collect();
        for d in dropped {
            self.links[d.node as usize][layer].retain(|&x| x != node);
        }
    }

    pub(crate) fn raw(&self) -> HnswRaw {
        HnswRaw {
            links: self.links.clone(),
            entry_point: self.entry_point,
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    pub(crate) fn from_raw(
        metric: Metric,
        params: HnswParams,
        store: VectorStore,
        raw: HnswRaw,
    ) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_word_pos(raw.rng_word_pos);
        let index = HnswIndex {
            metric,
            params,
            store,
            links: raw.links,
            entry_point: raw.entry_point,
            rng,
        };
        index.check_structure().map_err(Error::Corrupt)?;
        Ok(index)
    }
}

impl VectorIndex for HnswIndex {
    fn metric(&self) -> Metric {
        self.metric
    }

    fn store(&self) -> &VectorStore {
        &self.store
    }

    fn insert(&mut self, id: String, vector: &[f32]) -> Result<()> {
        let node = self.store.push(id, vector)? as u32;
        let level =
            sample_level(self.params.level_norm, &mut self.rng).min(self.params.max_layers - 1);
        self.links.push(vec![Vec::new(); level + 1]);

        let Some(entry) = self.entry_point else {
            self.entry_point = Some(node);
            return Ok(());
        };
        let top = self.top(entry);
        let mut probe = Probe::new(vector);
        let mut ep = entry;
        for layer in (level + 1..=top).rev() {
            ep = self.descend(&mut probe, ep, layer);
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.beam(&mut probe, ep, self.params.ef_construction, layer);
            ep = found[0].node;
            for c in found.iter().take(self.params.m) {
                self.link(node, c.node, layer);
            }
        }
        if level > top {
            self.entry_point = Some(node);
        }
        Ok(())
    }

    fn search(&self, query: &[f32], k: usize) -> (Vec<Hit>, SearchStats) {
        let Some(entry) = self.entry_point else {
            return (Vec::new(), SearchStats::default());
        };
        let mut probe = Probe::new(query);
        let mut ep = entry;
        for layer in (1..=self.top(entry)).rev() {
            ep = self.descend(&mut probe, ep, layer);
        }
        let found = self.beam(&mut probe, ep, self.params.ef_search.max(k), 0);
        let candidates = found.len();
        let scored = found
            .into_iter()
            .map(|c| (c.node as usize, c.dist))
            .collect();
        (
            finalize(&self.store, scored, k),
            SearchStats {
                distance_evals: probe.evals,
                candidates,
            },
        )
    }
}
