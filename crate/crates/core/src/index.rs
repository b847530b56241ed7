//! Types shared by every backend and the trait they implement.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hnsw::HnswParams;
use crate::lsh::LshParams;
use crate::vecmath::{Embedding, Metric};

/// One document as ingested: identifier, original passage and its embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocRecord {
    pub id: String,
    #[serde(default)]
    pub text: String,
    pub embedding: Embedding,
}

impl DocRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, embedding: Embedding) -> Self {
        DocRecord {
            id: id.into(),
            text: text.into(),
            embedding,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub distance: f64,
}

/// Ranked hits, ascending by distance with ties broken by ascending id.
/// An empty result from an approximate backend is a miss, not an error.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub hits: Vec<Hit>,
}

impl QueryResult {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn top(&self) -> Option<&Hit> {
        self.hits.first()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.id.as_str())
    }
}

/// Work done by one search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Distinct stored vectors whose distance to the query was computed.
    pub distance_evals: usize,
    /// Candidates considered for the final ranking.
    pub candidates: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InsertReport {
    pub count: usize,
    pub elapsed: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackendKind {
    IterativeCosine,
    IterativeEuclidean,
    HnswCosine,
    HnswEuclidean,
    Lsh,
}

impl BackendKind {
    pub const ALL: [BackendKind; 5] = [
        BackendKind::IterativeCosine,
        BackendKind::IterativeEuclidean,
        BackendKind::HnswCosine,
        BackendKind::HnswEuclidean,
        BackendKind::Lsh,
    ];

    pub fn metric(self) -> Metric {
        match self {
            BackendKind::IterativeCosine | BackendKind::HnswCosine | BackendKind::Lsh => {
                Metric::Cosine
            }
            BackendKind::IterativeEuclidean | BackendKind::HnswEuclidean => Metric::Euclidean,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(
            self,
            BackendKind::IterativeCosine | BackendKind::IterativeEuclidean
        )
    }

    /// The exact backend sharing this backend's metric.
    pub fn exact_counterpart(self) -> BackendKind {
        match self.metric() {
            Metric::Cosine => BackendKind::IterativeCosine,
            Metric::Euclidean => BackendKind::IterativeEuclidean,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::IterativeCosine => "iter-cosine",
            BackendKind::IterativeEuclidean => "iter-euclidean",
            BackendKind::HnswCosine => "hnsw-cosine",
            BackendKind::HnswEuclidean => "hnsw-euclidean",
            BackendKind::Lsh => "lsh",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            BackendKind::IterativeCosine => 0,
            BackendKind::IterativeEuclidean => 1,
            BackendKind::HnswCosine => 2,
            BackendKind::HnswEuclidean => 3,
            BackendKind::Lsh => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<BackendKind> {
        BackendKind::ALL.into_iter().find(|b| b.tag() == tag)
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BackendKind::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown backend {s:?} (expected one of iter-cosine, iter-euclidean, \
                     hnsw-cosine, hnsw-euclidean, lsh)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendParams {
    Flat,
    Hnsw(HnswParams),
    Lsh(LshParams),
}

impl BackendParams {
    pub fn default_for(backend: BackendKind) -> Self {
        match backend {
            BackendKind::IterativeCosine | BackendKind::IterativeEuclidean => BackendParams::Flat,
            BackendKind::HnswCosine | BackendKind::HnswEuclidean => {
                BackendParams::Hnsw(HnswParams::default())
            }
            BackendKind::Lsh => BackendParams::Lsh(LshParams::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub backend: BackendKind,
    pub dim: usize,
    pub params: BackendParams,
    /// Store unit-length copies of inserted vectors, and normalize queries.
    pub normalize_on_insert: bool,
}

impl IndexConfig {
    /// Config with the backend's default hyperparameters.
    pub fn new(backend: BackendKind, dim: usize) -> Self {
        IndexConfig {
            backend,
            dim,
            params: BackendParams::default_for(backend),
            normalize_on_insert: false,
        }
    }

    pub fn with_params(mut self, params: BackendParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_normalize(mut self, normalize: bool) -> Self {
        self.normalize_on_insert = normalize;
        self
    }

    pub fn metric(&self) -> Metric {
        self.backend.metric()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        match (&self.params, self.backend) {
            (BackendParams::Flat, b) if b.is_exact() => Ok(()),
            (BackendParams::Hnsw(p), BackendKind::HnswCosine | BackendKind::HnswEuclidean) => {
                p.validate()
            }
            (BackendParams::Lsh(p), BackendKind::Lsh) => p.validate(),
            (params, backend) => Err(Error::Config(format!(
                "parameters {params:?} do not apply to backend {backend}"
            ))),
        }
    }
}

/// The insert/search surface every backend provides.
///
/// `insert` and `search` see vectors already validated by the caller
/// ([`crate::Database`]): correct dimension, finite, and non-zero for
/// cosine backends.
pub trait VectorIndex {
    fn metric(&self) -> Metric;

    fn store(&self) -> &VectorStore;

    fn insert(&mut self, id: String, vector: &[f32]) -> Result<()>;

    fn search(&self, query: &[f32], k: usize) -> (Vec<Hit>, SearchStats);

    fn len(&self) -> usize {
        self.store().len()
    }

    fn is_empty(&self) -> bool {
        self.store().is_empty()
    }

    fn contains(&self, id: &str) -> bool {
        self.store().position(id).is_some()
    }
}

/// Insertion-ordered ids and vectors, contiguous in memory.
#[derive(Clone, Debug, Default)]
pub struct VectorStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    lookup: HashMap<String, u32>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        VectorStore {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).map(|&i| i as usize)
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    /// Appends a vector, returning its position.
    pub fn push(&mut self, id: String, vector: &[f32]) -> Result<usize> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if self.lookup.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let idx = self.ids.len();
        let idx32 = u32::try_from(idx).map_err(|_| Error::Config("too many records".into()))?;
        self.lookup.insert(id.clone(), idx32);
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(idx)
    }
}

/// Total order used for every ranking: distance, then id.
pub(crate) fn rank_cmp(a: (f64, &str), b: (f64, &str)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// Sorts scored positions into the canonical order and keeps the best `k`.
pub(crate) fn finalize(store: &VectorStore, mut scored: Vec<(usize, f64)>, k: usize) -> Vec<Hit> {
    scored.sort_by(|a, b| rank_cmp((a.1, store.id(a.0)), (b.1, store.id(b.0))));
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(idx, distance)| Hit {
            id: store.id(idx).to_owned(),
            distance,
        })
        .collect()
}
