//! Random-hyperplane LSH over several independent tables.
//!
//! A vector's signature in one table is the sign pattern of its dot products
//! with that table's hyperplanes. Queries collect the union of their matching
//! buckets and re-rank the candidates by exact cosine distance.
//!
//! Table `t` draws its hyperplanes from its own ChaCha stream of the seed, so
//! the first `T` tables are identical whatever `n_tables` is.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{finalize, Hit, SearchStats, VectorIndex, VectorStore};
use crate::vecmath::{dot, norm, Metric};

pub const MAX_PROJECTIONS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshParams {
    /// Hyperplanes per table, i.e. signature bits.
    pub n_projections: usize,
    pub n_tables: usize,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            n_projections: 16,
            n_tables: 8,
            seed: 42,
        }
    }
}

impl LshParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_PROJECTIONS).contains(&self.n_projections) {
            return Err(Error::Config(format!(
                "LSH n_projections must be in 1..={MAX_PROJECTIONS}, got {}",
                self.n_projections
            )));
        }
        if self.n_tables == 0 {
            return Err(Error::Config("LSH n_tables must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unit hyperplane normals for one table, row-major `n_projections x dim`.
pub fn table_hyperplanes(seed: u64, table: usize, n_projections: usize, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(table as u64);
    let mut planes = Vec::with_capacity(n_projections * dim);
    for _ in 0..n_projections {
        let row: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        // A zero draw is measure-zero; keep it rather than resample so the
        // stream stays aligned.
        let scale = if len > 0.0 { 1.0 / len } else { 0.0 };
        planes.extend(row.iter().map(|&x| (x * scale) as f32));
    }
    planes
}

/// Bit `i` is set iff `v . plane_i >= 0`.
pub fn signature_with(planes: &[f32], dim: usize, v: &[f32]) -> u64 {
    planes
        .chunks_exact(dim)
        .enumerate()
        .fold(0u64, |sig, (i, plane)| {
            if dot(plane, v) >= 0.0 {
                sig | (1 << i)
            } else {
                sig
            }
        })
}

#[derive(Clone, Debug)]
struct Table {
    planes: Vec<f32>,
    /// Signature of every stored vector, by position.
    signatures: Vec<u64>,
    buckets: HashMap<u64, Vec<u32>>,
}

#[derive(Clone, Debug)]
pub struct LshIndex {
    params: LshParams,
    store: VectorStore,
    tables: Vec<Table>,
}

impl LshIndex {
    pub fn new(dim: usize, params: LshParams) -> Result<Self> {
        params.validate()?;
        let tables = (0..params.n_tables)
            .map(|t| Table {
                planes: table_hyperplanes(params.seed, t, params.n_projections, dim),
                signatures: Vec::new(),
                buckets: HashMap::new(),
            })
            .collect();
        Ok(LshIndex {
            params,
            store: VectorStore::new(dim),
            tables,
        })
    }

    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn signature(&self, table: usize, v: &[f32]) -> Result<u64> {
        if v.len() != self.store.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.store.dim(),
                actual: v.len(),
            });
        }
        let t = self
            .tables
            .get(table)
            .ok_or_else(|| Error::Config(format!("table {table} out of range")))?;
        Ok(signature_with(&t.planes, self.store.dim(), v))
    }

    /// Sorted positions of every stored vector sharing a bucket with `query`
    /// in at least one table.
    pub fn candidates(&self, query: &[f32]) -> Vec<usize> {
        let dim = self.store.dim();
        let set: BTreeSet<u32> = self
            .tables
            .iter()
            .filter_map(|t| t.buckets.get(&signature_with(&t.planes, dim, query)))
            .flatten()
            .copied()
            .collect();
        set.into_iter().map(|i| i as usize).collect()
    }

    /// Candidate ids for `query`, sorted.
    pub fn candidate_ids(&self, query: &[f32]) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .candidates(query)
            .into_iter()
            .map(|i| self.store.id(i))
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Occupancy of every non-empty bucket of one table.
    pub fn bucket_sizes(&self, table: usize) -> Vec<usize> {
        self.tables
            .get(table)
            .map(|t| t.buckets.values().map(Vec::len).collect())
            .unwrap_or_default()
    }

    /// Number of buckets in `table` containing `id`.
    pub fn bucket_count_for(&self, table: usize, id: &str) -> usize {
        let Some(pos) = self.store.position(id) else {
            return 0;
        };
        self.tables.get(table).map_or(0, |t| {
            t.buckets
                .values()
                .filter(|b| b.contains(&(pos as u32)))
                .count()
        })
    }

    pub(crate) fn raw(&self) -> (Vec<Vec<f32>>, Vec<Vec<u64>>) {
        self.tables
            .iter()
            .map(|t| (t.planes.clone(), t.signatures.clone()))
            .unzip()
    }

    pub(crate) fn from_raw(
        params: LshParams,
        store: VectorStore,
        planes: Vec<Vec<f32>>,
        signatures: Vec<Vec<u64>>,
    ) -> Result<Self> {
        params.validate()?;
        let corrupt = |msg: &str| Error::Corrupt(format!("LSH block: {msg}"));
        if planes.len() != params.n_tables || signatures.len() != params.n_tables {
            return Err(corrupt("table count does not match parameters"));
        }
        let dim = store.dim();
        let mut tables = Vec::with_capacity(params.n_tables);
        for (planes, signatures) in planes.into_iter().zip(signatures) {
            if planes.len() != params.n_projections * dim {
                return Err(corrupt("hyperplane block has the wrong size"));
            }
            if signatures.len() != store.len() {
                return Err(corrupt("signature count does not match record count"));
            }
            let mut buckets: HashMap<u64, Vec<u32>> = HashMap::new();
            for (pos, &sig) in signatures.iter().enumerate() {
                if signature_with(&planes, dim, store.vector(pos)) != sig {
                    return Err(corrupt("signature disagrees with stored hyperplanes"));
                }
                buckets.entry(sig).or_default().push(pos as u32);
            }
            tables.push(Table {
                planes,
                signatures,
                buckets,
            });
        }
        Ok(LshIndex {
            params,
            store,
            tables,
        })
    }
}

impl VectorIndex for LshIndex {
    fn metric(&self) -> Metric {
        Metric::Cosine
    }

    fn store(&self) -> &VectorStore {
        &self.store
    }

    fn insert(&mut self, id: String, vector: &[f32]) -> Result<()> {
        let pos = self.store.push(id, vector)?;
        let dim = self.store.dim();
        for t in &mut self.tables {
            let sig = signature_with(&t.planes, dim, vector);
            t.signatures.push(sig);
            t.buckets.entry(sig).or_default().push(pos as u32);
        }
        Ok(())
    }

    fn search(&self, query: &[f32], k: usize) -> (Vec<Hit>, SearchStats) {
        let candidates = self.candidates(query);
        let qn = norm(query);
        let scored: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&i| {
                let v = self.store.vector(i);
                let sim = (dot(query, v) / (qn * norm(v))).clamp(-1.0, 1.0);
                (i, 1.0 - sim)
            })
            .collect();
        let stats = SearchStats {
            distance_evals: scored.len(),
            candidates: scored.len(),
        };
        (finalize(&self.store, scored, k), stats)
    }
}
