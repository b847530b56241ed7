use std::collections::HashSet;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::flat::FlatIndex;
use crate::hnsw::HnswIndex;
use crate::index::{
    BackendKind, BackendParams, DocRecord, Hit, IndexConfig, InsertReport, QueryResult,
    SearchStats, VectorIndex, VectorStore,
};
use crate::lsh::LshIndex;
use crate::vecmath::{is_zero, norm, Embedding, Metric};

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Backend {
    Flat(FlatIndex),
    Hnsw(HnswIndex),
    Lsh(LshIndex),
}

impl Backend {
    fn build(config: &IndexConfig) -> Result<Backend> {
        let metric = config.metric();
        Ok(match &config.params {
            BackendParams::Flat => Backend::Flat(FlatIndex::new(metric, config.dim)),
            BackendParams::Hnsw(p) => Backend::Hnsw(HnswIndex::new(metric, config.dim, p.clone())?),
            BackendParams::Lsh(p) => Backend::Lsh(LshIndex::new(config.dim, p.clone())?),
        })
    }

    fn as_index(&self) -> &dyn VectorIndex {
        match self {
            Backend::Flat(i) => i,
            Backend::Hnsw(i) => i,
            Backend::Lsh(i) => i,
        }
    }

    fn as_index_mut(&mut self) -> &mut dyn VectorIndex {
        match self {
            Backend::Flat(i) => i,
            Backend::Hnsw(i) => i,
            Backend::Lsh(i) => i,
        }
    }
}

impl VectorIndex for Backend {
    fn metric(&self) -> Metric {
        self.as_index().metric()
    }

    fn store(&self) -> &VectorStore {
        self.as_index().store()
    }

    fn insert(&mut self, id: String, vector: &[f32]) -> Result<()> {
        self.as_index_mut().insert(id, vector)
    }

    fn search(&self, query: &[f32], k: usize) -> (Vec<Hit>, SearchStats) {
        self.as_index().search(query, k)
    }
}

/// A single index plus the passage text of every record.
///
/// One writer at a time; `query` takes `&self` and is safe to call from many
/// threads once loading has finished.
#[derive(Clone, Debug)]
pub struct Database {
    config: IndexConfig,
    texts: Vec<String>,
    backend: Backend,
}

impl Database {
    pub fn new(config: IndexConfig) -> Result<Self> {
        config.validate()?;
        let backend = Backend::build(&config)?;
        Ok(Database {
            config,
            texts: Vec::new(),
            backend,
        })
    }

    pub(crate) fn from_parts(config: IndexConfig, texts: Vec<String>, backend: Backend) -> Self {
        Database {
            config,
            texts,
            backend,
        }
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn kind(&self) -> BackendKind {
        self.config.backend
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn text(&self, id: &str) -> Option<&str> {
        self.backend
            .store()
            .position(id)
            .map(|i| self.texts[i].as_str())
    }

    pub(crate) fn texts(&self) -> &[String] {
        &self.texts
    }

    /// Stored records in insertion order. Embeddings are as stored, i.e.
    /// normalized when `normalize_on_insert` is set.
    pub fn records(&self) -> impl Iterator<Item = DocRecord> + '_ {
        self.backend
            .store()
            .iter()
            .zip(&self.texts)
            .map(|((id, v), text)| DocRecord {
                id: id.to_owned(),
                text: text.clone(),
                embedding: Embedding::new(v.to_vec()).expect("stored vectors are valid"),
            })
    }

    /// Inserts a batch. Nothing is inserted unless every record is valid.
    pub fn load(&mut self, records: Vec<DocRecord>) -> Result<InsertReport> {
        let start = Instant::now();
        let mut batch_ids = HashSet::with_capacity(records.len());
        for (index, rec) in records.iter().enumerate() {
            if rec.id.is_empty() {
                return Err(Error::EmptyId(index));
            }
            if rec.embedding.dim() != self.config.dim {
                return Err(Error::RecordDimension {
                    index,
                    id: rec.id.clone(),
                    expected: self.config.dim,
                    actual: rec.embedding.dim(),
                });
            }
            if self.backend.contains(&rec.id) || !batch_ids.insert(rec.id.as_str()) {
                return Err(Error::DuplicateId(rec.id.clone()));
            }
            if (self.config.normalize_on_insert || self.config.metric() == Metric::Cosine)
                && is_zero(rec.embedding.as_slice())
            {
                return Err(Error::ZeroVector);
            }
        }
        let count = records.len();
        for rec in records {
            let vector = self.prepare(rec.embedding.as_slice());
            self.backend.insert(rec.id, &vector)?;
            self.texts.push(rec.text);
        }
        Ok(InsertReport {
            count,
            elapsed: start.elapsed(),
        })
    }

    pub fn query(&self, query: &Embedding, k: usize) -> Result<QueryResult> {
        self.query_with_stats(query, k).map(|(r, _)| r)
    }

    pub fn query_with_stats(
        &self,
        query: &Embedding,
        k: usize,
    ) -> Result<(QueryResult, SearchStats)> {
        if k == 0 {
            return Err(Error::InvalidK);
        }
        if query.dim() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                actual: query.dim(),
            });
        }
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if (self.config.normalize_on_insert || self.config.metric() == Metric::Cosine)
            && is_zero(query.as_slice())
        {
            return Err(Error::ZeroVector);
        }
        let q = self.prepare(query.as_slice());
        let (hits, stats) = self.backend.search(&q, k);
        Ok((QueryResult { hits }, stats))
    }

    fn prepare(&self, v: &[f32]) -> Vec<f32> {
        if self.config.normalize_on_insert {
            let n = norm(v);
            v.iter().map(|&x| (x as f64 / n) as f32).collect()
        } else {
            v.to_vec()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hnsw::HnswParams;
    use crate::lsh::LshParams;

    fn rec(id: &str, v: &[f32]) -> DocRecord {
        DocRecord::new(id, "", Embedding::new(v.to_vec()).unwrap())
    }

    fn emb(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn db(kind: BackendKind, dim: usize) -> Database {
        Database::new(IndexConfig::new(kind, dim)).unwrap()
    }

    #[test]
    fn load_counts_records() {
        let mut d = db(BackendKind::IterativeCosine, 2);
        let r = d
            .load(vec![
                rec("a", &[1.0, 0.0]),
                rec("b", &[0.0, 1.0]),
                rec("c", &[1.0, 1.0]),
            ])
            .unwrap();
        assert_eq!(r.count, 3);
        assert_eq!(d.len(), 3);
        let r = d.load(vec![]).unwrap();
        assert_eq!(r.count, 0);
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn load_is_all_or_nothing() {
        for kind in BackendKind::ALL {
            let mut d = db(kind, 2);
            d.load(vec![rec("x", &[1.0, 1.0])]).unwrap();
            let err = d
                .load(vec![
                    rec("a", &[1.0, 0.0]),
                    rec("b", &[0.0, 1.0]),
                    rec("a", &[1.0, 1.0]),
                ])
                .unwrap_err();
            assert!(
                matches!(err, Error::DuplicateId(ref id) if id == "a"),
                "{kind}"
            );
            assert_eq!(d.len(), 1);
            let err = d
                .load(vec![rec("a", &[1.0, 0.0]), rec("x", &[1.0, 1.0])])
                .unwrap_err();
            assert!(matches!(err, Error::DuplicateId(ref id) if id == "x"));
            let err = d
                .load(vec![rec("a", &[1.0, 0.0]), rec("b", &[1.0])])
                .unwrap_err();
            assert!(matches!(err, Error::RecordDimension { index: 1, .. }));
            assert_eq!(d.len(), 1);
            assert_eq!(d.query(&emb(&[1.0, 1.0]), 5).unwrap().len(), 1);
        }
    }

    #[test]
    fn empty_id_and_zero_vectors() {
        let mut d = db(BackendKind::IterativeCosine, 2);
        assert!(matches!(
            d.load(vec![rec("", &[1.0, 0.0])]),
            Err(Error::EmptyId(0))
        ));
        assert!(matches!(
            d.load(vec![rec("z", &[0.0, 0.0])]),
            Err(Error::ZeroVector)
        ));
        let mut e = db(BackendKind::IterativeEuclidean, 2);
        e.load(vec![rec("z", &[0.0, 0.0])]).unwrap();
        assert_eq!(e.query(&emb(&[0.0, 0.0]), 1).unwrap().hits[0].id, "z");
        d.load(vec![rec("a", &[1.0, 0.0])]).unwrap();
        assert!(matches!(
            d.query(&emb(&[0.0, 0.0]), 1),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn query_errors() {
        let d = db(BackendKind::HnswEuclidean, 3);
        assert!(matches!(
            d.query(&emb(&[1.0, 0.0, 0.0]), 1),
            Err(Error::EmptyIndex)
        ));
        assert!(matches!(
            d.query(&emb(&[1.0, 0.0]), 1),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        ));
        assert!(matches!(
            d.query(&emb(&[1.0, 0.0, 0.0]), 0),
            Err(Error::InvalidK)
        ));
    }

    #[test]
    fn cosine_worked_example() {
        let mut d = db(BackendKind::IterativeCosine, 2);
        d.load(vec![
            rec("a", &[1.0, 0.0]),
            rec("b", &[0.0, 1.0]),
            rec("c", &[0.9, 0.1]),
        ])
        .unwrap();
        let r = d.query(&emb(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["a", "c"]);
        assert_eq!(r.hits[0].distance, 0.0);
        // c = [0.9, 0.1] as f32; cos = 0.9 / sqrt(0.82).
        let expected = 1.0 - 0.9 / 0.82f64.sqrt();
        assert!((r.hits[1].distance - expected).abs() < 1e-6);
        assert!((r.hits[1].distance - 0.006116265).abs() < 1e-6);
    }

    #[test]
    fn sole_record_found_by_every_backend() {
        for kind in BackendKind::ALL {
            let mut d = db(kind, 3);
            d.load(vec![rec("only", &[0.2, -0.4, 0.9])]).unwrap();
            let r = d.query(&emb(&[0.2, -0.4, 0.9]), 1).unwrap();
            assert_eq!(r.hits.len(), 1, "{kind}");
            assert_eq!(r.hits[0].id, "only");
            assert!(r.hits[0].distance.abs() < 1e-9);
        }
    }

    #[test]
    fn k_larger_than_corpus_returns_everything_sorted() {
        for kind in [BackendKind::IterativeEuclidean, BackendKind::HnswEuclidean] {
            let mut d = db(kind, 1);
            d.load((0..7).map(|i| rec(&format!("r{i}"), &[i as f32])).collect())
                .unwrap();
            let r = d.query(&emb(&[2.2]), 100).unwrap();
            assert_eq!(
                r.ids().collect::<Vec<_>>(),
                ["r2", "r3", "r1", "r4", "r0", "r5", "r6"]
            );
        }
    }

    #[test]
    fn normalize_on_insert_stores_unit_vectors() {
        let cfg = IndexConfig::new(BackendKind::IterativeEuclidean, 2).with_normalize(true);
        let mut d = Database::new(cfg).unwrap();
        d.load(vec![rec("a", &[3.0, 4.0]), rec("b", &[0.0, 10.0])])
            .unwrap();
        let stored: Vec<_> = d.records().collect();
        assert!((stored[0].embedding.norm() - 1.0).abs() < 1e-6);
        let r = d.query(&emb(&[0.0, 0.5]), 1).unwrap();
        assert_eq!(r.hits[0].id, "b");
        assert!(r.hits[0].distance < 1e-6);
        assert!(matches!(
            d.load(vec![rec("z", &[0.0, 0.0])]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn rejects_invalid_params_up_front() {
        let cfg =
            IndexConfig::new(BackendKind::Lsh, 4).with_params(BackendParams::Lsh(LshParams {
                n_projections: 0,
                ..LshParams::default()
            }));
        assert!(matches!(Database::new(cfg), Err(Error::Config(_))));
        let cfg = IndexConfig::new(BackendKind::HnswCosine, 4).with_params(BackendParams::Hnsw(
            HnswParams {
                ef_construction: 1,
                ..HnswParams::default()
            },
        ));
        assert!(Database::new(cfg).is_err());
    }

    #[test]
    fn texts_are_kept() {
        let mut d = db(BackendKind::Lsh, 2);
        d.load(vec![DocRecord::new(
            "a",
            "Blue Armadillo",
            emb(&[1.0, 0.5]),
        )])
        .unwrap();
        assert_eq!(d.text("a"), Some("Blue Armadillo"));
        assert_eq!(d.text("b"), None);
    }
}
