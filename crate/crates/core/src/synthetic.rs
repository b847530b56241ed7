//! Seeded synthetic corpora for tests and the default benchmark.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::eval::EvalPair;
use crate::index::DocRecord;
use crate::vecmath::Embedding;

/// `n` standard Gaussian vectors of dimension `dim`.
pub fn gaussian_vectors(n: usize, dim: usize, seed: u64) -> Vec<Embedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| gaussian(&mut rng, dim)).collect()
}

/// Records `doc000000`, `doc000001`, ... wrapping the given embeddings.
pub fn records_from(embeddings: Vec<Embedding>) -> Vec<DocRecord> {
    embeddings
        .into_iter()
        .enumerate()
        .map(|(i, e)| DocRecord::new(doc_id(i), format!("synthetic passage {i}"), e))
        .collect()
}

pub fn doc_id(i: usize) -> String {
    format!("doc{i:06}")
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(e) = Embedding::new(v) {
            if e.norm() > 0.0 {
                return e;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyDuplicates {
    pub docs: usize,
    pub dim: usize,
    /// Documents that receive queries: the first `probe_docs` of the corpus.
    pub probe_docs: usize,
    pub queries_per_doc: usize,
    /// Norm of the perturbation relative to the unit-length document vector.
    pub noise: f64,
    pub seed: u64,
}

impl Default for NoisyDuplicates {
    fn default() -> Self {
        NoisyDuplicates {
            docs: 10_000,
            dim: 16,
            probe_docs: 100,
            queries_per_doc: 10,
            noise: 0.6,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Workload {
    pub records: Vec<DocRecord>,
    pub pairs: Vec<EvalPair>,
}

impl NoisyDuplicates {
    /// Unit-length random documents; each probed document gets
    /// `queries_per_doc` perturbed copies of itself as queries.
    ///
    /// Because every query targets one of the first `probe_docs` records, a
    /// prefix of the corpus of any size at least `probe_docs` keeps the whole
    /// query set, and larger prefixes only add distractors.
    pub fn generate(&self) -> Workload {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let docs: Vec<Embedding> = (0..self.docs)
            .map(|_| gaussian(&mut rng, self.dim).normalized().expect("non-zero"))
            .collect();
        let scale = self.noise / (self.dim as f64).sqrt();
        let mut pairs = Vec::with_capacity(self.probe_docs.min(self.docs) * self.queries_per_doc);
        for (i, doc) in docs.iter().enumerate().take(self.probe_docs) {
            for j in 0..self.queries_per_doc {
                let q: Vec<f32> = doc
                    .as_slice()
                    .iter()
                    .map(|&x| {
                        let e: f64 = rng.sample(StandardNormal);
                        (x as f64 + scale * e) as f32
                    })
                    .collect();
                pairs.push(EvalPair {
                    query_id: format!("q{i:06}_{j}"),
                    query: Embedding::new(q).expect("finite"),
                    expected_id: doc_id(i),
                });
            }
        }
        Workload {
            records: records_from(docs),
            pairs,
        }
    }
}
