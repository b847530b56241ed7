//! Embedding store answering top-k nearest-neighbor queries through one of
//! five interchangeable backends: exact scans under cosine or Euclidean
//! distance, HNSW graphs under either metric, and random-hyperplane LSH.
//!
//! ```
//! use thistle_core::{BackendKind, Database, DocRecord, Embedding, IndexConfig};
//!
//! let mut db = Database::new(IndexConfig::new(BackendKind::IterativeCosine, 2)).unwrap();
//! db.load(vec![
//!     DocRecord::new("a", "", Embedding::new(vec![1.0, 0.0]).unwrap()),
//!     DocRecord::new("b", "", Embedding::new(vec![0.0, 1.0]).unwrap()),
//! ])
//! .unwrap();
//! let hits = db.query(&Embedding::new(vec![0.9, 0.2]).unwrap(), 1).unwrap();
//! assert_eq!(hits.top().unwrap().id, "a");
//! ```

pub mod corpus;
pub mod db;
pub mod error;
pub mod eval;
pub mod flat;
pub mod hnsw;
pub mod index;
pub mod lsh;
pub mod plot;
pub mod snapshot;
pub mod synthetic;
pub mod vecmath;

pub use db::{Backend, Database};
pub use error::{Error, Result};
pub use eval::{run_eval, run_matrix, EvalOptions, EvalPair, EvalReport};
pub use flat::FlatIndex;
pub use hnsw::{HnswIndex, HnswParams};
pub use index::{
    BackendKind, BackendParams, DocRecord, Hit, IndexConfig, InsertReport, QueryResult,
    SearchStats, VectorIndex,
};
pub use lsh::{LshIndex, LshParams};
pub use snapshot::{load_snapshot, save_snapshot};
pub use vecmath::{cosine_distance, euclidean_distance, Embedding, Metric};
