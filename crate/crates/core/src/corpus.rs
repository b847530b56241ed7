//! Line-delimited JSON corpus files.
//!
//! One object per line: `{"id": "...", "text": "...", "vector": [..]}`.
//! `text` may be omitted. `vector` is required here; text-only files are
//! turned into vector files by the external embedding sidecar first.
//! Blank lines are skipped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::DocRecord;
use crate::vecmath::Embedding;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusLine {
    id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    vector: Option<Vec<f32>>,
}

#[derive(Serialize)]
struct CorpusLineOut<'a> {
    id: &'a str,
    text: &'a str,
    vector: &'a [f32],
}

/// Drops everything except letters, digits and whitespace, then collapses
/// whitespace runs to one space.
pub fn clean_text(text: &str) -> String {
    let kept: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Reads a corpus file, cleaning text and preserving file order.
///
/// With `expected_dim` unset, the first record fixes the dimension.
pub fn ingest(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Vec<DocRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut dim = expected_dim;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message,
        };
        let parsed: CorpusLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if parsed.id.is_empty() {
            return Err(err("empty id".into()));
        }
        let vector = parsed
            .vector
            .ok_or_else(|| err("missing \"vector\" (run the embedding sidecar first)".into()))?;
        let want = *dim.get_or_insert(vector.len());
        if vector.len() != want {
            return Err(err(format!(
                "dimension mismatch: expected {want}, got {}",
                vector.len()
            )));
        }
        let embedding = Embedding::new(vector).map_err(|e| err(e.to_string()))?;
        if !seen.insert(parsed.id.clone()) {
            return Err(err(format!("duplicate id {:?}", parsed.id)));
        }
        records.push(DocRecord {
            id: parsed.id,
            text: clean_text(parsed.text.as_deref().unwrap_or("")),
            embedding,
        });
    }
    Ok(records)
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[DocRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        let line = CorpusLineOut {
            id: &r.id,
            text: &r.text,
            vector: r.embedding.as_slice(),
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
