//! Embedding through an external command that turns a text-only corpus file
//! into one with vectors.
//!
//! The command is run as `<cmd> <input> <output> --pooling <p> [--model <m>]`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::Command;

use thistle_core::corpus::ingest;
use thistle_core::DocRecord;

use crate::Failure;

pub struct Sidecar {
    program: String,
    args: Vec<String>,
    pooling: String,
    model: Option<String>,
}

impl Sidecar {
    /// `cmd` is split on whitespace, so it may carry its own arguments.
    pub fn new(cmd: &str, pooling: &str, model: Option<&str>) -> Result<Self, Failure> {
        let mut parts = cmd.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| Failure::usage("--sidecar-cmd is empty"))?;
        Ok(Sidecar {
            program,
            args: parts.collect(),
            pooling: pooling.to_owned(),
            model: model.map(str::to_owned),
        })
    }

    /// Embeds a corpus file and returns its records in file order.
    pub fn embed_file(&self, input: &Path, dim: Option<usize>) -> Result<Vec<DocRecord>, Failure> {
        let dir = tempfile::tempdir()?;
        let output = dir.path().join("embedded.jsonl");
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .arg(input)
            .arg(&output)
            .args(["--pooling", &self.pooling]);
        if let Some(model) = &self.model {
            cmd.args(["--model", model]);
        }
        let out = cmd
            .output()
            .map_err(|e| Failure::new("sidecar", format!("cannot run {:?}: {e}", self.program)))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(Failure::new(
                "sidecar",
                format!(
                    "{:?} failed ({}): {}",
                    self.program,
                    out.status,
                    stderr.trim()
                ),
            ));
        }
        Ok(ingest(&output, dim)?)
    }

    /// Embeds `(id, text)` pairs, returning vectors in input order.
    pub fn embed_texts(
        &self,
        items: &[(String, String)],
        dim: Option<usize>,
    ) -> Result<Vec<Vec<f32>>, Failure> {
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("texts.jsonl");
        let mut w = BufWriter::new(File::create(&input)?);
        for (id, text) in items {
            serde_json::to_writer(&mut w, &serde_json::json!({ "id": id, "text": text }))
                .map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        drop(w);
        let records = self.embed_file(&input, dim)?;
        if records.len() != items.len() {
            return Err(Failure::new(
                "sidecar",
                format!(
                    "sent {} texts, got {} vectors back",
                    items.len(),
                    records.len()
                ),
            ));
        }
        items
            .iter()
            .zip(records)
            .map(|((id, _), r)| {
                if &r.id != id {
                    return Err(Failure::new(
                        "sidecar",
                        format!("expected id {id:?} in sidecar output, found {:?}", r.id),
                    ));
                }
                Ok(r.embedding.into_vec())
            })
            .collect()
    }
}
