//! Versioned, checksummed binary snapshots of a [`Database`].
//!
//! All integers and floats are little-endian. The layout is documented in
//! `docs/snapshot-format.md`:
//!
//! ```text
//! magic "THSTLSNP" | version u8 | payload_len u64 | payload | crc32(payload) u32
//! ```
//!
//! Saving writes a sibling temp file and renames it into place, so a failed
//! save never leaves a partial snapshot behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::db::{Backend, Database};
use crate::error::{Error, Result};
use crate::flat::FlatIndex;
use crate::hnsw::{HnswIndex, HnswParams, HnswRaw};
use crate::index::{BackendKind, BackendParams, IndexConfig, VectorIndex, VectorStore};
use crate::lsh::{LshIndex, LshParams};
use crate::vecmath::{Embedding, Metric};

pub const MAGIC: &[u8; 8] = b"THSTLSNP";
pub const FORMAT_VERSION: u8 = 1;
const PREAMBLE: usize = 8 + 1 + 8;

pub fn save_snapshot(db: &Database, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(db);
    let tmp = temp_path(path);
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Database> {
    decode(&fs::read(path)?)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Serializes the full database state.
pub fn encode(db: &Database) -> Vec<u8> {
    let mut p = Writer::default();
    let config = db.config();
    let store = db.backend().store();

    p.u8(config.backend.tag());
    p.u8(config.metric().tag());
    p.u32(config.dim as u32);
    p.u8(config.normalize_on_insert as u8);
    let seed = match &config.params {
        BackendParams::Flat => 0,
        BackendParams::Hnsw(h) => h.seed,
        BackendParams::Lsh(l) => l.seed,
    };
    p.u64(seed);
    p.u64(store.len() as u64);
    match &config.params {
        BackendParams::Flat => {}
        BackendParams::Hnsw(h) => {
            p.u32(h.m as u32);
            p.u32(h.ef_construction as u32);
            p.u32(h.ef_search as u32);
            p.u32(h.max_layers as u32);
            p.f64(h.level_norm);
        }
        BackendParams::Lsh(l) => {
            p.u32(l.n_projections as u32);
            p.u32(l.n_tables as u32);
        }
    }

    for ((id, v), text) in store.iter().zip(db.texts()) {
        p.str(id);
        p.str(text);
        v.iter().for_each(|&x| p.f32(x));
    }

    match db.backend() {
        Backend::Flat(_) => {}
        Backend::Hnsw(h) => {
            let raw = h.raw();
            match raw.entry_point {
                Some(ep) => {
                    p.u8(1);
                    p.u32(ep);
                }
                None => {
                    p.u8(0);
                    p.u32(0);
                }
            }
            p.u128(raw.rng_word_pos);
            for layers in &raw.links {
                p.u8(layers.len() as u8);
                for list in layers {
                    p.u32(list.len() as u32);
                    list.iter().for_each(|&n| p.u32(n));
                }
            }
        }
        Backend::Lsh(l) => {
            let (planes, signatures) = l.raw();
            for (pl, sigs) in planes.iter().zip(&signatures) {
                pl.iter().for_each(|&x| p.f32(x));
                sigs.iter().for_each(|&s| p.u64(s));
            }
        }
    }

    let payload = p.0;
    let mut out = Vec::with_capacity(PREAMBLE + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Database> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncated);
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Corrupt("not a snapshot file (bad magic)".into()));
    }
    let version = *bytes.get(8).ok_or(Error::Truncated)?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len_bytes = bytes.get(9..PREAMBLE).ok_or(Error::Truncated)?;
    let payload_len = u64::from_le_bytes(len_bytes.try_into().unwrap());
    let payload_len = usize::try_from(payload_len).map_err(|_| Error::Truncated)?;
    let end = PREAMBLE.checked_add(payload_len).ok_or(Error::Truncated)?;
    if bytes.len() < end + 4 {
        return Err(Error::Truncated);
    }
    if bytes.len() > end + 4 {
        return Err(Error::Corrupt("trailing bytes after checksum".into()));
    }
    let payload = &bytes[PREAMBLE..end];
    let stored = u32::from_le_bytes(bytes[end..end + 4].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    decode_payload(&mut Reader {
        buf: payload,
        pos: 0,
    })
}

fn decode_payload(r: &mut Reader<'_>) -> Result<Database> {
    let backend = BackendKind::from_tag(r.u8()?)
        .ok_or_else(|| Error::Corrupt("unknown backend tag".into()))?;
    let metric =
        Metric::from_tag(r.u8()?).ok_or_else(|| Error::Corrupt("unknown metric tag".into()))?;
    if metric != backend.metric() {
        return Err(Error::Corrupt("metric does not match backend".into()));
    }
    let dim = r.u32()? as usize;
    let normalize = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(Error::Corrupt("bad normalize flag".into())),
    };
    let seed = r.u64()?;
    let count = usize::try_from(r.u64()?).map_err(|_| Error::Corrupt("record count".into()))?;
    let params = match backend {
        BackendKind::IterativeCosine | BackendKind::IterativeEuclidean => BackendParams::Flat,
        BackendKind::HnswCosine | BackendKind::HnswEuclidean => BackendParams::Hnsw(HnswParams {
            m: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
            max_layers: r.u32()? as usize,
            level_norm: r.f64()?,
            seed,
        }),
        BackendKind::Lsh => BackendParams::Lsh(LshParams {
            n_projections: r.u32()? as usize,
            n_tables: r.u32()? as usize,
            seed,
        }),
    };
    let config = IndexConfig {
        backend,
        dim,
        params,
        normalize_on_insert: normalize,
    };
    config
        .validate()
        .map_err(|e| Error::Corrupt(format!("stored config is invalid: {e}")))?;

    // Every record needs at least its two length prefixes and its vector.
    if count.saturating_mul(8 + 4 * dim) > r.remaining() {
        return Err(Error::Corrupt("record count exceeds payload".into()));
    }
    let mut store = VectorStore::new(dim);
    let mut texts = Vec::with_capacity(count);
    let mut vector = Vec::with_capacity(dim);
    for _ in 0..count {
        let id = r.string()?;
        let text = r.string()?;
        vector.clear();
        for _ in 0..dim {
            vector.push(r.f32()?);
        }
        Embedding::new(vector.clone()).map_err(|e| Error::Corrupt(e.to_string()))?;
        store
            .push(id, &vector)
            .map_err(|e| Error::Corrupt(e.to_string()))?;
        texts.push(text);
    }

    let backend_state = match &config.params {
        BackendParams::Flat => Backend::Flat(FlatIndex::from_store(metric, store)),
        BackendParams::Hnsw(h) => {
            let has_entry = r.u8()?;
            let ep = r.u32()?;
            let entry_point = match has_entry {
                0 => None,
                1 => Some(ep),
                _ => return Err(Error::Corrupt("bad entry point flag".into())),
            };
            let rng_word_pos = r.u128()?;
            let mut links = Vec::with_capacity(count);
            for _ in 0..count {
                let n_layers = r.u8()? as usize;
                let mut layers = Vec::with_capacity(n_layers);
                for _ in 0..n_layers {
                    let deg = r.u32()? as usize;
                    if deg.saturating_mul(4) > r.remaining() {
                        return Err(Error::Corrupt("adjacency list exceeds payload".into()));
                    }
                    layers.push((0..deg).map(|_| r.u32()).collect::<Result<Vec<_>>>()?);
                }
                links.push(layers);
            }
            let raw = HnswRaw {
                links,
                entry_point,
                rng_word_pos,
            };
            Backend::Hnsw(HnswIndex::from_raw(metric, h.clone(), store, raw)?)
        }
        BackendParams::Lsh(l) => {
            let mut planes = Vec::with_capacity(l.n_tables);
            let mut signatures = Vec::with_capacity(l.n_tables);
            for _ in 0..l.n_tables {
                planes.push(
                    (0..l.n_projections * dim)
                        .map(|_| r.f32())
                        .collect::<Result<Vec<_>>>()?,
                );
                signatures.push((0..count).map(|_| r.u64()).collect::<Result<Vec<_>>>()?);
            }
            Backend::Lsh(LshIndex::from_raw(l.clone(), store, planes, signatures)?)
        }
    };
    if r.remaining() != 0 {
        return Err(Error::Corrupt(format!(
            "{} unread payload bytes",
            r.remaining()
        )));
    }
    debug_assert_eq!(backend_state.len(), texts.len());
    Ok(Database::from_parts(config, texts, backend_state))
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let bytes = self.bytes(N)?;
        Ok(bytes.try_into().unwrap())
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Corrupt("unexpected end of payload".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.bytes(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Corrupt("invalid UTF-8 string".into()))
    }
}
