//! Sentence vectors and cosine geometry.
//!
//! Vectors are kept as `f32` (the on-disk precision) and widened to `f64` for
//! every computation.
//!
//! Binary layout (`ALEMB1`), all integers little-endian:
//!
//! ```text
//! magic   "ALEMB1\0"            7 bytes
//! dim     u32
//! count   u64
//! record  u32 id_len | id bytes (UTF-8) | dim x f32
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::corpus::Corpus;
use crate::{Error, Result};

pub const MAGIC: &[u8; 7] = b"ALEMB1\0";
pub const DEFAULT_FALLBACK_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
    pub source_tag: String,
}

impl EmbeddingStore {
    pub fn new(dim: usize, source_tag: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("embedding dim must be positive".into()));
        }
        Ok(EmbeddingStore {
            dim,
            vectors: BTreeMap::new(),
            source_tag: source_tag.into(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Format(format!(
                "vector for `{id}` has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("vector for `{id}` has non-finite components")));
        }
        if self.vectors.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    /// Widened copy of the vector for `id`; a missing id is a coverage error.
    pub fn vector(&self, id: &str) -> Result<Vec<f64>> {
        self.get(id)
            .map(|v| v.iter().map(|&x| f64::from(x)).collect())
            .ok_or_else(|| Error::coverage("embedding", id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<f32>)> {
        self.vectors.iter()
    }

    /// Embed every corpus source with [`fallback_embed`].
    pub fn fallback(corpus: &Corpus, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config("fallback embedding dim must be >= 2".into()));
        }
        let embedded: Vec<(String, Vec<f32>)> = corpus
            .records()
            .par_iter()
            .map(|r| {
                let v = fallback_embed(&r.source, dim).into_iter().map(|x| x as f32).collect();
                (r.id.clone(), v)
            })
            .collect();
        let mut store = EmbeddingStore::new(dim, "fallback")?;
        for (id, v) in embedded {
            store.insert(id, v)?;
        }
        Ok(store)
    }

    /// Load `ALEMB1` binary, or JSONL when the magic is absent.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(MAGIC) {
            Self::from_alemb1(&bytes)
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Format(format!("{}: neither ALEMB1 nor UTF-8 JSONL", path.display())))?;
            Self::from_jsonl(&text, path)
        }
    }

    fn from_alemb1(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: MAGIC.len() };
        let dim = cur.u32()? as usize;
        let count = cur.u64()?;
        let mut store = EmbeddingStore::new(dim, "file")?;
        for _ in 0..count {
            let id_len = cur.u32()? as usize;
            let id = std::str::from_utf8(cur.take(id_len)?)
                .map_err(|_| Error::Format("record id is not UTF-8".into()))?
                .to_string();
            let raw = cur.take(dim * 4).map_err(|_| {
                Error::Format(format!("record `{id}` truncated: expected {dim} components"))
            })?;
            let v = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(id, v)?;
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after {count} records",
                bytes.len() - cur.pos
            )));
        }
        Ok(store)
    }

    fn from_jsonl(text: &str, path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            id: String,
            vector: Vec<f32>,
        }
        let mut store: Option<EmbeddingStore> = None;
        for (i, l) in text.lines().enumerate() {
            let line: Line = serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let s = match store.as_mut() {
                Some(s) => s,
                None => store.insert(EmbeddingStore::new(line.vector.len(), "file")?),
            };
            s.insert(line.id, line.vector)?;
        }
        store.ok_or_else(|| Error::Format(format!("{}: no embedding records", path.display())))
    }

    pub fn to_alemb1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(19 + self.vectors.len() * (8 + self.dim * 4));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.vectors.len() as u64).to_le_bytes());
        for (id, v) in &self.vectors {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn write_alemb1(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_alemb1()).map_err(|e| Error::io(path, e))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (id, v) in &self.vectors {
            serde_json::to_writer(&mut out, &serde_json::json!({"id": id, "vector": v}))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format("unexpected end of ALEMB1 data".into())),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic stand-in for a sentence encoder.
///
/// Each character 3-gram of the lowercased text is hashed (FNV-1a) into one of
/// `dim` buckets with a hash-derived sign; the result is L2-normalized. Text
/// with no 3-grams maps to the first basis vector.
pub fn fallback_embed(sentence: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 2, "fallback embedding dim must be >= 2");
    let chars: Vec<char> = sentence.to_lowercase().chars().collect();
    let mut acc = vec![0.0f64; dim];
    let mut buf = String::new();
    for gram in chars.windows(3) {
        buf.clear();
        buf.extend(gram);
        let h = fnv1a(buf.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[(h % dim as u64) as usize] += sign;
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        acc[0] = 1.0;
    } else {
        acc.iter_mut().for_each(|x| *x /= norm);
    }
    acc
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Degenerate(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (aa, bb) = (dot(a, a), dot(b, b));
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero vector".into()));
    }
    // sqrt(x * x) == |x| exactly, so identical inputs give exactly 1
    Ok(dot(a, b) / (aa * bb).sqrt())
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok((1.0 - cosine_similarity(a, b)?).clamp(0.0, 2.0))
}
