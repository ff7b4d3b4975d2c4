//! Embedding vectors, the QEMB store format and a deterministic hashing
//! embedder used when no neural encoder is available.
//!
//! QEMB layout (little-endian, no padding):
//!
//! ```text
//! "QEMB" | u16 version=1 | u32 dim | u64 count
//! count × ( u32 id_len | id bytes | dim × f32 )
//! u32 provider_len | provider bytes
//! ```
//!
//! Writers emit records sorted by id bytes. Readers accept any order but
//! reject duplicate ids and non-finite components.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use crate::binio::{self, ByteReader};
use crate::error::{Error, Result};

pub const QEMB_MAGIC: &[u8; 4] = b"QEMB";
pub const QEMB_VERSION: u16 = 1;

const NORM_TOLERANCE: f64 = 1e-5;
const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    normalized: bool,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidVector("dimension must be at least 1".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "component {pos} is {}",
                values[pos]
            )));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Wraps values already known to have unit norm. The norm is checked.
    pub fn new_normalized(values: Vec<f32>) -> Result<Self> {
        let mut v = Self::new(values)?;
        let n = v.norm();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidVector(format!("norm {n} is not 1")));
        }
        v.normalized = true;
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    /// Same direction with every component multiplied by `c`.
    pub fn scaled(&self, c: f32) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * c).collect())
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n <= MIN_NORM {
            return Err(Error::ZeroVector(n));
        }
        if self.normalized {
            return Ok(self.clone());
        }
        Ok(Self {
            values: self
                .values
                .iter()
                .map(|&v| (f64::from(v) / n) as f32)
                .collect(),
            normalized: true,
        })
    }
}

pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    v.normalize()
}

/// Dot product accumulated in f64, summing components in order.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na <= MIN_NORM || nb <= MIN_NORM {
        return Err(Error::ZeroVector(na.min(nb)));
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

/// Hashing embedder: signed feature hashing of character 3-grams of the
/// lowercased text (padded with `^`/`$` boundary marks), L2-normalized.
/// Shared substrings raise cosine similarity, which gives synthetic data a
/// realistic neighborhood structure without any model.
pub fn test_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector> {
    if dim < 8 {
        return Err(Error::InvalidVector(format!(
            "test embedder needs dim >= 8, got {dim}"
        )));
    }
    if text.trim().is_empty() {
        return Err(Error::InvalidVector("cannot embed empty text".into()));
    }
    let chars: Vec<char> = std::iter::once('^')
        .chain(text.to_lowercase().chars())
        .chain(std::iter::once('$'))
        .collect();
    let mut signed = vec![0f64; dim];
    let mut unsigned = vec![0f64; dim];
    let mut buf = [0u8; 12];
    for gram in chars.windows(3) {
        let mut h = FnvHasher::default();
        h.write(&seed.to_le_bytes());
        for c in gram {
            h.write(c.encode_utf8(&mut buf).as_bytes());
        }
        let hash = h.finish();
        let bucket = (hash % dim as u64) as usize;
        let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
        signed[bucket] += sign;
        unsigned[bucket] += 1.0;
    }
    // Signed counts can cancel exactly on very short inputs; fall back to
    // plain counts then.
    let raw = if signed.iter().any(|&v| v != 0.0) {
        signed
    } else {
        unsigned
    };
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = raw.iter().map(|v| (v / norm) as f32).collect();
    Ok(EmbeddingVector {
        values,
        normalized: true,
    })
}

/// Precomputed vectors keyed by record id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<String, EmbeddingVector>,
    provider: String,
}

impl EmbeddingStore {
    pub fn new(dim: usize, provider: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidVector("dimension must be at least 1".into()));
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
            provider: provider.into(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, v: EmbeddingVector) -> Result<()> {
        let id = id.into();
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        if self.entries.contains_key(&id) {
            return Err(Error::Corrupt(format!("duplicate embedding id {id:?}")));
        }
        self.entries.insert(id, v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.entries.get(id)
    }

    pub fn require(&self, id: &str) -> Result<&EmbeddingVector> {
        self.get(id)
            .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    /// Entries in id byte order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.entries.len() * (8 + 4 * self.dim));
        out.extend_from_slice(QEMB_MAGIC);
        binio::put_u16(&mut out, QEMB_VERSION);
        binio::put_u32(&mut out, self.dim as u32);
        binio::put_u64(&mut out, self.entries.len() as u64);
        for (id, v) in &self.entries {
            binio::put_str(&mut out, id);
            binio::put_f32s(&mut out, v.values());
        }
        binio::put_str(&mut out, &self.provider);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        r.magic(QEMB_MAGIC)?;
        let version = r.u16()?;
        if version != QEMB_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "QEMB",
                version,
            });
        }
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        if dim == 0 {
            return Err(Error::Corrupt("QEMB dim is 0".into()));
        }
        // Each record needs at least 4 + 4*dim bytes; catch absurd counts early.
        let min_record = 4 + 4 * dim as u64;
        if count.saturating_mul(min_record) > r.remaining() as u64 {
            return Err(Error::Truncated {
                offset: r.position(),
                expected: count.saturating_mul(min_record).min(usize::MAX as u64) as usize,
                actual: r.remaining(),
            });
        }
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let id = r.string()?;
            let values = r.f32s(dim)?;
            let v = EmbeddingVector::new(values)
                .map_err(|e| Error::Corrupt(format!("record {id:?}: {e}")))?;
            if entries.insert(id.clone(), v).is_some() {
                return Err(Error::Corrupt(format!("duplicate embedding id {id:?}")));
            }
        }
        let provider = r.string()?;
        r.finish()?;
        Ok(Self {
            dim,
            entries,
            provider,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes())
    }
}

pub fn load_embedding_store(path: &Path) -> Result<EmbeddingStore> {
    EmbeddingStore::from_bytes(&binio::read_file(path)?)
}

/// Embeds every record of a dataset with [`test_embed`].
pub fn embed_dataset(d: &crate::dataset::Dataset, dim: usize, seed: u64) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(dim, format!("test-hash:dim={dim}:seed={seed}"))?;
    for r in d.iter() {
        store.insert(r.id.clone(), test_embed(&r.text, dim, seed)?)?;
    }
    Ok(store)
}
