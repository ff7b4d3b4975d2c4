//! QIDX persistence.
//!
//! ```text
//! "QIDX" | u16 version=1 | u8 mode (0 exact, 1 hnsw) | u32 dim | u64 count
//! count × ( str id | str label | str language | dim × f32 )
//! hnsw only, per node: u8 max_level, per level 0..=max_level: u32 n | n × u32 ordinal
//! u32 CRC32 of every preceding byte
//! ```
//! Strings are u32 length-prefixed UTF-8; all integers little-endian.

use std::path::Path;

use super::{HnswGraph, IndexEntry, QueryIndex};
use crate::binio::{self, ByteReader};
use crate::embedding::dot;
use crate::error::{Error, Result};

pub const QIDX_MAGIC: &[u8; 4] = b"QIDX";
pub const QIDX_VERSION: u16 = 1;

impl QueryIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(QIDX_MAGIC);
        binio::put_u16(&mut out, QIDX_VERSION);
        out.push(u8::from(self.graph.is_some()));
        binio::put_u32(&mut out, self.dim as u32);
        binio::put_u64(&mut out, self.entries.len() as u64);
        for e in &self.entries {
            binio::put_str(&mut out, &e.id);
            binio::put_str(&mut out, &e.label);
            binio::put_str(&mut out, &e.language);
            binio::put_f32s(&mut out, &e.vector);
        }
        if let Some(g) = &self.graph {
            for levels in g.links() {
                out.push((levels.len() - 1) as u8);
                for nbrs in levels {
                    binio::put_u32(&mut out, nbrs.len() as u32);
                    for &m in nbrs {
                        binio::put_u32(&mut out, m);
                    }
                }
            }
        }
        binio::seal_crc(&mut out);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        ByteReader::new(buf).magic(QIDX_MAGIC)?;
        let payload = binio::unseal_crc(buf)?;
        let mut r = ByteReader::new(payload);
        r.take(4)?;
        let version = r.u16()?;
        if version != QIDX_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "QIDX",
                version,
            });
        }
        let mode = r.u8()?;
        if mode > 1 {
            return Err(Error::Corrupt(format!("unknown index mode byte {mode}")));
        }
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        if dim == 0 {
            return Err(Error::Corrupt("index dim is 0".into()));
        }
        if count.saturating_mul(12 + 4 * dim) > r.remaining() {
            return Err(Error::Truncated {
                offset: r.position(),
                expected: count.saturating_mul(12 + 4 * dim),
                actual: r.remaining(),
            });
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let id = r.string()?;
            let label = r.string()?;
            let language = r.string()?;
            let vector = r.f32s(dim)?;
            let norm = dot(&vector, &vector).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > 1e-5 {
                return Err(Error::Corrupt(format!("entry {id:?} is not unit-norm")));
            }
            entries.push(IndexEntry {
                id,
                label,
                language,
                vector,
            });
        }
        let graph = if mode == 1 {
            let mut links = Vec::with_capacity(count);
            for _ in 0..count {
                let max_level = r.u8()? as usize;
                let mut levels = Vec::with_capacity(max_level + 1);
                for _ in 0..=max_level {
                    let n = r.u32()? as usize;
                    if n.saturating_mul(4) > r.remaining() {
                        return Err(Error::Truncated {
                            offset: r.position(),
                            expected: n.saturating_mul(4),
                            actual: r.remaining(),
                        });
                    }
                    levels.push((0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?);
                }
                links.push(levels);
            }
            Some(HnswGraph::from_links(links)?)
        } else {
            None
        };
        r.finish()?;
        Ok(QueryIndex::from_parts(dim, entries, graph))
    }
}

pub fn save_index(ix: &QueryIndex, path: &Path) -> Result<()> {
    binio::write_file(path, &ix.to_bytes())
}

pub fn load_index(path: &Path) -> Result<QueryIndex> {
    QueryIndex::from_bytes(&binio::read_file(path)?)
}
