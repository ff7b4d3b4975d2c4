//! QLRM model files.
//!
//! ```text
//! "QLRM" | u16 version=1 | u32 dim | u32 classes
//! classes × ( u32 len | UTF-8 name )
//! classes × dim × f32 weights (row-major) | classes × f32 bias
//! u32 CRC32 of every preceding byte
//! ```

use std::path::Path;

use super::LogRegModel;
use crate::binio::{self, ByteReader};
use crate::error::{Error, Result};

pub const QLRM_MAGIC: &[u8; 4] = b"QLRM";
pub const QLRM_VERSION: u16 = 1;

impl LogRegModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(QLRM_MAGIC);
        binio::put_u16(&mut out, QLRM_VERSION);
        binio::put_u32(&mut out, self.dim as u32);
        binio::put_u32(&mut out, self.class_order.len() as u32);
        for c in &self.class_order {
            binio::put_str(&mut out, c);
        }
        binio::put_f32s(&mut out, &self.weights);
        binio::put_f32s(&mut out, &self.bias);
        binio::seal_crc(&mut out);
        out
    }

    /// Decodes a model. The regularization strength is not stored and is
    /// set to zero.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        ByteReader::new(buf).magic(QLRM_MAGIC)?;
        let payload = binio::unseal_crc(buf)?;
        let mut r = ByteReader::new(payload);
        r.take(4)?;
        let version = r.u16()?;
        if version != QLRM_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "QLRM",
                version,
            });
        }
        let dim = r.u32()? as usize;
        let classes = r.u32()? as usize;
        if classes.saturating_mul(4 + 4 * dim) > r.remaining() {
            return Err(Error::Truncated {
                offset: r.position(),
                expected: classes.saturating_mul(4 + 4 * dim),
                actual: r.remaining(),
            });
        }
        let class_order = (0..classes)
            .map(|_| r.string())
            .collect::<Result<Vec<_>>>()?;
        let weights = r.f32s(classes * dim)?;
        let bias = r.f32s(classes)?;
        r.finish()?;
        LogRegModel::from_parts(dim, weights, bias, class_order, 0.0)
    }
}

pub fn save_model(model: &LogRegModel, path: &Path) -> Result<()> {
    binio::write_file(path, &model.to_bytes())
}

pub fn load_model(path: &Path) -> Result<LogRegModel> {
    LogRegModel::from_bytes(&binio::read_file(path)?)
}
