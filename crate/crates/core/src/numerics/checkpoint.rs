//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            10 bytes  "GARDO-CKPT"
//! format_version   u32       currently 1
//! activation       u8        0 = tanh, 1 = identity
//! tensor_count     u32       6
//! shape table      tensor_count × (name_len u8, name utf-8, rows u32, cols u32)
//! metadata_len     u32
//! metadata         utf-8 `key=value` lines
//! payload          every tensor in table order, row-major, f64 little-endian
//! ```
//!
//! Tensor order is `w1 b1 w2 b2 w3 b3`; biases are stored as `n × 1`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numerics::mlp::TENSOR_NAMES;
use crate::numerics::{Activation, Matrix, MlpParams};

pub const MAGIC: &[u8; 10] = b"GARDO-CKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Parameters plus free-form provenance (schedule, mixture, seed, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(params: MlpParams) -> Self {
        Self {
            params,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.params.activation.tag());
        out.extend_from_slice(&(TENSOR_NAMES.len() as u32).to_le_bytes());
        for (name, (rows, cols)) in TENSOR_NAMES.iter().zip(self.params.shape_table()) {
            out.push(name.len() as u8);
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(rows as u32).to_le_bytes());
            out.extend_from_slice(&(cols as u32).to_le_bytes());
        }
        let meta: String = self
            .metadata
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for v in self.params.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let activation = Activation::from_tag(r.u8()?)
            .ok_or_else(|| Error::Checkpoint("unknown activation tag".into()))?;
        let count = r.u32()? as usize;
        if count != TENSOR_NAMES.len() {
            return Err(Error::Checkpoint(format!("expected 6 tensors, found {count}")));
        }
        let mut shapes = Vec::with_capacity(count);
        for expected in TENSOR_NAMES {
            let len = r.u8()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
            if name != expected {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` where `{expected}` was expected"
                )));
            }
            shapes.push((r.u32()? as usize, r.u32()? as usize));
        }
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Checkpoint("metadata is not utf-8".into()))?;
        let metadata = meta
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();

        let mut tensors = Vec::with_capacity(count);
        for &(rows, cols) in &shapes {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            tensors.push((rows, cols, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after payload".into()));
        }
        let mut it = tensors.into_iter();
        let mut mat = || -> Result<Matrix> {
            let (rows, cols, data) = it.next().unwrap();
            Matrix::from_vec(rows, cols, data)
        };
        let w1 = mat()?;
        let b1 = mat()?.as_slice().to_vec();
        let w2 = mat()?;
        let b2 = mat()?.as_slice().to_vec();
        let w3 = mat()?;
        let b3 = mat()?.as_slice().to_vec();
        let params = MlpParams {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            activation,
        };
        let h = params.hidden();
        let consistent = params.w2.shape() == (h, h)
            && params.b1.len() == h
            && params.b2.len() == h
            && params.w3.shape() == (2, h)
            && params.b3.len() == 2
            && params.input_dim() >= 2;
        if !consistent {
            return Err(Error::Checkpoint("shape table does not chain".into()));
        }
        Ok(Self { params, metadata })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = MlpParams::init(5, 3, &mut Rng::new(8));
        p.b2[1] = -0.0;
        p.w1.set(0, 0, f64::MIN_POSITIVE / 4.0);
        let ck = Checkpoint::new(p).with_meta("mixture", "fig3").with_meta("seed", 8);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.metadata, ck.metadata);
        for (a, b) in back.params.iter().zip(ck.params.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn header_starts_with_magic() {
        let ck = Checkpoint::new(MlpParams::zeros(2, 1, Activation::Tanh));
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..10], b"GARDO-CKPT");
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 1);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = Checkpoint::new(MlpParams::zeros(2, 1, Activation::Tanh)).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
