//! `IFED` tensor dump format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"IFED" | version: u32 | ndims: u32 | dims: [u32; ndims] | payload: [f32; prod(dims)]
//! ```
//!
//! Payload is row-major. Round trips are bit-exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{TemporalMask, VideoLatent};

pub const MAGIC: &[u8; 4] = b"IFED";
pub const VERSION: u32 = 1;

/// An untyped dense `f32` tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Format(format!(
                "dims {dims:?} imply {n} values, payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        if cursor.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, expected IFED".into()));
        }
        let version = cursor.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let ndims = cursor.u32()? as usize;
        let dims = (0..ndims)
            .map(|_| cursor.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("dims overflow".into()))?;
        let payload = cursor.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Format("dims overflow".into()))?,
        )?;
        if cursor.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - cursor.pos
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn into_latent(self) -> Result<VideoLatent> {
        let dims: [usize; 4] = self.dims.as_slice().try_into().map_err(|_| {
            Error::Format(format!("expected 4 dims for a latent, got {:?}", self.dims))
        })?;
        VideoLatent::new(dims, self.data)
    }

    pub fn into_mask(self) -> Result<TemporalMask> {
        let dims: [usize; 3] = self.dims.as_slice().try_into().map_err(|_| {
            Error::Format(format!("expected 3 dims for a mask, got {:?}", self.dims))
        })?;
        TemporalMask::from_values(dims, self.data)
    }
}

impl From<&VideoLatent> for RawTensor {
    fn from(z: &VideoLatent) -> Self {
        RawTensor {
            dims: z.dims().to_vec(),
            data: z.data().to_vec(),
        }
    }
}

impl From<&TemporalMask> for RawTensor {
    fn from(m: &TemporalMask) -> Self {
        RawTensor {
            dims: m.dims().to_vec(),
            data: m.values().to_vec(),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated dump".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = RawTensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"IFED");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(&b[16..20], &2u32.to_le_bytes());
        assert_eq!(&b[20..24], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 28);
    }

    #[test]
    fn rejects_corruption() {
        let t = RawTensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut b = t.to_bytes();
        assert!(RawTensor::from_bytes(&b[..b.len() - 1]).is_err());
        b.push(0);
        assert!(RawTensor::from_bytes(&b).is_err());
        let mut bad = t.to_bytes();
        bad[0] = b'X';
        assert!(RawTensor::from_bytes(&bad).is_err());
    }

    #[test]
    fn file_round_trip_latent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.ifed");
        let z = VideoLatent::new([2, 3, 1, 2], (0..12).map(|i| i as f32 / 7.0).collect()).unwrap();
        RawTensor::from(&z).write(&path).unwrap();
        let back = RawTensor::read(&path).unwrap().into_latent().unwrap();
        assert_eq!(back, z);
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(
            dims in proptest::collection::vec(1usize..5, 1..5),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n as u64)
                .map(|i| f32::from_bits((seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15)) as u32))
                .collect();
            let t = RawTensor::new(dims, data).unwrap();
            let back = RawTensor::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.dims, t.dims);
            let a: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
