//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "LENCTL1"                      7 magic bytes
//! u32 tensor count
//! per tensor:
//!   u32 name length, name bytes (UTF-8)
//!   u32 rank, u64 extent × rank
//!   u64 byte offset of the payload, relative to the payload start
//! payload: every tensor's values as f64 little-endian, in manifest order
//! ```

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"LENCTL1";

pub fn encode_checkpoint(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in params.names().iter().zip(params.tensors()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 8 * t.numel() as u64;
    }
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Data("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::Data("not a checkpoint (bad magic)".into()));
    }
    let count = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Data("checkpoint tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let offset = r.u64()? as usize;
        manifest.push((name, shape, offset));
    }
    let payload = &bytes[r.pos..];
    let mut params = ParamSet::default();
    for (name, shape, offset) in manifest {
        let numel: usize = shape.iter().product();
        let raw = offset
            .checked_add(8 * numel)
            .filter(|&e| e <= payload.len())
            .map(|e| &payload[offset..e])
            .ok_or_else(|| Error::Data(format!("payload for {name} out of bounds")))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        params.push(&name, Tensor::new(shape, data).map_err(|e| Error::Data(e.to_string()))?)?;
    }
    Ok(params)
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &ParamSet) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ParamSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            tensors in prop::collection::vec(
                (1usize..4, 1usize..5).prop_flat_map(|(r, c)| {
                    prop::collection::vec(any::<u64>(), r * c).prop_map(move |bits| (r, c, bits))
                }),
                1..5,
            )
        ) {
            let mut p = ParamSet::default();
            for (i, (r, c, bits)) in tensors.iter().enumerate() {
                // arbitrary bit patterns, including NaN payloads and subnormals
                let data = bits.iter().map(|&b| f64::from_bits(b)).collect();
                p.push(&format!("t{i}"), Tensor::new(vec![*r, *c], data).unwrap()).unwrap();
            }
            let bytes = encode_checkpoint(&p);
            let back = decode_checkpoint(&bytes).unwrap();
            prop_assert_eq!(back.names(), p.names());
            for (a, b) in back.tensors().iter().zip(p.tensors()) {
                prop_assert_eq!(a.shape(), b.shape());
                let ab: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
                let bb: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
            prop_assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn bad_magic_and_truncation_rejected() {
        let mut p = ParamSet::default();
        p.push("a", Tensor::zeros(&[2, 2])).unwrap();
        let bytes = encode_checkpoint(&p);
        assert!(bytes.starts_with(b"LENCTL1"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Data(_))));
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Data(_))));
    }
}
