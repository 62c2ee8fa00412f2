//! Binary checkpoint of the four networks.
//!
//! Layout (little-endian): `"UAVC"`, `u32` format version, then per network
//! a one-byte tag (`d`, `x`, `y`, `z`), `u32` tensor count and for each
//! tensor `u32` rank, `u32` dims and raw `f32` values. A CRC32 of every
//! preceding byte closes the file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{NetShape, Params};
use crate::world::DIMENSIONS;

pub const MAGIC: &[u8; 4] = b"UAVC";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(nets: &[Params<f32>; 4]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (net, tag) in nets.iter().zip(DIMENSIONS) {
        out.push(tag as u8);
        let layout = net.layout();
        out.extend_from_slice(&(layout.tensors.len() as u32).to_le_bytes());
        for spec in &layout.tensors {
            out.extend_from_slice(&(spec.dims.len() as u32).to_le_bytes());
            for &d in &spec.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in net.tensor(spec) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Integrity("unexpected end of checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes and validates a checkpoint for networks of `shape`.
pub fn decode(bytes: &[u8], shape: &NetShape) -> Result<[Params<f32>; 4]> {
    if bytes.len() < 12 {
        return Err(Error::Integrity(format!("checkpoint too short ({} bytes)", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Integrity("CRC mismatch".into()));
    }
    if &body[..4] != MAGIC {
        return Err(Error::Integrity("bad magic bytes".into()));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Integrity(format!("unsupported format version {version}")));
    }
    let layout = shape.layout();
    let mut nets = Vec::with_capacity(4);
    for tag in DIMENSIONS {
        let got = r.take(1)?[0];
        if got != tag as u8 {
            return Err(Error::Integrity(format!("expected network tag {tag}, found byte {got}")));
        }
        let count = r.u32()? as usize;
        if count != layout.tensors.len() {
            return Err(Error::Shape(format!(
                "network {tag}: {count} tensors, expected {}",
                layout.tensors.len()
            )));
        }
        let mut data = Vec::with_capacity(layout.len);
        for spec in &layout.tensors {
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if dims != spec.dims {
                return Err(Error::Shape(format!(
                    "network {tag} tensor {}: dims {dims:?}, expected {:?}",
                    spec.name, spec.dims
                )));
            }
            let raw = r.take(4 * spec.len())?;
            data.extend(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
        }
        nets.push(Params::from_vec(*shape, data)?);
    }
    if r.pos != body.len() {
        return Err(Error::Integrity("trailing bytes after last network".into()));
    }
    nets.try_into().map_err(|_| Error::Integrity("network count".into()))
}

pub fn save(path: &Path, nets: &[Params<f32>; 4]) -> Result<()> {
    std::fs::write(path, encode(nets)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, shape: &NetShape) -> Result<[Params<f32>; 4]> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> NetShape {
        NetShape {
            input: 6,
            lstm_layers: 2,
            hidden: 4,
            dense_layers: 2,
            dense_width: 3,
            actions: 5,
        }
    }

    fn nets() -> [Params<f32>; 4] {
        std::array::from_fn(|n| Params::init(shape(), 10 + n as u64).unwrap())
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let bytes = encode(&nets());
        let back = decode(&bytes, &shape()).unwrap();
        assert_eq!(back, nets());
        assert_eq!(encode(&back), bytes);
        assert_eq!(&bytes[..4], b"UAVC");
        assert_eq!(bytes[8], b'd');
    }

    #[test]
    fn truncated_is_integrity_error() {
        let bytes = encode(&nets());
        for cut in [0, 5, 11, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut], &shape()), Err(Error::Integrity(_))));
        }
    }

    #[test]
    fn flipped_byte_is_integrity_error() {
        let mut bytes = encode(&nets());
        bytes[40] ^= 0x10;
        assert!(matches!(decode(&bytes, &shape()), Err(Error::Integrity(_))));
    }

    #[test]
    fn other_shape_is_shape_error() {
        let bytes = encode(&nets());
        let other = NetShape { hidden: 5, ..shape() };
        assert!(matches!(decode(&bytes, &other), Err(Error::Shape(_))));
        let deeper = NetShape { lstm_layers: 3, ..shape() };
        assert!(matches!(decode(&bytes, &deeper), Err(Error::Shape(_))));
    }
}
