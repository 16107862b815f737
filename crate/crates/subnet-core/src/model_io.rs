//! Binary model files: magic "SNFE", format version, layer dims and
//! activation tags, little-endian f64 parameters, optional packed mask
//! bits, and a trailing checksum. Round-trips are bit-exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::masking::{Mask, NetMask};
use crate::matrix::Matrix;
use crate::nn::{Activation, DenseLayer, DenseNet};

const MAGIC: &[u8; 4] = b"SNFE";
const VERSION: u16 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated model file at byte {}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Serialize a network (and optionally a mask aligned with it) to `path`.
pub fn save_model(net: &DenseNet, mask: Option<&NetMask>, path: &Path) -> Result<()> {
    if let Some(m) = mask {
        if !m.matches_net(net) {
            return Err(Error::shape("mask does not match network"));
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        let (rows, cols) = layer.weights().shape();
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        out.push(layer.activation().tag());
        for v in layer.weights().as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.bias() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    match mask {
        None => out.push(0),
        Some(m) => {
            out.push(1);
            for layer_mask in m.layers() {
                let (rows, cols) = layer_mask.shape();
                for r in 0..rows {
                    let mut packed = vec![0u8; cols.div_ceil(8)];
                    for c in 0..cols {
                        if layer_mask.get(r, c) == 1 {
                            packed[c / 8] |= 0x80 >> (c % 8);
                        }
                    }
                    out.extend_from_slice(&packed);
                }
            }
        }
    }
    let checksum = fnv1a(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a model file written by [`save_model`]. Any corruption fails the
/// checksum before decoding is trusted; nothing is partially returned.
pub fn load_model(path: &Path) -> Result<(DenseNet, Option<NetMask>)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < MAGIC.len() + 2 + 8 {
        return Err(Error::Format("file too short".into()));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if fnv1a(payload) != stored {
        return Err(Error::Format("checksum mismatch".into()));
    }

    let mut r = Reader {
        bytes: payload,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let layer_count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let activation = Activation::from_tag(r.u8()?)?;
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weights.push(r.f64()?);
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            bias.push(r.f64()?);
        }
        layers.push(DenseLayer::new(
            Matrix::new(rows, cols, weights)?,
            bias,
            activation,
        )?);
    }
    let net = DenseNet::new(layers)?;

    let mask = match r.u8()? {
        0 => None,
        1 => {
            let mut masks = Vec::with_capacity(layer_count);
            for layer in net.layers() {
                let (rows, cols) = layer.weights().shape();
                let mut m = Mask::zeros(rows, cols);
                for row in 0..rows {
                    let packed = r.take(cols.div_ceil(8))?;
                    for c in 0..cols {
                        if packed[c / 8] & (0x80 >> (c % 8)) != 0 {
                            m.set(row, c, 1);
                        }
                    }
                }
                masks.push(m);
            }
            Some(NetMask::new(masks))
        }
        other => return Err(Error::Format(format!("bad mask flag {other}"))),
    };
    if r.pos != payload.len() {
        return Err(Error::Format("trailing bytes in model file".into()));
    }
    Ok((net, mask))
}
