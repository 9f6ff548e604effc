//! Binary weight files.
//!
//! Layout (little-endian): 8-byte magic `FSNKNET\0`, `u32` format version,
//! `u8` scalar width (4 or 8), then `u32` fields in_channels, input_size,
//! block count, one channel count per block, hidden width, output width,
//! a `u64` parameter count, and finally every parameter tensor in
//! [`ConvNet::param_slices`] order.

use std::fs;
use std::path::Path;

use super::net::{ConvNet, NetShape};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"FSNKNET\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_weights<T: Real>(net: &ConvNet<T>) -> Vec<u8> {
    let shape = net.shape();
    let mut out = Vec::with_capacity(64 + net.param_count() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::TAG);
    let mut put = |v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(shape.in_channels);
    put(shape.input_size);
    put(shape.conv_channels.len());
    for &c in &shape.conv_channels {
        put(c);
    }
    put(shape.hidden);
    put(shape.outputs);
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for (_, slice) in net.param_slices() {
        for &v in slice {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::WeightFormat(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Decode a weight file; the stored precision may differ from `T`.
pub fn decode_weights<T: Real>(bytes: &[u8]) -> Result<ConvNet<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::WeightFormat("bad magic bytes".into()));
    }
    let version = r.u32("version")? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::WeightFormat(format!("unsupported format version {version}")));
    }
    let tag = r.take(1, "scalar tag")?[0];
    if tag != 4 && tag != 8 {
        return Err(Error::WeightFormat(format!("unknown scalar width {tag}")));
    }
    let in_channels = r.u32("in_channels")?;
    let input_size = r.u32("input_size")?;
    let blocks = r.u32("block count")?;
    if blocks > 16 {
        return Err(Error::WeightFormat(format!("implausible block count {blocks}")));
    }
    let conv_channels = (0..blocks).map(|_| r.u32("conv channels")).collect::<Result<Vec<_>>>()?;
    let hidden = r.u32("hidden")?;
    let outputs = r.u32("outputs")?;
    let shape = NetShape {
        in_channels,
        input_size,
        conv_channels,
        hidden,
        outputs,
    };
    shape
        .validate()
        .map_err(|e| Error::WeightFormat(format!("invalid dimensions: {e}")))?;
    let count = u64::from_le_bytes(r.take(8, "parameter count")?.try_into().expect("8 bytes")) as usize;
    if count != shape.param_count() {
        return Err(Error::WeightFormat(format!(
            "header claims {count} parameters, dimensions imply {}",
            shape.param_count()
        )));
    }
    let width = tag as usize;
    if r.bytes.len() - r.pos != count * width {
        return Err(Error::WeightFormat(format!(
            "expected {} parameter bytes, found {}",
            count * width,
            r.bytes.len() - r.pos
        )));
    }
    let mut net = ConvNet::<T>::zeros(shape)?;
    for (_, slice) in net.param_slices_mut() {
        for v in slice.iter_mut() {
            let raw = r.take(width, "parameters")?;
            *v = if width == 4 {
                T::of(f32::read_le(raw) as f64)
            } else {
                T::of(f64::read_le(raw))
            };
        }
    }
    Ok(net)
}

pub fn save_weights<T: Real>(net: &ConvNet<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_weights(net)).map_err(|e| Error::io(path, e))
}

pub fn load_weights<T: Real>(path: &Path) -> Result<ConvNet<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

/// Header-only peek: the network shape stored in a weight file.
pub fn read_shape(path: &Path) -> Result<NetShape> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_weights::<f32>(&bytes)?.shape().clone())
}
