//! Model file format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "HOMENET\0"
//! version      u32
//! input_height u32
//! input_width  u32
//! kernel       u32
//! stride       u32
//! outputs      u32
//! conv_layers  u32, followed by one u32 channel count per layer
//! param_count  u64
//! params       param_count x f64, in storage order
//! ```

use std::path::Path;

use super::{Architecture, NetworkParams, Params, Scalar};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"HOMENET\0";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_params<T: Scalar>(params: &Params<T>) -> Vec<u8> {
    let arch = params.architecture();
    let mut out = Vec::with_capacity(64 + 8 * params.param_count());
    out.extend_from_slice(MODEL_MAGIC);
    let mut put = |v: u32| out.extend_from_slice(&v.to_le_bytes());
    put(MODEL_VERSION);
    put(arch.input_height as u32);
    put(arch.input_width as u32);
    put(arch.kernel as u32);
    put(arch.stride as u32);
    put(arch.outputs as u32);
    put(arch.conv_channels.len() as u32);
    for &c in &arch.conv_channels {
        put(c as u32);
    }
    out.extend_from_slice(&(params.param_count() as u64).to_le_bytes());
    for v in params.as_slice() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!(
                "model file truncated at byte {} of {}",
                self.bytes.len(),
                self.at.saturating_add(n)
            ))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<NetworkParams> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Version { found: version, expected: MODEL_VERSION });
    }
    let (input_height, input_width, kernel, stride, outputs) =
        (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let layers = r.usize()?;
    if layers > 64 {
        return Err(Error::Format(format!("implausible layer count {layers}")));
    }
    let conv_channels = (0..layers).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let arch = Architecture { input_height, input_width, kernel, stride, conv_channels, outputs };
    arch.validate().map_err(|e| Error::Format(format!("invalid architecture: {e}")))?;
    let count = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    if count != arch.param_count() {
        return Err(Error::Format(format!(
            "header declares {count} parameters, architecture needs {}",
            arch.param_count()
        )));
    }
    let raw = r.take(count * 8)?.to_vec();
    if r.at != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Params::from_vec(arch, data)
}

pub fn save_params<T: Scalar>(params: &Params<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_params(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<NetworkParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = NetworkParams::init(Architecture::compact(51, 360), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_params(&p, &path).unwrap();
        let q = load_params(&path).unwrap();
        assert_eq!(p.architecture(), q.architecture());
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupted_headers_and_truncation() {
        let p = NetworkParams::init(Architecture::compact(21, 40), 1).unwrap();
        let good = encode_params(&p);
        let mut bad_version = good.clone();
        bad_version[8] ^= 0x7f;
        assert!(matches!(decode_params(&bad_version), Err(Error::Version { .. })));
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_params(&bad_magic), Err(Error::Format(_))));
        assert!(matches!(decode_params(&good[..good.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(decode_params(&good[..5]), Err(Error::Format(_))));
    }
}
