//! Versioned binary container for [`UniformMps`].
//!
//! Layout, all integers and floats little-endian:
//! - magic `b"UMPS"`, then `u32` version, `d`, `D`, `N`;
//! - for each site `k`: `A_L(k)`, `A_R(k)`, `C(k)`, `A_C(k)`.
//!
//! Three-index tensors are written in `(α, s, β)` order with `β` fastest,
//! bond matrices in `(α, β)` order; each entry is `(re: f64, im: f64)`.
//! A JSON sidecar with the header fields sits next to the binary file.

use std::path::Path;

use ndarray::Array2;
use serde_json::json;

use super::{MpsTensor, Result, UmpsError, UniformMps};
use crate::numerics::{Mat, C64};

pub const STATE_MAGIC: &[u8; 4] = b"UMPS";
pub const STATE_VERSION: u32 = 1;

fn put_complex(out: &mut Vec<u8>, z: C64) {
    out.extend_from_slice(&z.re.to_le_bytes());
    out.extend_from_slice(&z.im.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &MpsTensor) {
    for a in 0..t.left_dim() {
        for m in &t.mats {
            for b in 0..t.right_dim() {
                put_complex(out, m[[a, b]]);
            }
        }
    }
}

pub fn encode_state(state: &UniformMps) -> Vec<u8> {
    let (d, dim, n) = (state.phys_dim(), state.bond_dim(), state.cell_size());
    let mut out = Vec::with_capacity(20 + n * (3 * d + 1) * dim * dim * 16);
    out.extend_from_slice(STATE_MAGIC);
    for v in [STATE_VERSION, d as u32, dim as u32, n as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for k in 0..n {
        put_tensor(&mut out, &state.al[k]);
        put_tensor(&mut out, &state.ar[k]);
        for z in state.c[k].iter() {
            put_complex(&mut out, *z);
        }
        put_tensor(&mut out, &state.ac[k]);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(UmpsError::Format("truncated state data".into()));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn complex(&mut self) -> Result<C64> {
        let b = self.take(16)?;
        let re = f64::from_le_bytes(b[..8].try_into().unwrap());
        let im = f64::from_le_bytes(b[8..].try_into().unwrap());
        Ok(C64::new(re, im))
    }

    fn tensor(&mut self, d: usize, dim: usize) -> Result<MpsTensor> {
        let mut mats = vec![Array2::zeros((dim, dim)); d];
        for a in 0..dim {
            for m in mats.iter_mut() {
                for b in 0..dim {
                    m[[a, b]] = self.complex()?;
                }
            }
        }
        Ok(MpsTensor::new(mats))
    }

    fn matrix(&mut self, dim: usize) -> Result<Mat> {
        let mut m = Array2::zeros((dim, dim));
        for z in m.iter_mut() {
            *z = self.complex()?;
        }
        Ok(m)
    }
}

/// Decodes a state and returns it with the number of bytes consumed.
pub fn decode_state(bytes: &[u8]) -> Result<(UniformMps, usize)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != STATE_MAGIC {
        return Err(UmpsError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != STATE_VERSION {
        return Err(UmpsError::Format(format!("unsupported version {version}")));
    }
    let (d, dim, n) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if d == 0 || dim == 0 || n == 0 {
        return Err(UmpsError::Format("zero dimension in header".into()));
    }
    let (mut al, mut ar, mut c, mut ac) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        al.push(r.tensor(d, dim)?);
        ar.push(r.tensor(d, dim)?);
        c.push(r.matrix(dim)?);
        ac.push(r.tensor(d, dim)?);
    }
    Ok((UniformMps::new(al, ar, c, ac)?, r.pos))
}

/// Writes `path` and a `path.json` sidecar.
pub fn write_state(path: &Path, state: &UniformMps) -> Result<()> {
    let io = |e: std::io::Error| UmpsError::Io(e.to_string());
    std::fs::write(path, encode_state(state)).map_err(io)?;
    let meta = json!({
        "format": "umps",
        "version": STATE_VERSION,
        "d": state.phys_dim(),
        "D": state.bond_dim(),
        "N": state.cell_size(),
        "order": "per site: A_L, A_R, C, A_C; tensors (alpha, s, beta), matrices (alpha, beta); complex as (re, im) f64 LE",
    });
    let mut side = path.as_os_str().to_owned();
    side.push(".json");
    std::fs::write(side, serde_json::to_string_pretty(&meta).unwrap()).map_err(io)
}

pub fn read_state(path: &Path) -> Result<UniformMps> {
    let bytes = std::fs::read(path).map_err(|e| UmpsError::Io(e.to_string()))?;
    Ok(decode_state(&bytes)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::umps::random_umps;

    #[test]
    fn round_trip_is_exact() {
        let s = random_umps(3, 4, 2, 11).unwrap();
        let bytes = encode_state(&s);
        let (back, used) = decode_state(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        for k in 0..2 {
            assert_eq!(back.al[k], s.al[k]);
            assert_eq!(back.ar[k], s.ar[k]);
            assert_eq!(back.c[k], s.c[k]);
            assert_eq!(back.ac[k], s.ac[k]);
        }
    }

    #[test]
    fn header_layout() {
        let s = random_umps(2, 3, 1, 1).unwrap();
        let bytes = encode_state(&s);
        assert_eq!(&bytes[..4], b"UMPS");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 20 + (3 * 2 + 1) * 9 * 16);
        // First entry is A_L(0)[alpha=0, s=0, beta=0].
        let re = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        assert_eq!(re, s.al[0].mats[0][[0, 0]].re);
    }

    #[test]
    fn corrupted_data_is_rejected() {
        let s = random_umps(2, 2, 1, 1).unwrap();
        let mut bytes = encode_state(&s);
        assert!(decode_state(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_state(&bytes).is_err());
    }

    #[test]
    fn file_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.bin");
        let s = random_umps(2, 2, 1, 3).unwrap();
        write_state(&path, &s).unwrap();
        let back = read_state(&path).unwrap();
        assert_eq!(back.c[0], s.c[0]);
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("state.bin.json")).unwrap())
                .unwrap();
        assert_eq!(meta["D"], 2);
    }
}
