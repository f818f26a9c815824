//! Resumable snapshot of a run.
//!
//! Layout, little-endian:
//! - magic `b"VCKP"`, `u32` version, `u64` header length;
//! - JSON header ([`Header`]);
//! - the state in the `umps` container format;
//! - `u8` warm-start flag, then for the left and right blocks a `u32`
//!   count followed by `u64` rows, `u64` cols and `(re, im)` entries.
//!
//! Floats that must survive bit-for-bit live in the binary part.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environments::WarmStart;
use crate::numerics::{Mat, C64};
use crate::optimizer::ResumePoint;
use crate::umps::{decode_state, encode_state, UniformMps};

use super::{CliError, Result, RunConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub point: ResumePoint,
    /// Length of `trajectory.jsonl` when the snapshot was taken.
    pub trajectory_bytes: u64,
    pub state: UniformMps,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: RunConfig,
    point: ResumePoint,
    trajectory_bytes: u64,
}

fn put_mats(out: &mut Vec<u8>, mats: &[Mat]) {
    out.extend_from_slice(&(mats.len() as u32).to_le_bytes());
    for m in mats {
        out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for z in m.iter() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::Config("checkpoint is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn mats(&mut self) -> Result<Vec<Mat>> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rows = self.u64()? as usize;
            let cols = self.u64()? as usize;
            let len = rows
                .checked_mul(cols)
                .filter(|&l| l.saturating_mul(16) <= self.bytes.len() - self.pos)
                .ok_or_else(|| CliError::Config("checkpoint block size is corrupt".into()))?;
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let re = self.f64()?;
                data.push(C64::new(re, self.f64()?));
            }
            out.push(Mat::from_shape_vec((rows, cols), data).unwrap());
        }
        Ok(out)
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let header = Header {
        config: ck.config.clone(),
        point: ck.point.clone(),
        trajectory_bytes: ck.trajectory_bytes,
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&encode_state(&ck.state));
    match &ck.point.warm {
        Some(w) => {
            out.push(1);
            put_mats(&mut out, &w.left);
            put_mats(&mut out, &w.right);
        }
        None => out.push(0),
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(CliError::Config("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CliError::Config(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(len)?)
        .map_err(|e| CliError::Config(format!("checkpoint header: {e}")))?;
    let (state, used) =
        decode_state(&bytes[r.pos..]).map_err(|e| CliError::Config(format!("checkpoint state: {e}")))?;
    r.pos += used;
    let mut point = header.point;
    point.warm = match r.take(1)?[0] {
        0 => None,
        _ => Some(WarmStart {
            left: r.mats()?,
            right: r.mats()?,
        }),
    };
    Ok(Checkpoint {
        config: header.config,
        point,
        trajectory_bytes: header.trajectory_bytes,
        state,
    })
}

/// Writes through a temporary file so a crash never leaves a torn checkpoint.
pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("bin.tmp");
    std::fs::write(&tmp, encode_checkpoint(ck)).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::umps::random_umps;

    fn sample() -> Checkpoint {
        let config = RunConfig::from_toml(
            "bond_dim = 3\noutput = \"o\"\n[model]\nname = \"tfi\"\nh = 0.3",
        )
        .unwrap();
        let state = random_umps(2, 3, 2, 5).unwrap();
        let warm = WarmStart {
            left: vec![state.c[0].clone(), state.c[1].clone()],
            right: vec![state.c[1].mapv(|z| z * C64::new(0.1, -0.7))],
        };
        Checkpoint {
            config,
            point: ResumePoint {
                iteration: 17,
                eps_prec: 1.234_567_890_123e-7,
                schedule_pos: 1,
                elapsed: 2.5,
                last_grad: 3.3e-6,
                expand_next: true,
                warm: Some(warm),
            },
            trajectory_bytes: 4096,
            state,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = decode_checkpoint(&encode_checkpoint(&ck)).unwrap();
        assert_eq!(back, ck);
        let mut cold = ck;
        cold.point.warm = None;
        assert_eq!(decode_checkpoint(&encode_checkpoint(&cold)).unwrap(), cold);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = encode_checkpoint(&sample());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_checkpoint(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
    }
}
