//! Little-endian binary checkpoints.
//!
//! Layout: magic, `u32` version, `u32` k, p, N_c, then `theta` (`k^2` f64)
//! and `D_h` (`N_h x N_c` f64, row-major). After that come the config as a
//! length-prefixed TOML string, an optional dense blur (`u32` rows and cols,
//! `0 0` when absent, then row-major f64) and the loss trace (`u32` count,
//! then hr, lr, l1, total per iteration).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{LossTrace, ModelCheckpoint, TrainConfig};
use crate::blur::BlurMatrix;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DBDL";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("checkpoint field exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s<'a>(&mut self, vals: impl IntoIterator<Item = &'a f64>) {
        for v in vals {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn row_major(&mut self, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.0.extend_from_slice(&m[(r, c)].to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::CorruptCheckpoint(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            ))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        self.u32().map(|v| v as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::CorruptCheckpoint("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn row_major(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let vals = self.f64s(rows * cols)?;
        Ok(DMatrix::from_row_slice(rows, cols, &vals))
    }
}

pub fn encode(model: &ModelCheckpoint) -> Vec<u8> {
    let (k, p) = (model.kernel_side(), model.patch_side());
    let d = model.dictionary.atoms();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION as usize);
    w.u32(k);
    w.u32(p);
    w.u32(d.ncols());
    w.f64s(&model.theta());
    w.row_major(d);
    let cfg = model.config.to_toml();
    w.u32(cfg.len());
    w.0.extend_from_slice(cfg.as_bytes());
    if model.blur.is_structured() {
        w.u32(0);
        w.u32(0);
    } else {
        let b = model.blur.to_dense();
        w.u32(b.nrows());
        w.u32(b.ncols());
        w.row_major(&b);
    }
    let t = &model.trace;
    w.u32(t.len());
    for i in 0..t.len() {
        w.f64s([&t.hr[i], &t.lr[i], &t.l1[i], &t.total[i]]);
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<ModelCheckpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let (k, p, n_atoms) = (r.usize()?, r.usize()?, r.usize()?);
    if k == 0 || k > p || n_atoms == 0 {
        return Err(Error::CorruptCheckpoint(format!("invalid header k={k} p={p} atoms={n_atoms}")));
    }
    let theta = r.f64s(k * k)?;
    let atoms = r.row_major(p * p, n_atoms)?;
    let cfg_len = r.usize()?;
    let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
        .map_err(|_| Error::CorruptCheckpoint("config is not UTF-8".into()))?;
    let config = TrainConfig::from_toml(cfg_text)?;
    if config.k != k || config.patch != p || config.atoms != n_atoms {
        return Err(Error::CorruptCheckpoint("config disagrees with header".into()));
    }
    let (rows, cols) = (r.usize()?, r.usize()?);
    let blur = if rows == 0 && cols == 0 {
        BlurMatrix::structured(k, p, theta)?
    } else {
        BlurMatrix::dense(k, p, r.row_major(rows, cols)?)?
    };
    let n = r.usize()?;
    let flat = r.f64s(n.checked_mul(4).ok_or_else(|| Error::CorruptCheckpoint("length overflow".into()))?)?;
    let mut trace = LossTrace::default();
    for row in flat.chunks_exact(4) {
        trace.hr.push(row[0]);
        trace.lr.push(row[1]);
        trace.l1.push(row[2]);
        trace.total.push(row[3]);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(ModelCheckpoint {
        config,
        dictionary: Dictionary::from_unit_atoms(atoms)
            .map_err(|e| Error::CorruptCheckpoint(format!("dictionary: {e}")))?,
        blur,
        trace,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ModelCheckpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blur::BlurMatrix;

    fn model(dense: bool) -> ModelCheckpoint {
        let config = TrainConfig {
            k: 3,
            patch: 4,
            atoms: 5,
            ..Default::default()
        };
        let atoms = DMatrix::from_fn(16, 5, |r, c| ((r * 7 + c * 3) % 11) as f64 - 4.5);
        let theta: Vec<f64> = (0..9).map(|i| 0.05 + i as f64 * 0.01).collect();
        let blur = if dense {
            BlurMatrix::dense(3, 4, DMatrix::from_fn(4, 16, |r, c| (r + 2 * c) as f64 * 0.01)).unwrap()
        } else {
            BlurMatrix::structured(3, 4, theta).unwrap()
        };
        let mut trace = LossTrace::default();
        trace.push(3.0, 2.0, 1.0).unwrap();
        trace.push(2.0, 1.5, 0.75).unwrap();
        ModelCheckpoint {
            config,
            dictionary: Dictionary::new(atoms).unwrap(),
            blur,
            trace,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        for dense in [false, true] {
            let m = model(dense);
            let bytes = encode(&m);
            let back = decode(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn every_truncation_is_an_error() {
        let bytes = encode(&model(true));
        for len in 0..bytes.len() {
            assert!(matches!(decode(&bytes[..len]), Err(Error::CorruptCheckpoint(_))), "len {len}");
        }
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = encode(&model(false));
        bytes[4] = 2;
        assert!(matches!(decode(&bytes), Err(Error::VersionMismatch { found: 2, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::CorruptCheckpoint(_))));
    }
}
