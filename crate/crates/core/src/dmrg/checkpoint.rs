//! Binary checkpoints of the solver state.
//!
//! Layout: `SDMRGCKP` | version `u32` | payload length `u64` | payload |
//! SHA-256 of the payload. All integers and floats are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::dmrg::block::{BlockState, Side};
use crate::dmrg::sweep::DmrgState;
use crate::error::CheckpointError;
use crate::qn::{QuantumNumber, SectorBasis, QN_COMPONENTS};
use crate::sector::SectorMatrix;

pub const MAGIC: &[u8; 8] = b"SDMRGCKP";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn qn(&mut self, q: QuantumNumber) {
        for c in q.0 {
            self.0.extend_from_slice(&c.to_le_bytes());
        }
    }
    fn basis(&mut self, b: &SectorBasis) {
        self.usize(b.len());
        for &(q, d) in b.entries() {
            self.qn(q);
            self.usize(d);
        }
    }
    fn matrix(&mut self, m: &SectorMatrix) {
        self.qn(m.delta());
        self.usize(m.n_blocks());
        for (&(r, c), blk) in m.blocks() {
            self.qn(r);
            self.qn(c);
            blk.iter().for_each(|&x| self.f64(x));
        }
    }
    fn block(&mut self, b: &Option<BlockState>) {
        let Some(b) = b else {
            self.u8(0);
            return;
        };
        self.u8(match b.side {
            Side::Left => 1,
            Side::Right => 2,
        });
        self.usize(b.length);
        self.basis(&b.basis);
        self.usize(b.ops.len());
        b.ops.iter().for_each(|m| self.matrix(m));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: &str) -> CheckpointError {
    CheckpointError::Corrupt(msg.to_string())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated payload"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflow"))
    }
    /// A count of items that each occupy at least `min_bytes`.
    fn count(&mut self, min_bytes: usize) -> Result<usize, CheckpointError> {
        let n = self.usize()?;
        if n.saturating_mul(min_bytes) > self.buf.len() - self.pos {
            return Err(corrupt("count exceeds payload"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn qn(&mut self) -> Result<QuantumNumber, CheckpointError> {
        let mut q = [0i32; QN_COMPONENTS];
        for c in &mut q {
            *c = i32::from_le_bytes(self.take(4)?.try_into().unwrap());
        }
        Ok(QuantumNumber(q))
    }
    fn basis(&mut self) -> Result<SectorBasis, CheckpointError> {
        let n = self.count(16)?;
        let entries = (0..n).map(|_| Ok((self.qn()?, self.usize()?))).collect::<Result<Vec<_>, CheckpointError>>()?;
        SectorBasis::new(entries).map_err(|e| CheckpointError::Corrupt(e.to_string()))
    }
    fn matrix(&mut self, basis: &SectorBasis) -> Result<SectorMatrix, CheckpointError> {
        let delta = self.qn()?;
        let mut m = SectorMatrix::zeros(basis.clone(), basis.clone(), delta);
        let n = self.count(16)?;
        for _ in 0..n {
            let (r, c) = (self.qn()?, self.qn()?);
            let (rows, cols) = m.block_shape(r, c).ok_or_else(|| corrupt("block outside the basis"))?;
            if rows * cols * 8 > self.buf.len() - self.pos {
                return Err(corrupt("truncated block"));
            }
            let data = (0..rows * cols).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
            m.insert_block(r, c, DMatrix::from_vec(rows, cols, data))
                .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        }
        Ok(m)
    }
    fn block(&mut self) -> Result<Option<BlockState>, CheckpointError> {
        let side = match self.u8()? {
            0 => return Ok(None),
            1 => Side::Left,
            2 => Side::Right,
            _ => return Err(corrupt("bad block tag")),
        };
        let length = self.usize()?;
        let basis = self.basis()?;
        let n = self.count(16)?;
        let ops = (0..n).map(|_| self.matrix(&basis)).collect::<Result<Vec<_>, _>>()?;
        Ok(Some(BlockState { side, length, basis, ops }))
    }
}

fn encode_payload(state: &DmrgState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.usize(state.n_sites);
    w.qn(state.target);
    w.u64(state.seed);
    w.0.extend_from_slice(&state.fingerprint);
    w.usize(state.sweeps_done);
    w.usize(state.sweep_energies.len());
    state.sweep_energies.iter().for_each(|&e| w.f64(e));
    for blocks in [&state.left, &state.right] {
        w.usize(blocks.len());
        blocks.iter().for_each(|b| w.block(b));
    }
    w.0
}

fn decode_payload(buf: &[u8]) -> Result<DmrgState, CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    let n_sites = r.usize()?;
    let target = r.qn()?;
    let seed = r.u64()?;
    let fingerprint: [u8; 32] = r.take(32)?.try_into().unwrap();
    let sweeps_done = r.usize()?;
    let n_e = r.count(8)?;
    let sweep_energies = (0..n_e).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let mut sides = Vec::with_capacity(2);
    for _ in 0..2 {
        let n = r.count(1)?;
        if n != n_sites + 1 {
            return Err(corrupt("block list length does not match the chain"));
        }
        sides.push((0..n).map(|_| r.block()).collect::<Result<Vec<_>, _>>()?);
    }
    if r.pos != buf.len() {
        return Err(corrupt("trailing bytes"));
    }
    let right = sides.pop().unwrap();
    let left = sides.pop().unwrap();
    Ok(DmrgState { n_sites, target, seed, fingerprint, left, right, sweeps_done, sweep_energies })
}

pub fn encode(state: &DmrgState) -> Vec<u8> {
    let payload = encode_payload(state);
    let mut out = Vec::with_capacity(payload.len() + 52);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    out
}

pub fn decode(bytes: &[u8]) -> Result<DmrgState, CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::Magic);
    }
    if bytes.len() < 20 {
        return Err(corrupt("truncated header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| corrupt("length overflow"))?;
    if bytes.len() != 20usize.saturating_add(len).saturating_add(32) {
        return Err(corrupt("file length does not match the header"));
    }
    let payload = &bytes[20..20 + len];
    if Sha256::digest(payload).as_slice() != &bytes[20 + len..] {
        return Err(corrupt("checksum mismatch"));
    }
    decode_payload(payload)
}

/// Writes atomically through a temporary file in the same directory.
pub fn save_checkpoint(state: &DmrgState, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&encode(state)).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<DmrgState, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    decode(&bytes)
}
