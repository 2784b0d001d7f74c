//! Renormalized left and right blocks and their enlargement by one site.

use nalgebra::DMatrix;

use crate::error::DmrgError;
use crate::model::Mpo;
use crate::qn::{FusedBasis, QuantumNumber, SectorBasis};
use crate::sector::{execute_tasks, task_table, OpKind, SectorMatrix, SectorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// A block of `length` sites at one end of the chain, with one operator per
/// channel crossing its inner bond.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockState {
    pub side: Side,
    pub length: usize,
    pub basis: SectorBasis,
    /// Indexed like `mpo.channels[bond]`.
    pub ops: Vec<SectorMatrix>,
}

impl BlockState {
    /// The empty block at the left end (bond 0).
    pub fn vacuum_left(mpo: &Mpo) -> Self {
        Self::vacuum(Side::Left, mpo.channels[0].len())
    }

    /// The empty block at the right end (bond `n_sites`).
    pub fn vacuum_right(mpo: &Mpo) -> Self {
        Self::vacuum(Side::Right, mpo.channels[mpo.n_sites].len())
    }

    fn vacuum(side: Side, channels: usize) -> Self {
        let basis = SectorBasis::vacuum();
        BlockState { side, length: 0, ops: vec![SectorMatrix::identity(&basis); channels], basis }
    }

    /// The bond at the inner edge of the block.
    pub fn bond(&self, n_sites: usize) -> usize {
        match self.side {
            Side::Left => self.length,
            Side::Right => n_sites - self.length,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.total_dimension()
    }

    /// Checks bases and selection rules of every operator.
    pub fn validate(&self, mpo: &Mpo) -> Result<(), DmrgError> {
        let bond = self.bond(mpo.n_sites);
        if self.ops.len() != mpo.channels[bond].len() {
            return Err(DmrgError::Runtime(format!(
                "block at bond {bond} has {} operators for {} channels",
                self.ops.len(),
                mpo.channels[bond].len()
            )));
        }
        for (op, &delta) in self.ops.iter().zip(&mpo.deltas[bond]) {
            let want = match self.side {
                Side::Left => delta,
                Side::Right => -delta,
            };
            if op.row_basis() != &self.basis || op.col_basis() != &self.basis || op.delta() != want {
                return Err(DmrgError::Runtime(format!("operator at bond {bond} does not match its block")));
            }
            op.validate()?;
        }
        Ok(())
    }
}

/// A block grown by one site, before truncation.
#[derive(Clone, Debug)]
pub struct Enlarged {
    pub side: Side,
    /// New block length.
    pub length: usize,
    /// `block ⊗ site` for a left block, `site ⊗ block` for a right block.
    pub fused: FusedBasis,
    pub ops: Vec<SectorMatrix>,
}

impl Enlarged {
    pub fn basis(&self) -> &SectorBasis {
        self.fused.basis()
    }
}

fn site_operator(mpo: &Mpo, op: &DMatrix<f64>, delta: QuantumNumber) -> Result<SectorMatrix, DmrgError> {
    let b = mpo.local.basis.clone();
    Ok(SectorMatrix::from_dense(SectorSpec::new(b.clone(), b, delta), op)?)
}

fn accumulate_kron(out: &mut SectorMatrix, a: &SectorMatrix, b: &SectorMatrix) -> Result<(), DmrgError> {
    let table = task_table(a, b, OpKind::Kron)?;
    execute_tasks(&table, a, b, out)?;
    Ok(())
}

/// Adds one site to `block` and builds the enlarged operators of every
/// channel at the new inner bond.
pub fn enlarge(block: &BlockState, mpo: &Mpo) -> Result<Enlarged, DmrgError> {
    let n = mpo.n_sites;
    let site_basis = &mpo.local.basis;
    match block.side {
        Side::Left => {
            let s = block.length;
            if s >= n {
                return Err(DmrgError::Runtime("left block already spans the chain".into()));
            }
            let fused = FusedBasis::new(&block.basis, site_basis);
            let basis = fused.basis().clone();
            let mut ops: Vec<SectorMatrix> = mpo.deltas[s + 1]
                .iter()
                .map(|&d| SectorMatrix::zeros(basis.clone(), basis.clone(), d))
                .collect();
            for e in &mpo.sites[s] {
                let shift = mpo.deltas[s + 1][e.to] - mpo.deltas[s][e.from];
                let w = site_operator(mpo, &e.op, shift)?;
                accumulate_kron(&mut ops[e.to], &block.ops[e.from], &w)?;
            }
            ops.iter_mut().for_each(SectorMatrix::prune_zeros);
            Ok(Enlarged { side: Side::Left, length: s + 1, fused, ops })
        }
        Side::Right => {
            let bond = n - block.length;
            if bond == 0 {
                return Err(DmrgError::Runtime("right block already spans the chain".into()));
            }
            let s = bond - 1;
            let fused = FusedBasis::new(site_basis, &block.basis);
            let basis = fused.basis().clone();
            let mut ops: Vec<SectorMatrix> = mpo.deltas[s]
                .iter()
                .map(|&d| SectorMatrix::zeros(basis.clone(), basis.clone(), -d))
                .collect();
            for e in &mpo.sites[s] {
                let shift = mpo.deltas[s + 1][e.to] - mpo.deltas[s][e.from];
                let w = site_operator(mpo, &e.op, shift)?;
                accumulate_kron(&mut ops[e.from], &w, &block.ops[e.to])?;
            }
            ops.iter_mut().for_each(SectorMatrix::prune_zeros);
            Ok(Enlarged { side: Side::Right, length: block.length + 1, fused, ops })
        }
    }
}
