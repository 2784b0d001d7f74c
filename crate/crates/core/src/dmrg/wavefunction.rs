//! Sector-decomposed two-site wavefunctions.

use std::collections::HashMap;

use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;

use crate::error::DmrgError;
use crate::model::LocalSpace;
use crate::qn::{QuantumNumber, SectorBasis};

/// `(left block QN, site state, site state, right block QN)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WfKey {
    pub l: QuantumNumber,
    pub s1: usize,
    pub s2: usize,
    pub r: QuantumNumber,
}

/// Placement of the sector blocks of a two-site wavefunction in a flat
/// vector. Sector `i` is a column-major `D_l × D_r` block.
#[derive(Clone, Debug, PartialEq)]
pub struct WfLayout {
    pub target: QuantumNumber,
    pub keys: Vec<WfKey>,
    pub shapes: Vec<(usize, usize)>,
    pub offsets: Vec<usize>,
    pub len: usize,
    index: HashMap<WfKey, usize>,
}

impl WfLayout {
    /// All sector combinations of `left ⊗ site ⊗ site ⊗ right` that fuse to
    /// `target`, sorted by key.
    pub fn new(
        left: &SectorBasis,
        local: &LocalSpace,
        right: &SectorBasis,
        target: QuantumNumber,
    ) -> Result<Self, DmrgError> {
        let d = local.dim();
        let mut keys = Vec::new();
        for &(l, _) in left.entries() {
            for s1 in 0..d {
                for s2 in 0..d {
                    let r = target - l - local.qn(s1) - local.qn(s2);
                    if right.contains(r) {
                        keys.push(WfKey { l, s1, s2, r });
                    }
                }
            }
        }
        if keys.is_empty() {
            return Err(DmrgError::EmptyTarget(target));
        }
        keys.sort();
        let mut shapes = Vec::with_capacity(keys.len());
        let mut offsets = Vec::with_capacity(keys.len());
        let mut len = 0;
        for k in &keys {
            let shape = (left.dim(k.l).unwrap(), right.dim(k.r).unwrap());
            offsets.push(len);
            shapes.push(shape);
            len += shape.0 * shape.1;
        }
        let index = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        Ok(WfLayout { target, keys, shapes, offsets, len, index })
    }

    pub fn find(&self, key: &WfKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn n_sectors(&self) -> usize {
        self.keys.len()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        let (r, c) = self.shapes[i];
        self.offsets[i]..self.offsets[i] + r * c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperblockWavefunction {
    pub layout: WfLayout,
    pub data: Vec<f64>,
}

impl SuperblockWavefunction {
    pub fn zeros(layout: WfLayout) -> Self {
        let data = vec![0.0; layout.len];
        SuperblockWavefunction { layout, data }
    }

    pub fn random<R: Rng + ?Sized>(layout: WfLayout, rng: &mut R) -> Self {
        let data = (0..layout.len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut psi = SuperblockWavefunction { layout, data };
        psi.normalize();
        psi
    }

    pub fn block(&self, i: usize) -> DMatrixView<'_, f64> {
        let (r, c) = self.layout.shapes[i];
        DMatrixView::from_slice(&self.data[self.layout.range(i)], r, c)
    }

    pub fn block_owned(&self, i: usize) -> DMatrix<f64> {
        self.block(i).into_owned()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            self.data.iter_mut().for_each(|x| *x /= n);
        }
        n
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
