//! Abelian quantum numbers and the sector bases they label.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use crate::error::SectorError;

/// Number of U(1) components carried by every quantum number.
pub const QN_COMPONENTS: usize = 2;

/// A tuple of additive U(1) charges, e.g. `(N, 2Sz)` for electrons.
///
/// Fusion is componentwise addition. Ordering is lexicographic over the
/// components and is used as the canonical sort key for bases and tables.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct QuantumNumber(pub [i32; QN_COMPONENTS]);

impl QuantumNumber {
    pub const ZERO: QuantumNumber = QuantumNumber([0; QN_COMPONENTS]);

    pub const fn new(a: i32, b: i32) -> Self {
        QuantumNumber([a, b])
    }

    /// Single-charge label; the unused component is zero.
    pub const fn scalar(a: i32) -> Self {
        QuantumNumber([a, 0])
    }

    #[inline]
    pub fn fuse(self, other: Self) -> Self {
        self + other
    }
}

impl Add for QuantumNumber {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        QuantumNumber(out)
    }
}

impl Sub for QuantumNumber {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for QuantumNumber {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        QuantumNumber(self.0.map(|c| -c))
    }
}

impl fmt::Debug for QuantumNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0[0], self.0[1])
    }
}

impl fmt::Display for QuantumNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Ordered list of `(quantum number, dimension)` sectors.
///
/// Quantum numbers are unique and sorted; every dimension is positive.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SectorBasis {
    entries: Vec<(QuantumNumber, usize)>,
    offsets: Vec<usize>,
}

impl SectorBasis {
    /// Builds a basis, sorting the entries. Duplicate quantum numbers and
    /// zero dimensions are rejected.
    pub fn new(mut entries: Vec<(QuantumNumber, usize)>) -> Result<Self, SectorError> {
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(SectorError::InvalidBasis(format!(
                    "duplicate quantum number {}",
                    w[0].0
                )));
            }
        }
        if let Some((q, _)) = entries.iter().find(|e| e.1 == 0) {
            return Err(SectorError::InvalidBasis(format!("sector {q} has zero dimension")));
        }
        if entries.is_empty() {
            return Err(SectorError::InvalidBasis("empty basis".into()));
        }
        Ok(Self::from_sorted(entries))
    }

    /// Accumulates dimensions of repeated quantum numbers.
    pub fn from_counts<I: IntoIterator<Item = (QuantumNumber, usize)>>(
        items: I,
    ) -> Result<Self, SectorError> {
        let mut map = BTreeMap::new();
        for (q, d) in items {
            *map.entry(q).or_insert(0) += d;
        }
        map.retain(|_, d| *d > 0);
        Self::new(map.into_iter().collect())
    }

    fn from_sorted(entries: Vec<(QuantumNumber, usize)>) -> Self {
        let mut offsets = Vec::with_capacity(entries.len());
        let mut acc = 0;
        for (_, d) in &entries {
            offsets.push(acc);
            acc += d;
        }
        SectorBasis { entries, offsets }
    }

    /// The one-state basis of an empty block.
    pub fn vacuum() -> Self {
        Self::from_sorted(vec![(QuantumNumber::ZERO, 1)])
    }

    pub fn entries(&self) -> &[(QuantumNumber, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_dimension(&self) -> usize {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn index_of(&self, q: QuantumNumber) -> Option<usize> {
        self.entries.binary_search_by_key(&q, |e| e.0).ok()
    }

    pub fn dim(&self, q: QuantumNumber) -> Option<usize> {
        self.index_of(q).map(|i| self.entries[i].1)
    }

    pub fn contains(&self, q: QuantumNumber) -> bool {
        self.index_of(q).is_some()
    }

    /// Offset of sector `q` in the dense (densified) index space.
    pub fn offset(&self, q: QuantumNumber) -> Option<usize> {
        self.index_of(q).map(|i| self.offsets[i])
    }

    pub fn qns(&self) -> impl Iterator<Item = QuantumNumber> + '_ {
        self.entries.iter().map(|e| e.0)
    }
}

/// One contiguous piece of a fused sector: the states `|l⟩ ⊗ |r⟩` with
/// `l` in sector `left` and `r` in sector `right`, stored left-index-fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FusedPiece {
    pub left: QuantumNumber,
    pub right: QuantumNumber,
    pub offset: usize,
    pub left_dim: usize,
    pub right_dim: usize,
}

/// Tensor product of two sector bases, grouped by fused quantum number.
///
/// Within a fused sector the pieces are ordered lexicographically by
/// `(left QN, right QN)`, and inside a piece the state `(i, j)` sits at
/// `offset + i + j * left_dim` (column-major over the pair).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusedBasis {
    basis: SectorBasis,
    pieces: Vec<Vec<FusedPiece>>,
}

impl FusedBasis {
    pub fn new(left: &SectorBasis, right: &SectorBasis) -> Self {
        let mut groups: BTreeMap<QuantumNumber, Vec<(QuantumNumber, usize, QuantumNumber, usize)>> =
            BTreeMap::new();
        for &(ql, dl) in left.entries() {
            for &(qr, dr) in right.entries() {
                groups.entry(ql + qr).or_default().push((ql, dl, qr, dr));
            }
        }
        let mut entries = Vec::with_capacity(groups.len());
        let mut pieces = Vec::with_capacity(groups.len());
        for (q, mut list) in groups {
            list.sort_by_key(|p| (p.0, p.2));
            let mut off = 0;
            let mut sector = Vec::with_capacity(list.len());
            for (ql, dl, qr, dr) in list {
                sector.push(FusedPiece { left: ql, right: qr, offset: off, left_dim: dl, right_dim: dr });
                off += dl * dr;
            }
            entries.push((q, off));
            pieces.push(sector);
        }
        FusedBasis { basis: SectorBasis::from_sorted(entries), pieces }
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    /// Pieces of the fused sector `q` (empty when `q` is absent).
    pub fn pieces(&self, q: QuantumNumber) -> &[FusedPiece] {
        match self.basis.index_of(q) {
            Some(i) => &self.pieces[i],
            None => &[],
        }
    }

    pub fn piece(&self, left: QuantumNumber, right: QuantumNumber) -> Option<&FusedPiece> {
        self.pieces(left + right).iter().find(|p| p.left == left && p.right == right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fusion_is_componentwise() {
        let a = QuantumNumber::new(1, -1);
        let b = QuantumNumber::new(2, 3);
        assert_eq!(a + b, QuantumNumber::new(3, 2));
        assert_eq!(a + b, b + a);
        assert_eq!((a - b) + b, a);
    }

    #[test]
    fn basis_is_sorted_and_validated() {
        let b = SectorBasis::new(vec![(QuantumNumber::scalar(1), 2), (QuantumNumber::scalar(0), 3)])
            .unwrap();
        assert_eq!(b.entries()[0].0, QuantumNumber::scalar(0));
        assert_eq!(b.total_dimension(), 5);
        assert_eq!(b.offset(QuantumNumber::scalar(1)), Some(3));
        assert!(SectorBasis::new(vec![(QuantumNumber::ZERO, 1), (QuantumNumber::ZERO, 2)]).is_err());
        assert!(SectorBasis::new(vec![(QuantumNumber::ZERO, 0)]).is_err());
        assert!(SectorBasis::new(vec![]).is_err());
    }

    #[test]
    fn fused_basis_dimensions_multiply() {
        let a = SectorBasis::new(vec![(QuantumNumber::scalar(-1), 1), (QuantumNumber::scalar(1), 1)])
            .unwrap();
        let f = FusedBasis::new(&a, &a);
        assert_eq!(f.basis().total_dimension(), 4);
        assert_eq!(f.basis().dim(QuantumNumber::ZERO), Some(2));
        let p = f.piece(QuantumNumber::scalar(1), QuantumNumber::scalar(-1)).unwrap();
        assert_eq!(p.offset, 1);
    }
}
