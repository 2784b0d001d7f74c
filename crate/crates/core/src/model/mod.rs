//! Hamiltonians on a one-dimensional chain of sites.
//!
//! A spin model site is a spin ½ labelled by `2Sz`; a fermion site is one
//! spatial orbital labelled by `(N, 2Sz)` with the four states
//! `|0⟩, |↓⟩, |↑⟩, |↑↓⟩ = c†↑c†↓|0⟩` in canonical order. Fermion signs use
//! the Jordan-Wigner convention `c_i = (Π_{k<i} P_k) a_i` with the local
//! parity `P = diag(1, -1, -1, 1)`.

mod integrals;
mod mpo;

use std::path::PathBuf;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::ModelError;
use crate::qn::{QuantumNumber, SectorBasis};

pub use integrals::{Integrals, SYMMETRY_TOLERANCE};
pub use mpo::{
    auxiliary_count, auxiliary_counts, factorize, kron_fast, ChannelKey, Mpo, MpoEntry, OperatorTable, OperatorTableRow, Partition,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Spin {
    Up,
    Down,
}

/// Elementary single-site operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElemOp {
    Create(Spin),
    Annihilate(Spin),
    SPlus,
    SMinus,
    Sz,
}

impl ElemOp {
    pub fn is_fermionic(self) -> bool {
        matches!(self, ElemOp::Create(_) | ElemOp::Annihilate(_))
    }

    pub fn delta(self) -> QuantumNumber {
        match self {
            ElemOp::Create(Spin::Up) => QuantumNumber::new(1, 1),
            ElemOp::Create(Spin::Down) => QuantumNumber::new(1, -1),
            ElemOp::Annihilate(Spin::Up) => QuantumNumber::new(-1, -1),
            ElemOp::Annihilate(Spin::Down) => QuantumNumber::new(-1, 1),
            ElemOp::SPlus => QuantumNumber::scalar(2),
            ElemOp::SMinus => QuantumNumber::scalar(-2),
            ElemOp::Sz => QuantumNumber::ZERO,
        }
    }

    /// Local matrix in the canonical site basis.
    pub fn matrix(self) -> DMatrix<f64> {
        match self {
            ElemOp::Create(Spin::Up) => {
                let mut m = DMatrix::zeros(4, 4);
                m[(2, 0)] = 1.0;
                m[(3, 1)] = 1.0;
                m
            }
            ElemOp::Create(Spin::Down) => {
                let mut m = DMatrix::zeros(4, 4);
                m[(1, 0)] = 1.0;
                m[(3, 2)] = -1.0;
                m
            }
            ElemOp::Annihilate(s) => ElemOp::Create(s).matrix().transpose(),
            ElemOp::SPlus => DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            ElemOp::SMinus => DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            ElemOp::Sz => DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 0.5]),
        }
    }

    fn code(self) -> u8 {
        match self {
            ElemOp::Create(Spin::Up) => 0,
            ElemOp::Create(Spin::Down) => 1,
            ElemOp::Annihilate(Spin::Up) => 2,
            ElemOp::Annihilate(Spin::Down) => 3,
            ElemOp::SPlus => 4,
            ElemOp::SMinus => 5,
            ElemOp::Sz => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteKind {
    Spin,
    Fermion,
}

/// Single-site Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSpace {
    pub kind: SiteKind,
    /// One-dimensional sectors, one per state, in state order.
    pub basis: SectorBasis,
    pub parity: DMatrix<f64>,
}

impl LocalSpace {
    pub fn spin_half() -> Self {
        let basis = SectorBasis::new(vec![(QuantumNumber::scalar(-1), 1), (QuantumNumber::scalar(1), 1)])
            .expect("spin basis");
        LocalSpace { kind: SiteKind::Spin, basis, parity: DMatrix::identity(2, 2) }
    }

    pub fn fermion() -> Self {
        let basis = SectorBasis::new(vec![
            (QuantumNumber::new(0, 0), 1),
            (QuantumNumber::new(1, -1), 1),
            (QuantumNumber::new(1, 1), 1),
            (QuantumNumber::new(2, 0), 1),
        ])
        .expect("fermion basis");
        let parity = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, -1.0, 1.0]));
        LocalSpace { kind: SiteKind::Fermion, basis, parity }
    }

    pub fn dim(&self) -> usize {
        self.basis.total_dimension()
    }

    /// Quantum number of basis state `i`.
    pub fn qn(&self, i: usize) -> QuantumNumber {
        self.basis.entries()[i].0
    }
}

/// `coeff · O_1 O_2 … O_n`, each operator acting on the given site.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub ops: Vec<(usize, ElemOp)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Heisenberg { n: usize, j: f64 },
    Hubbard { n: usize, t: f64, u: f64 },
    IntegralFile { path: PathBuf },
    Integrals(Integrals),
}

/// A Hamiltonian as a list of operator strings plus a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub n_sites: usize,
    pub local: LocalSpace,
    pub terms: Vec<Term>,
    pub constant: f64,
    /// Set for fermion models.
    pub integrals: Option<Integrals>,
    /// Exchange coupling for spin chains.
    pub coupling: Option<f64>,
}

pub fn build_model(spec: &ModelSpec) -> Result<Model, ModelError> {
    match spec {
        ModelSpec::Heisenberg { n, j } => heisenberg_chain(*n, *j),
        ModelSpec::Hubbard { n, t, u } => {
            if !t.is_finite() || !u.is_finite() {
                return Err(ModelError::Invalid("non-finite Hubbard parameter".into()));
            }
            from_integrals(Integrals::hubbard_chain(*n, *t, *u))
        }
        ModelSpec::IntegralFile { path } => from_integrals(Integrals::load(path)?),
        ModelSpec::Integrals(ints) => from_integrals(ints.clone()),
    }
}

/// `J Σ (½S⁺S⁻ + ½S⁻S⁺ + SᶻSᶻ)` on an open chain.
pub fn heisenberg_chain(n: usize, j: f64) -> Result<Model, ModelError> {
    if n < 2 {
        return Err(ModelError::Invalid(format!("chain needs at least 2 sites, got {n}")));
    }
    if !j.is_finite() {
        return Err(ModelError::Invalid("non-finite coupling".into()));
    }
    let mut terms = Vec::with_capacity(3 * (n - 1));
    for i in 0..n - 1 {
        terms.push(Term { coeff: 0.5 * j, ops: vec![(i, ElemOp::SPlus), (i + 1, ElemOp::SMinus)] });
        terms.push(Term { coeff: 0.5 * j, ops: vec![(i, ElemOp::SMinus), (i + 1, ElemOp::SPlus)] });
        terms.push(Term { coeff: j, ops: vec![(i, ElemOp::Sz), (i + 1, ElemOp::Sz)] });
    }
    Ok(Model { n_sites: n, local: LocalSpace::spin_half(), terms, constant: 0.0, integrals: None, coupling: Some(j) })
}

pub fn from_integrals(ints: Integrals) -> Result<Model, ModelError> {
    let n = ints.n_modes();
    if n < 2 {
        return Err(ModelError::Invalid(format!("need at least 2 modes, got {n}")));
    }
    if ints.max_asymmetry() > SYMMETRY_TOLERANCE {
        return Err(ModelError::Invalid("one-body integrals are not symmetric".into()));
    }
    let spins = [Spin::Up, Spin::Down];
    let mut terms = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let t = ints.t(i, j);
            if t == 0.0 {
                continue;
            }
            for s in spins {
                terms.push(Term { coeff: t, ops: vec![(i, ElemOp::Create(s)), (j, ElemOp::Annihilate(s))] });
            }
        }
    }
    for ([i, j, k, l], v) in ints.two_body() {
        if v == 0.0 {
            continue;
        }
        if !v.is_finite() {
            return Err(ModelError::Invalid("non-finite two-body integral".into()));
        }
        for s in spins {
            for t in spins {
                if i == j && s == t || k == l && s == t {
                    continue;
                }
                terms.push(Term {
                    coeff: v,
                    ops: vec![
                        (i, ElemOp::Create(s)),
                        (j, ElemOp::Create(t)),
                        (k, ElemOp::Annihilate(t)),
                        (l, ElemOp::Annihilate(s)),
                    ],
                });
            }
        }
    }
    Ok(Model {
        n_sites: n,
        local: LocalSpace::fermion(),
        terms,
        constant: ints.core_energy,
        integrals: Some(ints),
        coupling: None,
    })
}

impl Model {
    /// Total quantum number of the default ground-state search: `Sz = 0`
    /// (or ½) for spins, half filling with minimal `|Sz|` for fermions.
    pub fn default_target(&self) -> QuantumNumber {
        match self.local.kind {
            SiteKind::Spin => QuantumNumber::scalar((self.n_sites % 2) as i32),
            SiteKind::Fermion => QuantumNumber::new(self.n_sites as i32, (self.n_sites % 2) as i32),
        }
    }

    /// Quantum numbers reachable by `sites` sites.
    pub fn reachable(&self, sites: usize) -> Vec<QuantumNumber> {
        let mut set = std::collections::BTreeSet::from([QuantumNumber::ZERO]);
        for _ in 0..sites {
            set = set.iter().flat_map(|&q| self.local.basis.qns().map(move |s| q + s)).collect();
        }
        set.into_iter().collect()
    }

    /// SHA-256 over the site kind, size, constant and every term.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update([self.local.kind as u8]);
        h.update((self.n_sites as u64).to_le_bytes());
        h.update(self.constant.to_le_bytes());
        for t in &self.terms {
            h.update(t.coeff.to_le_bytes());
            h.update((t.ops.len() as u32).to_le_bytes());
            for &(s, op) in &t.ops {
                h.update((s as u64).to_le_bytes());
                h.update([op.code()]);
            }
        }
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anticommutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a * b + b * a
    }

    #[test]
    fn fermion_local_algebra() {
        let cu = ElemOp::Create(Spin::Up).matrix();
        let cd = ElemOp::Create(Spin::Down).matrix();
        let au = cu.transpose();
        let ad = cd.transpose();
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(anticommutator(&au, &cu), id);
        assert_eq!(anticommutator(&ad, &cd), id);
        assert_eq!(anticommutator(&cu, &cd).abs().max(), 0.0);
        assert_eq!(anticommutator(&au, &cd).abs().max(), 0.0);
        // |↑↓⟩ = c†↑ c†↓ |0⟩
        let vac = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]);
        let both = &cu * (&cd * vac);
        assert_eq!(both[(3, 0)], 1.0);
    }

    #[test]
    fn operator_deltas_match_matrices() {
        for (space, ops) in [
            (
                LocalSpace::fermion(),
                vec![
                    ElemOp::Create(Spin::Up),
                    ElemOp::Create(Spin::Down),
                    ElemOp::Annihilate(Spin::Up),
                    ElemOp::Annihilate(Spin::Down),
                ],
            ),
            (LocalSpace::spin_half(), vec![ElemOp::SPlus, ElemOp::SMinus, ElemOp::Sz]),
        ] {
            for op in ops {
                let m = op.matrix();
                for r in 0..space.dim() {
                    for c in 0..space.dim() {
                        if m[(r, c)] != 0.0 {
                            assert_eq!(space.qn(r), space.qn(c) + op.delta(), "{op:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn targets() {
        let m = heisenberg_chain(4, 1.0).unwrap();
        assert_eq!(m.default_target(), QuantumNumber::ZERO);
        let h = build_model(&ModelSpec::Hubbard { n: 4, t: 1.0, u: 4.0 }).unwrap();
        assert_eq!(h.default_target(), QuantumNumber::new(4, 0));
        assert_eq!(m.reachable(2).len(), 3);
    }

    #[test]
    fn short_chain_rejected() {
        assert!(heisenberg_chain(1, 1.0).is_err());
    }
}
