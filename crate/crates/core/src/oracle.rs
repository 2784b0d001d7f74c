//! Exact-diagonalization references built directly from second
//! quantization, independently of the factorized operator strings.
//!
//! Product states are indexed with site 0 as the fastest digit, the same
//! order as the factorized dense assembly. Fermion states are occupation
//! bit strings over spin orbitals ordered `0↑, 0↓, 1↑, 1↓, …`, with
//! `|n⟩ = Π (c†_m)^{n_m} |0⟩` in increasing mode order.

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;
use crate::model::{Model, SiteKind};
use crate::qn::QuantumNumber;
use crate::sector::DENSIFY_GUARD;

/// Largest sector handled by [`sector_hamiltonian`].
pub const SECTOR_GUARD: usize = 6000;

fn local_dim(model: &Model) -> usize {
    match model.local.kind {
        SiteKind::Spin => 2,
        SiteKind::Fermion => 4,
    }
}

fn full_dim(model: &Model) -> Option<usize> {
    local_dim(model).checked_pow(model.n_sites as u32)
}

fn digits(model: &Model, mut index: usize) -> Vec<usize> {
    let d = local_dim(model);
    (0..model.n_sites)
        .map(|_| {
            let x = index % d;
            index /= d;
            x
        })
        .collect()
}

fn undigits(model: &Model, digits: &[usize]) -> usize {
    let d = local_dim(model);
    digits.iter().rev().fold(0, |acc, &x| acc * d + x)
}

/// Total quantum number of product state `index`.
pub fn state_qn(model: &Model, index: usize) -> QuantumNumber {
    digits(model, index).into_iter().fold(QuantumNumber::ZERO, |q, x| q + model.local.qn(x))
}

fn to_modes(ds: &[usize]) -> u64 {
    let mut bits = 0u64;
    for (i, &x) in ds.iter().enumerate() {
        if x == 2 || x == 3 {
            bits |= 1 << (2 * i);
        }
        if x == 1 || x == 3 {
            bits |= 1 << (2 * i + 1);
        }
    }
    bits
}

fn from_modes(bits: u64, n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| {
            let up = bits >> (2 * i) & 1 == 1;
            let dn = bits >> (2 * i + 1) & 1 == 1;
            match (up, dn) {
                (false, false) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (true, true) => 3,
            }
        })
        .collect()
}

/// `c†_m` (create) or `c_m` on an occupation string, with the sign
/// `(-1)^{#occupied modes before m}`.
fn ladder(bits: u64, mode: usize, create: bool) -> Option<(u64, f64)> {
    let occupied = bits >> mode & 1 == 1;
    if occupied == create {
        return None;
    }
    let below = (bits & ((1u64 << mode) - 1)).count_ones();
    let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
    Some((bits ^ (1 << mode), sign))
}

/// `H|index⟩` as a list of `(row, value)`.
fn apply_column(model: &Model, index: usize) -> Result<Vec<(usize, f64)>, ModelError> {
    let n = model.n_sites;
    let ds = digits(model, index);
    let mut out = Vec::new();
    match model.local.kind {
        SiteKind::Spin => {
            let j = model.coupling.ok_or_else(|| ModelError::Invalid("spin model without coupling".into()))?;
            let mut diag = 0.0;
            for i in 0..n - 1 {
                let (a, b) = (ds[i], ds[i + 1]);
                let sa = a as f64 - 0.5;
                let sb = b as f64 - 0.5;
                diag += j * sa * sb;
                if a != b {
                    let mut flipped = ds.clone();
                    flipped.swap(i, i + 1);
                    out.push((undigits(model, &flipped), 0.5 * j));
                }
            }
            out.push((index, diag));
        }
        SiteKind::Fermion => {
            let ints =
                model.integrals.as_ref().ok_or_else(|| ModelError::Invalid("fermion model without integrals".into()))?;
            let bits = to_modes(&ds);
            out.push((index, ints.core_energy));
            let mode = |orb: usize, spin: usize| 2 * orb + spin;
            let mut emit = |b: u64, x: f64| out.push((undigits(model, &from_modes(b, n)), x));
            for i in 0..n {
                for jj in 0..n {
                    let t = ints.t(i, jj);
                    if t == 0.0 {
                        continue;
                    }
                    for s in 0..2 {
                        let Some((b1, s1)) = ladder(bits, mode(jj, s), false) else { continue };
                        let Some((b2, s2)) = ladder(b1, mode(i, s), true) else { continue };
                        emit(b2, t * s1 * s2);
                    }
                }
            }
            for ([i, jj, k, l], v) in ints.two_body() {
                if v == 0.0 {
                    continue;
                }
                for s in 0..2 {
                    for t in 0..2 {
                        let Some((b1, s1)) = ladder(bits, mode(l, s), false) else { continue };
                        let Some((b2, s2)) = ladder(b1, mode(k, t), false) else { continue };
                        let Some((b3, s3)) = ladder(b2, mode(jj, t), true) else { continue };
                        let Some((b4, s4)) = ladder(b3, mode(i, s), true) else { continue };
                        emit(b4, v * s1 * s2 * s3 * s4);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The full dense Hamiltonian in the product basis.
pub fn dense_hamiltonian(model: &Model) -> Result<DMatrix<f64>, ModelError> {
    let dim = full_dim(model).filter(|&d| d <= DENSIFY_GUARD).ok_or_else(|| {
        ModelError::Invalid(format!("dense dimension exceeds {DENSIFY_GUARD}"))
    })?;
    let mut h = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        for (r, x) in apply_column(model, c)? {
            h[(r, c)] += x;
        }
    }
    Ok(h)
}

/// Product states with total quantum number `target`, ascending.
pub fn sector_states(model: &Model, target: QuantumNumber) -> Result<Vec<usize>, ModelError> {
    let dim = full_dim(model)
        .filter(|&d| d <= 1 << 24)
        .ok_or_else(|| ModelError::Invalid("product space too large to enumerate".into()))?;
    Ok((0..dim).filter(|&i| state_qn(model, i) == target).collect())
}

/// Hamiltonian restricted to the sector `target`, with the state list.
pub fn sector_hamiltonian(model: &Model, target: QuantumNumber) -> Result<(DMatrix<f64>, Vec<usize>), ModelError> {
    let states = sector_states(model, target)?;
    if states.len() > SECTOR_GUARD {
        return Err(ModelError::Invalid(format!("sector dimension {} exceeds {SECTOR_GUARD}", states.len())));
    }
    let pos: std::collections::HashMap<usize, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut h = DMatrix::zeros(states.len(), states.len());
    for (c, &s) in states.iter().enumerate() {
        for (r, x) in apply_column(model, s)? {
            let row = *pos.get(&r).ok_or_else(|| ModelError::Invalid("Hamiltonian leaves the sector".into()))?;
            h[(row, c)] += x;
        }
    }
    Ok((h, states))
}

/// Lowest eigenvalue and eigenvector (in the sector state order).
pub fn ground_state(model: &Model, target: QuantumNumber) -> Result<(f64, DVector<f64>, Vec<usize>), ModelError> {
    let (h, states) = sector_hamiltonian(model, target)?;
    if states.is_empty() {
        return Err(ModelError::Invalid(format!("empty sector {target}")));
    }
    let eig = h.symmetric_eigen();
    let (k, e) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, e)| (k, *e))
        .expect("non-empty");
    Ok((e, eig.eigenvectors.column(k).into_owned(), states))
}

pub fn ground_energy(model: &Model, target: QuantumNumber) -> Result<f64, ModelError> {
    ground_state(model, target).map(|g| g.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, heisenberg_chain, Integrals, ModelSpec, Mpo};

    #[test]
    fn singlet_triplet() {
        let m = heisenberg_chain(2, 1.0).unwrap();
        let h = dense_hamiltonian(&m).unwrap();
        let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 0.75).abs() < 1e-14);
        assert!(ev[1..].iter().all(|e| (e - 0.25).abs() < 1e-14));
    }

    #[test]
    fn hubbard_dimer_noninteracting() {
        let m = build_model(&ModelSpec::Hubbard { n: 2, t: 1.0, u: 0.0 }).unwrap();
        let e = ground_energy(&m, QuantumNumber::new(2, 0)).unwrap();
        assert!((e + 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_orbital_double_occupancy() {
        let ints = Integrals::parse("N 2\nT 1 1 -1.0\n").unwrap();
        let m = build_model(&ModelSpec::Integrals(ints)).unwrap();
        assert!((ground_energy(&m, QuantumNumber::new(2, 0)).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_sector_dimension() {
        let m = heisenberg_chain(12, 1.0).unwrap();
        assert_eq!(sector_states(&m, QuantumNumber::ZERO).unwrap().len(), 924);
    }

    #[test]
    fn mpo_contraction_matches_direct_construction() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        let mut ints = Integrals::random_dense(3, &mut rng);
        ints.core_energy = 0.7;
        for m in [
            heisenberg_chain(5, 1.3).unwrap(),
            build_model(&ModelSpec::Hubbard { n: 4, t: 1.0, u: 4.0 }).unwrap(),
            build_model(&ModelSpec::Integrals(ints)).unwrap(),
        ] {
            let direct = dense_hamiltonian(&m).unwrap();
            let mpo = Mpo::build(&m).unwrap().dense_hamiltonian().unwrap();
            assert!((direct - mpo).abs().max() < 1e-12);
        }
    }
}
