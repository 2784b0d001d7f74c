//! Dimension of particle-number-conserving Fock spaces.

use num_bigint::BigUint;

use crate::error::SectorError;

/// Number of configurations of `particles` electrons in `modes` spatial
/// orbitals (`2·modes` spin-orbitals), i.e. the binomial `C(2·modes, particles)`.
pub fn hilbert_dimension(modes: u64, particles: u64) -> Result<BigUint, SectorError> {
    let spin_orbitals = 2 * modes;
    if particles > spin_orbitals {
        return Err(SectorError::ParticleRange { particles, max: spin_orbitals });
    }
    let k = particles.min(spin_orbitals - particles);
    let mut acc = BigUint::from(1u32);
    // running product stays an exact binomial at every step
    for i in 0..k {
        acc *= spin_orbitals - i;
        acc /= i + 1;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cas_18_18() {
        assert_eq!(hilbert_dimension(18, 18).unwrap(), BigUint::from(9_075_135_300u64));
    }

    #[test]
    fn cas_54_54_leading_digits() {
        let d = hilbert_dimension(54, 54).unwrap().to_string();
        assert_eq!(d.len(), 32);
        assert!(d.starts_with("2485"), "{d}");
    }

    #[test]
    fn vacuum_and_range() {
        assert_eq!(hilbert_dimension(1, 0).unwrap(), BigUint::from(1u32));
        assert_eq!(hilbert_dimension(1, 2).unwrap(), BigUint::from(1u32));
        assert!(hilbert_dimension(1, 3).is_err());
    }
}
