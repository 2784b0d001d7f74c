use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sector_dmrg::qn::{QuantumNumber, SectorBasis};
use sector_dmrg::sector::{densify, dense_operation, execute_tasks, task_table, OpKind, SectorMatrix, SectorSpec};

fn random_basis(rng: &mut ChaCha8Rng, max_sectors: usize, max_dim: usize) -> SectorBasis {
    let n = rng.random_range(1..=max_sectors);
    let mut qs: Vec<i32> = (-3..=3).collect();
    let mut entries = Vec::new();
    for _ in 0..n {
        let i = rng.random_range(0..qs.len());
        let q = qs.swap_remove(i);
        entries.push((QuantumNumber::new(q, rng.random_range(-1..=1)), rng.random_range(1..=max_dim)));
    }
    SectorBasis::new(entries).unwrap()
}

fn random_delta(rng: &mut ChaCha8Rng) -> QuantumNumber {
    QuantumNumber::new(rng.random_range(-1..=1), rng.random_range(-1..=1))
}

fn rel_frobenius(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).norm() / want.norm().max(1.0)
}

fn multiply_case(seed: u64, ta: bool, tb: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outer = random_basis(&mut rng, 4, 4);
    let inner = random_basis(&mut rng, 4, 4);
    let last = random_basis(&mut rng, 4, 4);
    let (da, db) = (random_delta(&mut rng), random_delta(&mut rng));
    let spec_a = if ta { SectorSpec::new(inner.clone(), outer, -da) } else { SectorSpec::new(outer, inner.clone(), da) };
    let spec_b = if tb { SectorSpec::new(last, inner, -db) } else { SectorSpec::new(inner, last, db) };
    let a = SectorMatrix::random(spec_a, 0.8, &mut rng);
    let b = SectorMatrix::random(spec_b, 0.8, &mut rng);
    let kind = OpKind::Multiply { trans_a: ta, trans_b: tb };
    let table = task_table(&a, &b, kind).unwrap();
    let mut out = SectorMatrix::from_spec(table.output.clone());
    execute_tasks(&table, &a, &b, &mut out).unwrap();
    out.validate().unwrap();
    rel_frobenius(&densify(&out).unwrap(), &dense_operation(&a, &b, kind).unwrap())
}

fn kron_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ba = random_basis(&mut rng, 3, 4);
    let bb = random_basis(&mut rng, 3, 4);
    let a = SectorMatrix::random(SectorSpec::new(ba.clone(), ba, random_delta(&mut rng)), 0.8, &mut rng);
    let b = SectorMatrix::random(SectorSpec::new(bb.clone(), bb, random_delta(&mut rng)), 0.8, &mut rng);
    let table = task_table(&a, &b, OpKind::Kron).unwrap();
    let mut out = SectorMatrix::from_spec(table.output.clone());
    execute_tasks(&table, &a, &b, &mut out).unwrap();
    out.validate().unwrap();
    rel_frobenius(&densify(&out).unwrap(), &dense_operation(&a, &b, OpKind::Kron).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn multiply_matches_dense(seed in any::<u64>(), ta in any::<bool>(), tb in any::<bool>()) {
        prop_assert!(multiply_case(seed, ta, tb) < 1e-12);
    }

    #[test]
    fn kron_matches_dense(seed in any::<u64>()) {
        prop_assert!(kron_case(seed) < 1e-12);
    }

    #[test]
    fn dense_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rb = random_basis(&mut rng, 4, 5);
        let cb = random_basis(&mut rng, 4, 5);
        let m = SectorMatrix::random(SectorSpec::new(rb, cb, random_delta(&mut rng)), 0.7, &mut rng);
        let d = densify(&m).unwrap();
        let back = SectorMatrix::from_dense(m.spec().clone(), &d).unwrap();
        prop_assert_eq!(densify(&back).unwrap(), d);
    }
}

#[test]
fn transpose_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let rb = random_basis(&mut rng, 4, 4);
        let cb = random_basis(&mut rng, 4, 4);
        let m = SectorMatrix::random(SectorSpec::new(rb, cb, random_delta(&mut rng)), 0.9, &mut rng);
        assert_eq!(densify(&m.transpose()).unwrap(), densify(&m).unwrap().transpose());
    }
}

#[test]
fn off_pattern_dense_input_is_rejected() {
    let b = SectorBasis::new(vec![(QuantumNumber::scalar(0), 1), (QuantumNumber::scalar(1), 1)]).unwrap();
    let spec = SectorSpec::new(b.clone(), b, QuantumNumber::ZERO);
    let d = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert!(SectorMatrix::from_dense(spec, &d).is_err());
}
