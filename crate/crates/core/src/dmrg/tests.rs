use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{from_integrals, heisenberg_chain, Integrals, Model};
use crate::oracle;

fn solve(model: Model, d: usize, sweeps: usize, workers: usize) -> RunResult {
    let config = DmrgConfig { workers, ..DmrgConfig::default() };
    let dmrg = Dmrg::new(model, config).unwrap();
    dmrg.run(&SweepSchedule::constant(sweeps, d), None).unwrap()
}

#[test]
fn heisenberg_small_chains_are_exact() {
    for n in [2, 3, 4, 6] {
        let model = heisenberg_chain(n, 1.0).unwrap();
        let exact = oracle::ground_energy(&model, model.default_target()).unwrap();
        let r = solve(model, 64, 2, 1);
        assert!((r.final_energy().unwrap() - exact).abs() < 1e-9, "n = {n}");
    }
}

#[test]
fn hubbard_chain_is_exact() {
    let model = from_integrals(Integrals::hubbard_chain(4, 1.0, 4.0)).unwrap();
    let exact = oracle::ground_energy(&model, model.default_target()).unwrap();
    let r = solve(model, 64, 2, 2);
    assert!((r.final_energy().unwrap() - exact).abs() < 1e-9);
}

#[test]
fn random_integrals_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ints = Integrals::random_dense(4, &mut rng);
    ints.core_energy = 0.7;
    let model = from_integrals(ints).unwrap();
    let exact = oracle::ground_energy(&model, model.default_target()).unwrap();
    let r = solve(model, 64, 2, 1);
    assert!((r.final_energy().unwrap() - exact).abs() < 1e-8);
}

#[test]
fn small_bond_dimension_is_variational() {
    let model = heisenberg_chain(10, 1.0).unwrap();
    let exact = oracle::ground_energy(&model, model.default_target()).unwrap();
    let mut last = f64::INFINITY;
    for d in [1, 2, 4, 16] {
        let e = solve(model.clone(), d, 2, 1).final_energy().unwrap();
        assert!(e >= exact - 1e-9, "d = {d}: {e} below {exact}");
        assert!(e <= last + 1e-9);
        last = e;
    }
}

#[test]
fn results_are_independent_of_worker_count() {
    let model = heisenberg_chain(8, 1.0).unwrap();
    let a = solve(model.clone(), 8, 2, 1);
    let b = solve(model, 8, 2, 3);
    assert_eq!(a.state.sweep_energies.len(), b.state.sweep_energies.len());
    for (x, y) in a.state.sweep_energies.iter().zip(&b.state.sweep_energies) {
        assert!((x - y).abs() < 1e-10);
    }
}

fn dense_plan_matrix(plan: &EffectiveHamiltonianPlan, dmrg: &Dmrg) -> DMatrix<f64> {
    let n = plan.dim();
    let mut h = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        plan.apply(dmrg.pool(), dmrg.gemm(), &e, &mut y).unwrap();
        h.column_mut(j).copy_from_slice(&y);
    }
    h
}

#[test]
fn effective_hamiltonian_is_symmetric_and_exact_without_truncation() {
    let model = from_integrals(Integrals::hubbard_chain(3, 1.0, 2.0)).unwrap();
    let exact = oracle::ground_energy(&model, model.default_target()).unwrap();
    let dmrg = Dmrg::new(model, DmrgConfig::default()).unwrap();
    let (state, _) = dmrg.warmup(256, &SweepSchedule::constant(0, 256)).unwrap();
    for s in 0..2 {
        let plan = dmrg.plan(&state, s).unwrap();
        let h = dense_plan_matrix(&plan, &dmrg);
        assert!((&h - h.transpose()).amax() < 1e-12);
        let e = h.symmetric_eigen().eigenvalues.min();
        assert!((e - exact).abs() < 1e-10, "position {s}");
    }
}

#[test]
fn zero_vector_maps_to_zero() {
    let model = heisenberg_chain(6, 1.0).unwrap();
    let dmrg = Dmrg::new(model, DmrgConfig::default()).unwrap();
    let (state, _) = dmrg.warmup(8, &SweepSchedule::constant(0, 8)).unwrap();
    let plan = dmrg.plan(&state, 2).unwrap();
    let x = vec![0.0; plan.dim()];
    let mut y = vec![1.0; plan.dim()];
    plan.apply(dmrg.pool(), dmrg.gemm(), &x, &mut y).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn ground_vector_is_an_eigenvector() {
    let model = heisenberg_chain(8, 1.0).unwrap();
    let dmrg = Dmrg::new(model, DmrgConfig::default()).unwrap();
    let (state, _) = dmrg.warmup(16, &SweepSchedule::constant(0, 16)).unwrap();
    let plan = dmrg.plan(&state, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let guess: Vec<f64> = (0..plan.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = lanczos_ground(|x, y| plan.apply(dmrg.pool(), dmrg.gemm(), x, y), &guess, 1e-11, 500).unwrap();
    let mut hv = vec![0.0; plan.dim()];
    plan.apply(dmrg.pool(), dmrg.gemm(), &r.vector, &mut hv).unwrap();
    let res = hv.iter().zip(&r.vector).map(|(a, b)| (a - r.energy * b).powi(2)).sum::<f64>().sqrt();
    assert!(res < 1e-7, "residual {res}");
}

#[test]
fn counted_flops_match_the_estimate() {
    let model = heisenberg_chain(8, 1.0).unwrap();
    let r = solve(model, 16, 1, 2);
    for rec in &r.records {
        assert_eq!(rec.flops, rec.counted_flops, "{rec:?}");
    }
}

#[test]
fn truncation_matches_dense_reduced_density_matrix() {
    let model = heisenberg_chain(8, 1.0).unwrap();
    let dmrg = Dmrg::new(model.clone(), DmrgConfig::default()).unwrap();
    let schedule = SweepSchedule::constant(0, 256);
    let (mut state, _) = dmrg.warmup(256, &schedule).unwrap();
    // Exact blocks everywhere: the discarded weight at D = 4 must equal the
    // tail of the spectrum of the dense half-chain density matrix.
    let rec = dmrg.iteration(&mut state, Phase::Sweep(0), Direction::LeftToRight, 3, 4, &schedule).unwrap();
    let (_, v, states) = oracle::ground_state(&model, model.default_target()).unwrap();
    let mut psi = DMatrix::<f64>::zeros(1 << 4, 1 << 4);
    for (amp, &idx) in v.iter().zip(&states) {
        psi[(idx & 0xf, idx >> 4)] += amp;
    }
    let rho = &psi * psi.transpose();
    let mut w: Vec<f64> = rho.symmetric_eigen().eigenvalues.iter().copied().collect();
    w.sort_by(|a, b| b.total_cmp(a));
    let tail: f64 = w[4..].iter().sum();
    assert!((rec.truncation_error - tail).abs() < 1e-8, "{} vs {}", rec.truncation_error, tail);
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ckp");
    let model = heisenberg_chain(6, 1.0).unwrap();
    let config = DmrgConfig { checkpoint: Some(path.clone()), ..DmrgConfig::default() };
    let dmrg = Dmrg::new(model.clone(), config).unwrap();
    let first = dmrg.run(&SweepSchedule::constant(1, 16), None).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, first.state);
    let resumed = dmrg.run(&SweepSchedule::constant(2, 16), Some(loaded)).unwrap();
    assert_eq!(resumed.state.sweeps_done, 2);
    let straight = solve(model, 16, 2, 1);
    assert!((resumed.final_energy().unwrap() - straight.final_energy().unwrap()).abs() < 1e-10);

    let other = Dmrg::new(heisenberg_chain(6, 0.5).unwrap(), DmrgConfig::default()).unwrap();
    assert!(other.run(&SweepSchedule::constant(2, 16), Some(first.state.clone())).is_err());

    let mut bytes = encode(&first.state);
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    assert!(decode(&bytes).is_err());
    assert!(matches!(decode(b"notackpt"), Err(crate::error::CheckpointError::Magic)));
}

#[test]
fn unreachable_target_is_rejected() {
    let model = heisenberg_chain(4, 1.0).unwrap();
    let config = DmrgConfig { target: Some(crate::qn::QuantumNumber([9, 0])), ..DmrgConfig::default() };
    assert!(Dmrg::new(model, config).is_err());
}
