use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sector_dmrg::model::{factorize, from_integrals, heisenberg_chain, Integrals, Mpo, Partition};
use sector_dmrg::oracle;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mpo_matches_oracle_on_random_integrals(seed in any::<u64>(), n in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ints = Integrals::random_dense(n, &mut rng);
        ints.core_energy = (seed % 7) as f64 * 0.1;
        let model = from_integrals(ints).unwrap();
        let mpo = Mpo::build(&model).unwrap();
        let dense = mpo.dense_hamiltonian().unwrap();
        let want = oracle::dense_hamiltonian(&model).unwrap();
        prop_assert!((&dense - &want).amax() < 1e-12);
    }

    #[test]
    fn operator_tables_reassemble_the_hamiltonian(seed in any::<u64>(), site in 0usize..2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = from_integrals(Integrals::random_dense(3, &mut rng)).unwrap();
        let (mpo, table) = factorize(&model, &Partition::two_site(3, site).unwrap()).unwrap();
        let got = table.assemble_dense(&mpo).unwrap();
        let want = oracle::dense_hamiltonian(&model).unwrap();
        prop_assert!((&got - &want).amax() < 1e-12);
    }

    #[test]
    fn integral_text_round_trip(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ints = Integrals::random_dense(n, &mut rng);
        ints.core_energy = -1.25;
        let back = Integrals::parse(&ints.to_text()).unwrap();
        prop_assert_eq!(back, ints);
    }
}

#[test]
fn heisenberg_operator_table_matches_oracle() {
    let model = heisenberg_chain(5, 0.7).unwrap();
    let want = oracle::dense_hamiltonian(&model).unwrap();
    for site in 0..4 {
        let (mpo, table) = factorize(&model, &Partition::two_site(5, site).unwrap()).unwrap();
        assert!((table.assemble_dense(&mpo).unwrap() - &want).amax() < 1e-12);
    }
}
