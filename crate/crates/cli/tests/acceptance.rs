//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sector_dmrg::dmrg::{load_checkpoint, Dmrg, DmrgConfig, RunResult, SweepSchedule};
use sector_dmrg::hilbert_dimension;
use sector_dmrg::model::{auxiliary_counts, factorize, from_integrals, heisenberg_chain, Integrals, Model, Partition};
use sector_dmrg::oracle;
use sector_dmrg_cli::bench::bench_sweep;
use sector_dmrg_cli::check::{mazerunner_suite, sbmm4s_suite, sector_suite, ttcache_suite, SuiteReport};
use sector_dmrg_cli::{cli_run, fit_power_law, read_csv, write_csv, BenchRecord, EXIT_CONFIG, EXIT_OK};

fn report(id: u32, pass: bool, detail: &str) {
    println!("criterion {id} {}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn solve(model: &Model, d: usize, sweeps: usize, workers: usize) -> RunResult {
    let config = DmrgConfig { workers, ..DmrgConfig::default() };
    Dmrg::new(model.clone(), config).unwrap().run(&SweepSchedule::constant(sweeps, d), None).unwrap()
}

/// Largest increase between consecutive sweep energies (≤ 0 when
/// non-increasing).
fn max_rise(energies: &[f64]) -> f64 {
    energies.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_01_hilbert_dimension() {
    let start = Instant::now();
    let dim = hilbert_dimension(18, 18).unwrap();
    let elapsed = start.elapsed();
    let want: u64 = 9_075_135_300;
    let pass = dim == want.into() && within(elapsed, Duration::from_millis(1));
    report(1, pass, &format!("hilbert_dimension(18, 18) = {dim} (want {want}) in {elapsed:?}"));
    assert!(pass);
}

#[test]
fn criterion_02_heisenberg_accuracy() {
    let model = heisenberg_chain(12, 1.0).unwrap();
    let target = model.default_target();
    let states = oracle::sector_states(&model, target).unwrap();
    let exact = oracle::ground_energy(&model, target).unwrap();
    let start = Instant::now();
    let result = solve(&model, 64, 3, 1);
    let elapsed = start.elapsed();
    let e = result.final_energy().unwrap();
    let rel = ((e - exact) / exact).abs();
    let pass = states.len() == 924 && rel <= 1e-10 && within(elapsed, Duration::from_secs(60));
    report(
        2,
        pass,
        &format!("N=12 D=64 3 sweeps: E = {e}, exact {exact} (sector dim {}), relative error {rel:.2e}, {elapsed:?}", states.len()),
    );
    assert!(pass);
}

fn suite_line(id: u32, rep: &SuiteReport, elapsed: Duration, limit: Duration) -> bool {
    let pass = rep.passed() && within(elapsed, limit);
    report(id, pass, &format!("{} in {elapsed:?}", rep.summary()));
    for f in rep.failures.iter().take(5) {
        println!("  {f}");
    }
    pass
}

#[test]
fn criterion_03_sector_oracle() {
    let start = Instant::now();
    let rep = sector_suite(1000, 3);
    let pass = suite_line(3, &rep, start.elapsed(), Duration::from_secs(30));
    assert!(rep.cases == 1000 && rep.nontrivial >= 500);
    assert!(pass);
}

#[test]
fn criterion_04_sbmm4s_oracle() {
    let start = Instant::now();
    let rep = sbmm4s_suite(1000, 4);
    let pass = suite_line(4, &rep, start.elapsed(), Duration::from_secs(30));
    assert!(rep.cases == 1000);
    assert!(pass);
}

#[test]
fn criterion_05_ttcache_properties() {
    let start = Instant::now();
    let rep = ttcache_suite(200, 5);
    let pass = suite_line(5, &rep, start.elapsed(), Duration::from_secs(10));
    assert!(rep.cases == 200);
    assert!(pass);
}

#[test]
fn criterion_06_worker_determinism() {
    let model = heisenberg_chain(10, 1.0).unwrap();
    let start = Instant::now();
    let (rep, energies) = mazerunner_suite(&model, 32, 2, &[1, 2, 4]);
    let elapsed = start.elapsed();
    let pass = rep.passed() && within(elapsed, Duration::from_secs(60));
    report(6, pass, &format!("final energies {energies:?}, max relative deviation {:.2e}, {elapsed:?}", rep.max_error));
    assert!(pass, "{:?}", rep.failures);
}

#[test]
fn criterion_07_factorization() {
    let start = Instant::now();
    let mut max_dev: f64 = 0.0;
    let models = [heisenberg_chain(4, 1.0).unwrap(), from_integrals(Integrals::hubbard_chain(4, 1.0, 4.0)).unwrap()];
    for model in &models {
        let dense = oracle::dense_hamiltonian(model).unwrap();
        for site in 0..3 {
            let (mpo, table) = factorize(model, &Partition::two_site(4, site).unwrap()).unwrap();
            let assembled = table.assemble_dense(&mpo).unwrap();
            max_dev = max_dev.max((assembled - &dense).amax());
        }
    }
    let mut points = Vec::new();
    for n in [4usize, 6, 8, 12, 16] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let model = from_integrals(Integrals::random_dense(n, &mut rng)).unwrap();
        let count = *auxiliary_counts(&model).unwrap().iter().max().unwrap();
        points.push((n as f64, count as f64));
    }
    let fit = fit_power_law(&points).unwrap();
    let elapsed = start.elapsed();
    let pass = max_dev <= 1e-12 && fit.exponent <= 2.1 && within(elapsed, Duration::from_secs(60));
    report(
        7,
        pass,
        &format!(
            "max |H_table - H_dense| = {max_dev:.2e}; auxiliary counts {:?}, slope {:.4}; {elapsed:?}",
            points.iter().map(|p| p.1 as usize).collect::<Vec<_>>(),
            fit.exponent
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_checkpoint_resume() {
    let start = Instant::now();
    let model = heisenberg_chain(10, 1.0).unwrap();
    let schedule = SweepSchedule::constant(3, 24);
    let straight = Dmrg::new(model.clone(), DmrgConfig::default()).unwrap().run(&schedule, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    let config = DmrgConfig { checkpoint: Some(path.clone()), ..DmrgConfig::default() };
    let first = Dmrg::new(model.clone(), config.clone()).unwrap().run(&SweepSchedule::constant(1, 24), None).unwrap();
    // A fresh solver continues from the file alone.
    let state = load_checkpoint(&path).unwrap();
    let rest = Dmrg::new(model, config).unwrap().run(&schedule, Some(state)).unwrap();

    let resumed: Vec<f64> = first.records.iter().chain(&rest.records).map(|r| r.energy).collect();
    let want: Vec<f64> = straight.records.iter().map(|r| r.energy).collect();
    let dev = if resumed.len() == want.len() {
        resumed.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let elapsed = start.elapsed();
    let pass = dev <= 1e-12 && within(elapsed, Duration::from_secs(30));
    report(8, pass, &format!("{} iterations, max energy deviation {dev:.2e}, {elapsed:?}", want.len()));
    assert!(pass);
}

#[test]
fn criterion_09_scaling_fits() {
    let start = Instant::now();
    let mut ok = true;
    let mut lines = Vec::new();
    for k in [-0.8438, 1.0, 2.0, 2.24, 3.0] {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| {
            let x = 16.0 * 2f64.powi(i);
            (x, 0.37 * f64::powf(x, k))
        }).collect();
        let f = fit_power_law(&pts).unwrap();
        ok &= (f.exponent - k).abs() <= 1e-9;
        lines.push(format!("exact {k}: {:.12}", f.exponent));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.01).unwrap();
    for trial in 0..20 {
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let d = 32.0 * 2f64.powf(i as f64 * 0.5);
                (d, 1e-6 * d.powf(2.24) * (1.0 + noise.sample(&mut rng)))
            })
            .collect();
        let f = fit_power_law(&pts).unwrap();
        ok &= (f.exponent - 2.24).abs() <= 0.05;
        if trial == 0 {
            lines.push(format!("noisy 2.24: {:.4}", f.exponent));
        }
    }

    let model = from_integrals(Integrals::hubbard_chain(12, 1.0, 4.0)).unwrap();
    let recs = bench_sweep(&model, &[32, 64, 128, 256], 5, &DmrgConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    write_csv(&recs, &csv).unwrap();
    let back = read_csv(&csv).unwrap();
    ok &= back == recs;
    let fit = fit_power_law(&back.iter().map(|r| (r.size as f64, r.seconds)).collect::<Vec<_>>()).unwrap();
    let elapsed = start.elapsed();
    let pass = ok && fit.exponent <= 3.2 && within(elapsed, Duration::from_secs(600));
    lines.push(format!(
        "Hubbard N=12 sweep times {:?} s, slope {:.3} (r2 {:.4})",
        recs.iter().map(|r| format!("D={} {:.3}", r.size, r.seconds)).collect::<Vec<_>>(),
        fit.exponent,
        fit.r_squared
    ));
    report(9, pass, &format!("{}; {elapsed:?}", lines.join("; ")));
    assert!(pass);
}

/// Per-sweep energies of every solve configuration used by the criteria
/// above and the CLI example.
#[test]
fn criterion_10_variational_monotonicity() {
    let h12 = heisenberg_chain(12, 1.0).unwrap();
    let h10 = heisenberg_chain(10, 1.0).unwrap();
    let h8 = heisenberg_chain(8, 1.0).unwrap();
    let mut runs: Vec<(String, Vec<f64>)> = vec![("criterion 2".into(), solve(&h12, 64, 3, 1).state.sweep_energies)];
    for w in [1, 2, 4] {
        runs.push((format!("criterion 6, {w} workers"), solve(&h10, 32, 2, w).state.sweep_energies));
    }
    runs.push(("criterion 8".into(), solve(&h10, 24, 3, 1).state.sweep_energies));
    runs.push(("cli example".into(), solve(&h8, 16, 3, 1).state.sweep_energies));
    let mut worst = f64::NEG_INFINITY;
    for (name, energies) in &runs {
        let rise = max_rise(energies);
        worst = worst.max(rise);
        if rise > 1e-9 {
            println!("  {name}: sweep energies {energies:?}");
        }
    }
    let pass = worst <= 1e-9;
    report(10, pass, &format!("{} solve runs, largest sweep-to-sweep rise {worst:.2e}", runs.len()));
    assert!(pass);
}

/// Not a criterion: with heavy truncation the sweep energy may rise by up
/// to the order of the discarded weight times |E|.
#[test]
fn truncated_runs_rise_at_most_by_discarded_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let runs: Vec<(&str, Model, usize)> = vec![
        ("heisenberg N=12 D=8", heisenberg_chain(12, 1.0).unwrap(), 8),
        ("heisenberg N=16 D=12", heisenberg_chain(16, 1.0).unwrap(), 12),
        ("hubbard N=8 D=16", from_integrals(Integrals::hubbard_chain(8, 1.0, 4.0)).unwrap(), 16),
        ("hubbard N=10 D=48", from_integrals(Integrals::hubbard_chain(10, 1.0, 2.0)).unwrap(), 48),
        ("dense N=5 D=16", from_integrals(Integrals::random_dense(5, &mut rng)).unwrap(), 16),
    ];
    for (name, model, d) in &runs {
        let r = solve(model, *d, 4, 2);
        let energies = &r.state.sweep_energies;
        let discarded = r.records.iter().map(|x| x.truncation_error).fold(0.0, f64::max);
        let bound = discarded * energies[0].abs() + 1e-9;
        let rise = max_rise(energies);
        println!("truncated {name}: largest rise {rise:.2e}, bound {bound:.2e}");
        assert!(rise <= bound, "{name}: {energies:?}");
    }
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["sector-dmrg"];
    argv.extend_from_slice(args);
    let code = cli_run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn cli_examples() {
    let (code, out, _) = run_cli(&["solve", "--model", "heisenberg", "--n", "8", "--d", "16", "--sweeps", "3"]);
    assert_eq!(code, EXIT_OK);
    let e: f64 = out.lines().find_map(|l| l.strip_prefix("final_energy ")).unwrap().trim().parse().unwrap();
    let model = heisenberg_chain(8, 1.0).unwrap();
    let exact = oracle::ground_energy(&model, model.default_target()).unwrap();
    assert!((e - exact).abs() < 1e-8, "{e} vs {exact}");

    let (code, _, err) = run_cli(&["frobnicate"]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("synthetic.csv");
    let recs: Vec<BenchRecord> = [16u64, 32, 64, 128]
        .iter()
        .map(|&d| BenchRecord { label: "sweep".into(), size: d, seconds: 2.0 * (d * d) as f64, flops: 1 })
        .collect();
    write_csv(&recs, &csv).unwrap();
    let (code, out, _) = run_cli(&["fit", csv.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("exponent 2.000000"), "{out}");

    let (code, _, _) = run_cli(&["solve", "--model", "file"]);
    assert_eq!(code, EXIT_CONFIG);
}
