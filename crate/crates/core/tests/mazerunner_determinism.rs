use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use sector_dmrg::dmrg::{Dmrg, DmrgConfig, SweepSchedule};
use sector_dmrg::mazerunner::{FnMaze, ListMaze, RunnerPool};
use sector_dmrg::model::heisenberg_chain;

/// Every task writes a value keyed by its identity, so the result map is
/// independent of execution order.
fn tree_batch(pool: &RunnerPool) -> (BTreeMap<u64, u64>, usize) {
    let out = Mutex::new(BTreeMap::new());
    let maze = FnMaze::new(16, |i: usize, found: &mut dyn FnMut(u64)| {
        for k in 0..4 {
            found((i * 4 + k) as u64 + 1);
        }
    });
    let stats = pool.run_batch(&maze, |t: u64, spawner| {
        out.lock().unwrap().insert(t, t.wrapping_mul(0x9E37_79B9) % 1009);
        if t < 1 << 8 {
            spawner.spawn(t * 2);
            spawner.spawn(t * 2 + 1);
        }
        Ok(())
    });
    assert!(stats.is_ok());
    assert_eq!(stats.tasks_executed, stats.tasks_found);
    (out.into_inner().unwrap(), stats.tasks_executed)
}

#[test]
fn task_sets_do_not_depend_on_workers_or_timing() {
    let reference = tree_batch(&RunnerPool::new(1).unwrap());
    for workers in [1, 2, 4, 8] {
        for seed in 0..3 {
            let pool = RunnerPool::new(workers).unwrap().with_jitter(seed);
            assert_eq!(tree_batch(&pool), reference, "workers = {workers}, seed = {seed}");
        }
    }
}

#[test]
fn failures_are_isolated() {
    let pool = RunnerPool::new(4).unwrap().with_jitter(7);
    let done = AtomicUsize::new(0);
    let stats = pool.run_batch(&ListMaze::new((0..100).collect()), |t: i32, _| {
        if t % 10 == 3 {
            return Err(format!("task {t}"));
        }
        if t == 55 {
            panic!("boom");
        }
        done.fetch_add(1, Ordering::Relaxed);
        Ok(())
    });
    assert_eq!(stats.failures.len(), 11);
    assert_eq!(done.load(Ordering::Relaxed), 89);
}

#[test]
fn sweep_energies_agree_across_worker_counts() {
    let model = heisenberg_chain(8, 1.0).unwrap();
    let energy = |workers| {
        let config = DmrgConfig { workers, ..DmrgConfig::default() };
        let dmrg = Dmrg::new(model.clone(), config).unwrap();
        dmrg.run(&SweepSchedule::constant(2, 16), None).unwrap().final_energy().unwrap()
    };
    let e1 = energy(1);
    for w in [2, 4] {
        let e = energy(w);
        assert!(((e - e1) / e1).abs() < 1e-10, "workers = {w}: {e} vs {e1}");
    }
}

#[test]
fn workers_run_concurrently() {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cpus < 4 {
        eprintln!("skipping: {cpus} CPUs available");
        return;
    }
    let pool = RunnerPool::new(4).unwrap();
    let start = Instant::now();
    let stats = pool.run_batch(&ListMaze::new(vec![(); 8]), |_, _| {
        std::thread::sleep(Duration::from_millis(100));
        Ok(())
    });
    assert!(stats.is_ok());
    assert!(start.elapsed() < Duration::from_millis(400), "{:?}", start.elapsed());
}
