//! Oracle suites run by `check` and the acceptance tests.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sector_dmrg::dmrg::{Dmrg, DmrgConfig, SweepSchedule};
use sector_dmrg::gemm::{CountingGemm, ReferenceGemm};
use sector_dmrg::mazerunner::{FnMaze, RunnerPool};
use sector_dmrg::model::{from_integrals, heisenberg_chain, Integrals, Model};
use sector_dmrg::oracle;
use sector_dmrg::qn::{QuantumNumber, SectorBasis};
use sector_dmrg::sbmm4s::{sbmm4s, AccumulationProblem};
use sector_dmrg::sector::{densify, dense_operation, execute_tasks, task_table, OpKind, SectorMatrix, SectorSpec};
use sector_dmrg::ttcache::{naive_prefix_copies, plan_check, ttcache_run, DependencyNode};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    /// Cases whose reference result was not identically zero.
    pub nontrivial: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str, tolerance: f64) -> Self {
        SuiteReport { name, cases: 0, nontrivial: 0, max_error: 0.0, tolerance, failures: Vec::new() }
    }

    fn error(&mut self, e: f64, what: impl FnOnce() -> String) {
        self.max_error = self.max_error.max(e);
        if !(e <= self.tolerance) {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.cases > 0
    }

    pub fn summary(&self) -> String {
        format!(
            "{} {}: {} cases ({} non-trivial), max error {:.3e} (tolerance {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.nontrivial,
            self.max_error,
            self.tolerance
        )
    }
}

fn random_basis(rng: &mut ChaCha8Rng, sectors: usize, max_dim: usize) -> SectorBasis {
    let mut pool: Vec<QuantumNumber> =
        (-3..=3).flat_map(|a| (-1..=1).map(move |b| QuantumNumber::new(a, b))).collect();
    let mut entries = Vec::new();
    for _ in 0..rng.random_range(1..=sectors) {
        let q = pool.swap_remove(rng.random_range(0..pool.len()));
        entries.push((q, rng.random_range(1..=max_dim)));
    }
    SectorBasis::new(entries).expect("distinct sectors")
}

fn random_delta(rng: &mut ChaCha8Rng) -> QuantumNumber {
    QuantumNumber::new(rng.random_range(-1..=1), rng.random_range(-1..=1))
}

fn sector_case(rng: &mut ChaCha8Rng, kind: OpKind) -> (SectorMatrix, SectorMatrix) {
    match kind {
        OpKind::Multiply { trans_a, trans_b } => {
            let (x, y, z) = (random_basis(rng, 5, 12), random_basis(rng, 5, 12), random_basis(rng, 5, 12));
            // Deltas linking actual sectors keep most products non-empty.
            let y0 = y.entries()[rng.random_range(0..y.len())].0;
            let da = x.entries()[rng.random_range(0..x.len())].0 - y0;
            let db = y0 - z.entries()[rng.random_range(0..z.len())].0;
            let sa = if trans_a { SectorSpec::new(y.clone(), x, -da) } else { SectorSpec::new(x, y.clone(), da) };
            let sb = if trans_b { SectorSpec::new(z, y, -db) } else { SectorSpec::new(y, z, db) };
            (SectorMatrix::random(sa, 0.9, rng), SectorMatrix::random(sb, 0.9, rng))
        }
        _ => {
            let (x, y) = (random_basis(rng, 3, 4), random_basis(rng, 3, 4));
            let (dx, dy) = (random_delta(rng), random_delta(rng));
            (
                SectorMatrix::random(SectorSpec::new(x.clone(), x, dx), 0.9, rng),
                SectorMatrix::random(SectorSpec::new(y.clone(), y, dy), 0.9, rng),
            )
        }
    }
}

/// Sector multiply (all transpose flags) and Kronecker products against
/// their dense images; relative Frobenius error, total dimensions ≤ 256.
pub fn sector_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("sector", 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let kind = match case % 5 {
            4 => OpKind::Kron,
            k => OpKind::Multiply { trans_a: k & 1 == 1, trans_b: k & 2 == 2 },
        };
        let (a, b) = sector_case(&mut rng, kind);
        rep.cases += 1;
        let run = || -> Result<(f64, f64), sector_dmrg::SectorError> {
            let table = task_table(&a, &b, kind)?;
            let mut out = SectorMatrix::from_spec(table.output.clone());
            execute_tasks(&table, &a, &b, &mut out)?;
            out.validate()?;
            let want = dense_operation(&a, &b, kind)?;
            Ok(((densify(&out)? - &want).norm(), want.norm()))
        };
        match run() {
            Ok((diff, scale)) => {
                if scale > 0.0 {
                    rep.nontrivial += 1;
                }
                let e = if scale > 0.0 { diff / scale } else { diff };
                rep.error(e, || format!("case {case} ({kind:?}): error {e:e}"));
            }
            Err(err) => rep.failures.push(format!("case {case}: {err}")),
        }
    }
    rep
}

/// Fused SBMM4S against a plain loop over members; relative max-abs error
/// and exactly two kernel launches per call.
pub fn sbmm4s_suite(cases: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("sbmm4s", 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let mut dim = || rng.random_range(1..=32usize);
        let (m, n, q, r) = (dim(), dim(), dim(), dim());
        let p = rng.random_range(1..=16usize);
        let mut vals = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let (a, l, rs, b0) = (vals(m * n), vals(p * q * m), vals(p * r * n), vals(q * r));
        let alpha = 0.5 + (case % 3) as f64;
        let mut want = b0.clone();
        for i in 0..p {
            let (li, ri) = (&l[i * q * m..], &rs[i * r * n..]);
            for x in 0..q {
                for y in 0..r {
                    let mut s = 0.0;
                    for k in 0..m {
                        for j in 0..n {
                            s += li[x + k * q] * a[k + j * m] * ri[y + j * r];
                        }
                    }
                    want[x + y * q] += alpha * s;
                }
            }
        }
        let prob = AccumulationProblem { alpha, a: &a, m, n, l: &l, r_stack: &rs, q, r, p };
        let gemm = CountingGemm::new(ReferenceGemm);
        let mut got = b0;
        let mut work = vec![0.0; prob.workspace_len()];
        rep.cases += 1;
        rep.nontrivial += 1;
        if let Err(e) = sbmm4s(&gemm, &prob, &mut got, &mut work) {
            rep.failures.push(format!("case {case}: {e}"));
            continue;
        }
        if gemm.kernel_calls() != 2 {
            rep.failures.push(format!("case {case}: {} kernel calls", gemm.kernel_calls()));
        }
        let scale = want.iter().fold(f64::MIN_POSITIVE, |s, x| s.max(x.abs()));
        let e = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max) / scale;
        rep.error(e, || format!("case {case}: error {e:e}"));
    }
    rep
}

/// Random tree with `1..=max_nodes` nodes and non-empty payloads holding
/// the node id.
pub fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize) -> DependencyNode<Vec<u64>> {
    let count = rng.random_range(1..=max_nodes);
    let parent: Vec<usize> = (0..count).map(|i| if i == 0 { 0 } else { rng.random_range(0..i) }).collect();
    let sizes: Vec<usize> = (0..count).map(|_| rng.random_range(1..=32)).collect();
    fn build(id: usize, parent: &[usize], sizes: &[usize]) -> DependencyNode<Vec<u64>> {
        let kids = (1..parent.len()).filter(|&c| parent[c] == id).map(|c| build(c, parent, sizes)).collect();
        DependencyNode::with_children(id, vec![id as u64; sizes[id]], kids)
    }
    build(0, &parent, &sizes)
}

/// Traversal invariants on random trees: one load per node, peak equal to
/// the planned size, full unwind, and fewer bytes copied than reloading the
/// whole prefix at every node.
pub fn ttcache_suite(trees: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("ttcache", 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..trees {
        let tree = random_tree(&mut rng, 64);
        let need = plan_check::<u64, _>(&tree);
        rep.cases += 1;
        let stats = ttcache_run(&tree, need, |node, ctx| {
            let ok = ctx.path.iter().enumerate().all(|(lvl, _)| {
                let s = ctx.ancestor(lvl);
                s.iter().all(|&x| x == s[0])
            }) && ctx.own().iter().all(|&x| x == node.id as u64);
            if ok { Ok(()) } else { Err("arena contents corrupted".into()) }
        });
        let stats = match stats {
            Ok(s) => s,
            Err(e) => {
                rep.failures.push(format!("tree {case}: {e}"));
                continue;
            }
        };
        let naive_bytes = naive_prefix_copies::<u64, _>(&tree) * size_of::<u64>();
        let nodes = tree.node_count();
        if nodes > 1 {
            rep.nontrivial += 1;
        }
        let strict_ok = if nodes > 1 { stats.bytes_copied < naive_bytes } else { stats.bytes_copied <= naive_bytes };
        if stats.loads != nodes || stats.peak_offset != need || stats.final_offset != 0 || !strict_ok {
            rep.failures.push(format!(
                "tree {case}: loads {} of {nodes}, peak {} vs {need}, final {}, bytes {} vs naive {naive_bytes}",
                stats.loads, stats.peak_offset, stats.final_offset, stats.bytes_copied
            ));
        }
    }
    rep
}

fn jittered_task_map(pool: &RunnerPool) -> BTreeMap<u64, u64> {
    let out = Mutex::new(BTreeMap::new());
    let maze = FnMaze::new(8, |i: usize, found: &mut dyn FnMut(u64)| {
        (0..4).for_each(|k| found((i * 4 + k + 1) as u64));
    });
    pool.run_batch(&maze, |t: u64, spawner| {
        out.lock().map_err(|_| "poisoned")?.insert(t, t.wrapping_mul(2654435761) % 65521);
        if t < 256 {
            spawner.spawn(2 * t);
            spawner.spawn(2 * t + 1);
        }
        Ok(())
    });
    out.into_inner().unwrap_or_default()
}

/// Final sweep energies of the same calculation for each worker count;
/// error is the largest relative deviation from the first. Also checks
/// that a jittered task batch produces the same results on every pool.
pub fn mazerunner_suite(model: &Model, d: usize, sweeps: usize, workers: &[usize]) -> (SuiteReport, Vec<f64>) {
    let mut rep = SuiteReport::new("mazerunner", 1e-10);
    let reference = jittered_task_map(&RunnerPool::new(1).expect("one worker"));
    let mut energies = Vec::new();
    for &w in workers {
        rep.cases += 1;
        let pool = RunnerPool::new(w).expect("positive worker count").with_jitter(w as u64);
        if jittered_task_map(&pool) != reference {
            rep.failures.push(format!("{w} workers: task results differ"));
        }
        let config = DmrgConfig { workers: w, ..DmrgConfig::default() };
        let result = Dmrg::new(model.clone(), config).and_then(|d_| d_.run(&SweepSchedule::constant(sweeps, d), None));
        match result.map(|r| r.final_energy()) {
            Ok(Some(e)) => energies.push(e),
            Ok(None) => rep.failures.push(format!("{w} workers: no sweeps")),
            Err(e) => rep.failures.push(format!("{w} workers: {e}")),
        }
    }
    if let Some(&e0) = energies.first() {
        rep.nontrivial = energies.len();
        for (&w, &e) in workers.iter().zip(&energies) {
            let rel = ((e - e0) / e0).abs();
            rep.error(rel, || format!("{w} workers: {e} vs {e0}"));
        }
    }
    (rep, energies)
}

/// Small chains solved to convergence against exact diagonalization.
pub fn dmrg_suite() -> SuiteReport {
    let mut rep = SuiteReport::new("dmrg-small", 1e-8);
    let models = [
        heisenberg_chain(6, 1.0),
        from_integrals(Integrals::hubbard_chain(4, 1.0, 4.0)),
        from_integrals(Integrals::random_dense(3, &mut ChaCha8Rng::seed_from_u64(3))),
    ];
    for (i, model) in models.into_iter().enumerate() {
        rep.cases += 1;
        let run = || -> Result<(f64, f64), Box<dyn std::error::Error>> {
            let model = model?;
            let exact = oracle::ground_energy(&model, model.default_target())?;
            let dmrg = Dmrg::new(model, DmrgConfig::default())?;
            let e = dmrg.run(&SweepSchedule::constant(2, 64), None)?.final_energy().ok_or("no sweeps")?;
            Ok((e, exact))
        };
        match run() {
            Ok((e, exact)) => {
                rep.nontrivial += 1;
                let err = (e - exact).abs();
                rep.error(err, || format!("model {i}: {e} vs exact {exact}"));
            }
            Err(e) => rep.failures.push(format!("model {i}: {e}")),
        }
    }
    rep
}

/// Every suite at the sizes used by `check`.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    let chain = heisenberg_chain(8, 1.0).expect("valid chain");
    vec![
        sector_suite(200, seed),
        sbmm4s_suite(100, seed),
        ttcache_suite(100, seed),
        mazerunner_suite(&chain, 16, 2, &[1, 2, 4]).0,
        dmrg_suite(),
    ]
}
