//! Kernel and sweep benchmarks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sector_dmrg::dmrg::{Dmrg, DmrgConfig, SweepSchedule};
use sector_dmrg::gemm::ReferenceGemm;
use sector_dmrg::model::Model;
use sector_dmrg::sbmm4s::{sbmm4s, sbmm4s_traditional, AccumulationProblem};
use sector_dmrg::DmrgError;

use crate::records::BenchRecord;

pub const DEFAULT_REPETITIONS: usize = 5;

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) }
}

fn timed(reps: usize, mut f: impl FnMut()) -> f64 {
    let samples: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    median(&samples)
}

/// Square accumulation problems `m = n = q = r = size` with `p` members,
/// fused (`sbmm4s`) and one-product-per-member (`traditional`).
pub fn bench_kernel(sizes: &[usize], p: usize, reps: usize, seed: u64) -> Vec<BenchRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &s in sizes {
        let mut vals = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let (a, l, rs) = (vals(s * s), vals(p * s * s), vals(p * s * s));
        let prob = AccumulationProblem { alpha: 1.0, a: &a, m: s, n: s, l: &l, r_stack: &rs, q: s, r: s, p };
        let mut b = vec![0.0; s * s];
        let mut work = vec![0.0; prob.workspace_len()];
        let fused = timed(reps, || {
            sbmm4s(&ReferenceGemm, &prob, &mut b, &mut work).expect("consistent problem");
        });
        let traditional = timed(reps, || {
            sbmm4s_traditional(&ReferenceGemm, &prob, &mut b, &mut work).expect("consistent problem");
        });
        let flops = prob.flops();
        out.push(BenchRecord { label: "sbmm4s".into(), size: s as u64, seconds: fused, flops });
        out.push(BenchRecord { label: "traditional".into(), size: s as u64, seconds: traditional, flops });
    }
    out
}

/// Wall time of one full sweep for each bond dimension, starting every
/// repetition from the same warmed-up state.
pub fn bench_sweep(
    model: &Model,
    dims: &[usize],
    reps: usize,
    config: &DmrgConfig,
) -> Result<Vec<BenchRecord>, DmrgError> {
    let dmrg = Dmrg::new(model.clone(), DmrgConfig { checkpoint: None, ..config.clone() })?;
    let mut out = Vec::new();
    for &d in dims {
        let schedule = SweepSchedule::constant(1, d);
        let (warm, _) = dmrg.warmup(d, &schedule)?;
        let mut samples = Vec::with_capacity(reps);
        let mut flops = 0;
        for _ in 0..reps.max(1) {
            let mut state = warm.clone();
            let t = Instant::now();
            let records = dmrg.sweep(&mut state, d, &schedule)?;
            samples.push(t.elapsed().as_secs_f64());
            flops = records.iter().map(|r| r.counted_flops).sum();
        }
        out.push(BenchRecord { label: "sweep".into(), size: d as u64, seconds: median(&samples), flops });
    }
    Ok(out)
}
