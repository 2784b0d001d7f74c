//! Warmup, sweeps and the solver driver.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dmrg::block::{enlarge, BlockState, Enlarged, Side};
use crate::dmrg::checkpoint::save_checkpoint;
use crate::dmrg::heff::EffectiveHamiltonianPlan;
use crate::dmrg::lanczos::lanczos_ground;
use crate::dmrg::renorm::{renormalize, truncate_with};
use crate::dmrg::wavefunction::SuperblockWavefunction;
use crate::error::DmrgError;
use crate::gemm::{CountingGemm, ReferenceGemm};
use crate::mazerunner::RunnerPool;
use crate::model::{Model, Mpo, OperatorTable, Partition};
use crate::qn::QuantumNumber;

/// Number of sweeps, bond dimensions and eigensolver settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSchedule {
    pub sweeps: usize,
    /// Bond dimension per sweep; the last entry repeats.
    pub bond_dims: Vec<usize>,
    pub warmup_dim: usize,
    pub lanczos_tol: f64,
    pub lanczos_max_iter: usize,
}

impl SweepSchedule {
    pub fn constant(sweeps: usize, d: usize) -> Self {
        SweepSchedule { sweeps, bond_dims: vec![d], warmup_dim: d, lanczos_tol: 1e-9, lanczos_max_iter: 300 }
    }

    pub fn bond_dim(&self, sweep: usize) -> usize {
        let i = sweep.min(self.bond_dims.len().saturating_sub(1));
        self.bond_dims.get(i).copied().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), DmrgError> {
        if self.bond_dims.is_empty() || self.bond_dims.contains(&0) || self.warmup_dim == 0 {
            return Err(DmrgError::Schedule("bond dimensions must be positive".into()));
        }
        if !(self.lanczos_tol > 0.0) || self.lanczos_max_iter == 0 {
            return Err(DmrgError::Schedule("Lanczos tolerance and iteration limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmrgConfig {
    pub workers: usize,
    pub seed: u64,
    /// Per-worker arena limit in `f64` values.
    pub arena_capacity: usize,
    /// Total quantum number of the ground-state search; the model default
    /// when absent.
    pub target: Option<QuantumNumber>,
    /// Written after every sweep and when an iteration fails.
    pub checkpoint: Option<PathBuf>,
}

impl Default for DmrgConfig {
    fn default() -> Self {
        DmrgConfig { workers: 1, seed: 42, arena_capacity: 1 << 27, target: None, checkpoint: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

/// Warmup pass or sweep number (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Warmup,
    Sweep(usize),
}

/// One two-site optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub phase: Phase,
    pub direction: Direction,
    /// Left site of the optimized pair.
    pub position: usize,
    pub bond_dim: usize,
    pub energy: f64,
    pub truncation_error: f64,
    pub lanczos_iterations: usize,
    pub converged: bool,
    pub superblock_dim: usize,
    pub wall_seconds: f64,
    /// Predicted GEMM flops of the iteration.
    pub flops: u64,
    /// Flops recorded by the instrumented kernel.
    pub counted_flops: u64,
}

/// Everything needed to continue a calculation.
#[derive(Clone, Debug, PartialEq)]
pub struct DmrgState {
    pub n_sites: usize,
    pub target: QuantumNumber,
    pub seed: u64,
    pub fingerprint: [u8; 32],
    /// Left blocks indexed by bond.
    pub left: Vec<Option<BlockState>>,
    /// Right blocks indexed by bond.
    pub right: Vec<Option<BlockState>>,
    pub sweeps_done: usize,
    /// Final energy of every completed sweep.
    pub sweep_energies: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub state: DmrgState,
    pub records: Vec<SweepRecord>,
}

impl RunResult {
    pub fn final_energy(&self) -> Option<f64> {
        self.state.sweep_energies.last().copied()
    }

    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.converged)
    }
}

pub struct Dmrg {
    pub model: Model,
    pub mpo: Mpo,
    pub config: DmrgConfig,
    target: QuantumNumber,
    pool: RunnerPool,
    gemm: CountingGemm<ReferenceGemm>,
    tables: Vec<OperatorTable>,
    reachable: Vec<BTreeSet<QuantumNumber>>,
}

fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h = (h ^ p).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 29;
    }
    h
}

impl Dmrg {
    pub fn new(model: Model, config: DmrgConfig) -> Result<Self, DmrgError> {
        let mpo = Mpo::build(&model)?;
        let pool = RunnerPool::new(config.workers).map_err(|e| DmrgError::Runtime(e.to_string()))?;
        let n = model.n_sites;
        let tables = (0..n - 1)
            .map(|s| mpo.operator_table(&Partition::two_site(n, s)?))
            .collect::<Result<Vec<_>, _>>()?;
        let target = config.target.unwrap_or_else(|| model.default_target());
        let reachable = (0..=n).map(|k| model.reachable(k).into_iter().collect()).collect();
        let dmrg = Dmrg { model, mpo, config, target, pool, gemm: CountingGemm::new(ReferenceGemm), tables, reachable };
        if !dmrg.reachable[n].contains(&target) {
            return Err(DmrgError::EmptyTarget(target));
        }
        Ok(dmrg)
    }

    pub fn target(&self) -> QuantumNumber {
        self.target
    }

    pub fn pool(&self) -> &RunnerPool {
        &self.pool
    }

    pub fn gemm(&self) -> &CountingGemm<ReferenceGemm> {
        &self.gemm
    }

    pub fn operator_table(&self, position: usize) -> &OperatorTable {
        &self.tables[position]
    }

    fn empty_state(&self) -> DmrgState {
        let n = self.model.n_sites;
        let mut left = vec![None; n + 1];
        let mut right = vec![None; n + 1];
        left[0] = Some(BlockState::vacuum_left(&self.mpo));
        right[n] = Some(BlockState::vacuum_right(&self.mpo));
        DmrgState {
            n_sites: n,
            target: self.target,
            seed: self.config.seed,
            fingerprint: self.model.fingerprint(),
            left,
            right,
            sweeps_done: 0,
            sweep_energies: Vec::new(),
        }
    }

    /// Checks that `state` was produced for this model and target.
    pub fn check_state(&self, state: &DmrgState) -> Result<(), DmrgError> {
        if state.fingerprint != self.model.fingerprint()
            || state.target != self.target
            || state.n_sites != self.model.n_sites
        {
            return Err(crate::error::CheckpointError::ModelMismatch.into());
        }
        Ok(())
    }

    /// Effective Hamiltonian plan at `position` for the blocks in `state`.
    pub fn plan(&self, state: &DmrgState, position: usize) -> Result<EffectiveHamiltonianPlan, DmrgError> {
        let left = state.left[position]
            .as_ref()
            .ok_or_else(|| DmrgError::Runtime(format!("no left block at bond {position}")))?;
        let right = state.right[position + 2]
            .as_ref()
            .ok_or_else(|| DmrgError::Runtime(format!("no right block at bond {}", position + 2)))?;
        EffectiveHamiltonianPlan::build(&self.tables[position], left, right, &self.model.local, self.target)
    }

    fn heuristic_transform(
        &self,
        enlarged: &Enlarged,
        bond: usize,
        d: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<BTreeMap<QuantumNumber, DMatrix<f64>>, DmrgError> {
        let n = self.model.n_sites;
        let frac = bond as f64 / n as f64;
        let expected = self.target.0.map(|c| c as f64 * frac);
        let spread = (bond as f64).sqrt().max(1.0);
        let mut scored: Vec<(f64, QuantumNumber, usize)> = Vec::new();
        for &(q, dim) in enlarged.basis().entries() {
            if !self.reachable[n - bond].contains(&(self.target - q)) {
                continue;
            }
            let dist2: f64 = q.0.iter().zip(expected).map(|(&c, e)| (c as f64 - e).powi(2)).sum();
            let weight = (-dist2 / (2.0 * spread * spread)).exp() * (1.0 + 0.1 * rng.random::<f64>());
            for i in 0..dim {
                scored.push((weight / (1.0 + i as f64), q, i));
            }
        }
        if scored.is_empty() {
            return Err(DmrgError::EmptyTarget(self.target));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut kept: BTreeMap<QuantumNumber, usize> = BTreeMap::new();
        for &(_, q, _) in scored.iter().take(d) {
            *kept.entry(q).or_insert(0) += 1;
        }
        let mut out = BTreeMap::new();
        for (q, k) in kept {
            let dim = enlarged.basis().dim(q).unwrap();
            let raw = DMatrix::from_fn(dim, k, |_, _| rng.random_range(-1.0..1.0));
            out.insert(q, raw.qr().q().columns(0, k).into_owned());
        }
        Ok(out)
    }

    /// Builds heuristic left blocks and then grows exact right blocks from
    /// the right end, optimizing every two-site position on the way.
    pub fn warmup(&self, d: usize, schedule: &SweepSchedule) -> Result<(DmrgState, Vec<SweepRecord>), DmrgError> {
        schedule.validate()?;
        let n = self.model.n_sites;
        let mut state = self.empty_state();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.seed, &[u64::MAX]));
        for b in 0..n - 2 {
            let enlarged = enlarge(state.left[b].as_ref().unwrap(), &self.mpo)?;
            let transform = self.heuristic_transform(&enlarged, b + 1, d, &mut rng)?;
            state.left[b + 1] =
                Some(truncate_with(&enlarged, transform, &self.pool, &self.gemm, self.config.arena_capacity)?);
        }
        let mut records = Vec::with_capacity(n - 1);
        for s in (0..n - 1).rev() {
            records.push(self.iteration(&mut state, Phase::Warmup, Direction::RightToLeft, s, d, schedule)?);
        }
        Ok((state, records))
    }

    /// One two-site optimization followed by renormalization in the
    /// direction of travel.
    pub fn iteration(
        &self,
        state: &mut DmrgState,
        phase: Phase,
        direction: Direction,
        position: usize,
        d: usize,
        schedule: &SweepSchedule,
    ) -> Result<SweepRecord, DmrgError> {
        let start = Instant::now();
        let counted_before = self.gemm.flops();
        let plan = self.plan(state, position)?;
        let phase_code = match phase {
            Phase::Warmup => 0,
            Phase::Sweep(k) => k as u64 + 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(mix(
            self.config.seed,
            &[phase_code, position as u64, direction as u64],
        ));
        let guess: Vec<f64> = (0..plan.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut applies = 0u64;
        let result = lanczos_ground(
            |x, y| {
                applies += 1;
                plan.apply(&self.pool, &self.gemm, x, y)
            },
            &guess,
            schedule.lanczos_tol,
            schedule.lanczos_max_iter,
        )?;
        let psi = SuperblockWavefunction { layout: plan.layout.clone(), data: result.vector };
        let (side, source) = match direction {
            Direction::LeftToRight => (Side::Left, state.left[position].as_ref()),
            Direction::RightToLeft => (Side::Right, state.right[position + 2].as_ref()),
        };
        let enlarged = enlarge(source.expect("block checked by plan"), &self.mpo)?;
        let (tr, block, renorm_flops) = renormalize(
            &psi,
            &enlarged,
            &self.model.local,
            d,
            &self.pool,
            &self.gemm,
            self.config.arena_capacity,
        )?;
        match side {
            Side::Left => state.left[position + 1] = Some(block),
            Side::Right => state.right[position + 1] = Some(block),
        }
        Ok(SweepRecord {
            phase,
            direction,
            position,
            bond_dim: d,
            energy: result.energy,
            truncation_error: tr.truncation_error,
            lanczos_iterations: result.iterations,
            converged: result.converged,
            superblock_dim: plan.dim(),
            wall_seconds: start.elapsed().as_secs_f64(),
            flops: applies * plan.flops() + renorm_flops,
            counted_flops: self.gemm.flops() - counted_before,
        })
    }

    /// A left-to-right pass followed by a right-to-left pass.
    pub fn sweep(&self, state: &mut DmrgState, d: usize, schedule: &SweepSchedule) -> Result<Vec<SweepRecord>, DmrgError> {
        self.check_state(state)?;
        let n = self.model.n_sites;
        let phase = Phase::Sweep(state.sweeps_done);
        let mut records = Vec::with_capacity(2 * (n - 1));
        let mut work = state.clone();
        let mut run = |work: &mut DmrgState, dir, s| -> Result<(), DmrgError> {
            records.push(self.iteration(work, phase, dir, s, d, schedule)?);
            Ok(())
        };
        let outcome = (0..n - 1)
            .try_for_each(|s| run(&mut work, Direction::LeftToRight, s))
            .and_then(|_| (0..n - 1).rev().try_for_each(|s| run(&mut work, Direction::RightToLeft, s)));
        if let Err(e) = outcome {
            if let Some(path) = &self.config.checkpoint {
                save_checkpoint(state, path)?;
            }
            return Err(e);
        }
        work.sweeps_done += 1;
        work.sweep_energies.push(records.last().map(|r| r.energy).unwrap_or(f64::NAN));
        *state = work;
        if let Some(path) = &self.config.checkpoint {
            save_checkpoint(state, path)?;
        }
        Ok(records)
    }

    /// Runs warmup (unless resuming) and the remaining sweeps of `schedule`.
    pub fn run(&self, schedule: &SweepSchedule, resume: Option<DmrgState>) -> Result<RunResult, DmrgError> {
        schedule.validate()?;
        let mut records = Vec::new();
        let mut state = match resume {
            Some(s) => {
                self.check_state(&s)?;
                s
            }
            None => {
                let (s, r) = self.warmup(schedule.warmup_dim, schedule)?;
                records.extend(r);
                if let Some(path) = &self.config.checkpoint {
                    save_checkpoint(&s, path)?;
                }
                s
            }
        };
        while state.sweeps_done < schedule.sweeps {
            let d = schedule.bond_dim(state.sweeps_done);
            records.extend(self.sweep(&mut state, d, schedule)?);
        }
        Ok(RunResult { state, records })
    }
}
