//! Effective two-site Hamiltonian as batches of accumulating products.
//!
//! Every operator-table row `(a, c)` and every scalar site factor
//! `(σ₁'σ₂' ← σ₁σ₂, m)` contributes, for each pair of stored blocks
//! `L_a[l', l]` and `R_c[r', r]`,
//! `ψ'(l', σ₁', σ₂', r') += m · L_a[l', l] · ψ(l, σ₁, σ₂, r) · R_c[r', r]ᵀ`.
//! Contributions with the same input and output sector form one batch
//! `B += Σᵢ Lᵢ A Rᵢᵀ` with the scalars folded into private copies of the
//! `L` blocks, so each batch is a single SBMM4S call.

use std::collections::BTreeMap;
use std::sync::Mutex;

use crate::dmrg::block::BlockState;
use crate::dmrg::wavefunction::{WfKey, WfLayout};
use crate::error::DmrgError;
use crate::gemm::GemmBackend;
use crate::mazerunner::{FnMaze, RunnerPool};
use crate::model::{LocalSpace, OperatorTable};
use crate::qn::QuantumNumber;
use crate::sbmm4s::{sbmm4s, sbmm4s_flops, AccumulationProblem};

/// One SBMM4S call: `out += Σᵢ Lᵢ · in · Rᵢᵀ`.
#[derive(Clone, Debug)]
pub struct PlanBatch {
    pub input: usize,
    pub output: usize,
    /// `in` is `m × n`, `out` is `q × r`.
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub r: usize,
    pub p: usize,
    l_stack: Vec<f64>,
    r_stack: Vec<f64>,
}

impl PlanBatch {
    pub fn flops(&self) -> u64 {
        sbmm4s_flops(self.m, self.n, self.q, self.r, self.p)
    }

    fn workspace_len(&self) -> usize {
        self.m * self.p * self.r
    }
}

#[derive(Clone, Debug)]
pub struct EffectiveHamiltonianPlan {
    pub layout: WfLayout,
    pub batches: Vec<PlanBatch>,
    pub n_table_rows: usize,
    pub n_members: usize,
}

struct Member<'a> {
    scale: f64,
    l: &'a nalgebra::DMatrix<f64>,
    r: &'a nalgebra::DMatrix<f64>,
}

impl EffectiveHamiltonianPlan {
    pub fn build(
        table: &OperatorTable,
        left: &BlockState,
        right: &BlockState,
        local: &LocalSpace,
        target: QuantumNumber,
    ) -> Result<Self, DmrgError> {
        let layout = WfLayout::new(&left.basis, local, &right.basis, target)?;
        let d = local.dim();
        let mut groups: BTreeMap<(usize, usize), Vec<Member<'_>>> = BTreeMap::new();
        for row in &table.rows {
            let lop = left.ops.get(row.left).ok_or_else(|| DmrgError::Runtime("missing left operator".into()))?;
            let rop = right.ops.get(row.right).ok_or_else(|| DmrgError::Runtime("missing right operator".into()))?;
            let lblocks: Vec<_> = lop.blocks().collect();
            let rblocks: Vec<_> = rop.blocks().collect();
            for &(o, i, m) in &row.factors {
                let (s1o, s2o, s1i, s2i) = (o % d, o / d, i % d, i / d);
                for &(&(lo, li), lb) in &lblocks {
                    for &(&(ro, ri), rb) in &rblocks {
                        let Some(input) = layout.find(&WfKey { l: li, s1: s1i, s2: s2i, r: ri }) else { continue };
                        let Some(output) = layout.find(&WfKey { l: lo, s1: s1o, s2: s2o, r: ro }) else {
                            return Err(DmrgError::Runtime(format!(
                                "sector ({lo}, {s1o}, {s2o}, {ro}) missing from the wavefunction layout"
                            )));
                        };
                        groups.entry((input, output)).or_default().push(Member { scale: m, l: lb, r: rb });
                    }
                }
            }
        }
        let mut n_members = 0;
        let batches = groups
            .into_iter()
            .map(|((input, output), members)| {
                let (m, n) = layout.shapes[input];
                let (q, r) = layout.shapes[output];
                let p = members.len();
                n_members += p;
                let mut l_stack = Vec::with_capacity(p * q * m);
                let mut r_stack = Vec::with_capacity(p * r * n);
                for mem in &members {
                    l_stack.extend(mem.l.iter().map(|x| x * mem.scale));
                    r_stack.extend_from_slice(mem.r.as_slice());
                }
                PlanBatch { input, output, m, n, q, r, p, l_stack, r_stack }
            })
            .collect();
        Ok(EffectiveHamiltonianPlan { layout, batches, n_table_rows: table.rows.len(), n_members })
    }

    /// GEMM flops of one application.
    pub fn flops(&self) -> u64 {
        self.batches.iter().map(PlanBatch::flops).sum()
    }

    pub fn dim(&self) -> usize {
        self.layout.len
    }

    /// `y = H·x`, one maze task per batch, each output sector behind its
    /// own lock.
    pub fn apply<G: GemmBackend + ?Sized>(
        &self,
        pool: &RunnerPool,
        gemm: &G,
        x: &[f64],
        y: &mut [f64],
    ) -> Result<(), DmrgError> {
        if x.len() != self.layout.len || y.len() != self.layout.len {
            return Err(DmrgError::Runtime("vector length does not match the plan".into()));
        }
        y.fill(0.0);
        let mut outs: Vec<Mutex<&mut [f64]>> = Vec::with_capacity(self.layout.n_sectors());
        let mut rest: &mut [f64] = y;
        for i in 0..self.layout.n_sectors() {
            let len = self.layout.range(i).len();
            let (head, tail) = rest.split_at_mut(len);
            outs.push(Mutex::new(head));
            rest = tail;
        }
        let maze = FnMaze::new(self.batches.len(), |i: usize, found: &mut dyn FnMut(usize)| found(i));
        let stats = pool.run_batch_with_state(
            &maze,
            Vec::<f64>::new,
            |work: &mut Vec<f64>, i: usize, _| {
                let b = &self.batches[i];
                if work.len() < b.workspace_len() {
                    work.resize(b.workspace_len(), 0.0);
                }
                let prob = AccumulationProblem {
                    alpha: 1.0,
                    a: &x[self.layout.range(b.input)],
                    m: b.m,
                    n: b.n,
                    l: &b.l_stack,
                    r_stack: &b.r_stack,
                    q: b.q,
                    r: b.r,
                    p: b.p,
                };
                let mut out = outs[b.output].lock().map_err(|_| "poisoned output lock".to_string())?;
                sbmm4s(gemm, &prob, &mut **out, work).map_err(|e| e.to_string())?;
                Ok(())
            },
        );
        if !stats.is_ok() {
            let msg = stats.failures.first().map(|f| f.message.clone()).unwrap_or_default();
            return Err(DmrgError::Runtime(format!("effective Hamiltonian task failed: {msg}")));
        }
        Ok(())
    }
}

/// GEMM flops of one application of `plan`.
pub fn flop_estimate(plan: &EffectiveHamiltonianPlan) -> u64 {
    plan.flops()
}
