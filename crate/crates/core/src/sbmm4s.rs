//! Strided batched matrix multiplication for summation.
//!
//! Computes `B := B + α Σᵢ Lᵢ·A·Rᵢᵀ` with two kernel launches and no
//! separate reduction:
//!
//! 1. one strided batched GEMM writes the `p` products `A·Rᵢᵀ` (each `m×r`)
//!    into a workspace with leading dimension `m·p` and member stride `m`,
//!    so that column `j` of the workspace holds column `j` of every member
//!    back to back. Read as a single `(m·p)×r` matrix the workspace is the
//!    vertical concatenation of the member products;
//! 2. one GEMM multiplies the horizontal concatenation `[L₁|…|Lₚ]`
//!    (`q×(m·p)`, which is just the contiguous `L` stack) by that matrix
//!    with `beta = 1`. The inner dimension `m·p` carries the sum over `i`.
//!
//! All operands are column-major and contiguous: `A` is `m×n`, `B` is
//! `q×r`, member `i` of `L` starts at `i·q·m` and member `i` of `R` at
//! `i·r·n`.

use crate::error::KernelError;
use crate::gemm::{gemm_flops, GemmBackend, Trans};

/// Operands of one accumulation `B += α Σᵢ Lᵢ·A·Rᵢᵀ` (the accumulator `B`
/// is passed separately so the problem can be shared).
#[derive(Clone, Copy, Debug)]
pub struct AccumulationProblem<'a> {
    pub alpha: f64,
    /// `m×n`, broadcast to every member.
    pub a: &'a [f64],
    pub m: usize,
    pub n: usize,
    /// `p` stacked `q×m` matrices.
    pub l: &'a [f64],
    /// `p` stacked `r×n` matrices.
    pub r_stack: &'a [f64],
    pub q: usize,
    pub r: usize,
    pub p: usize,
}

impl AccumulationProblem<'_> {
    /// Workspace needed by the fused path.
    pub fn workspace_len(&self) -> usize {
        self.m * self.p * self.r
    }

    pub fn validate(&self, b_len: usize) -> Result<(), KernelError> {
        let need = |what: &str, have: usize, want: usize| {
            if have < want {
                Err(KernelError::Dimension(format!("{what}: {have} values, need {want}")))
            } else {
                Ok(())
            }
        };
        need("A", self.a.len(), self.m * self.n)?;
        need("L stack", self.l.len(), self.q * self.m * self.p)?;
        need("R stack", self.r_stack.len(), self.r * self.n * self.p)?;
        need("B", b_len, self.q * self.r)
    }

    /// The sub-problem of members `start..start + count`.
    fn members(&self, start: usize, count: usize) -> AccumulationProblem<'_> {
        let ls = self.q * self.m;
        let rs = self.r * self.n;
        AccumulationProblem {
            l: &self.l[start * ls..(start + count) * ls],
            r_stack: &self.r_stack[start * rs..(start + count) * rs],
            p: count,
            ..*self
        }
    }

    /// Flops of the fused path (multiply-add counted as two).
    pub fn flops(&self) -> u64 {
        sbmm4s_flops(self.m, self.n, self.q, self.r, self.p)
    }
}

/// `p·2·m·r·n` for the batched step plus `2·q·r·(m·p)` for the concatenated step.
pub const fn sbmm4s_flops(m: usize, n: usize, q: usize, r: usize, p: usize) -> u64 {
    (p as u64) * gemm_flops(m, r, n) + gemm_flops(q, r, m * p)
}

/// Step 1: `temp[i·m.., j] = (A·Rᵢᵀ)[.., j]` for all members, interleaved.
#[allow(clippy::too_many_arguments)]
pub fn batched_gemm_interleaved<G: GemmBackend + ?Sized>(
    gemm: &G,
    a: &[f64],
    m: usize,
    n: usize,
    r_stack: &[f64],
    r: usize,
    p: usize,
    temp: &mut [f64],
) -> Result<(), KernelError> {
    if a.len() < m * n || r_stack.len() < r * n * p {
        return Err(KernelError::Dimension("A or R stack too short".into()));
    }
    if temp.len() < m * p * r {
        return Err(KernelError::Workspace { available: temp.len(), required: m * p * r });
    }
    if m == 0 || r == 0 || p == 0 {
        return Ok(());
    }
    gemm.gemm_strided_batched(
        Trans::No,
        Trans::Yes,
        m,
        r,
        n,
        1.0,
        a,
        m,
        0,
        r_stack,
        r,
        r * n,
        0.0,
        temp,
        m * p,
        m,
        p,
    );
    Ok(())
}

/// Step 2: `B += α·[L₁|…|Lₚ]·temp`.
#[allow(clippy::too_many_arguments)]
pub fn concat_gemm_accumulate<G: GemmBackend + ?Sized>(
    gemm: &G,
    l: &[f64],
    q: usize,
    m: usize,
    p: usize,
    temp: &[f64],
    r: usize,
    alpha: f64,
    b: &mut [f64],
) -> Result<(), KernelError> {
    if l.len() < q * m * p || temp.len() < m * p * r || b.len() < q * r {
        return Err(KernelError::Dimension("L stack, temp or B too short".into()));
    }
    if q == 0 || r == 0 {
        return Ok(());
    }
    gemm.gemm(Trans::No, Trans::No, q, r, m * p, alpha, l, q.max(1), temp, (m * p).max(1), 1.0, b, q);
    Ok(())
}

/// How an [`sbmm4s`] call was executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecPath {
    /// Whole batch in two kernels.
    Fused,
    /// Workspace too small; the batch was halved recursively into `chunks`
    /// fused calls.
    Chunked { chunks: usize },
}

/// `B := B + α Σᵢ Lᵢ·A·Rᵢᵀ`, using caller-provided `workspace`.
///
/// When the workspace cannot hold `m·p·r` values the batch is split into
/// equal halves recursively; a workspace smaller than one member's `m·r`
/// is an error.
pub fn sbmm4s<G: GemmBackend + ?Sized>(
    gemm: &G,
    prob: &AccumulationProblem<'_>,
    b: &mut [f64],
    workspace: &mut [f64],
) -> Result<ExecPath, KernelError> {
    prob.validate(b.len())?;
    if prob.p == 0 {
        return Ok(ExecPath::Fused);
    }
    if workspace.len() < prob.m * prob.r {
        return Err(KernelError::Workspace { available: workspace.len(), required: prob.m * prob.r });
    }
    if workspace.len() >= prob.workspace_len() {
        fused(gemm, prob, b, workspace)?;
        return Ok(ExecPath::Fused);
    }
    let chunks = chunked(gemm, prob, 0, prob.p, b, workspace)?;
    Ok(ExecPath::Chunked { chunks })
}

fn fused<G: GemmBackend + ?Sized>(
    gemm: &G,
    prob: &AccumulationProblem<'_>,
    b: &mut [f64],
    workspace: &mut [f64],
) -> Result<(), KernelError> {
    let temp = &mut workspace[..prob.workspace_len()];
    batched_gemm_interleaved(gemm, prob.a, prob.m, prob.n, prob.r_stack, prob.r, prob.p, temp)?;
    concat_gemm_accumulate(gemm, prob.l, prob.q, prob.m, prob.p, temp, prob.r, prob.alpha, b)
}

fn chunked<G: GemmBackend + ?Sized>(
    gemm: &G,
    prob: &AccumulationProblem<'_>,
    start: usize,
    count: usize,
    b: &mut [f64],
    workspace: &mut [f64],
) -> Result<usize, KernelError> {
    if workspace.len() >= prob.m * prob.r * count {
        fused(gemm, &prob.members(start, count), b, workspace)?;
        return Ok(1);
    }
    let half = count / 2;
    let left = chunked(gemm, prob, start, half, b, workspace)?;
    let right = chunked(gemm, prob, start + half, count - half, b, workspace)?;
    Ok(left + right)
}

/// Traditional path: one product per member followed by a separate
/// accumulation GEMM, `2p` kernels in total. Needs `m·r` workspace.
pub fn sbmm4s_traditional<G: GemmBackend + ?Sized>(
    gemm: &G,
    prob: &AccumulationProblem<'_>,
    b: &mut [f64],
    workspace: &mut [f64],
) -> Result<(), KernelError> {
    prob.validate(b.len())?;
    let (m, n, q, r) = (prob.m, prob.n, prob.q, prob.r);
    if workspace.len() < m * r {
        return Err(KernelError::Workspace { available: workspace.len(), required: m * r });
    }
    if m == 0 || r == 0 || q == 0 {
        return Ok(());
    }
    let temp = &mut workspace[..m * r];
    for i in 0..prob.p {
        let ri = &prob.r_stack[i * r * n..(i + 1) * r * n];
        let li = &prob.l[i * q * m..(i + 1) * q * m];
        gemm.gemm(Trans::No, Trans::Yes, m, r, n, 1.0, prob.a, m, ri, r, 0.0, temp, m);
        gemm.gemm(Trans::No, Trans::No, q, r, m, prob.alpha, li, q, temp, m, 1.0, b, q);
    }
    Ok(())
}
