//! Column-major GEMM primitives behind a pluggable backend trait.
//!
//! All matrices are column-major with explicit leading dimensions, the
//! BLAS convention. The portable [`ReferenceGemm`] needs no external
//! linear-algebra library; [`CountingGemm`] wraps any backend and records
//! kernel launches and floating-point operations.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Trans {
    No,
    Yes,
}

impl Trans {
    pub fn from_flag(t: bool) -> Self {
        if t {
            Trans::Yes
        } else {
            Trans::No
        }
    }
}

/// Flop count of a single `m×k · k×n` product, multiply-add counted as two.
#[inline]
pub const fn gemm_flops(m: usize, n: usize, k: usize) -> u64 {
    2 * (m as u64) * (n as u64) * (k as u64)
}

/// Dense matrix multiplication backend.
///
/// `C := alpha·op(A)·op(B) + beta·C` where `op(A)` is `m×k`, `op(B)` is
/// `k×n` and `C` is `m×n`. When `beta == 0` the previous contents of `C`
/// are ignored (NaNs included).
pub trait GemmBackend: Sync {
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        &self,
        ta: Trans,
        tb: Trans,
        m: usize,
        n: usize,
        k: usize,
        alpha: f64,
        a: &[f64],
        lda: usize,
        b: &[f64],
        ldb: usize,
        beta: f64,
        c: &mut [f64],
        ldc: usize,
    );

    /// Strided batched GEMM. Member `i` reads `A` at `i·stride_a`, `B` at
    /// `i·stride_b` and writes `C` at `i·stride_c`. Output members may
    /// interleave (e.g. `stride_c < ldc·n`) as long as their written
    /// elements are disjoint.
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided_batched(
        &self,
        ta: Trans,
        tb: Trans,
        m: usize,
        n: usize,
        k: usize,
        alpha: f64,
        a: &[f64],
        lda: usize,
        stride_a: usize,
        b: &[f64],
        ldb: usize,
        stride_b: usize,
        beta: f64,
        c: &mut [f64],
        ldc: usize,
        stride_c: usize,
        batch: usize,
    ) {
        for i in 0..batch {
            let a_i = &a[i * stride_a..];
            let b_i = &b[i * stride_b..];
            let c_i = &mut c[i * stride_c..];
            self.gemm(ta, tb, m, n, k, alpha, a_i, lda, b_i, ldb, beta, c_i, ldc);
        }
    }
}

/// Portable blocked triple-loop kernel.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceGemm;

const KC: usize = 128;

impl GemmBackend for ReferenceGemm {
    fn gemm(
        &self,
        ta: Trans,
        tb: Trans,
        m: usize,
        n: usize,
        k: usize,
        alpha: f64,
        a: &[f64],
        lda: usize,
        b: &[f64],
        ldb: usize,
        beta: f64,
        c: &mut [f64],
        ldc: usize,
    ) {
        if m == 0 || n == 0 {
            return;
        }
        for j in 0..n {
            let col = &mut c[j * ldc..j * ldc + m];
            if beta == 0.0 {
                col.fill(0.0);
            } else if beta != 1.0 {
                col.iter_mut().for_each(|x| *x *= beta);
            }
        }
        if k == 0 || alpha == 0.0 {
            return;
        }
        let b_at = |l: usize, j: usize| match tb {
            Trans::No => b[l + j * ldb],
            Trans::Yes => b[j + l * ldb],
        };
        match ta {
            Trans::No => {
                for k0 in (0..k).step_by(KC) {
                    let k1 = (k0 + KC).min(k);
                    for j in 0..n {
                        let col = &mut c[j * ldc..j * ldc + m];
                        for l in k0..k1 {
                            let s = alpha * b_at(l, j);
                            if s == 0.0 {
                                continue;
                            }
                            let acol = &a[l * lda..l * lda + m];
                            for (ci, ai) in col.iter_mut().zip(acol) {
                                *ci += s * ai;
                            }
                        }
                    }
                }
            }
            Trans::Yes => {
                for j in 0..n {
                    for i in 0..m {
                        let arow = &a[i * lda..i * lda + k];
                        let mut acc = 0.0;
                        for (l, al) in arow.iter().enumerate() {
                            acc += al * b_at(l, j);
                        }
                        c[i + j * ldc] += alpha * acc;
                    }
                }
            }
        }
    }
}

/// Records kernel launches and flops of an inner backend.
///
/// A strided batched call counts as one kernel launch.
#[derive(Debug, Default)]
pub struct CountingGemm<B> {
    inner: B,
    kernels: AtomicU64,
    flops: AtomicU64,
}

impl<B: GemmBackend> CountingGemm<B> {
    pub fn new(inner: B) -> Self {
        CountingGemm { inner, kernels: AtomicU64::new(0), flops: AtomicU64::new(0) }
    }

    pub fn kernel_calls(&self) -> u64 {
        self.kernels.load(Ordering::Relaxed)
    }

    pub fn flops(&self) -> u64 {
        self.flops.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.kernels.store(0, Ordering::Relaxed);
        self.flops.store(0, Ordering::Relaxed);
    }
}

impl<B: GemmBackend> GemmBackend for CountingGemm<B> {
    fn gemm(
        &self,
        ta: Trans,
        tb: Trans,
        m: usize,
        n: usize,
        k: usize,
        alpha: f64,
        a: &[f64],
        lda: usize,
        b: &[f64],
        ldb: usize,
        beta: f64,
        c: &mut [f64],
        ldc: usize,
    ) {
        self.kernels.fetch_add(1, Ordering::Relaxed);
        self.flops.fetch_add(gemm_flops(m, n, k), Ordering::Relaxed);
        self.inner.gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    }

    fn gemm_strided_batched(
        &self,
        ta: Trans,
        tb: Trans,
        m: usize,
        n: usize,
        k: usize,
        alpha: f64,
        a: &[f64],
        lda: usize,
        stride_a: usize,
        b: &[f64],
        ldb: usize,
        stride_b: usize,
        beta: f64,
        c: &mut [f64],
        ldc: usize,
        stride_c: usize,
        batch: usize,
    ) {
        self.kernels.fetch_add(1, Ordering::Relaxed);
        self.flops.fetch_add(batch as u64 * gemm_flops(m, n, k), Ordering::Relaxed);
        self.inner.gemm_strided_batched(
            ta, tb, m, n, k, alpha, a, lda, stride_a, b, ldb, stride_b, beta, c, ldc, stride_c, batch,
        );
    }
}

impl<B: GemmBackend + ?Sized> GemmBackend for &B {
    fn gemm(
        &self,
        ta: Trans,
        tb: Trans,
        m: usize,
        n: usize,
        k: usize,
        alpha: f64,
        a: &[f64],
        lda: usize,
        b: &[f64],
        ldb: usize,
        beta: f64,
        c: &mut [f64],
        ldc: usize,
    ) {
        (**self).gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc)
    }

    fn gemm_strided_batched(
        &self,
        ta: Trans,
        tb: Trans,
        m: usize,
        n: usize,
        k: usize,
        alpha: f64,
        a: &[f64],
        lda: usize,
        stride_a: usize,
        b: &[f64],
        ldb: usize,
        stride_b: usize,
        beta: f64,
        c: &mut [f64],
        ldc: usize,
        stride_c: usize,
        batch: usize,
    ) {
        (**self).gemm_strided_batched(
            ta, tb, m, n, k, alpha, a, lda, stride_a, b, ldb, stride_b, beta, c, ldc, stride_c, batch,
        )
    }
}
