//! Lanczos iteration for the lowest eigenpair with full reorthogonalization.

use nalgebra::DMatrix;

use crate::dmrg::wavefunction::{dot, norm};
use crate::error::DmrgError;

#[derive(Clone, Debug, PartialEq)]
pub struct LanczosResult {
    pub energy: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Residual estimate `‖H v − E v‖`.
    pub residual: f64,
}

fn tridiagonal_ground(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let (idx, e) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, e)| (i, *e))
        .expect("non-empty tridiagonal");
    (e, eig.eigenvectors.column(idx).iter().copied().collect())
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Lowest eigenpair of the symmetric operator `apply` (`y = H·x`).
///
/// Stops when the residual estimate is at most `tol·(1 + |E|)`, when the
/// Krylov space becomes invariant, or after `max_iter` products; in the
/// last case the best estimate is returned with `converged = false`.
pub fn lanczos_ground<F>(mut apply: F, guess: &[f64], tol: f64, max_iter: usize) -> Result<LanczosResult, DmrgError>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<(), DmrgError>,
{
    let n = guess.len();
    let g = norm(guess);
    if n == 0 || g == 0.0 || !g.is_finite() {
        return Err(DmrgError::Lanczos("zero or non-finite starting vector".into()));
    }
    if tol <= 0.0 || max_iter == 0 {
        return Err(DmrgError::Lanczos("tolerance and iteration limit must be positive".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![guess.iter().map(|x| x / g).collect()];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut w = vec![0.0; n];
    let mut scale: f64 = 0.0;

    loop {
        let k = basis.len() - 1;
        apply(&basis[k], &mut w)?;
        let alpha = dot(&basis[k], &w);
        orthogonalize(&mut w, &basis);
        let beta = norm(&w);
        alphas.push(alpha);
        scale = scale.max(alpha.abs()).max(beta);
        let (energy, y) = tridiagonal_ground(&alphas, &betas);
        let residual = beta * y[k].abs();
        let iterations = k + 1;
        let invariant = beta <= 1e-13 * scale.max(1.0) || iterations == n;
        let converged = residual <= tol * (1.0 + energy.abs()) || invariant;
        if converged || iterations >= max_iter {
            let mut vector = vec![0.0; n];
            for (c, v) in y.iter().zip(&basis) {
                vector.iter_mut().zip(v).for_each(|(x, b)| *x += c * b);
            }
            let vn = norm(&vector);
            vector.iter_mut().for_each(|x| *x /= vn);
            return Ok(LanczosResult { energy, vector, iterations, converged, residual });
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
}
