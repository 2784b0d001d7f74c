//! Least-squares power-law fits on log-log data.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-positive value at point {index}: ({x}, {t})")]
    NonPositive { index: usize, x: f64, t: f64 },
    #[error("all x values are equal")]
    DegenerateX,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLaw {
    pub exponent: f64,
    pub prefactor: f64,
    /// Coefficient of determination of the log-log fit; 1.0 when the
    /// times have zero variance.
    pub r_squared: f64,
}

impl PowerLaw {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }
}

/// Fits `t = c · x^k` by ordinary least squares on `(ln x, ln t)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLaw, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for (index, &(x, t)) in points.iter().enumerate() {
        if !(x > 0.0 && t > 0.0 && x.is_finite() && t.is_finite()) {
            return Err(FitError::NonPositive { index, x, t });
        }
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let lt: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let mt = lt.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateX);
    }
    let sxt: f64 = lx.iter().zip(&lt).map(|(x, t)| (x - mx) * (t - mt)).sum();
    let slope = sxt / sxx;
    let intercept = mt - slope * mx;
    let stt: f64 = lt.iter().map(|t| (t - mt).powi(2)).sum();
    let ss_res: f64 = lx.iter().zip(&lt).map(|(x, t)| (t - intercept - slope * x).powi(2)).sum();
    let r_squared = if stt <= f64::EPSILON * mt.abs().max(1.0) * n { 1.0 } else { 1.0 - ss_res / stt };
    Ok(PowerLaw { exponent: slope, prefactor: intercept.exp(), r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic() {
        let f = fit_power_law(&[(1.0, 1.0), (2.0, 8.0), (4.0, 64.0)]).unwrap();
        assert!((f.exponent - 3.0).abs() < 1e-12);
        assert!((f.prefactor - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_has_unit_r_squared() {
        let f = fit_power_law(&[(1.0, 5.0), (2.0, 5.0), (4.0, 5.0)]).unwrap();
        assert!(f.exponent.abs() < 1e-12);
        assert_eq!(f.r_squared, 1.0);
        assert!((f.eval(3.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]), Err(FitError::TooFewPoints(2)));
        assert!(matches!(
            fit_power_law(&[(1.0, 1.0), (0.0, 2.0), (3.0, 3.0)]),
            Err(FitError::NonPositive { index: 1, .. })
        ));
        assert_eq!(fit_power_law(&[(2.0, 1.0), (2.0, 2.0), (2.0, 3.0)]), Err(FitError::DegenerateX));
    }
}
