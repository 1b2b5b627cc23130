//! Gaussian-copula log-normal sum models: `ln X ~ N(ν, Σ)`, `Σ = L Lᵀ`.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

const SYMMETRY_TOL: f64 = 1e-12;
const RECONSTRUCTION_TOL: f64 = 1e-10;

/// Immutable log-normal sum model with its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct SlnModel {
    nu: Vec<f64>,
    sigma: DMatrix<f64>,
    // row-major lower triangle of L, full d×d storage
    chol: Vec<f64>,
    d: usize,
}

impl SlnModel {
    /// Builds a model from log-scale means and covariance. Fails instead of
    /// regularizing when `sigma` is not positive definite.
    pub fn new(nu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = nu.len();
        if d == 0 {
            return Err(Error::InvalidParameter("model dimension must be at least 1".into()));
        }
        if sigma.nrows() != sigma.ncols() {
            return Err(Error::DimensionMismatch { expected: sigma.nrows(), found: sigma.ncols() });
        }
        if sigma.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, found: sigma.nrows() });
        }
        if nu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite entry in nu or Sigma".into()));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (sigma[(i, j)], sigma[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()) {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let chol = cholesky(&sigma)?;
        let model = SlnModel { nu, sigma, chol, d };
        let rebuilt = model.chol_matrix() * model.chol_matrix().transpose();
        let rel = (&rebuilt - &model.sigma).norm() / model.sigma.norm();
        if rel > RECONSTRUCTION_TOL {
            return Err(Error::InvalidParameter(format!(
                "Cholesky reconstruction error {rel:e} exceeds tolerance"
            )));
        }
        Ok(model)
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(nu: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.len() });
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(nu, sigma)
    }

    /// `Σ = s2 · (ρ 11ᵀ + (1 − ρ) I)`.
    pub fn equicorrelated(d: usize, rho: f64, s2: f64, nu: Vec<f64>) -> Result<Self> {
        if nu.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: nu.len() });
        }
        if !(s2 > 0.0) || !s2.is_finite() {
            return Err(Error::InvalidParameter(format!("s2 must be positive, got {s2}")));
        }
        let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { s2 } else { s2 * rho });
        Self::new(nu, sigma)
    }

    /// Independent log-normals with the given log-variances.
    pub fn independent(nu: Vec<f64>, variances: &[f64]) -> Result<Self> {
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(variances));
        Self::new(nu, sigma)
    }

    /// Discretely monitored Black–Scholes prices on the uniform grid
    /// `t_i = i·T/d`.
    pub fn black_scholes(spec: &BlackScholesSpec) -> Result<Self> {
        spec.validate()?;
        let times = spec.monitoring_times();
        Self::black_scholes_with_times(spec, &times)
    }

    /// Black–Scholes prices observed at explicit, strictly increasing times.
    pub fn black_scholes_with_times(spec: &BlackScholesSpec, times: &[f64]) -> Result<Self> {
        spec.validate()?;
        if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "monitoring times must be positive and strictly increasing".into(),
            ));
        }
        let s2 = spec.sigma * spec.sigma;
        let drift = spec.r - 0.5 * s2;
        let nu = times.iter().map(|&t| spec.x0.ln() + drift * t).collect();
        let d = times.len();
        let sigma = DMatrix::from_fn(d, d, |i, j| s2 * times[i].min(times[j]));
        Self::new(nu, sigma)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Entry `L[i][j]` of the Cholesky factor (zero above the diagonal).
    #[inline]
    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.chol[i * self.d + j]
    }

    /// Row `i` of L up to and including the diagonal.
    #[inline]
    pub fn l_row(&self, i: usize) -> &[f64] {
        &self.chol[i * self.d..i * self.d + i + 1]
    }

    pub fn chol_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d, self.d, &self.chol)
    }

    /// Marginal log-scale standard deviation σ_k.
    #[inline]
    pub fn marginal_sd(&self, k: usize) -> f64 {
        self.sigma[(k, k)].sqrt()
    }

    /// `y = L z`.
    pub fn mul_l(&self, z: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.d) {
            *yi = self.l_row(i).iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    /// Solves `L x = b`.
    pub fn solve_l(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        for i in 0..self.d {
            let row = self.l_row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (b[i] - s) / row[i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_lt(&self, b: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut x = b.to_vec();
        for i in (0..d).rev() {
            x[i] /= self.l(i, i);
            for k in 0..i {
                x[k] -= self.l(i, k) * x[i];
            }
        }
        x
    }

    /// `Σ⁻¹ b` through two triangular solves.
    pub fn sigma_inv_mul(&self, b: &[f64]) -> Vec<f64> {
        self.solve_lt(&self.solve_l(b))
    }

    /// `Lᵀ w`.
    pub fn lt_mul(&self, w: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d];
        for i in 0..d {
            for (k, o) in out.iter_mut().enumerate().take(i + 1) {
                *o += self.l(i, k) * w[i];
            }
        }
        out
    }

    /// Truncation threshold α_j of the nested-event construction (0-based `j`).
    ///
    /// `z_prefix` holds `z_0..z_{j-1}` and `partial_sum` the matching
    /// `Σ_{k<j} x_k`. Returns −∞ once the partial sum reaches `gamma`.
    #[inline]
    pub fn alpha_threshold(&self, gamma: f64, j: usize, z_prefix: &[f64], partial_sum: f64) -> f64 {
        let remaining = gamma - partial_sum;
        if !(remaining > 0.0) {
            return f64::NEG_INFINITY;
        }
        let row = self.l_row(j);
        let shift: f64 = row[..j].iter().zip(z_prefix).map(|(a, b)| a * b).sum();
        (remaining.ln() - self.nu[j] - shift) / row[j]
    }

    /// True for `ν = ν₀·1`, `Σ = σ²I`.
    pub fn is_iid(&self) -> bool {
        let d = self.d;
        let s0 = self.sigma[(0, 0)];
        let tol = 1e-12 * s0.abs();
        (0..d).all(|i| {
            (self.nu[i] - self.nu[0]).abs() <= 1e-12 * self.nu[0].abs().max(1.0)
                && (self.sigma[(i, i)] - s0).abs() <= tol
                && (0..d).all(|j| i == j || self.sigma[(i, j)].abs() <= tol)
        })
    }
}

fn cholesky(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = sigma.nrows();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let pivot = sigma[(i, i)] - s;
                if !(pivot > 0.0) {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: pivot });
                }
                l[i * d + i] = pivot.sqrt();
            } else {
                l[i * d + j] = (sigma[(i, j)] - s) / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Black–Scholes parameters for a discretely monitored price path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlackScholesSpec {
    #[serde(rename = "X0")]
    pub x0: f64,
    pub r: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub d: usize,
}

impl BlackScholesSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x0 > 0.0
            && self.sigma > 0.0
            && self.t > 0.0
            && self.d >= 1
            && self.r.is_finite()
            && self.x0.is_finite()
            && self.sigma.is_finite()
            && self.t.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid Black-Scholes spec {self:?}")))
        }
    }

    pub fn monitoring_times(&self) -> Vec<f64> {
        (1..=self.d).map(|i| i as f64 * self.t / self.d as f64).collect()
    }
}

/// Rejects non-positive or non-finite thresholds.
pub fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("gamma must be positive and finite, got {gamma}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_case() {
        let m = SlnModel::from_rows(vec![0.0], &[vec![1.0]]).unwrap();
        assert_eq!(m.l(0, 0), 1.0);
    }

    #[test]
    fn diagonal_twenty() {
        let var: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let m = SlnModel::independent(vec![0.0; 20], &var).unwrap();
        for k in 0..20 {
            assert!((m.l(k, k) - ((k + 1) as f64).sqrt()).abs() < 1e-15);
            for j in 0..k {
                assert_eq!(m.l(k, j), 0.0);
            }
        }
    }

    #[test]
    fn negative_equicorrelation_is_rejected() {
        // Eigenvalues of ρ11ᵀ + (1−ρ)I are 1 + (d−1)ρ and 1 − ρ.
        let sigma = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { -2.0 });
        let eig = sigma.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() < 0.0);
        let err = SlnModel::new(vec![0.0; 3], sigma).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(SlnModel::equicorrelated(3, -0.6, 1.0, vec![0.0; 3]).is_err());
        assert!(SlnModel::equicorrelated(3, -0.4, 1.0, vec![0.0; 3]).is_ok());
    }

    #[test]
    fn equicorrelated_examples() {
        let m = SlnModel::equicorrelated(2, 0.0, 1.0, vec![0.0; 2]).unwrap();
        assert_eq!(m.sigma(), &DMatrix::<f64>::identity(2, 2));
        let m = SlnModel::equicorrelated(10, 0.9, 0.0625, vec![0.0; 10]).unwrap();
        assert!((m.sigma()[(0, 1)] - 0.05625).abs() < 1e-16);
        assert_eq!(m.sigma()[(0, 0)], 0.0625);
        let m = SlnModel::equicorrelated(30, 0.9, 0.0625, vec![0.0; 30]).unwrap();
        let rebuilt = m.chol_matrix() * m.chol_matrix().transpose();
        assert!((rebuilt - m.sigma()).norm() / m.sigma().norm() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let err = SlnModel::from_rows(vec![0.0; 2], &[vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = SlnModel::from_rows(vec![0.0; 2], &[vec![1.0, 0.0], vec![0.0]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = SlnModel::from_rows(vec![0.0; 2], &[vec![1.0, 0.1], vec![0.2, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
    }

    #[test]
    fn black_scholes_unit() {
        let spec = BlackScholesSpec { x0: 1.0, r: 0.0, sigma: 1.0, t: 1.0, d: 1 };
        let m = SlnModel::black_scholes(&spec).unwrap();
        assert_eq!(m.nu(), &[-0.5]);
        assert_eq!(m.sigma()[(0, 0)], 1.0);
    }

    #[test]
    fn black_scholes_asian_example() {
        let spec = BlackScholesSpec { x0: 50.0, r: 0.07, sigma: 0.25, t: 4.0 / 12.0, d: 88 };
        let m = SlnModel::black_scholes(&spec).unwrap();
        let want = 50f64.ln() + (0.07 - 0.03125) / 264.0;
        assert!((m.nu()[0] - want).abs() < 1e-14);
        assert!((m.sigma()[(0, 0)] - 0.0625 / 264.0).abs() < 1e-17);
        let times = spec.monitoring_times();
        for i in 0..88 {
            for j in 0..88 {
                assert_eq!(m.sigma()[(i, j)], m.sigma()[(j, i)]);
                assert_eq!(m.sigma()[(i, j)], 0.0625 * times[i].min(times[j]));
            }
        }
    }

    #[test]
    fn alpha_examples() {
        let m = SlnModel::from_rows(vec![0.0], &[vec![1.0]]).unwrap();
        assert_eq!(m.alpha_threshold(1.0, 0, &[], 0.0), 0.0);
        assert!((m.alpha_threshold(std::f64::consts::E, 0, &[], 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(m.alpha_threshold(1.0, 0, &[], 1.0), f64::NEG_INFINITY);

        // Direct formula with a correlated 2-d factor.
        let m = SlnModel::from_rows(vec![0.2, -0.1], &[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        let (gamma, z1): (f64, f64) = (3.0, -0.7);
        let x1 = (0.2 + 1.0 * z1).exp();
        let l21 = 0.3;
        let l22 = (2.0f64 - 0.09).sqrt();
        let want = ((gamma - x1).ln() + 0.1 - l21 * z1) / l22;
        let got = m.alpha_threshold(gamma, 1, &[z1], x1);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn alpha_decreasing_in_partial_sum() {
        let m = SlnModel::equicorrelated(3, 0.5, 1.0, vec![0.0; 3]).unwrap();
        let z = [0.1, -0.4];
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let a = m.alpha_threshold(5.0, 2, &z, i as f64 * 0.09);
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn triangular_helpers() {
        let m = SlnModel::from_rows(vec![0.0; 3], &[
            vec![2.0, 0.5, 0.1],
            vec![0.5, 1.0, 0.2],
            vec![0.1, 0.2, 3.0],
        ])
        .unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = m.sigma_inv_mul(&b);
        let back = m.sigma() * nalgebra::DVector::from_column_slice(&x);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
        let lt = m.chol_matrix().transpose() * nalgebra::DVector::from_column_slice(&b);
        let got = m.lt_mul(&b);
        for i in 0..3 {
            assert!((lt[i] - got[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn iid_detection() {
        assert!(SlnModel::independent(vec![0.0; 4], &[0.0625; 4]).unwrap().is_iid());
        assert!(!SlnModel::independent(vec![0.0; 2], &[1.0, 2.0]).unwrap().is_iid());
        assert!(!SlnModel::equicorrelated(3, 0.2, 1.0, vec![0.0; 3]).unwrap().is_iid());
    }

    #[test]
    fn gamma_validation() {
        assert!(check_gamma(0.0).is_err());
        assert!(check_gamma(-1.0).is_err());
        assert!(check_gamma(f64::NAN).is_err());
        assert!(check_gamma(1e-6).is_ok());
    }
}
