use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::history::ReturnHistory;
use crate::error::{check_len, Error, Result};

/// Ridge scale used by [`auto_ridge`], relative to the mean sample variance.
pub const AUTO_RIDGE_SCALE: f64 = 1e-6;
/// Absolute ridge used by [`auto_ridge`] when every sample variance is zero.
pub const AUTO_RIDGE_FLOOR: f64 = 1e-12;
/// `θ₄ / (θ₂·θ₃)` at or below this value means the means are (numerically)
/// proportional to the all-ones vector and the frontier collapses to a point.
pub const DEGENERACY_TOL: f64 = 1e-12;

// Cholesky pivots smaller than this fraction of the largest diagonal entry are
// treated as a failed factorization.
const PIVOT_RTOL: f64 = 1e-14;
const SYMMETRY_TOL: f64 = 1e-12;

/// Scalar summaries of `(r̄, V)`: `θ₁ = e′V⁻¹r̄`, `θ₂ = r̄′V⁻¹r̄`,
/// `θ₃ = e′V⁻¹e`, `θ₄ = θ₂θ₃ − θ₁²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl Theta {
    /// Expected return of the global minimum-variance portfolio, `θ₁/θ₃`.
    pub fn gmv_return(&self) -> f64 {
        self.t1 / self.t3
    }

    /// Variance of the global minimum-variance portfolio, `1/θ₃`.
    pub fn gmv_variance(&self) -> f64 {
        1.0 / self.t3
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.t4 > DEGENERACY_TOL * self.t2 * self.t3)
    }
}

/// Mean vector and (ridge-regularized) covariance of client returns, with the
/// factorization-derived quantities the closed-form solver needs.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    ridge: f64,
    theta: Theta,
    inv_ones: DVector<f64>,
    inv_mean: DVector<f64>,
    // `F` with `V = F′F + ridge·I`, kept when it is cheaper to apply than `V`.
    low_rank: Option<DMatrix<f64>>,
}

impl CovarianceModel {
    /// Builds a model from an explicit mean vector and covariance matrix.
    /// The matrix must be symmetric and positive definite after `ridge·I` is added.
    pub fn from_parts(mean: Vec<f64>, cov: DMatrix<f64>, ridge: f64) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty mean vector".into()));
        }
        check_len(n, cov.nrows())?;
        check_len(n, cov.ncols())?;
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::InvalidInput(format!("ridge must be >= 0, got {ridge}")));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite mean or covariance entry".into()));
        }
        let scale = cov.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let mut cov = (&cov + cov.transpose()) * 0.5;
        for i in 0..n {
            cov[(i, i)] += ridge;
        }

        let chol = factor(&cov)?;
        let mean = DVector::from_vec(mean);
        let ones = DVector::from_element(n, 1.0);
        let inv_ones = chol.solve(&ones);
        let inv_mean = chol.solve(&mean);

        let t1 = ones.dot(&inv_mean);
        let t2 = mean.dot(&inv_mean);
        let t3 = ones.dot(&inv_ones);
        if !(t3 > 0.0) {
            return Err(Error::SingularCovariance("e'V^-1 e is not positive".into()));
        }
        // θ₄ = θ₃·(r̄ − m·e)′V⁻¹(r̄ − m·e) with m = θ₁/θ₃; algebraically equal
        // to θ₂θ₃ − θ₁² but free of cancellation and never negative.
        let m = t1 / t3;
        let centered = &mean - &ones * m;
        let inv_centered = &inv_mean - &inv_ones * m;
        let t4 = (t3 * centered.dot(&inv_centered)).max(0.0);

        Ok(Self {
            mean,
            cov,
            ridge,
            theta: Theta { t1, t2, t3, t4 },
            inv_ones,
            inv_mean,
            low_rank: None,
        })
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Covariance with the ridge already applied.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn theta(&self) -> Theta {
        self.theta
    }

    /// `V⁻¹e`.
    pub fn inv_ones(&self) -> &DVector<f64> {
        &self.inv_ones
    }

    /// `V⁻¹r̄`.
    pub fn inv_mean(&self) -> &DVector<f64> {
        &self.inv_mean
    }

    /// `V·w`.
    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.low_rank {
            Some(f) => f.tr_mul(&(f * w)) + w * self.ridge,
            None => &self.cov * w,
        }
    }

    /// Same covariance, different mean vector.
    pub fn with_mean(&self, mean: Vec<f64>) -> Result<Self> {
        let mut model = Self::from_parts(mean, self.cov.clone(), 0.0)?;
        model.ridge = self.ridge;
        Ok(model)
    }

    /// Same means, covariance multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut model =
            Self::from_parts(self.mean.as_slice().to_vec(), &self.cov * factor, 0.0)?;
        model.ridge = self.ridge * factor;
        Ok(model)
    }
}

fn factor(cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let max_diag = cov.diagonal().amax();
    let chol = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::SingularCovariance("Cholesky factorization failed".into()))?;
    let l = chol.l_dirty();
    let min_pivot_sq = (0..cov.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot_sq > PIVOT_RTOL * max_diag) {
        return Err(Error::SingularCovariance(format!(
            "matrix is numerically singular (smallest pivot^2 {min_pivot_sq:e})"
        )));
    }
    Ok(chol)
}

/// Per-client sample mean `r̄_i = (1/T)·Σ_t r_i,t`.
pub fn estimate_mean(history: &ReturnHistory) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(Error::InsufficientHistory("need at least one round".into()));
    }
    let t = history.len() as f64;
    Ok(history
        .series()
        .iter()
        .map(|s| s.iter().sum::<f64>() / t)
        .collect())
}

/// Unbiased sample covariance (divisor `T − 1`). A single round yields the zero matrix.
pub fn sample_covariance(history: &ReturnHistory) -> Result<DMatrix<f64>> {
    let mean = estimate_mean(history)?;
    let n = history.n_clients();
    let t = history.len();
    if t < 2 {
        return Ok(DMatrix::zeros(n, n));
    }
    let centered = DMatrix::from_fn(t, n, |round, i| history.client(i)[round] - mean[i]);
    Ok(centered.tr_mul(&centered) / (t - 1) as f64)
}

/// Default ridge: `1e-6·trace(S)/n`, or [`AUTO_RIDGE_FLOOR`] when `S = 0`.
pub fn auto_ridge(sample_cov: &DMatrix<f64>) -> f64 {
    let n = sample_cov.nrows().max(1) as f64;
    let r = AUTO_RIDGE_SCALE * sample_cov.trace() / n;
    if r > 0.0 {
        r
    } else {
        AUTO_RIDGE_FLOOR
    }
}

/// Estimates `(r̄, V = S + ridge·I)` from a return history.
pub fn estimate_covariance(history: &ReturnHistory, ridge: f64) -> Result<CovarianceModel> {
    let mean = estimate_mean(history)?;
    if history.len() < 2 && ridge == 0.0 {
        return Err(Error::SingularCovariance(
            "fewer than two rounds and no ridge".into(),
        ));
    }
    let s = sample_covariance(history)?;
    let mut model = CovarianceModel::from_parts(mean, s, ridge)?;
    model.low_rank = low_rank_factor(history);
    Ok(model)
}

// Scaled centered returns `F` (T × n) with `S = F′F`, when `2·T < n`.
fn low_rank_factor(history: &ReturnHistory) -> Option<DMatrix<f64>> {
    let (n, t) = (history.n_clients(), history.len());
    if t < 2 || 2 * t >= n {
        return None;
    }
    let mean = estimate_mean(history).ok()?;
    let scale = 1.0 / ((t - 1) as f64).sqrt();
    Some(DMatrix::from_fn(t, n, |round, i| {
        (history.client(i)[round] - mean[i]) * scale
    }))
}

/// [`estimate_covariance`] with the ridge chosen by [`auto_ridge`].
pub fn estimate_covariance_auto(history: &ReturnHistory) -> Result<CovarianceModel> {
    let mean = estimate_mean(history)?;
    let s = sample_covariance(history)?;
    let ridge = auto_ridge(&s);
    let mut model = CovarianceModel::from_parts(mean, s, ridge)?;
    model.low_rank = low_rank_factor(history);
    Ok(model)
}
