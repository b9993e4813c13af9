//! Expected return, variance and marginal risk of a weighted allocation.

use nalgebra::DVector;

use super::model::CovarianceModel;
use crate::error::{check_len, Result};

/// `E[R_p] = Σ w_i·r̄_i`.
pub fn expected_portfolio_return(weights: &[f64], mean: &[f64]) -> Result<f64> {
    check_len(mean.len(), weights.len())?;
    Ok(weights.iter().zip(mean).map(|(w, r)| w * r).sum())
}

/// `σ²(R_p) = w′Vw`.
pub fn portfolio_variance(weights: &[f64], model: &CovarianceModel) -> Result<f64> {
    check_len(model.n(), weights.len())?;
    let w = DVector::from_column_slice(weights);
    Ok(w.dot(&(model.cov() * &w)).max(0.0))
}

/// Gradient of the portfolio variance, `∂σ²/∂w = 2Vw`.
///
/// Component `i` is twice the covariance between client `i`'s return and the
/// portfolio return, so it measures how much an extra unit of weight on that
/// client moves the overall risk.
pub fn marginal_risk(weights: &[f64], model: &CovarianceModel) -> Result<Vec<f64>> {
    check_len(model.n(), weights.len())?;
    let w = DVector::from_column_slice(weights);
    Ok((model.cov() * w * 2.0).as_slice().to_vec())
}
