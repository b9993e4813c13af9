use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::model::CovarianceModel;
use super::risk::portfolio_variance;

/// How an [`AllocationWeights`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    /// Lagrangian closed form; weights may be negative.
    UnconstrainedClosedForm,
    /// Projected gradient over the probability simplex.
    LongOnlyNumeric,
    /// Projected gradient over `{w : Σw = 1, w′r̄ = target}`, no sign constraint.
    EqualityNumeric,
}

/// A weight vector summing to one, with the target return it was solved for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationWeights {
    pub weights: Vec<f64>,
    pub target_return: f64,
    pub mode: SolveMode,
    /// Set when the means were proportional to `e` and the solver fell back to
    /// the global minimum-variance weights.
    pub degenerate_means: bool,
}

impl AllocationWeights {
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub expected_return: f64,
    pub std_dev: f64,
    pub weights: AllocationWeights,
    /// On the upper arc (`expected_return ≥ θ₁/θ₃`).
    pub efficient: bool,
}

/// The two asymptotes `E = θ₁/θ₃ ± slope·σ` of the minimum-variance hyperbola.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptotes {
    pub center: f64,
    pub slope: f64,
}

impl Asymptotes {
    /// Standard deviation at which an asymptote reaches `target`.
    pub fn std_dev_at(&self, target: f64) -> f64 {
        (target - self.center).abs() / self.slope
    }
}

/// Minimum-variance weights subject to `w′e = 1` and `w′r̄ = target`.
///
/// Uses the rearrangement `w = V⁻¹e/θ₃ + (target − θ₁/θ₃)·(θ₃/θ₄)·V⁻¹(r̄ − (θ₁/θ₃)e)`,
/// which is the Lagrangian solution written around the minimum-variance
/// vertex. When `θ₄` vanishes the frontier is a single point and the
/// global minimum-variance weights are returned with `degenerate_means` set.
pub fn solve_min_variance(model: &CovarianceModel, target_return: f64) -> AllocationWeights {
    let th = model.theta();
    if th.is_degenerate() {
        return AllocationWeights {
            degenerate_means: true,
            ..gmv_weights(model)
        };
    }
    let m = th.gmv_return();
    let gmv = model.inv_ones() / th.t3;
    let tilt = model.inv_mean() - model.inv_ones() * m;
    let w: DVector<f64> = gmv + tilt * ((target_return - m) * th.t3 / th.t4);
    AllocationWeights {
        weights: w.as_slice().to_vec(),
        target_return,
        mode: SolveMode::UnconstrainedClosedForm,
        degenerate_means: false,
    }
}

fn gmv_weights(model: &CovarianceModel) -> AllocationWeights {
    let th = model.theta();
    AllocationWeights {
        weights: (model.inv_ones() / th.t3).as_slice().to_vec(),
        target_return: th.gmv_return(),
        mode: SolveMode::UnconstrainedClosedForm,
        degenerate_means: th.is_degenerate(),
    }
}

/// Vertex of the hyperbola: weights `V⁻¹e/θ₃`, variance `1/θ₃`, return `θ₁/θ₃`.
pub fn global_min_variance(model: &CovarianceModel) -> FrontierPoint {
    let th = model.theta();
    FrontierPoint {
        expected_return: th.gmv_return(),
        std_dev: th.gmv_variance().sqrt(),
        weights: gmv_weights(model),
        efficient: true,
    }
}

/// Solves [`solve_min_variance`] at every target. Degenerate models yield the
/// single global minimum-variance point.
pub fn efficient_frontier(model: &CovarianceModel, targets: &[f64]) -> Vec<FrontierPoint> {
    if model.theta().is_degenerate() {
        return vec![global_min_variance(model)];
    }
    let vertex = model.theta().gmv_return();
    targets
        .iter()
        .map(|&t| {
            let weights = solve_min_variance(model, t);
            let variance =
                portfolio_variance(&weights.weights, model).expect("weights sized from model");
            FrontierPoint {
                expected_return: t,
                std_dev: variance.sqrt(),
                efficient: t >= vertex,
                weights,
            }
        })
        .collect()
}

/// Closed-form variance of the frontier at `target`:
/// `1/θ₃ + (target − θ₁/θ₃)²·θ₃/θ₄`.
pub fn frontier_variance(model: &CovarianceModel, target: f64) -> f64 {
    let th = model.theta();
    let d = target - th.gmv_return();
    th.gmv_variance() + d * d * th.t3 / th.t4
}

/// Left-hand side of the hyperbola relation
/// `σ²·θ₃ − (E − θ₁/θ₃)²·θ₃²/θ₄`, which equals 1 on the frontier.
pub fn hyperbola_residual(model: &CovarianceModel, expected_return: f64, std_dev: f64) -> f64 {
    let th = model.theta();
    let d = expected_return - th.gmv_return();
    std_dev * std_dev * th.t3 - d * d * th.t3 * th.t3 / th.t4
}

pub fn asymptotes(model: &CovarianceModel) -> Asymptotes {
    let th = model.theta();
    Asymptotes {
        center: th.gmv_return(),
        slope: (th.t4 / th.t3).sqrt(),
    }
}

/// Evenly spaced targets spanning `θ₁/θ₃ ± span·√θ₄/θ₃`.
pub fn auto_targets(model: &CovarianceModel, count: usize, span: f64) -> Vec<f64> {
    let th = model.theta();
    let center = th.gmv_return();
    let half = span * th.t4.sqrt() / th.t3;
    if count <= 1 {
        return vec![center];
    }
    (0..count)
        .map(|k| {
            let mid = (count - 1) as f64 / 2.0;
            center + half * (k as f64 - mid) / mid
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::model::CovarianceModel;
    use nalgebra::DMatrix;

    fn diag(d: &[f64], mean: &[f64]) -> CovarianceModel {
        CovarianceModel::from_parts(
            mean.to_vec(),
            DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn two_client_linear_system() {
        let m = diag(&[1.0, 1.0], &[0.1, 0.3]);
        let w = solve_min_variance(&m, 0.2);
        assert!((w.weights[0] - 0.5).abs() < 1e-12);
        assert!((w.weights[1] - 0.5).abs() < 1e-12);
        assert!(!w.degenerate_means);
    }

    #[test]
    fn degenerate_means_fall_back_to_uniform() {
        let m = diag(&[1.0; 4], &[0.05; 4]);
        let w = solve_min_variance(&m, 0.9);
        assert!(w.degenerate_means);
        for x in &w.weights {
            assert!((x - 0.25).abs() < 1e-15);
        }
        let f = efficient_frontier(&m, &[0.0, 0.1, 0.2]);
        assert_eq!(f.len(), 1);
        assert!(f[0].weights.degenerate_means);
    }

    #[test]
    fn gmv_examples() {
        let m = diag(&[1.0; 5], &[0.1, 0.2, 0.3, 0.4, 0.5]);
        let p = global_min_variance(&m);
        assert!((p.std_dev - (0.2f64).sqrt()).abs() < 1e-15);
        assert!((p.expected_return - 0.3).abs() < 1e-15);

        let m = diag(&[1.0, 4.0], &[0.0, 1.0]);
        let p = global_min_variance(&m);
        assert!((p.weights.weights[0] - 0.8).abs() < 1e-15);
        assert!((p.weights.weights[1] - 0.2).abs() < 1e-15);
        assert!((p.std_dev.powi(2) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn vertex_target_is_gmv() {
        let m = diag(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.2]);
        let vertex = m.theta().gmv_return();
        let f = efficient_frontier(&m, &[vertex]);
        let g = global_min_variance(&m);
        for (a, b) in f[0].weights.weights.iter().zip(&g.weights.weights) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((f[0].std_dev - g.std_dev).abs() < 1e-15);
    }

    #[test]
    fn symmetric_targets_equal_risk() {
        let m = diag(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.2]);
        let v = m.theta().gmv_return();
        let f = efficient_frontier(&m, &[v - 0.3, v + 0.3]);
        assert!((f[0].std_dev - f[1].std_dev).abs() < 1e-12);
        assert!(!f[0].efficient && f[1].efficient);
    }

    #[test]
    fn asymptote_approach() {
        let m = diag(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.2]);
        let th = m.theta();
        let t = th.gmv_return() + 100.0 * (th.t4 / (th.t3 * th.t3)).sqrt();
        let p = &efficient_frontier(&m, &[t])[0];
        let a = asymptotes(&m).std_dev_at(t);
        assert!((p.std_dev - a).abs() / p.std_dev < 1e-3);
    }

    #[test]
    fn auto_targets_span() {
        let m = diag(&[1.0, 2.0], &[0.1, 0.5]);
        let t = auto_targets(&m, 41, 3.0);
        assert_eq!(t.len(), 41);
        assert!((t[20] - m.theta().gmv_return()).abs() < 1e-15);
        let th = m.theta();
        assert!((t[40] - t[20] - 3.0 * th.t4.sqrt() / th.t3).abs() < 1e-12);
    }
}
