//! Projected-gradient solvers.
//!
//! The long-only solver minimizes `w′Vw + ρ·(w′r̄ − target)²` over the
//! probability simplex. The equality variant minimizes `w′Vw` over the affine
//! set `{Σw = 1, w′r̄ = target}` with no sign constraint; it never touches
//! `V⁻¹` and serves as an independent check of the closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::frontier::{AllocationWeights, SolveMode};
use super::model::CovarianceModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once one iteration changes the objective by at most this much
    /// (or by no more than round-off of its magnitude).
    pub tolerance: f64,
    /// Gradient step. `None` uses `1 / (2·λ̂)` where `λ̂` bounds the largest
    /// eigenvalue of the objective's half-Hessian.
    pub step: Option<f64>,
    /// Weight of the return-target penalty. `None` uses `10³·trace(V)`.
    pub penalty: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tolerance: 1e-10,
            step: None,
            penalty: None,
        }
    }
}

impl SolverOptions {
    pub fn with_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

/// Output of a projected-gradient run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSolution {
    pub weights: AllocationWeights,
    pub iterations: usize,
    /// Objective after projection of the start point, then after every iteration.
    pub objective_trace: Vec<f64>,
}

impl NumericSolution {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the start point")
    }
}

/// Long-only minimum-variance weights near `target_return`.
///
/// On non-convergence the error carries the best iterate.
pub fn solve_long_only(
    model: &CovarianceModel,
    target_return: f64,
    options: &SolverOptions,
) -> Result<NumericSolution> {
    if options.max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be >= 1".into()));
    }
    let mean = model.mean();
    let cov = model.cov();
    let penalty = options.penalty.unwrap_or(1e3 * cov.trace());
    let step = options
        .step
        .unwrap_or_else(|| 0.5 / half_hessian_bound(cov, mean, penalty));

    let objective = |w: &DVector<f64>, vw: &DVector<f64>| {
        let gap = mean.dot(w) - target_return;
        w.dot(vw) + penalty * gap * gap
    };
    let gradient = |w: &DVector<f64>, vw: &DVector<f64>| {
        let gap = mean.dot(w) - target_return;
        vw * 2.0 + mean * (2.0 * penalty * gap)
    };
    run(
        model,
        target_return,
        SolveMode::LongOnlyNumeric,
        options,
        step,
        objective,
        gradient,
        |w| DVector::from_vec(project_simplex(w.as_slice())),
    )
}

/// Minimum-variance weights on `{Σw = 1, w′r̄ = target}` by projected gradient.
pub fn solve_equality_constrained(
    model: &CovarianceModel,
    target_return: f64,
    options: &SolverOptions,
) -> Result<NumericSolution> {
    if options.max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be >= 1".into()));
    }
    let cov = model.cov();
    let n = model.n();
    let step = options
        .step
        .unwrap_or_else(|| 0.5 / half_hessian_bound(cov, &DVector::zeros(n), 0.0));

    // Rows e and (r̄ − mean(r̄)·e) are orthogonal, so the affine projection
    // separates into two rank-one corrections.
    let avg = model.mean().mean();
    let centered = model.mean().add_scalar(-avg);
    let centered_sq = centered.norm_squared();
    let centered_target = target_return - avg;
    let project = move |w: &DVector<f64>| {
        let mut w = w.add_scalar(-(w.sum() - 1.0) / n as f64);
        if centered_sq > 0.0 {
            let gap = centered.dot(&w) - centered_target;
            w -= &centered * (gap / centered_sq);
        }
        w
    };
    run(
        model,
        target_return,
        SolveMode::EqualityNumeric,
        options,
        step,
        |w, vw| w.dot(vw),
        |_, vw| vw * 2.0,
        project,
    )
}

/// Monotone accelerated projected gradient with momentum restart.
///
/// A momentum step that would raise the objective is discarded and the
/// momentum reset, so the recorded objective never increases.
#[allow(clippy::too_many_arguments)]
fn run(
    model: &CovarianceModel,
    target_return: f64,
    mode: SolveMode,
    options: &SolverOptions,
    step: f64,
    objective: impl Fn(&DVector<f64>, &DVector<f64>) -> f64,
    gradient: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    project: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<NumericSolution> {
    let n = model.n();
    let mut w = project(&DVector::from_element(n, 1.0 / n as f64));
    let mut vw = model.apply(&w);
    let mut f = objective(&w, &vw);
    let mut trace = Vec::with_capacity(options.max_iters.min(1 << 16) + 1);
    trace.push(f);

    // Extrapolated point and its image under V (kept by linearity).
    let mut y = w.clone();
    let mut vy = vw.clone();
    let mut momentum = 1.0_f64;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        let z = project(&(&y - gradient(&y, &vy) * step));
        let vz = model.apply(&z);
        let fz = objective(&z, &vz);
        let round_off = 8.0 * f64::EPSILON * f.abs();
        if fz > f {
            // A plain step is a descent step in exact arithmetic, so an
            // increase from one is round-off: w is as good as it gets.
            if momentum == 1.0 && fz - f <= round_off.max(options.tolerance) {
                trace.push(f);
                converged = true;
                break;
            }
            // Restart from the last accepted iterate; the plain step taken
            // next is a descent step.
            trace.push(f);
            momentum = 1.0;
            y.copy_from(&w);
            vy.copy_from(&vw);
            continue;
        }
        let change = f - fz;
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        y = &z * (1.0 + beta) - &w * beta;
        vy = &vz * (1.0 + beta) - &vw * beta;
        momentum = next_momentum;
        w = z;
        vw = vz;
        f = fz;
        trace.push(f);
        // Changes at round-off level of the objective also count: no further
        // progress is representable.
        if change <= options.tolerance || change <= round_off {
            converged = true;
            break;
        }
    }

    let solution = NumericSolution {
        weights: AllocationWeights {
            weights: w.as_slice().to_vec(),
            target_return,
            mode,
            degenerate_means: model.theta().is_degenerate(),
        },
        iterations,
        objective_trace: trace,
    };
    if converged {
        Ok(solution)
    } else {
        Err(Error::NoConvergence(Box::new(solution)))
    }
}

/// Upper bound on the largest eigenvalue of `V + ρ·r̄r̄′`: the smaller of the
/// Gershgorin row bound and the trace (both valid for a PSD matrix).
fn half_hessian_bound(cov: &DMatrix<f64>, mean: &DVector<f64>, penalty: f64) -> f64 {
    let n = cov.nrows();
    let gershgorin = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (cov[(i, j)] + penalty * mean[i] * mean[j]).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let trace = cov.trace() + penalty * mean.norm_squared();
    gershgorin.min(trace).max(f64::MIN_POSITIVE)
}

/// Euclidean projection onto `{w ≥ 0, Σw = 1}`.
///
/// Finds the threshold `τ` with `Σ max(v_i − τ, 0) = 1` by repeatedly
/// averaging over the entries still above the current threshold; each pass
/// only removes entries, so it stops after at most `n` passes.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut support: Vec<f64> = v.to_vec();
    let mut shift = (support.iter().sum::<f64>() - 1.0) / support.len() as f64;
    loop {
        let before = support.len();
        support.retain(|&x| x > shift);
        if support.len() == before {
            break;
        }
        shift = (support.iter().sum::<f64>() - 1.0) / support.len() as f64;
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::frontier::solve_min_variance;
    use proptest::prelude::*;

    fn diag(d: &[f64], mean: &[f64]) -> CovarianceModel {
        CovarianceModel::from_parts(
            mean.to_vec(),
            DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_identity_gives_uniform() {
        let m = diag(&[1.0; 4], &[0.2; 4]);
        let s = solve_long_only(&m, 0.2, &SolverOptions::default()).unwrap();
        for w in &s.weights.weights {
            assert!((w - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_optimum_matches_grid_search() {
        // Closed form at this target is (1.4, -0.4).
        let m = diag(&[1.0, 1.0], &[0.1, 0.3]);
        let target = 0.02;
        let cf = solve_min_variance(&m, target);
        assert!((cf.weights[0] - 1.4).abs() < 1e-12);
        assert!((cf.weights[1] + 0.4).abs() < 1e-12);

        let s = solve_long_only(&m, target, &SolverOptions::default()).unwrap();
        let penalty = 1e3 * 2.0;
        let objective = |w1: f64| {
            let w2 = 1.0 - w1;
            let gap = 0.1 * w1 + 0.3 * w2 - target;
            w1 * w1 + w2 * w2 + penalty * gap * gap
        };
        let best = (0..=10_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
            .unwrap();
        assert_eq!(best, 1.0);
        assert!((s.weights.weights[0] - best).abs() < 1e-4);
        assert!(s.weights.weights[1].abs() < 1e-4);
    }

    #[test]
    fn objective_is_non_increasing() {
        let m = diag(&[1.0, 2.0, 0.5, 3.0], &[0.1, 0.4, 0.2, 0.3]);
        let opts = SolverOptions::default().with_iters(200_000);
        let s = solve_long_only(&m, 0.3, &opts).unwrap();
        for pair in s.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }
    }

    #[test]
    fn no_convergence_carries_iterate() {
        let m = diag(&[1.0, 2.0, 0.5], &[0.1, 0.4, 0.2]);
        let opts = SolverOptions::default().with_iters(2).with_tolerance(0.0);
        match solve_long_only(&m, 0.3, &opts) {
            Err(Error::NoConvergence(best)) => {
                assert_eq!(best.iterations, 2);
                assert!((best.weights.sum() - 1.0).abs() < 1e-12);
            }
            other => panic!("expected no-convergence, got {other:?}"),
        }
    }

    #[test]
    fn simplex_projection_examples() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.0, 0.0, 0.0]);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn simplex_projection_is_feasible_and_nearest(v in prop::collection::vec(-3.0f64..3.0, 1..8)) {
            let p = project_simplex(&v);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            // Optimality: (v − p)·(q − p) ≤ 0 for every vertex q of the simplex.
            for k in 0..v.len() {
                let dot: f64 = (0..v.len())
                    .map(|i| (v[i] - p[i]) * (if i == k { 1.0 } else { 0.0 } - p[i]))
                    .sum();
                prop_assert!(dot <= 1e-12);
            }
        }
    }
}
