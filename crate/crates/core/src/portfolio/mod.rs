//! Mean-variance machinery: estimation of `(r̄, V)` from return histories,
//! the closed-form minimum-variance solution and its frontier, marginal risk,
//! and projected-gradient solvers.

mod frontier;
mod history;
mod long_only;
mod model;
mod risk;

pub use frontier::{
    asymptotes, auto_targets, efficient_frontier, frontier_variance, global_min_variance,
    hyperbola_residual, solve_min_variance, AllocationWeights, Asymptotes, FrontierPoint,
    SolveMode,
};
pub use history::ReturnHistory;
pub use long_only::{
    project_simplex, solve_equality_constrained, solve_long_only, NumericSolution, SolverOptions,
};
pub use model::{
    auto_ridge, estimate_covariance, estimate_covariance_auto, estimate_mean, sample_covariance,
    CovarianceModel, Theta, AUTO_RIDGE_FLOOR, AUTO_RIDGE_SCALE, DEGENERACY_TOL,
};
pub use risk::{expected_portfolio_return, marginal_risk, portfolio_variance};
