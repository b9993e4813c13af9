//! Portfolio-based reward allocation for cross-device federated learning.
//!
//! Client return histories are treated like asset returns: the server spends
//! its per-round budget on a long-only minimum-variance portfolio of
//! clients. [`portfolio`] holds the mean-variance machinery, [`sim`] a
//! seeded agent-based federation to test it on, [`allocators`] the portfolio
//! mechanism and its baselines, and [`harness`] the replication and
//! comparison driver behind the `flimp` binary.
//!
//! ```
//! use flimp::portfolio::{solve_min_variance, CovarianceModel};
//! use nalgebra::DMatrix;
//!
//! let m = CovarianceModel::from_parts(vec![0.1, 0.3], DMatrix::identity(2, 2), 0.0).unwrap();
//! let w = solve_min_variance(&m, 0.2);
//! assert!((w.weights[0] - 0.5).abs() < 1e-12);
//! ```

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod portfolio;
pub mod sim;
pub mod allocators;
pub mod harness;
pub mod cli;

pub use error::{Error, Result};

// The guide's snippets run as doctests so the book cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/portfolio.md")]
    mod portfolio {}
    #[doc = include_str!("../../../book/src/long-only.md")]
    mod long_only {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/allocators.md")]
    mod allocators {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
