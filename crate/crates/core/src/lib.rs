//! Exact optimal transport from a product distribution on ℝ^K to a
//! two-point target, for squared Euclidean cost.

pub mod approx;
pub mod brute_oracle;
pub mod cli;
pub mod dp_solver;
pub mod error;
pub mod grid;
pub mod knapsack_reduction;
pub mod model;

pub use error::{Error, Result};
pub use model::{Marginal, OtScalar, OtValue, ProductDistribution, Rational, TwoPointTarget};
