//! Portfolio selection with margin costs as a random-field Ising spin glass.
//!
//! Below the critical margin `γ_c` (the inverse of the largest absolute
//! row sum of the precision-matrix Laplacian), the Hessian `I + γΔ` of the
//! convex surrogate is positive definite. The crate builds the model from
//! price data, finds spin configurations with TAP iteration, an exhaustive
//! oracle and a local-field baseline, and runs the margin sweep, the
//! critical-margin scaling study and the correlation histogram.

pub mod error;
pub mod experiments;
pub mod instances;
pub mod market_data;
pub mod parallel;
pub mod risk_model;
pub mod solvers;

pub use error::{Error, Result};
pub use market_data::{
    apply_sampling, compute_returns, load_prices, read_prices, select_assets, synth_prices,
    CorrelationModel, LoadedPrices, PriceMatrix, ReturnMatrix, ReturnMode, SamplingScheme,
};
pub use risk_model::{
    build_ising, convex_risk, critical_margin, estimate_covariance, flip_delta,
    hessian_min_eigenvalue, invert_covariance, laplacian, optimal_positions, portfolio_risk,
    spin_risk, IsingInstance, PortfolioProblem, PositionVector, SpinConfig,
};
pub use solvers::{
    exhaustive_ground_state, local_field_baseline, relative_risk, tap_solve, SolveReport,
    TapSettings, UpdateOrder,
};
