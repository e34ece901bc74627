//! Seeded random Ising instances built from synthetic factor-model prices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::market_data::{compute_returns, synth_prices, CorrelationModel, ReturnMode};
use crate::risk_model::{estimate_covariance, invert_covariance, IsingInstance};

/// Factor count used for random instances.
pub const INSTANCE_FACTORS: usize = 3;

/// Uniform random spin vector.
pub fn random_spins<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i8> {
    (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()
}

/// Field drawn uniformly from `[-1, 1]` per site.
pub fn uniform_field<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
}

/// Sample covariance of log returns from a random-factor synthetic market
/// with `n` assets and `max(250, 4n)` observations.
pub fn random_factor_covariance(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let observations = 250.max(4 * n);
    let prices = synth_prices(
        n,
        observations,
        CorrelationModel::RandomFactor {
            factors: INSTANCE_FACTORS,
        },
        seed,
    )?;
    Ok(estimate_covariance(&compute_returns(&prices, ReturnMode::Log))?.matrix)
}

/// Precision matrix of [`random_factor_covariance`].
pub fn random_factor_precision(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    invert_covariance(&random_factor_covariance(n, seed)?, 0.0)
}

/// Random-factor instance at `γ = ratio · γ_c` with a uniform `[-1, 1]` field.
///
/// # Panics
/// If the synthetic covariance cannot be inverted, which the chosen
/// observation count rules out in practice.
pub fn random_instance(n: usize, ratio: f64, seed: u64) -> IsingInstance {
    let precision = random_factor_precision(n, seed).expect("well-conditioned synthetic covariance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let field = uniform_field(n, &mut rng);
    let unit = IsingInstance::with_field(&precision, field, 1.0).expect("valid shapes");
    let gamma = ratio * unit.gamma_c;
    unit.with_gamma(gamma).expect("finite margin")
}
