//! Covariance, precision, Laplacian and the risk functions of the
//! spin representation.
//!
//! Positions `p` and spins `s = sign(p)` are linked through
//! `p = C⁻¹r + γ C⁻¹s`. Substituting back leaves the random-field Ising
//! energy `R(s) = -½ Σ J_ik s_i s_k - Σ h_i s_i` with `J = γ C⁻¹` and
//! `h = C⁻¹ r`. The convex surrogate `R_c(x) = |x - h|² + γ xᵀΔx` agrees
//! with `2 R(s)` up to a constant on spin vectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::ReturnMatrix;

/// Largest condition number accepted for an unshrunk covariance.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Unbiased sample covariance together with its spectral extremes.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl CovarianceEstimate {
    /// True when the estimate is rank deficient to working precision.
    pub fn is_singular(&self) -> bool {
        !(self.max_eigenvalue > 0.0) || self.min_eigenvalue <= self.max_eigenvalue / CONDITION_LIMIT
    }
}

/// Sample covariance of the columns with `1/(m-1)` normalization over `m`
/// return rows.
pub fn sample_covariance(returns: &ReturnMatrix) -> Result<DMatrix<f64>> {
    let x = &returns.values;
    let (m, n) = x.shape();
    if m < 2 {
        return Err(Error::TooFewRows { needed: 2, found: m });
    }
    let means: Vec<f64> = (0..n).map(|j| x.column(j).mean()).collect();
    let centered = DMatrix::from_fn(m, n, |t, j| x[(t, j)] - means[j]);
    let mut cov = centered.transpose() * &centered / (m as f64 - 1.0);
    symmetrize(&mut cov);
    Ok(cov)
}

/// Sample covariance with a singularity report. Degenerate estimates are
/// returned, flagged through [`CovarianceEstimate::is_singular`].
pub fn estimate_covariance(returns: &ReturnMatrix) -> Result<CovarianceEstimate> {
    let matrix = sample_covariance(returns)?;
    let (min_eigenvalue, max_eigenvalue) = eigen_range(&matrix);
    Ok(CovarianceEstimate {
        matrix,
        min_eigenvalue,
        max_eigenvalue,
    })
}

/// Inverts `(1-λ)C + λ·mean(diag C)·I`.
///
/// With `λ = 0` the covariance must be positive definite with condition
/// number at most [`CONDITION_LIMIT`].
pub fn invert_covariance(covariance: &DMatrix<f64>, shrinkage: f64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&shrinkage) {
        return Err(Error::InvalidParameter(format!(
            "shrinkage {shrinkage} outside [0, 1)"
        )));
    }
    check_symmetric(covariance, "covariance")?;
    let n = covariance.nrows();
    let target = covariance.trace() / n as f64;
    let shrunk = covariance * (1.0 - shrinkage) + DMatrix::identity(n, n) * (shrinkage * target);

    let (min_eigenvalue, max_eigenvalue) = eigen_range(&shrunk);
    if !(min_eigenvalue > 0.0) {
        return Err(Error::DegenerateCovariance {
            min_eigenvalue,
            max_eigenvalue,
        });
    }
    let condition = max_eigenvalue / min_eigenvalue;
    if shrinkage == 0.0 && condition > CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    let mut inverse = shrunk
        .cholesky()
        .ok_or(Error::DegenerateCovariance {
            min_eigenvalue,
            max_eigenvalue,
        })?
        .inverse();
    symmetrize(&mut inverse);
    Ok(inverse)
}

/// `Δ = diag(column sums of C⁻¹) - C⁻¹`.
///
/// The diagonal is accumulated from the off-diagonal column entries, which
/// is the same quantity without the cancellation against `C⁻¹_kk`.
pub fn laplacian(precision: &DMatrix<f64>) -> DMatrix<f64> {
    let n = precision.nrows();
    DMatrix::from_fn(n, n, |i, k| {
        if i == k {
            (0..n).filter(|&j| j != k).map(|j| precision[(j, k)]).sum()
        } else {
            -precision[(i, k)]
        }
    })
}

/// `γ_c = 1 / max_i Σ_k |Δ_ik|`, or `+∞` when `Δ = 0`.
pub fn critical_margin(laplacian: &DMatrix<f64>) -> f64 {
    let max_row = laplacian
        .row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if max_row == 0.0 {
        f64::INFINITY
    } else {
        1.0 / max_row
    }
}

/// Smallest eigenvalue of `I + γΔ`.
pub fn hessian_min_eigenvalue(laplacian: &DMatrix<f64>, gamma: f64) -> f64 {
    let n = laplacian.nrows();
    let hessian = DMatrix::identity(n, n) + laplacian * gamma;
    eigen_range(&hessian).0
}

/// `γ/γ_c`, which is zero against an infinite critical margin.
pub fn margin_ratio(gamma: f64, gamma_c: f64) -> f64 {
    if gamma_c.is_infinite() {
        0.0
    } else {
        gamma / gamma_c
    }
}

/// Random-field Ising form of a portfolio problem.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingInstance {
    /// `J = γ C⁻¹`.
    pub couplings: DMatrix<f64>,
    /// `h = C⁻¹ r`.
    pub field: DVector<f64>,
    /// Laplacian of the precision matrix (independent of γ).
    pub laplacian: DMatrix<f64>,
    pub gamma: f64,
    pub gamma_c: f64,
}

impl IsingInstance {
    /// Instance from explicit couplings and field, read as `γ = 1` with
    /// `C⁻¹ = J`.
    pub fn from_couplings(couplings: DMatrix<f64>, field: DVector<f64>) -> Result<Self> {
        check_symmetric(&couplings, "couplings")?;
        if couplings.nrows() != field.len() {
            return Err(Error::Dimension(format!(
                "{}x{} couplings with {} field values",
                couplings.nrows(),
                couplings.ncols(),
                field.len()
            )));
        }
        let laplacian = laplacian(&couplings);
        let gamma_c = critical_margin(&laplacian);
        Ok(Self {
            couplings,
            field,
            laplacian,
            gamma: 1.0,
            gamma_c,
        })
    }

    pub fn len(&self) -> usize {
        self.field.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field.is_empty()
    }

    pub fn margin_ratio(&self) -> f64 {
        margin_ratio(self.gamma, self.gamma_c)
    }

    /// Same instance at another margin; `J` is rescaled, `h` and `Δ` are kept.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let couplings = if self.gamma == 0.0 {
            return Err(Error::InvalidParameter(
                "cannot rescale couplings built at γ = 0".into(),
            ));
        } else {
            &self.couplings * (gamma / self.gamma)
        };
        Ok(Self {
            couplings,
            gamma,
            ..self.clone()
        })
    }

    /// `h_i + Σ_{k≠i} J_ik s_k`.
    pub(crate) fn local_field(&self, spins: &[i8], i: usize) -> f64 {
        let row = self.couplings.row(i);
        let coupled: f64 = spins
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(k, &s)| row[k] * f64::from(s))
            .sum();
        self.field[i] + coupled
    }
}

/// Builds `J = γ C⁻¹`, `h = C⁻¹ r` and attaches `Δ` and `γ_c`.
pub fn build_ising(precision: &DMatrix<f64>, returns: &DVector<f64>, gamma: f64) -> Result<IsingInstance> {
    check_gamma(gamma)?;
    check_symmetric(precision, "precision")?;
    if precision.nrows() != returns.len() {
        return Err(Error::Dimension(format!(
            "{}x{} precision with {} expected returns",
            precision.nrows(),
            precision.ncols(),
            returns.len()
        )));
    }
    let laplacian = laplacian(precision);
    let gamma_c = critical_margin(&laplacian);
    Ok(IsingInstance {
        couplings: precision * gamma,
        field: precision * returns,
        laplacian,
        gamma,
        gamma_c,
    })
}

impl IsingInstance {
    /// Instance with a directly specified field `h` (the implied expected
    /// returns are `r = C h`).
    pub fn with_field(precision: &DMatrix<f64>, field: DVector<f64>, gamma: f64) -> Result<Self> {
        let mut inst = build_ising(precision, &DVector::zeros(field.len()), gamma)?;
        inst.field = field;
        Ok(inst)
    }
}

/// A spin vector with its risk under the instance it was scored on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinConfig {
    pub spins: Vec<i8>,
    pub risk: f64,
}

impl SpinConfig {
    pub fn new(inst: &IsingInstance, spins: Vec<i8>) -> Result<Self> {
        check_spins(inst, &spins)?;
        let risk = spin_risk(inst, &spins);
        Ok(Self { spins, risk })
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| f64::from(s)).collect()
    }
}

pub(crate) fn check_spins(inst: &IsingInstance, spins: &[i8]) -> Result<()> {
    if spins.len() != inst.len() {
        return Err(Error::Dimension(format!(
            "{} spins for an instance of size {}",
            spins.len(),
            inst.len()
        )));
    }
    if let Some(bad) = spins.iter().find(|s| s.abs() != 1) {
        return Err(Error::InvalidParameter(format!("spin value {bad} is not ±1")));
    }
    Ok(())
}

/// `R(s) = -½ Σ_ik J_ik s_i s_k - Σ_i h_i s_i`, diagonal couplings included.
pub fn spin_risk(inst: &IsingInstance, spins: &[i8]) -> f64 {
    let s = DVector::from_iterator(spins.len(), spins.iter().map(|&v| f64::from(v)));
    -0.5 * s.dot(&(&inst.couplings * &s)) - inst.field.dot(&s)
}

/// `R_c(x) = (x - h)ᵀ(x - h) + γ xᵀΔx` on an arbitrary real vector.
pub fn convex_risk(inst: &IsingInstance, x: &[f64]) -> f64 {
    let x = DVector::from_column_slice(x);
    let diff = &x - &inst.field;
    diff.dot(&diff) + inst.gamma * x.dot(&(&inst.laplacian * &x))
}

/// `R(flip_i s) - R(s) = 2 s_i (h_i + Σ_{k≠i} J_ik s_k)`, in O(n).
pub fn flip_delta(inst: &IsingInstance, spins: &[i8], i: usize) -> Result<f64> {
    if i >= spins.len() || spins.len() != inst.len() {
        return Err(Error::Dimension(format!(
            "site {i} for {} spins on an instance of size {}",
            spins.len(),
            inst.len()
        )));
    }
    Ok(2.0 * f64::from(spins[i]) * inst.local_field(spins, i))
}

/// Signed capital allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionVector {
    pub values: Vec<f64>,
}

impl PositionVector {
    /// Per-asset check of `sign(p_i) == s_i`; zero positions count as
    /// inconsistent.
    pub fn sign_consistency(&self, spins: &[i8]) -> Vec<bool> {
        self.values
            .iter()
            .zip(spins)
            .map(|(&p, &s)| p * f64::from(s) > 0.0)
            .collect()
    }
}

/// `p = C⁻¹ r + γ C⁻¹ s`, the stationary point of the position-space risk
/// for fixed spins.
pub fn optimal_positions(
    precision: &DMatrix<f64>,
    returns: &DVector<f64>,
    gamma: f64,
    spins: &[i8],
) -> Result<PositionVector> {
    let n = precision.nrows();
    if returns.len() != n || spins.len() != n {
        return Err(Error::Dimension(format!(
            "precision of size {n}, {} returns, {} spins",
            returns.len(),
            spins.len()
        )));
    }
    let s = DVector::from_iterator(n, spins.iter().map(|&v| f64::from(v)));
    let p = precision * (returns + s * gamma);
    Ok(PositionVector {
        values: p.iter().copied().collect(),
    })
}

/// `R(p) = ½ pᵀCp - pᵀr - γ pᵀs`.
pub fn portfolio_risk(
    covariance: &DMatrix<f64>,
    returns: &DVector<f64>,
    gamma: f64,
    positions: &[f64],
    spins: &[i8],
) -> f64 {
    let p = DVector::from_column_slice(positions);
    let s = DVector::from_iterator(spins.len(), spins.iter().map(|&v| f64::from(v)));
    0.5 * p.dot(&(covariance * &p)) - p.dot(returns) - gamma * p.dot(&s)
}

/// Covariance, precision, expected returns and margin of one portfolio.
#[derive(Debug, Clone)]
pub struct PortfolioProblem {
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub returns: DVector<f64>,
    pub gamma: f64,
}

impl PortfolioProblem {
    pub fn new(covariance: DMatrix<f64>, shrinkage: f64, returns: DVector<f64>, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if returns.len() != covariance.nrows() {
            return Err(Error::Dimension(format!(
                "{} expected returns for {} assets",
                returns.len(),
                covariance.nrows()
            )));
        }
        let precision = invert_covariance(&covariance, shrinkage)?;
        Ok(Self {
            covariance,
            precision,
            returns,
            gamma,
        })
    }

    pub fn ising(&self) -> Result<IsingInstance> {
        build_ising(&self.precision, &self.returns, self.gamma)
    }

    pub fn positions(&self, spins: &[i8]) -> Result<PositionVector> {
        optimal_positions(&self.precision, &self.returns, self.gamma, spins)
    }

    pub fn risk(&self, positions: &[f64], spins: &[i8]) -> f64 {
        portfolio_risk(&self.covariance, &self.returns, self.gamma, positions, spins)
    }

    /// Expected portfolio return `r_p = Σ r_i p_i`.
    pub fn expected_return(&self, positions: &[f64]) -> f64 {
        positions.iter().zip(self.returns.iter()).map(|(p, r)| p * r).sum()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "margin requirement {gamma} must be finite and >= 0"
        )))
    }
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for k in i + 1..n {
            if (m[(i, k)] - m[(k, i)]).abs() > 1e-10 * scale {
                return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for k in i + 1..n {
            let avg = 0.5 * (m[(i, k)] + m[(k, i)]);
            m[(i, k)] = avg;
            m[(k, i)] = avg;
        }
    }
}

fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    (eig.min(), eig.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::ReturnMode;
    use crate::instances::{random_instance, random_spins};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn returns_of(rows: usize, cols: usize, data: &[f64]) -> ReturnMatrix {
        ReturnMatrix {
            values: DMatrix::from_row_slice(rows, cols, data),
            mode: ReturnMode::Log,
        }
    }

    #[test]
    fn covariance_basics() {
        let single = returns_of(4, 1, &[1.0, 2.0, 3.0, 6.0]);
        // mean 3, squared deviations 4+1+0+9 = 14, over 3
        let c = estimate_covariance(&single).unwrap();
        assert!((c.matrix[(0, 0)] - 14.0 / 3.0).abs() < 1e-14);
        assert!(!c.is_singular());

        let twins = returns_of(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 6.0, 6.0]);
        let c = estimate_covariance(&twins).unwrap();
        assert!(c.is_singular());
        assert!(invert_covariance(&c.matrix, 0.0).unwrap_err().is_numerical());
        assert!(invert_covariance(&c.matrix, 0.1).is_ok());

        assert!(matches!(
            sample_covariance(&returns_of(1, 1, &[1.0])),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn inversion_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(invert_covariance(&id, 0.0).unwrap(), id);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let inv = invert_covariance(&d, 0.0).unwrap();
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-15 && (inv[(1, 1)] - 0.25).abs() < 1e-15);
        assert_eq!(inv[(0, 1)], 0.0);

        // shrinkage target is mean(diag) = 3
        let inv = invert_covariance(&d, 0.5).unwrap();
        assert!((inv[(0, 0)] - 1.0 / 2.5).abs() < 1e-15);
        assert!(invert_covariance(&d, 1.0).is_err());
        assert!(invert_covariance(&d, -0.1).is_err());
    }

    #[test]
    fn inversion_multiplies_back_on_wishart() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let x = DMatrix::from_fn(40, 8, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let c = sample_covariance(&ReturnMatrix {
            values: x,
            mode: ReturnMode::Log,
        })
        .unwrap();
        let inv = invert_covariance(&c, 0.0).unwrap();
        let product = &inv * &c;
        let err = (product - DMatrix::identity(8, 8)).amax();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn ill_conditioned_requires_shrinkage() {
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        assert!(matches!(
            invert_covariance(&c, 0.0),
            Err(Error::IllConditioned { .. })
        ));
        assert!(invert_covariance(&c, 0.01).is_ok());
    }

    #[test]
    fn laplacian_and_critical_margin() {
        let id = DMatrix::<f64>::identity(4, 4);
        let delta = laplacian(&id);
        assert_eq!(delta, DMatrix::zeros(4, 4));
        assert_eq!(critical_margin(&delta), f64::INFINITY);
        assert_eq!(margin_ratio(3.0, f64::INFINITY), 0.0);

        let cinv = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let delta = laplacian(&cinv);
        assert_eq!(delta, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
        assert_eq!(critical_margin(&delta), 0.5);

        assert!((hessian_min_eigenvalue(&DMatrix::zeros(3, 3), 2.0) - 1.0).abs() < 1e-15);
        assert!((hessian_min_eigenvalue(&delta, 0.25) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn critical_margin_matches_row_sum_loop() {
        let inst = random_instance(16, 0.5, 77);
        let d = &inst.laplacian;
        let mut worst: f64 = 0.0;
        for i in 0..16 {
            let mut row = 0.0;
            for k in 0..16 {
                row += d[(i, k)].abs();
            }
            worst = worst.max(row);
        }
        assert!((inst.gamma_c - 1.0 / worst).abs() <= 1e-15 * inst.gamma_c);
    }

    #[test]
    fn ising_construction() {
        let id = DMatrix::<f64>::identity(3, 3);
        let r = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let inst = build_ising(&id, &r, 1.0).unwrap();
        assert_eq!(inst.couplings, id);
        assert_eq!(inst.field, r);
        let pure_field = build_ising(&id, &r, 0.0).unwrap();
        assert_eq!(pure_field.couplings, DMatrix::zeros(3, 3));
        let glass = build_ising(&id, &DVector::zeros(3), 1.0).unwrap();
        assert_eq!(glass.field, DVector::zeros(3));
        assert!(build_ising(&id, &r, -0.1).is_err());
        assert!(build_ising(&id, &DVector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn spin_risk_examples() {
        let inst = IsingInstance::from_couplings(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, -1.0])).unwrap();
        assert_eq!(spin_risk(&inst, &[1, -1]), -2.0);
        assert_eq!(spin_risk(&inst, &[-1, 1]), 2.0);
        assert_eq!(flip_delta(&inst, &[1, -1], 0).unwrap(), 2.0);
        assert!(flip_delta(&inst, &[1, -1], 2).is_err());
    }

    #[test]
    fn spin_risk_matches_double_loop() {
        let inst = random_instance(10, 0.7, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let s = random_spins(10, &mut rng);
            let mut naive = 0.0;
            for i in 0..10 {
                for k in 0..10 {
                    naive -= 0.5 * inst.couplings[(i, k)] * f64::from(s[i]) * f64::from(s[k]);
                }
                naive -= inst.field[i] * f64::from(s[i]);
            }
            assert!((spin_risk(&inst, &s) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn convex_risk_examples() {
        let mut inst = random_instance(5, 0.4, 9);
        inst.laplacian = DMatrix::zeros(5, 5);
        let h: Vec<f64> = inst.field.iter().copied().collect();
        assert_eq!(convex_risk(&inst, &h), 0.0);

        let inst = random_instance(5, 0.4, 9).with_gamma(0.0).unwrap();
        let s = [1i8, -1, -1, 1, 1];
        let x: Vec<f64> = s.iter().map(|&v| f64::from(v)).collect();
        let expect: f64 = (0..5).map(|i| (inst.field[i] - x[i]).powi(2)).sum();
        assert!((convex_risk(&inst, &x) - expect).abs() < 1e-14);
    }

    #[test]
    fn convex_minus_twice_risk_is_constant_on_all_spins() {
        let inst = random_instance(10, 1.7, 21);
        let mut offset = None;
        for mask in 0u32..(1 << 10) {
            let s: Vec<i8> = (0..10).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
            let x: Vec<f64> = s.iter().map(|&v| f64::from(v)).collect();
            let gap = convex_risk(&inst, &x) - 2.0 * spin_risk(&inst, &s);
            let base = *offset.get_or_insert(gap);
            assert!((gap - base).abs() < 1e-9, "mask {mask}: {gap} vs {base}");
        }
    }

    #[test]
    fn flip_identities() {
        let inst = random_instance(12, 2.5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_spins(12, &mut rng);
        let x: Vec<f64> = s.iter().map(|&v| f64::from(v)).collect();
        for i in 0..12 {
            let mut t = s.clone();
            t[i] = -t[i];
            let mut y = x.clone();
            y[i] = -y[i];
            let delta = flip_delta(&inst, &s, i).unwrap();
            assert!((delta - (spin_risk(&inst, &t) - spin_risk(&inst, &s))).abs() < 1e-10);
            let convex = convex_risk(&inst, &y) - convex_risk(&inst, &x);
            assert!((convex - 2.0 * delta).abs() < 1e-9);
        }

        let decoupled = IsingInstance::from_couplings(DMatrix::zeros(3, 3), DVector::from_vec(vec![0.5, -1.0, 2.0])).unwrap();
        for (i, h) in [0.5, -1.0, 2.0].into_iter().enumerate() {
            assert_eq!(flip_delta(&decoupled, &[1, 1, -1], i).unwrap(), 2.0 * [1.0, 1.0, -1.0][i] * h);
        }
    }

    #[test]
    fn positions_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        let r = DVector::from_vec(vec![0.1, -0.4, 0.2]);
        let p = optimal_positions(&id, &r, 0.0, &[1, 1, 1]).unwrap();
        assert_eq!(p.values, vec![0.1, -0.4, 0.2]);
        assert_eq!(p.sign_consistency(&[1, -1, -1]), vec![true, true, false]);
        let p = optimal_positions(&id, &DVector::zeros(3), 0.3, &[1, -1, 1]).unwrap();
        assert_eq!(p.values, vec![0.3, -0.3, 0.3]);

        assert_eq!(portfolio_risk(&id, &r, 0.5, &[0.0; 3], &[1, 1, 1]), 0.0);
        let half_norm = portfolio_risk(&id, &DVector::zeros(3), 0.0, &[1.0, -2.0, 2.0], &[1, 1, 1]);
        assert_eq!(half_norm, 4.5);
    }

    #[test]
    fn positions_minimize_risk_for_fixed_spins() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = DMatrix::from_fn(60, 6, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let c = sample_covariance(&ReturnMatrix { values: x, mode: ReturnMode::Log }).unwrap();
        let r = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let problem = PortfolioProblem::new(c, 0.0, r, 0.3).unwrap();
        let s = random_spins(6, &mut rng);
        let p = problem.positions(&s).unwrap();
        let base = problem.risk(&p.values, &s);
        for _ in 0..200 {
            let eps = 10f64.powf(rng.random_range(-6.0..0.0));
            let moved: Vec<f64> = p.values.iter().map(|v| v + eps * rng.random_range(-1.0..1.0)).collect();
            assert!(problem.risk(&moved, &s) >= base - 1e-10);
        }
        let residual = &problem.covariance * DVector::from_vec(p.values.clone())
            - &problem.returns
            - DVector::from_iterator(6, s.iter().map(|&v| 0.3 * f64::from(v)));
        assert!(residual.amax() < 1e-8);
        let rp = problem.expected_return(&p.values);
        assert!((rp - p.values.iter().zip(problem.returns.iter()).map(|(a, b)| a * b).sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn with_gamma_rescales_couplings() {
        let inst = random_instance(6, 0.8, 2);
        let half = inst.with_gamma(inst.gamma / 2.0).unwrap();
        assert!((half.couplings.clone() * 2.0 - &inst.couplings).amax() <= 1e-14 * inst.couplings.amax());
        assert_eq!(half.laplacian, inst.laplacian);
        assert_eq!(half.gamma_c, inst.gamma_c);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn laplacian_rows_vanish_and_hessian_stays_positive(
            seed in 0u64..10_000, n in 2usize..12, frac in 0.0f64..0.999
        ) {
            let inst = random_instance(n, 1.0, seed);
            for row in inst.laplacian.row_iter() {
                proptest::prop_assert!(row.sum().abs() < 1e-10);
            }
            let gamma = frac * inst.gamma_c;
            proptest::prop_assert!(hessian_min_eigenvalue(&inst.laplacian, gamma) > 0.0);
        }

        #[test]
        fn critical_margin_scales_with_covariance(seed in 0u64..10_000, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(30, 5, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let c = sample_covariance(&ReturnMatrix { values: x, mode: ReturnMode::Log }).unwrap();
            let base = critical_margin(&laplacian(&invert_covariance(&c, 0.0).unwrap()));
            let scaled = critical_margin(&laplacian(&invert_covariance(&(c * scale), 0.0).unwrap()));
            proptest::prop_assert!((scaled / (base * scale) - 1.0).abs() < 1e-9);
        }
    }
}
