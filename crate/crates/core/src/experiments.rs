//! Margin sweep, critical-margin scaling study and the pairwise
//! correlation histogram.
//!
//! Every trial draws its randomness from `trial_seed(master_seed, index)`,
//! so serial and parallel runs give identical results.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{random_spins, uniform_field};
use crate::market_data::{
    apply_sampling, compute_returns, sample_indices, PriceMatrix, ReturnMatrix, ReturnMode,
    SamplingScheme,
};
use crate::parallel::{map_indexed, trial_seed, Execution};
use crate::risk_model::{
    critical_margin, hessian_min_eigenvalue, invert_covariance, laplacian, sample_covariance,
    IsingInstance,
};
use crate::solvers::{
    exhaustive_ground_state_capped, local_field_baseline, relative_risk, tap_solve, TapSettings,
    DEFAULT_ORACLE_CAP,
};

/// Relative tolerance for counting a TAP result as the ground state.
pub const GROUND_STATE_TOLERANCE: f64 = 1e-9;

/// Mean and spread of one quantity over the trials at one key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialStats {
    /// `γ/γ_c` for the sweep, `n` for the scaling study.
    pub key: f64,
    pub mean: f64,
    /// Sample standard deviation (zero for fewer than two trials).
    pub std: f64,
    pub trials_defined: usize,
    pub trials_excluded: usize,
}

impl TrialStats {
    fn from_values(key: f64, values: &[f64], excluded: usize) -> Self {
        let count = values.len();
        let (mean, std) = if count == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = values.iter().sum::<f64>() / count as f64;
            let std = if count < 2 {
                0.0
            } else {
                let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
                (ss / (count as f64 - 1.0)).sqrt()
            };
            (mean, std)
        };
        Self {
            key,
            mean,
            std,
            trials_defined: count,
            trials_excluded: excluded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Tap,
    LocalField,
}

impl SolverKind {
    pub fn label(&self) -> &'static str {
        match self {
            SolverKind::Tap => "tap",
            SolverKind::LocalField => "local_field",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: usize,
    pub gamma_ratios: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub shrinkage: f64,
    pub return_mode: ReturnMode,
    pub update_order: crate::solvers::UpdateOrder,
    pub max_sweeps: Option<usize>,
    pub oracle_cap: usize,
    pub execution: Execution,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: 16,
            gamma_ratios: vec![0.25, 0.5, 0.75, 1.5, 3.0, 10.0],
            trials: 128,
            master_seed: 0,
            shrinkage: 0.0,
            return_mode: ReturnMode::Log,
            update_order: Default::default(),
            max_sweeps: None,
            oracle_cap: DEFAULT_ORACLE_CAP,
            execution: Execution::Parallel,
        }
    }
}

/// Relative-risk statistics of one solver at one margin ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub solver: SolverKind,
    pub stats: TrialStats,
    /// Trials whose risk matched the exhaustive ground state.
    pub ground_state_hits: usize,
    /// Smallest `I + γΔ` eigenvalue seen over the trials at this ratio.
    pub min_hessian_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Two rows per ratio (TAP, then local field), in configuration order.
    pub rows: Vec<SweepRow>,
    /// Trials skipped because the covariance could not be inverted or
    /// `γ_c` was infinite.
    pub degenerate_trials: usize,
}

struct RatioOutcome {
    tap: Option<f64>,
    baseline: Option<f64>,
    tap_hit: bool,
    baseline_hit: bool,
    hessian_min: f64,
}

/// One sweep trial at every ratio: fresh asset draw, field and TAP start,
/// shared across ratios.
fn sweep_trial(returns: &ReturnMatrix, cfg: &SweepConfig, index: usize) -> Option<Vec<RatioOutcome>> {
    let seed = trial_seed(cfg.master_seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = sample_indices(returns.assets(), cfg.n, trial_seed(seed, 0)).ok()?;
    let cov = sample_covariance(&returns.select_columns(&columns)).ok()?;
    let precision = invert_covariance(&cov, cfg.shrinkage).ok()?;
    let field = uniform_field(cfg.n, &mut rng);
    let start = random_spins(cfg.n, &mut rng);
    let unit = IsingInstance::with_field(&precision, field, 1.0).ok()?;
    if !unit.gamma_c.is_finite() {
        return None;
    }
    let settings = TapSettings {
        max_sweeps: cfg.max_sweeps,
        update_order: cfg.update_order,
        seed: trial_seed(seed, 1),
    };
    cfg.gamma_ratios
        .iter()
        .map(|&ratio| {
            let inst = unit.with_gamma(ratio * unit.gamma_c).ok()?;
            let ground = exhaustive_ground_state_capped(&inst, cfg.oracle_cap).ok()?;
            let tap = tap_solve(&inst, &start, &settings).ok()?;
            let baseline = local_field_baseline(&inst);
            let hit = |risk: f64| risk <= ground.risk + GROUND_STATE_TOLERANCE * ground.risk.abs().max(1.0);
            Some(RatioOutcome {
                tap: relative_risk(ground.risk, tap.config.risk).ok(),
                baseline: relative_risk(ground.risk, baseline.risk).ok(),
                tap_hit: hit(tap.config.risk),
                baseline_hit: hit(baseline.risk),
                hessian_min: hessian_min_eigenvalue(&inst.laplacian, inst.gamma),
            })
        })
        .collect()
}

/// Relative risk of TAP and of the local-field baseline against the
/// exhaustive ground state, over a grid of `γ/γ_c` ratios.
pub fn run_margin_sweep(prices: &PriceMatrix, cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    if cfg.gamma_ratios.is_empty() || cfg.gamma_ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidParameter("margin ratios must be finite and > 0".into()));
    }
    if cfg.n == 0 {
        return Err(Error::InvalidParameter("portfolio size must be >= 1".into()));
    }
    if cfg.n > prices.assets() {
        return Err(Error::UniverseTooSmall {
            requested: cfg.n,
            available: prices.assets(),
        });
    }
    if cfg.n > cfg.oracle_cap {
        return Err(Error::OracleCapExceeded {
            n: cfg.n,
            cap: cfg.oracle_cap,
        });
    }
    let returns = compute_returns(prices, cfg.return_mode);
    let trials = map_indexed(cfg.trials, cfg.execution, |t| sweep_trial(&returns, cfg, t));
    let degenerate_trials = trials.iter().filter(|t| t.is_none()).count();
    let valid: Vec<&Vec<RatioOutcome>> = trials.iter().flatten().collect();

    let mut rows = Vec::with_capacity(2 * cfg.gamma_ratios.len());
    for (r, &ratio) in cfg.gamma_ratios.iter().enumerate() {
        let hessian = valid.iter().map(|t| t[r].hessian_min).fold(f64::INFINITY, f64::min);
        for solver in [SolverKind::Tap, SolverKind::LocalField] {
            let (values, hits): (Vec<Option<f64>>, usize) = match solver {
                SolverKind::Tap => (
                    valid.iter().map(|t| t[r].tap).collect(),
                    valid.iter().filter(|t| t[r].tap_hit).count(),
                ),
                SolverKind::LocalField => (
                    valid.iter().map(|t| t[r].baseline).collect(),
                    valid.iter().filter(|t| t[r].baseline_hit).count(),
                ),
            };
            let defined: Vec<f64> = values.iter().flatten().copied().collect();
            let excluded = values.len() - defined.len();
            rows.push(SweepRow {
                solver,
                stats: TrialStats::from_values(ratio, &defined, excluded),
                ground_state_hits: hits,
                min_hessian_eigenvalue: hessian,
            });
        }
    }
    Ok(SweepResult {
        rows,
        degenerate_trials,
    })
}

/// Exponent and goodness of fit of `log y = α log n + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares in log-log space.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::Fit("finite positive sizes and values".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("at least two distinct sizes".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let alpha = sxy / sxx;
    let intercept = mean_y - alpha * mean_x;
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - (alpha * p.0 + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(PowerLawFit {
        alpha,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub scheme: SamplingScheme,
    pub master_seed: u64,
    pub shrinkage: f64,
    pub return_mode: ReturnMode,
    pub execution: Execution,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            sizes: vec![8, 16, 32, 64],
            trials: 128,
            scheme: SamplingScheme::EveryDay,
            master_seed: 0,
            shrinkage: 0.0,
            return_mode: ReturnMode::Log,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub scheme: SamplingScheme,
    /// Critical-margin statistics keyed by portfolio size, sizes ascending.
    pub points: Vec<TrialStats>,
    pub fit: PowerLawFit,
}

impl ScalingFit {
    pub fn alpha(&self) -> f64 {
        self.fit.alpha
    }
}

fn critical_margin_of(returns: &ReturnMatrix, n: usize, seed: u64, shrinkage: f64) -> Option<f64> {
    let columns = sample_indices(returns.assets(), n, seed).ok()?;
    let cov = sample_covariance(&returns.select_columns(&columns)).ok()?;
    let precision = invert_covariance(&cov, shrinkage).ok()?;
    Some(critical_margin(&laplacian(&precision))).filter(|g| g.is_finite())
}

/// Mean and spread of `γ_c` over random asset selections of each size,
/// and the power-law exponent of the means.
pub fn run_scaling(prices: &PriceMatrix, cfg: &ScalingConfig) -> Result<ScalingFit> {
    if cfg.sizes.len() < 3 {
        return Err(Error::InvalidParameter("need at least 3 portfolio sizes".into()));
    }
    if cfg.sizes.windows(2).any(|w| w[0] >= w[1]) || cfg.sizes[0] < 2 {
        return Err(Error::InvalidParameter(
            "sizes must be strictly increasing and >= 2".into(),
        ));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let largest = *cfg.sizes.last().expect("non-empty");
    if largest > prices.assets() {
        return Err(Error::UniverseTooSmall {
            requested: largest,
            available: prices.assets(),
        });
    }
    let sampled = apply_sampling(prices, cfg.scheme)?;
    let returns = compute_returns(&sampled, cfg.return_mode);

    let jobs = cfg.sizes.len() * cfg.trials;
    let margins = map_indexed(jobs, cfg.execution, |job| {
        let n = cfg.sizes[job / cfg.trials];
        let trial = (job % cfg.trials) as u64;
        let seed = trial_seed(trial_seed(cfg.master_seed, n as u64), trial);
        critical_margin_of(&returns, n, seed, cfg.shrinkage)
    });

    let points: Vec<TrialStats> = cfg
        .sizes
        .iter()
        .zip(margins.chunks(cfg.trials))
        .map(|(&n, chunk)| {
            let used: Vec<f64> = chunk.iter().flatten().copied().collect();
            TrialStats::from_values(n as f64, &used, chunk.len() - used.len())
        })
        .collect();
    if let Some(empty) = points.iter().find(|p| p.trials_defined == 0) {
        return Err(Error::Fit(format!(
            "an invertible covariance at n = {}, but every selection was singular",
            empty.key
        )));
    }
    let fit = fit_power_law(&points.iter().map(|p| (p.key, p.mean)).collect::<Vec<_>>())?;
    Ok(ScalingFit {
        scheme: cfg.scheme,
        points,
        fit,
    })
}

/// Pairwise Pearson correlations binned over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationHistogram {
    /// `bins + 1` ascending edges from −1 to 1.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub pairs: usize,
    /// Pairs involving a zero-variance column.
    pub excluded_pairs: usize,
}

/// Histogram of the price-level Pearson correlations of all asset pairs.
pub fn correlation_histogram(prices: &PriceMatrix, bins: usize) -> Result<CorrelationHistogram> {
    correlation_histogram_of(prices.prices(), bins, Execution::Parallel)
}

/// Histogram of the Pearson correlations between all column pairs of `data`.
pub fn correlation_histogram_of(
    data: &DMatrix<f64>,
    bins: usize,
    execution: Execution,
) -> Result<CorrelationHistogram> {
    let n = data.ncols();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two assets".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("need at least one bin".into()));
    }
    // Centered, unit-norm columns; `None` marks zero variance.
    let unit: Vec<Option<Vec<f64>>> = (0..n)
        .map(|j| {
            let col = data.column(j);
            let mean = col.mean();
            let centered: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm > 0.0).then(|| centered.iter().map(|v| v / norm).collect())
        })
        .collect();

    let rows = map_indexed(n, execution, |i| {
        let mut counts = vec![0usize; bins];
        let mut excluded = 0;
        for k in i + 1..n {
            match (&unit[i], &unit[k]) {
                (Some(a), Some(b)) => {
                    let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
                    let bin = (((c + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
                    counts[bin] += 1;
                }
                _ => excluded += 1,
            }
        }
        (counts, excluded)
    });

    let mut counts = vec![0usize; bins];
    let mut excluded_pairs = 0;
    for (row, excluded) in rows {
        for (total, c) in counts.iter_mut().zip(row) {
            *total += c;
        }
        excluded_pairs += excluded;
    }
    let edges = (0..=bins).map(|b| -1.0 + 2.0 * b as f64 / bins as f64).collect();
    Ok(CorrelationHistogram {
        edges,
        pairs: counts.iter().sum(),
        counts,
        excluded_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{synth_prices, CorrelationModel};
    use rand::Rng;

    fn factor_prices(n: usize, t: usize, seed: u64) -> PriceMatrix {
        synth_prices(n, t, CorrelationModel::RandomFactor { factors: 3 }, seed).unwrap()
    }

    #[test]
    fn power_law_exact_fits() {
        let sizes = [4.0, 8.0, 16.0, 32.0, 64.0];
        for alpha in [-1.0, -1.8, 0.0, 0.5] {
            let pts: Vec<(f64, f64)> = sizes.iter().map(|&n| (n, 3.0 * f64::powf(n, alpha))).collect();
            let fit = fit_power_law(&pts).unwrap();
            assert!((fit.alpha - alpha).abs() < 1e-9, "{alpha}: {}", fit.alpha);
            assert!((fit.r_squared - 1.0).abs() < 1e-12);
        }
        let flat: Vec<(f64, f64)> = sizes.iter().map(|&n| (n, 0.7)).collect();
        assert_eq!(fit_power_law(&flat).unwrap().alpha, 0.0);
    }

    #[test]
    fn power_law_noisy_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let pts: Vec<(f64, f64)> = (1..=20)
            .map(|i| {
                let n = 4.0 * i as f64;
                (n, n.powf(-1.8) * (1.0 + rng.random_range(-0.1..0.1)))
            })
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.alpha + 1.8).abs() < 0.1, "{}", fit.alpha);
    }

    #[test]
    fn power_law_errors() {
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 0.5)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(2.0, 1.0), (2.0, 0.5), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn histogram_extremes() {
        let base = [1.0, 3.0, 2.0, 5.0, 4.0];
        let data = DMatrix::from_fn(5, 2, |t, _| base[t]);
        let h = correlation_histogram_of(&data, 4, Execution::Serial).unwrap();
        assert_eq!(h.pairs, 1);
        assert_eq!(h.counts, vec![0, 0, 0, 1]);

        let data = DMatrix::from_fn(5, 3, |t, j| match j {
            0 => base[t],
            1 => 10.0 - base[t],
            _ => 2.0,
        });
        let h = correlation_histogram_of(&data, 4, Execution::Serial).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 0]);
        assert_eq!(h.excluded_pairs, 2);
        assert_eq!(h.edges, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn histogram_counts_every_pair() {
        let p = factor_prices(40, 60, 3);
        let h = correlation_histogram(&p, 20).unwrap();
        assert_eq!(h.pairs, 40 * 39 / 2);
        assert_eq!(h.counts.iter().sum::<usize>(), h.pairs);
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let prices = factor_prices(24, 300, 1);
        let cfg = SweepConfig {
            n: 8,
            gamma_ratios: vec![0.5, 4.0],
            trials: 6,
            master_seed: 7,
            ..SweepConfig::default()
        };
        let a = run_margin_sweep(&prices, &cfg).unwrap();
        let b = run_margin_sweep(&prices, &SweepConfig { execution: Execution::Serial, ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.rows[0].solver, SolverKind::Tap);
        assert_eq!(a.rows[1].solver, SolverKind::LocalField);
        assert_eq!(a.rows[2].stats.key, 4.0);
        assert!(a.rows[0].min_hessian_eigenvalue > 0.0);
    }

    #[test]
    fn sweep_validates_config() {
        let prices = factor_prices(10, 100, 1);
        let base = SweepConfig { n: 4, trials: 1, ..SweepConfig::default() };
        assert!(run_margin_sweep(&prices, &SweepConfig { n: 11, ..base.clone() }).is_err());
        assert!(run_margin_sweep(&prices, &SweepConfig { trials: 0, ..base.clone() }).is_err());
        assert!(run_margin_sweep(&prices, &SweepConfig { gamma_ratios: vec![-1.0], ..base.clone() }).is_err());
        assert!(matches!(
            run_margin_sweep(&prices, &SweepConfig { oracle_cap: 3, ..base }),
            Err(Error::OracleCapExceeded { .. })
        ));
    }

    #[test]
    fn scaling_counts_singular_selections() {
        // 6 return rows cannot support a 16-asset covariance
        let prices = factor_prices(20, 7, 2);
        let cfg = ScalingConfig { sizes: vec![2, 3, 16], trials: 4, ..ScalingConfig::default() };
        assert!(matches!(run_scaling(&prices, &cfg), Err(Error::Fit(_))));

        let prices = factor_prices(20, 200, 2);
        let fit = run_scaling(&prices, &ScalingConfig { sizes: vec![2, 4, 8], trials: 4, ..ScalingConfig::default() }).unwrap();
        assert_eq!(fit.points.len(), 3);
        assert!(fit.points.iter().all(|p| p.trials_defined == 4 && p.trials_excluded == 0));
        assert!(run_scaling(&prices, &ScalingConfig { sizes: vec![8, 4, 2], ..ScalingConfig::default() }).is_err());
        assert!(run_scaling(&prices, &ScalingConfig { sizes: vec![4, 8], ..ScalingConfig::default() }).is_err());
    }
}
