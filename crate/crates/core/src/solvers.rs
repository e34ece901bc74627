//! Spin-configuration solvers: TAP fixed-point iteration, the exhaustive
//! ground-state oracle and the local-field baseline.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk_model::{check_spins, flip_delta, spin_risk, IsingInstance, SpinConfig};

/// Default largest instance the exhaustive oracle accepts.
pub const DEFAULT_ORACLE_CAP: usize = 24;

/// Flip deltas above this count as non-improving.
pub const LOCAL_MIN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    Sequential,
    #[default]
    RandomPermutation,
}

/// TAP iteration settings. A zero local field keeps the current spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapSettings {
    /// Sweep budget; `None` means `10·n + 100`.
    pub max_sweeps: Option<usize>,
    pub update_order: UpdateOrder,
    /// Seeds the per-sweep permutations.
    pub seed: u64,
}

impl Default for TapSettings {
    fn default() -> Self {
        Self {
            max_sweeps: None,
            update_order: UpdateOrder::RandomPermutation,
            seed: 0,
        }
    }
}

impl TapSettings {
    pub fn sweeps_for(&self, n: usize) -> usize {
        self.max_sweeps.unwrap_or(10 * n + 100).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub config: SpinConfig,
    pub converged: bool,
    pub sweeps_used: usize,
    /// No single flip lowers the risk by more than [`LOCAL_MIN_TOLERANCE`].
    pub is_local_min: bool,
}

/// True when no single spin flip lowers the risk.
pub fn is_local_minimum(inst: &IsingInstance, spins: &[i8]) -> bool {
    (0..spins.len()).all(|i| {
        flip_delta(inst, spins, i).is_ok_and(|d| d >= -LOCAL_MIN_TOLERANCE)
    })
}

/// Asynchronous iteration of `s_i ← sign(h_i + Σ_{k≠i} J_ik s_k)` until a
/// full sweep changes nothing or the sweep budget runs out.
///
/// A spin is flipped exactly when its flip delta is negative, so every
/// accepted update lowers the risk.
pub fn tap_solve(inst: &IsingInstance, start: &[i8], settings: &TapSettings) -> Result<SolveReport> {
    check_spins(inst, start)?;
    let n = inst.len();
    let j = &inst.couplings;
    let mut spins = start.to_vec();
    let mut fields: Vec<f64> = (0..n).map(|i| inst.local_field(&spins, i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let budget = settings.sweeps_for(n);

    #[cfg(debug_assertions)]
    let mut risk = spin_risk(inst, &spins);

    let mut converged = false;
    let mut sweeps_used = 0;
    while sweeps_used < budget {
        sweeps_used += 1;
        if settings.update_order == UpdateOrder::RandomPermutation {
            order.shuffle(&mut rng);
        }
        let mut changed = false;
        for &i in &order {
            let s_i = f64::from(spins[i]);
            if s_i * fields[i] >= 0.0 {
                continue;
            }
            #[cfg(debug_assertions)]
            {
                let next = risk + 2.0 * s_i * fields[i];
                debug_assert!(next < risk, "TAP update raised the risk");
                risk = next;
            }
            spins[i] = -spins[i];
            let step = -2.0 * s_i;
            for (k, field) in fields.iter_mut().enumerate() {
                if k != i {
                    *field += step * j[(k, i)];
                }
            }
            changed = true;
        }
        if !changed {
            converged = true;
            break;
        }
    }

    let is_local_min = is_local_minimum(inst, &spins);
    let risk = spin_risk(inst, &spins);
    Ok(SolveReport {
        config: SpinConfig { spins, risk },
        converged,
        sweeps_used,
        is_local_min,
    })
}

/// Global minimum of the spin risk over all `2ⁿ` configurations, using
/// the default cap of [`DEFAULT_ORACLE_CAP`] spins.
pub fn exhaustive_ground_state(inst: &IsingInstance) -> Result<SpinConfig> {
    exhaustive_ground_state_capped(inst, DEFAULT_ORACLE_CAP)
}

/// Gray-code enumeration with O(n) field updates per step.
///
/// Configurations whose risks agree to within round-off are treated as
/// tied and the lexicographically smallest one (with −1 < +1) wins.
pub fn exhaustive_ground_state_capped(inst: &IsingInstance, cap: usize) -> Result<SpinConfig> {
    let n = inst.len();
    if n > cap || n >= 64 {
        return Err(Error::OracleCapExceeded { n, cap });
    }
    if n == 0 {
        return Ok(SpinConfig { spins: Vec::new(), risk: 0.0 });
    }
    let j = &inst.couplings;
    let scale = 1.0 + inst.field.abs().sum() + 0.5 * j.abs().sum();
    let tie = 1e-11 * scale;

    let mut spins = vec![-1i8; n];
    let mut fields: Vec<f64> = (0..n).map(|i| inst.local_field(&spins, i)).collect();
    let mut mask: u64 = 0;
    let mut risk = spin_risk(inst, &spins);
    let (mut best_mask, mut best_risk) = (mask, risk);

    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        let s_i = f64::from(spins[i]);
        risk += 2.0 * s_i * fields[i];
        spins[i] = -spins[i];
        mask ^= 1 << i;
        let delta = -2.0 * s_i;
        for (k, field) in fields.iter_mut().enumerate() {
            if k != i {
                *field += delta * j[(k, i)];
            }
        }
        if risk < best_risk - tie || (risk <= best_risk + tie && lex_less(mask, best_mask)) {
            best_mask = mask;
            best_risk = risk;
        }
    }

    let spins: Vec<i8> = (0..n)
        .map(|i| if best_mask >> i & 1 == 1 { 1 } else { -1 })
        .collect();
    let risk = spin_risk(inst, &spins);
    Ok(SpinConfig { spins, risk })
}

/// Lexicographic order on masks where bit `i` set means spin `i` is +1.
fn lex_less(a: u64, b: u64) -> bool {
    let diff = a ^ b;
    diff != 0 && a & (diff & diff.wrapping_neg()) == 0
}

/// `s_i = sign(h_i)`, with `sign(0) = +1`.
pub fn local_field_baseline(inst: &IsingInstance) -> SpinConfig {
    let spins: Vec<i8> = inst
        .field
        .iter()
        .map(|&h| if h < 0.0 { -1 } else { 1 })
        .collect();
    let risk = spin_risk(inst, &spins);
    SpinConfig { spins, risk }
}

/// Ground-state risk divided by the estimated risk; defined only when both
/// are negative.
pub fn relative_risk(r_min: f64, r_est: f64) -> Result<f64> {
    if r_min < 0.0 && r_est < 0.0 {
        Ok(r_min / r_est)
    } else {
        Err(Error::UndefinedRelativeRisk { r_min, r_est })
    }
}
