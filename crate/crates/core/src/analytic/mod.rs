//! Closed-form lock-contention, deadlock, thrashing, and queueing-network
//! formulas, plus the root solvers behind the response-time and
//! blocked-fraction models.
//!
//! Everything here is a pure function of its inputs. Probabilities that
//! leave `[0, 1]` are reported as [`ModelError::ModelRange`] rather than
//! clamped: the formulas are low-contention approximations and a value above
//! one means the model is being used outside its validity range.

mod hdam;
mod lock;
mod qn;
mod thrashing;

pub use hdam::{hdam_conflict_probability, multiclass_extrapolate, HdamClass, HdamParams, HdamPrediction};
pub use lock::{
    conflict_probability, deadlock_probability_2way, effective_db_size, mixed_mode_factor, skew_factor,
    thrashing_load_index, ConflictEstimate, DeadlockVariant, THRASHING_LOAD_INDEX, WARN_CONFLICT_PROBABILITY,
};
pub use qn::{
    asymptotic_job_bound, balanced_closed_throughput, extrapolate_conflict, min_mpl, open_qn_response, MinMpl,
};
pub use thrashing::{
    conflict_ratio_to_rho, critical_point, cubic_residual, quadratic_residual, response_time_quadratic,
    rho_to_conflict_ratio, solve_cubic_beta, solve_unequal_step, unequal_step_beta, CriticalPoint, FOLD_TOLERANCE,
    PEAK_THROUGHPUT_BETA,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default normalized first-level wait `W1 / R` for fixed-size transactions.
pub const DEFAULT_FIRST_LEVEL_WAIT: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{quantity} = {value} is outside the model's validity range")]
    ModelRange { quantity: &'static str, value: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("device {device} saturated (utilization {utilization:.4} >= 1)")]
    Saturation { device: usize, utilization: f64 },
    #[error("thrashing: {reason} (critical alpha* = {alpha_star:.3})")]
    Thrashing { reason: String, alpha_star: f64 },
    #[error("fixed point did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Single transaction class issuing `k` exclusive requests uniformly over `D`
/// objects at concurrency `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleClassParams {
    pub k: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub step_time: f64,
}

impl SingleClassParams {
    pub fn new(k: f64, m: f64, d: f64, step_time: f64) -> Result<Self> {
        let p = Self { k, m, d, step_time };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0) {
            return Err(ModelError::Domain(format!("k must be >= 0, got {}", self.k)));
        }
        if !(self.m >= 1.0) {
            return Err(ModelError::Domain(format!("M must be >= 1, got {}", self.m)));
        }
        if !(self.d >= 1.0) {
            return Err(ModelError::Domain(format!("D must be >= 1, got {}", self.d)));
        }
        if !(self.step_time > 0.0) {
            return Err(ModelError::Domain(format!("step_time must be > 0, got {}", self.step_time)));
        }
        Ok(())
    }
}

/// Hot-set skew (`b` of the requests go to a fraction `c` of the objects)
/// and the fraction `s` of requests that are shared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessSkew {
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub s: f64,
}

impl AccessSkew {
    pub const UNIFORM: AccessSkew = AccessSkew { b: 0.5, c: 0.5, s: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.b) {
            return Err(ModelError::Domain(format!("b must lie in [0,1], got {}", self.b)));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(ModelError::Domain(format!("c must lie in (0,1), got {}", self.c)));
        }
        if !(0.0..=1.0).contains(&self.s) {
            return Err(ModelError::Domain(format!("s must lie in [0,1], got {}", self.s)));
        }
        Ok(())
    }
}

/// Open or closed product-form network of single-server devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QnSystem {
    pub demands: Vec<f64>,
    #[serde(default)]
    pub mpl_max: Option<u32>,
}

impl QnSystem {
    pub fn new(demands: Vec<f64>) -> Result<Self> {
        let q = Self { demands, mpl_max: None };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.demands.is_empty() {
            return Err(ModelError::Domain("QN needs at least one device".into()));
        }
        if let Some(x) = self.demands.iter().find(|x| !(**x > 0.0)) {
            return Err(ModelError::Domain(format!("service demand must be > 0, got {x}")));
        }
        Ok(())
    }

    pub fn utilizations(&self, lambda: f64) -> Vec<f64> {
        self.demands.iter().map(|x| lambda * x).collect()
    }
}

/// Contention intensity and the quantities that travel with it.
///
/// `alpha = K1 * p_c * A` and `beta = K1 * p_c * B`, where `K1` is the mean
/// number of lock requests per transaction, `A = W1 / R` the normalized wait
/// on an active holder, and `B = W / R` the normalized mean wait per conflict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentionState {
    pub alpha: f64,
    pub beta: f64,
    pub rho_b: f64,
    pub cr: f64,
    #[serde(rename = "A")]
    pub first_level_wait: f64,
}

impl ContentionState {
    /// Builds the state for `K1` requests per txn at conflict probability
    /// `p_c`, solving the equal-step cubic for `beta` and inverting the
    /// unequal-step relation for the implied `rho`.
    pub fn from_conflicts(k1: f64, p_c: f64, first_level_wait: f64) -> Result<Self> {
        if !(first_level_wait > 0.0) {
            return Err(ModelError::Domain(format!("A must be > 0, got {first_level_wait}")));
        }
        let alpha = k1 * p_c * first_level_wait;
        let beta = solve_cubic_beta(alpha)?;
        let rho_b = implied_rho(alpha, beta);
        Ok(Self { alpha, beta, rho_b, cr: rho_to_conflict_ratio(rho_b)?, first_level_wait })
    }

    pub fn thrashing_margin(&self) -> f64 {
        critical_point().alpha_star - self.alpha
    }
}

/// Inverts `beta = alpha * [1 + rho (1+rho) / (2 (1-rho^2))]` for `rho`.
///
/// The bracket simplifies to `1 + rho / (2 (1 - rho))`, so with
/// `q = beta / alpha - 1` the solution is `rho = 2q / (1 + 2q)`.
pub(crate) fn implied_rho(alpha: f64, beta: f64) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    let q = (beta / alpha - 1.0).max(0.0);
    2.0 * q / (1.0 + 2.0 * q)
}

/// Analytic outputs reported side by side with simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentionPrediction {
    pub p_c: f64,
    pub p_deadlock_2way: f64,
    pub beta: f64,
    #[serde(rename = "R")]
    pub response_time: f64,
    pub thrashing_margin: f64,
    pub per_dbr: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_validation() {
        assert!(SingleClassParams::new(10.0, 1.0, 1000.0, 1.0).is_ok());
        assert!(SingleClassParams::new(-1.0, 1.0, 1000.0, 1.0).is_err());
        assert!(SingleClassParams::new(1.0, 0.0, 1000.0, 1.0).is_err());
        assert!(SingleClassParams::new(1.0, 1.0, 0.5, 1.0).is_err());
        assert!(SingleClassParams::new(1.0, 1.0, 10.0, 0.0).is_err());
    }

    #[test]
    fn skew_validation() {
        assert!(AccessSkew { b: 0.8, c: 0.2, s: 0.0 }.validate().is_ok());
        assert!(AccessSkew { b: 0.8, c: 1.0, s: 0.0 }.validate().is_err());
        assert!(AccessSkew { b: 1.1, c: 0.2, s: 0.0 }.validate().is_err());
    }

    #[test]
    fn implied_rho_inverts_unequal_step() {
        for &(alpha, rho) in &[(0.1, 0.2), (0.15, 0.25), (0.05, 0.0)] {
            let beta = unequal_step_beta(alpha, rho).unwrap();
            assert!((implied_rho(alpha, beta) - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn contention_state_at_low_load() {
        let st = ContentionState::from_conflicts(10.0, 0.01, DEFAULT_FIRST_LEVEL_WAIT).unwrap();
        assert!((st.alpha - 1.0 / 30.0).abs() < 1e-12);
        assert!(st.beta > st.alpha && st.beta < 0.05);
        assert!(st.cr >= 1.0);
        assert!(st.thrashing_margin() > 0.19);
    }
}
