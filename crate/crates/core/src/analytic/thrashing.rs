use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

/// Blocked fraction at which throughput peaks under equal step times.
pub const PEAK_THROUGHPUT_BETA: f64 = 0.3;

/// Inputs above the computed fold by at most this much are taken to mean
/// the fold itself, so the three-decimal value 0.226 resolves to it.
pub const FOLD_TOLERANCE: f64 = 5e-4;

const FIXED_POINT_TOL: f64 = 1e-9;
const FIXED_POINT_MAX_ITER: usize = 10_000;

/// Residual of `a R^2 - R + r`.
pub fn quadratic_residual(a: f64, r: f64, response: f64) -> f64 {
    a * response * response - response + r
}

/// Mean response time `R` with contention, given the contention-free
/// response `r` and coefficient `a`: the smaller root of `a R^2 - R + r = 0`.
pub fn response_time_quadratic(r: f64, a: f64) -> Result<f64> {
    if !(a >= 0.0) || !(r >= 0.0) {
        return Err(ModelError::Domain(format!("need a >= 0 and r >= 0 (a={a}, r={r})")));
    }
    let disc = 1.0 - 4.0 * a * r;
    if disc < 0.0 {
        return Err(ModelError::Thrashing {
            reason: format!("4 a r = {:.6} > 1, no real response time", 4.0 * a * r),
            alpha_star: critical_point().alpha_star,
        });
    }
    // (1 - sqrt(disc)) / (2a), rationalized so a -> 0 stays exact.
    Ok(2.0 * r / (1.0 + disc.sqrt()))
}

/// `beta^3 - (1.5 alpha + 2) beta^2 + (1.5 alpha + 1) beta - alpha`.
pub fn cubic_residual(alpha: f64, beta: f64) -> f64 {
    ((beta - (1.5 * alpha + 2.0)) * beta + (1.5 * alpha + 1.0)) * beta - alpha
}

// The cubic splits as N(beta) - alpha * P(beta) with N = beta (1-beta)^2 and
// P = 1 - 1.5 beta + 1.5 beta^2 > 0, so its roots in [0,1) are where
// N / P = alpha.
fn fold_slope(beta: f64) -> f64 {
    let n = beta * (1.0 - beta) * (1.0 - beta);
    let dn = (1.0 - beta) * (1.0 - 3.0 * beta);
    let p = 1.0 - 1.5 * beta + 1.5 * beta * beta;
    let dp = 3.0 * beta - 1.5;
    dn * p - n * dp
}

fn alpha_of_beta(beta: f64) -> f64 {
    beta * (1.0 - beta) * (1.0 - beta) / (1.0 - 1.5 * beta + 1.5 * beta * beta)
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub alpha_star: f64,
    pub beta_star: f64,
}

/// The fold of the blocked-fraction cubic: the largest `alpha` for which a
/// root below one exists, and that double root.
pub fn critical_point() -> CriticalPoint {
    static POINT: OnceLock<CriticalPoint> = OnceLock::new();
    *POINT.get_or_init(|| {
        // fold_slope > 0 at 1/3 and < 0 at 1/2, with a single sign change.
        let beta_star = bisect(1.0 / 3.0, 0.5, fold_slope);
        CriticalPoint { alpha_star: alpha_of_beta(beta_star), beta_star }
    })
}

/// Smallest root in `[0, 1)` of the blocked-fraction cubic.
pub fn solve_cubic_beta(alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(ModelError::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    let cp = critical_point();
    if alpha > cp.alpha_star {
        if alpha <= cp.alpha_star + FOLD_TOLERANCE {
            return Ok(cp.beta_star);
        }
        return Err(ModelError::Thrashing {
            reason: format!("alpha = {alpha:.4} exceeds the fold; no blocked fraction below 1"),
            alpha_star: cp.alpha_star,
        });
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    // residual(0) = -alpha < 0 and residual(beta*) = P(beta*) (alpha* - alpha) >= 0.
    Ok(bisect(0.0, cp.beta_star, |b| cubic_residual(alpha, b)))
}

/// `beta = alpha [1 + rho (1 + rho) / (2 (1 - rho^2))]` for unequal step times,
/// with `rho` the fraction of conflicts that hit blocked holders.
pub fn unequal_step_beta(alpha: f64, rho_b: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho_b) {
        return Err(ModelError::Domain(format!("rho must lie in [0,1), got {rho_b}")));
    }
    if !(alpha >= 0.0) {
        return Err(ModelError::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(alpha * (1.0 + rho_b * (1.0 + rho_b) / (2.0 * (1.0 - rho_b * rho_b))))
}

/// Fixed-point driver for the unequal-step model: alternates
/// `rho <- rho_of_beta(beta)` and `beta <- unequal_step_beta(alpha, rho)`
/// until the relative change falls below 1e-9. Returns `(beta, rho)`.
pub fn solve_unequal_step(alpha: f64, rho_of_beta: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let mut beta = alpha;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let rho = rho_of_beta(beta);
        if !(0.0..1.0).contains(&rho) || beta >= 1.0 {
            return Err(ModelError::Thrashing {
                reason: format!("unequal-step iteration left the unit interval (beta={beta:.4}, rho={rho:.4})"),
                alpha_star: critical_point().alpha_star,
            });
        }
        let next = unequal_step_beta(alpha, rho)?;
        if (next - beta).abs() <= FIXED_POINT_TOL * next.abs().max(f64::MIN_POSITIVE) {
            return Ok((next, rho_of_beta(next)));
        }
        beta = next;
    }
    Err(ModelError::NoConvergence { iterations: FIXED_POINT_MAX_ITER })
}

/// `rho = 1 - 1/CR`.
pub fn conflict_ratio_to_rho(cr: f64) -> Result<f64> {
    if !(cr >= 1.0) {
        return Err(ModelError::Domain(format!("conflict ratio must be >= 1, got {cr}")));
    }
    Ok(1.0 - 1.0 / cr)
}

/// `CR = 1 / (1 - rho)`.
pub fn rho_to_conflict_ratio(rho_b: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho_b) {
        return Err(ModelError::Domain(format!("rho must lie in [0,1), got {rho_b}")));
    }
    Ok(1.0 / (1.0 - rho_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain bisection on the cubic over [0, 0.378] straight from its
    /// coefficients, independent of the fold machinery above.
    fn oracle_beta(alpha: f64) -> f64 {
        let f = |b: f64| b * b * b - (1.5 * alpha + 2.0) * b * b + (1.5 * alpha + 1.0) * b - alpha;
        let (mut lo, mut hi) = (0.0f64, 0.378f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quadratic_examples() {
        assert_eq!(response_time_quadratic(2.5, 0.0).unwrap(), 2.5);
        let r = 1.0;
        let a = 0.25;
        assert!((response_time_quadratic(r, a).unwrap() - 2.0).abs() < 1e-12);
        let big = response_time_quadratic(1.0, 0.1).unwrap();
        // Frozen: (1 - sqrt(0.6)) / 0.2.
        assert!((big - 1.127_016_653_792_583).abs() < 1e-12);
        assert!(quadratic_residual(0.1, 1.0, big).abs() < 1e-12);
        assert!(matches!(response_time_quadratic(1.0, 0.26), Err(ModelError::Thrashing { .. })));
    }

    #[test]
    fn cubic_examples() {
        assert_eq!(solve_cubic_beta(0.0).unwrap(), 0.0);
        let b = solve_cubic_beta(0.226).unwrap();
        assert!((b - 0.378).abs() <= 1e-3, "beta(0.226) = {b}");
        // Frozen from the independent bisection oracle.
        let b = solve_cubic_beta(0.10).unwrap();
        assert!((b - 0.107_470_435_737).abs() < 1e-9, "{b}");
        assert!((b - oracle_beta(0.10)).abs() < 1e-11);
        assert!(matches!(solve_cubic_beta(0.3), Err(ModelError::Thrashing { .. })));
        assert!(solve_cubic_beta(-0.1).is_err());
    }

    #[test]
    fn critical_point_values() {
        let cp = critical_point();
        assert!((cp.alpha_star - 0.226).abs() <= 1e-3, "{cp:?}");
        assert!((cp.beta_star - 0.378).abs() <= 1e-3, "{cp:?}");
        // Double root: residual and slope both vanish.
        assert!(cubic_residual(cp.alpha_star, cp.beta_star).abs() < 1e-12);
        assert!(solve_cubic_beta(cp.alpha_star - 1e-4).is_ok());
        assert!(solve_cubic_beta(cp.alpha_star + 1e-3).is_err());
    }

    #[test]
    fn cubic_residual_and_monotone_on_grid() {
        let cp = critical_point();
        let mut last = -1.0;
        for i in 0..=100 {
            let alpha = cp.alpha_star * f64::from(i) / 100.0;
            let beta = solve_cubic_beta(alpha).unwrap();
            assert!(cubic_residual(alpha, beta).abs() < 1e-10);
            if i < 100 {
                assert!((beta - oracle_beta(alpha)).abs() < 1e-6);
            }
            assert!(beta >= last);
            last = beta;
        }
    }

    #[test]
    fn unequal_step_examples() {
        assert_eq!(unequal_step_beta(0.12, 0.0).unwrap(), 0.12);
        assert!((unequal_step_beta(0.2, 0.5).unwrap() - 0.3).abs() < 1e-15);
        assert!((unequal_step_beta(0.15, 0.25).unwrap() - 0.175).abs() < 1e-15);
        assert!(unequal_step_beta(0.1, 1.0).is_err());
    }

    #[test]
    fn fixed_point_driver() {
        let (beta, rho) = solve_unequal_step(0.1, |b| b).unwrap();
        assert!((beta - unequal_step_beta(0.1, rho).unwrap()).abs() < 1e-8);
        assert!((rho - beta).abs() < 1e-8);
        let (beta, rho) = solve_unequal_step(0.1, |_| 0.0).unwrap();
        assert_eq!((beta, rho), (0.1, 0.0));
        assert!(solve_unequal_step(0.5, |b| b).is_err());
    }

    #[test]
    fn conflict_ratio_examples() {
        assert_eq!(conflict_ratio_to_rho(1.0).unwrap(), 0.0);
        assert!((conflict_ratio_to_rho(1.43).unwrap() - 0.30).abs() < 1e-3);
        assert!((conflict_ratio_to_rho(1.3).unwrap() - 0.230_769).abs() < 1e-6);
        assert!(conflict_ratio_to_rho(0.9).is_err());
    }

    proptest! {
        #[test]
        fn quadratic_root_is_valid(a in 0.0f64..10.0, u in 0.0f64..=1.0) {
            // Sample r so that 4ar <= 1.
            let r = if a > 0.0 { u / (4.0 * a) } else { u * 10.0 };
            let big = response_time_quadratic(r, a).unwrap();
            prop_assert!(quadratic_residual(a, r, big).abs() < 1e-10);
            prop_assert!(big >= r);
        }

        #[test]
        fn conflict_ratio_roundtrip(cr in 1.0f64..10.0) {
            let rho = conflict_ratio_to_rho(cr).unwrap();
            prop_assert!((rho_to_conflict_ratio(rho).unwrap() - cr).abs() < 1e-12);
        }

        #[test]
        fn rho_zero_is_identity(alpha in 0.0f64..1.0) {
            prop_assert_eq!(unequal_step_beta(alpha, 0.0).unwrap(), alpha);
        }
    }
}
