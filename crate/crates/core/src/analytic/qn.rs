use serde::{Deserialize, Serialize};

use super::{ModelError, QnSystem, Result};

/// Scales a conflict probability measured at rate `lambda` (response `r`) to
/// rate `lambda2` (response `r2`) through the mean population `lambda * R`.
pub fn extrapolate_conflict(p_c: f64, lambda: f64, r: f64, lambda2: f64, r2: f64) -> Result<f64> {
    for (name, v) in [("p_c", p_c), ("lambda", lambda), ("R", r), ("lambda'", lambda2), ("R'", r2)] {
        if !(v > 0.0) {
            return Err(ModelError::Domain(format!("{name} must be > 0, got {v}")));
        }
    }
    let value = p_c * (lambda2 * r2) / (lambda * r);
    if value > 1.0 {
        return Err(ModelError::ModelRange { quantity: "p_c(lambda')", value });
    }
    Ok(value)
}

/// Mean response time of an open network of single-server devices:
/// `sum X_n / (1 - lambda X_n)`.
pub fn open_qn_response(q: &QnSystem, lambda: f64) -> Result<f64> {
    q.validate()?;
    if !(lambda >= 0.0) {
        return Err(ModelError::Domain(format!("arrival rate must be >= 0, got {lambda}")));
    }
    let mut total = 0.0;
    for (device, x) in q.demands.iter().enumerate() {
        let utilization = lambda * x;
        if utilization >= 1.0 {
            return Err(ModelError::Saturation { device, utilization });
        }
        total += x / (1.0 - utilization);
    }
    Ok(total)
}

/// Throughput of a balanced closed network with `m` jobs on `n` devices of
/// demand `x`: `M / ((N + M - 1) X)`.
pub fn balanced_closed_throughput(m: f64, n: u32, x: f64) -> Result<f64> {
    if !(m >= 1.0) || n == 0 || !(x > 0.0) {
        return Err(ModelError::Domain(format!("need M >= 1, N >= 1, X > 0 (got M={m}, N={n}, X={x})")));
    }
    if m.is_infinite() {
        return Ok(1.0 / x);
    }
    Ok(m / ((f64::from(n) + m - 1.0) * x))
}

/// Throughput ceiling `1 / max X_n` of a closed network as the population grows.
pub fn asymptotic_job_bound(q: &QnSystem) -> Result<f64> {
    q.validate()?;
    let dmax = q.demands.iter().cloned().fold(0.0, f64::max);
    Ok(1.0 / dmax)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMpl {
    /// `(N - 1) rho / (1 - rho)`.
    pub bound: f64,
    /// Smallest integer strictly above `bound`, never below one.
    pub minimum: u32,
}

/// Smallest multiprogramming level able to carry utilization `rho` on a
/// balanced `n`-device system.
pub fn min_mpl(n: u32, rho: f64) -> Result<MinMpl> {
    if n == 0 {
        return Err(ModelError::Domain("N must be >= 1".into()));
    }
    if !(rho >= 0.0) {
        return Err(ModelError::Domain(format!("utilization must be >= 0, got {rho}")));
    }
    if rho >= 1.0 {
        return Err(ModelError::Saturation { device: 0, utilization: rho });
    }
    let mut bound = f64::from(n - 1) * rho / (1.0 - rho);
    // 2/3 and friends are not exact in binary; snap to the integer the
    // arithmetic intends.
    if (bound - bound.round()).abs() < 1e-9 {
        bound = bound.round();
    }
    let minimum = (bound.floor() as u32 + 1).max(1);
    Ok(MinMpl { bound, minimum })
}
