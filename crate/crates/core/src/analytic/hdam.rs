use serde::{Deserialize, Serialize};

use super::{mixed_mode_factor, ModelError, Result};

/// One transaction class of the heterogeneous access model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdamClass {
    pub lambda: f64,
    pub frequency: f64,
    /// Lock requests per DBR.
    pub k: Vec<f64>,
    /// Mean locks held per DBR.
    pub k_bar: Vec<f64>,
    /// Shared fraction of the requests per DBR.
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdamParams {
    pub classes: Vec<HdamClass>,
    pub dbr_sizes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdamPrediction {
    pub p_c: Vec<f64>,
    pub shared_fraction: Vec<f64>,
    pub effective_size: Vec<f64>,
}

impl HdamParams {
    pub fn validate(&self) -> Result<()> {
        let j = self.dbr_sizes.len();
        if self.classes.is_empty() || j == 0 {
            return Err(ModelError::Domain("need at least one class and one DBR".into()));
        }
        if let Some(d) = self.dbr_sizes.iter().find(|d| !(**d >= 1.0)) {
            return Err(ModelError::Domain(format!("DBR size must be >= 1, got {d}")));
        }
        let fsum: f64 = self.classes.iter().map(|c| c.frequency).sum();
        if (fsum - 1.0).abs() > 1e-9 {
            return Err(ModelError::Domain(format!("class frequencies sum to {fsum}, not 1")));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.k.len() != j || c.k_bar.len() != j || c.s.len() != j {
                return Err(ModelError::Domain(format!("class {i}: per-DBR vectors must have length {j}")));
            }
            if !(c.lambda >= 0.0) || !(c.frequency >= 0.0) {
                return Err(ModelError::Domain(format!("class {i}: negative rate or frequency")));
            }
            for dbr in 0..j {
                let (k, kb, s) = (c.k[dbr], c.k_bar[dbr], c.s[dbr]);
                if !(k >= 0.0) || !(kb >= 0.0) || kb > k + 1e-12 {
                    return Err(ModelError::Domain(format!(
                        "class {i}, DBR {dbr}: need 0 <= k_bar <= k (k={k}, k_bar={kb})"
                    )));
                }
                if !(0.0..=1.0).contains(&s) {
                    return Err(ModelError::Domain(format!("class {i}, DBR {dbr}: s={s} outside [0,1]")));
                }
            }
        }
        Ok(())
    }

    /// Request-weighted shared fraction of each DBR.
    pub fn shared_fractions(&self) -> Result<Vec<f64>> {
        (0..self.dbr_sizes.len())
            .map(|j| {
                let total: f64 = self.classes.iter().map(|c| c.frequency * c.k[j]).sum();
                let shared: f64 = self.classes.iter().map(|c| c.frequency * c.k[j] * c.s[j]).sum();
                if total > 0.0 {
                    Ok(shared / total)
                } else if self.classes.iter().any(|c| c.k_bar[j] > 0.0) {
                    Err(ModelError::Domain(format!("DBR {j} holds locks but receives no requests")))
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    }

    /// Per-DBR factor by which conflict probabilities move when the class
    /// populations go from `lambda_i * r[i]` to `lambda2[i] * r2[i]`.
    pub fn dbr_rate_scale(&self, r: &[f64], lambda2: &[f64], r2: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        self.check_len(r)?;
        self.check_len(lambda2)?;
        self.check_len(r2)?;
        (0..self.dbr_sizes.len())
            .map(|j| {
                let k_bar: Vec<f64> = self.classes.iter().map(|c| c.k_bar[j]).collect();
                let before: Vec<f64> = self.classes.iter().zip(r).map(|(c, r)| c.lambda * r).collect();
                let after: Vec<f64> = lambda2.iter().zip(r2).map(|(l, r)| l * r).collect();
                multiclass_extrapolate(&k_bar, &before, &after)
            })
            .collect()
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.classes.len() {
            return Err(ModelError::Domain(format!(
                "expected {} per-class values, got {}",
                self.classes.len(),
                v.len()
            )));
        }
        Ok(())
    }
}

/// `sum k_bar_i lambda'_i R_i(lambda'_i) / sum k_bar_i lambda_i R_i(lambda_i)`.
///
/// `population` and `population2` hold the per-class products `lambda_i R_i`
/// before and after the rate change.
pub fn multiclass_extrapolate(k_bar: &[f64], population: &[f64], population2: &[f64]) -> Result<f64> {
    if k_bar.len() != population.len() || k_bar.len() != population2.len() {
        return Err(ModelError::Domain("per-class vectors differ in length".into()));
    }
    let num: f64 = k_bar.iter().zip(population2).map(|(k, p)| k * p).sum();
    let den: f64 = k_bar.iter().zip(population).map(|(k, p)| k * p).sum();
    if den == 0.0 {
        return Err(ModelError::Domain("no locks held at the base rate".into()));
    }
    Ok(num / den)
}

/// Per-DBR conflict probability
/// `p_c^j = (1 - s_j^2) / D_j * sum_i k_bar_ij lambda_i R_i`.
pub fn hdam_conflict_probability(h: &HdamParams, response_times: &[f64]) -> Result<HdamPrediction> {
    h.validate()?;
    h.check_len(response_times)?;
    let shared_fraction = h.shared_fractions()?;
    let mut p_c = Vec::with_capacity(h.dbr_sizes.len());
    let mut effective_size = Vec::with_capacity(h.dbr_sizes.len());
    for (j, (&d, &s)) in h.dbr_sizes.iter().zip(&shared_fraction).enumerate() {
        let d_eff = d * mixed_mode_factor(s)?;
        let held: f64 = h.classes.iter().zip(response_times).map(|(c, r)| c.k_bar[j] * c.lambda * r).sum();
        let value = held / d_eff;
        if value > 1.0 {
            return Err(ModelError::ModelRange { quantity: "p_c^j", value });
        }
        p_c.push(value);
        effective_size.push(d_eff);
    }
    Ok(HdamPrediction { p_c, shared_fraction, effective_size })
}
