use serde::{Deserialize, Serialize};

use super::{AccessSkew, ModelError, Result, SingleClassParams};

/// Above this conflict probability the low-contention assumption is strained.
pub const WARN_CONFLICT_PROBABILITY: f64 = 0.1;

/// Critical value of `k^2 M / D` beyond which a system tends to thrash.
pub const THRASHING_LOAD_INDEX: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictEstimate {
    pub value: f64,
    /// Set when `value` exceeds [`WARN_CONFLICT_PROBABILITY`].
    pub strained: bool,
}

/// Probability that a lock request conflicts: `k (M-1) / (2D)`.
pub fn conflict_probability(p: &SingleClassParams) -> Result<ConflictEstimate> {
    p.validate()?;
    let value = p.k * (p.m - 1.0) / (2.0 * p.d);
    if value > 1.0 {
        return Err(ModelError::ModelRange { quantity: "p_c", value });
    }
    Ok(ConflictEstimate { value, strained: value > WARN_CONFLICT_PROBABILITY })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadlockVariant {
    /// Counts every pair of mutual requests: denominator `4 D^2`.
    Original,
    /// Only requests to a holder already blocking the requester, weighted by
    /// the normalized wait `A = 1/3`: denominator `12 D^2`.
    #[default]
    Modified,
}

/// Two-way deadlock probability per transaction.
pub fn deadlock_probability_2way(p: &SingleClassParams, variant: DeadlockVariant) -> Result<f64> {
    p.validate()?;
    let denom = match variant {
        DeadlockVariant::Original => 4.0,
        DeadlockVariant::Modified => 12.0,
    };
    let value = (p.m - 1.0) * p.k.powi(4) / (denom * p.d * p.d);
    if value > 1.0 {
        return Err(ModelError::ModelRange { quantity: "p_2way", value });
    }
    Ok(value)
}

/// `[b^2/c + (1-b)^2/(1-c)]^-1`: the shrink factor hot-set skew applies to
/// the database size. Equals one for uniform access (`b == c`).
pub fn skew_factor(b: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(ModelError::Domain(format!("hot-set fraction c must lie in (0,1), got {c}")));
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(ModelError::Domain(format!("hot-access fraction b must lie in [0,1], got {b}")));
    }
    Ok(1.0 / (b * b / c + (1.0 - b) * (1.0 - b) / (1.0 - c)))
}

/// `(1 - s^2)^-1`: the inflation factor shared requests apply to the
/// database size. Only S-S pairs are compatible.
pub fn mixed_mode_factor(s: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&s) {
        return Err(ModelError::Domain(format!("shared fraction s must lie in [0,1), got {s}")));
    }
    Ok(1.0 / (1.0 - s * s))
}

/// Effective database size under skewed, mixed-mode access.
pub fn effective_db_size(d: f64, skew: &AccessSkew) -> Result<f64> {
    if !(d >= 1.0) {
        return Err(ModelError::Domain(format!("D must be >= 1, got {d}")));
    }
    Ok(d * skew_factor(skew.b, skew.c)? * mixed_mode_factor(skew.s)?)
}

/// `k^2 M / D`; compare against [`THRASHING_LOAD_INDEX`].
pub fn thrashing_load_index(p: &SingleClassParams) -> Result<f64> {
    p.validate()?;
    Ok(p.k * p.k * p.m / p.d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k: f64, m: f64, d: f64) -> SingleClassParams {
        SingleClassParams::new(k, m, d, 1.0).unwrap()
    }

    #[test]
    fn conflict_probability_examples() {
        assert_eq!(conflict_probability(&params(10.0, 1.0, 1000.0)).unwrap().value, 0.0);
        let e = conflict_probability(&params(10.0, 11.0, 1000.0)).unwrap();
        assert!((e.value - 0.05).abs() < 1e-15);
        assert!(!e.strained);
        let e = conflict_probability(&params(20.0, 6.0, 100.0)).unwrap();
        assert!((e.value - 0.5).abs() < 1e-15);
        assert!(e.strained);
    }

    #[test]
    fn conflict_probability_out_of_range() {
        let err = conflict_probability(&params(100.0, 11.0, 100.0)).unwrap_err();
        assert!(matches!(err, ModelError::ModelRange { .. }));
    }

    #[test]
    fn deadlock_examples() {
        for v in [DeadlockVariant::Original, DeadlockVariant::Modified] {
            assert_eq!(deadlock_probability_2way(&params(7.0, 1.0, 50.0), v).unwrap(), 0.0);
        }
        let p = params(10.0, 11.0, 1000.0);
        let orig = deadlock_probability_2way(&p, DeadlockVariant::Original).unwrap();
        let modi = deadlock_probability_2way(&p, DeadlockVariant::Modified).unwrap();
        assert!((orig - 0.025).abs() < 1e-15);
        assert!((modi - 0.025 / 3.0).abs() < 1e-15);
        let p = params(2.0, 2.0, 100.0);
        let orig = deadlock_probability_2way(&p, DeadlockVariant::Original).unwrap();
        assert!((orig - 4.0e-4).abs() < 1e-18);
        assert_eq!(DeadlockVariant::default(), DeadlockVariant::Modified);
        assert!(deadlock_probability_2way(&params(30.0, 10.0, 100.0), DeadlockVariant::Original).is_err());
    }

    #[test]
    fn effective_size_examples() {
        let d = 1000.0;
        let uniform = AccessSkew { b: 0.3, c: 0.3, s: 0.0 };
        assert!((effective_db_size(d, &uniform).unwrap() - d).abs() < 1e-9);
        let hot = AccessSkew { b: 0.8, c: 0.2, s: 0.0 };
        assert!((effective_db_size(d, &hot).unwrap() - d / 3.25).abs() < 1e-9);
        let mixed = AccessSkew { b: 0.3, c: 0.3, s: 0.5 };
        assert!((effective_db_size(d, &mixed).unwrap() - d / 0.75).abs() < 1e-9);
    }

    #[test]
    fn effective_size_domain_errors() {
        assert!(skew_factor(0.5, 0.0).is_err());
        assert!(skew_factor(0.5, 1.0).is_err());
        assert!(mixed_mode_factor(1.0).is_err());
    }

    #[test]
    fn thrashing_index_examples() {
        assert_eq!(thrashing_load_index(&params(0.0, 5.0, 100.0)).unwrap(), 0.0);
        assert!((thrashing_load_index(&params(10.0, 15.0, 1000.0)).unwrap() - THRASHING_LOAD_INDEX).abs() < 1e-12);
        assert!((thrashing_load_index(&params(5.0, 20.0, 1000.0)).unwrap() - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn skew_never_grows_database(b in 0.0f64..=1.0, c in 0.01f64..0.99) {
            let f = skew_factor(b, c).unwrap();
            prop_assert!(f <= 1.0 + 1e-12);
            if (b - c).abs() > 1e-3 {
                prop_assert!(f < 1.0);
            }
        }

        #[test]
        fn sharing_never_shrinks_database(s in 0.0f64..0.999) {
            let f = mixed_mode_factor(s).unwrap();
            prop_assert!(f >= 1.0);
            if s > 1e-6 {
                prop_assert!(f > 1.0);
            }
        }

        #[test]
        fn modified_is_one_third(k in 0.0f64..5.0, m in 1.0f64..20.0, d in 100.0f64..1e4) {
            let p = params(k, m, d);
            let o = deadlock_probability_2way(&p, DeadlockVariant::Original).unwrap();
            let n = deadlock_probability_2way(&p, DeadlockVariant::Modified).unwrap();
            prop_assert!((o - 3.0 * n).abs() <= 1e-12 * o.max(1e-300));
        }
    }
}
