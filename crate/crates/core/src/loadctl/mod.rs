//! Admission control (MPL limits and conflict-driven load control).
//!
//! The engine consults a [`LoadController`] before admitting each queued
//! transaction, offers it the running transactions for cancellation
//! after every event, and reports windowed throughput for the feedback
//! methods.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analytic::critical_point;
use crate::engine::TxnId;

/// Conflict ratio above which admissions stop.
pub const CONFLICT_RATIO_THRESHOLD: f64 = 1.3;
/// Fraction of blocked transactions at which throughput peaks.
pub const CRITICAL_BETA: f64 = 0.3;
/// Progress (fraction of locks held) after which a transaction is mature.
pub const MATURITY: f64 = 0.25;
pub const DEFAULT_HYSTERESIS: f64 = 0.05;

/// Recent system state as seen by the controller.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoadSignal {
    pub now: f64,
    /// Admitted and not yet finished, including restart-waiting.
    pub admitted: usize,
    pub beta: f64,
    pub conflict_ratio: f64,
    pub p_c: f64,
    /// Mean locks per transaction, for the contention estimate.
    pub mean_locks: f64,
    pub mature: usize,
    pub blocked_mature: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxnProgress {
    pub id: TxnId,
    /// Locks held over locks required.
    pub progress: f64,
    pub blocked: bool,
}

/// Throughput over one feedback window at a time-averaged MPL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSample {
    pub mpl: f64,
    pub throughput: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Incremental,
    Parabola,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LoadControlConfig {
    #[default]
    None,
    FixedMpl {
        max: u32,
    },
    ConflictRatio {
        threshold: f64,
        hysteresis: f64,
    },
    HalfAndHalf {
        maturity: f64,
        blocked_limit: f64,
    },
    Feedback {
        mode: FeedbackMode,
        initial: u32,
        floor: u32,
        ceiling: u32,
    },
    CriticalBeta {
        threshold: f64,
        hysteresis: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadControlSpec {
    pub name: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadControlError(pub String);

impl fmt::Display for LoadControlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for LoadControlError {}

impl LoadControlConfig {
    pub fn name(&self) -> &'static str {
        match self {
            LoadControlConfig::None => "none",
            LoadControlConfig::FixedMpl { .. } => "fixed_mpl",
            LoadControlConfig::ConflictRatio { .. } => "conflict_ratio",
            LoadControlConfig::HalfAndHalf { .. } => "half_and_half",
            LoadControlConfig::Feedback { .. } => "feedback",
            LoadControlConfig::CriticalBeta { .. } => "critical_beta",
        }
    }

    pub fn conflict_ratio() -> Self {
        LoadControlConfig::ConflictRatio { threshold: CONFLICT_RATIO_THRESHOLD, hysteresis: DEFAULT_HYSTERESIS }
    }

    /// Controllers that gate on measured contention rather than a count.
    /// The engine admits at most one txn per arrival or commit under these.
    pub fn signal_driven(&self) -> bool {
        matches!(
            self,
            LoadControlConfig::ConflictRatio { .. }
                | LoadControlConfig::CriticalBeta { .. }
                | LoadControlConfig::HalfAndHalf { .. }
        )
    }

    pub fn half_and_half() -> Self {
        LoadControlConfig::HalfAndHalf { maturity: MATURITY, blocked_limit: 0.5 }
    }

    pub fn critical_beta() -> Self {
        LoadControlConfig::CriticalBeta { threshold: CRITICAL_BETA, hysteresis: DEFAULT_HYSTERESIS }
    }

    pub fn from_spec(spec: &LoadControlSpec) -> Result<Self, LoadControlError> {
        let p = &spec.params;
        let f = |key: &str, default: f64| -> Result<f64, LoadControlError> {
            match p.get(key) {
                None => Ok(default),
                Some(v) => v.as_f64().filter(|x| x.is_finite() && *x >= 0.0).ok_or_else(|| {
                    LoadControlError(format!("load_control param `{key}` must be a non-negative number"))
                }),
            }
        };
        let u =
            |key: &str, default: Option<u32>| -> Result<u32, LoadControlError> {
                match (p.get(key), default) {
                    (None, Some(d)) => Ok(d),
                    (None, None) => Err(LoadControlError(format!("load_control `{}` needs param `{key}`", spec.name))),
                    (Some(v), _) => v.as_u64().filter(|x| *x >= 1).map(|x| x as u32).ok_or_else(|| {
                        LoadControlError(format!("load_control param `{key}` must be a positive integer"))
                    }),
                }
            };
        let allowed: &[&str] = match spec.name.as_str() {
            "none" => &[],
            "fixed_mpl" => &["mpl"],
            "conflict_ratio" | "critical_beta" => &["threshold", "hysteresis"],
            "half_and_half" => &["maturity", "blocked_limit"],
            "feedback" => &["mode", "initial", "floor", "ceiling"],
            other => return Err(LoadControlError(format!("unknown load control `{other}`"))),
        };
        if let Some(k) = p.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(LoadControlError(format!("load control `{}` does not accept param `{k}`", spec.name)));
        }
        let cfg = match spec.name.as_str() {
            "none" => LoadControlConfig::None,
            "fixed_mpl" => LoadControlConfig::FixedMpl { max: u("mpl", None)? },
            "conflict_ratio" => LoadControlConfig::ConflictRatio {
                threshold: f("threshold", CONFLICT_RATIO_THRESHOLD)?,
                hysteresis: f("hysteresis", DEFAULT_HYSTERESIS)?,
            },
            "critical_beta" => LoadControlConfig::CriticalBeta {
                threshold: f("threshold", CRITICAL_BETA)?,
                hysteresis: f("hysteresis", DEFAULT_HYSTERESIS)?,
            },
            "half_and_half" => LoadControlConfig::HalfAndHalf {
                maturity: f("maturity", MATURITY)?,
                blocked_limit: f("blocked_limit", 0.5)?,
            },
            _ => {
                let mode = match p.get("mode") {
                    None => FeedbackMode::Incremental,
                    Some(v) => serde_json::from_value(v.clone())
                        .map_err(|_| LoadControlError("feedback `mode` is incremental or parabola".into()))?,
                };
                let floor = u("floor", Some(1))?;
                let ceiling = u("ceiling", Some(200))?;
                let initial = u("initial", Some(floor.max(10).min(ceiling)))?;
                if floor > ceiling || !(floor..=ceiling).contains(&initial) {
                    return Err(LoadControlError("feedback needs floor <= initial <= ceiling".into()));
                }
                LoadControlConfig::Feedback { mode, initial, floor, ceiling }
            }
        };
        Ok(cfg)
    }

    pub fn to_spec(&self) -> LoadControlSpec {
        let mut params = Map::new();
        match *self {
            LoadControlConfig::None => {}
            LoadControlConfig::FixedMpl { max } => {
                params.insert("mpl".into(), max.into());
            }
            LoadControlConfig::ConflictRatio { threshold, hysteresis }
            | LoadControlConfig::CriticalBeta { threshold, hysteresis } => {
                params.insert("threshold".into(), threshold.into());
                params.insert("hysteresis".into(), hysteresis.into());
            }
            LoadControlConfig::HalfAndHalf { maturity, blocked_limit } => {
                params.insert("maturity".into(), maturity.into());
                params.insert("blocked_limit".into(), blocked_limit.into());
            }
            LoadControlConfig::Feedback { mode, initial, floor, ceiling } => {
                params.insert("mode".into(), serde_json::to_value(mode).expect("plain enum"));
                params.insert("initial".into(), initial.into());
                params.insert("floor".into(), floor.into());
                params.insert("ceiling".into(), ceiling.into());
            }
        }
        LoadControlSpec { name: self.name().into(), params }
    }
}

pub fn fixed_mpl(admitted: usize, max: u32) -> bool {
    admitted < max as usize
}

/// New suspension state: suspend at `value >= threshold`, resume once it
/// falls below `threshold - hysteresis`.
pub fn threshold_control(suspended: bool, value: f64, threshold: f64, hysteresis: f64) -> bool {
    if suspended {
        value >= threshold - hysteresis
    } else {
        value >= threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfDecision {
    pub admit: bool,
    pub cancel: Option<TxnId>,
}

/// Half-and-half: while more than `blocked_limit` of the mature
/// transactions are blocked, admit nobody and cancel the blocked
/// transaction with the least progress.
pub fn half_and_half(txns: &[TxnProgress], maturity: f64, blocked_limit: f64) -> HalfDecision {
    let mature = txns.iter().filter(|t| t.progress >= maturity).count();
    let blocked_mature = txns.iter().filter(|t| t.blocked && t.progress >= maturity).count();
    if !over_limit(mature, blocked_mature, blocked_limit) {
        return HalfDecision { admit: true, cancel: None };
    }
    let cancel = txns
        .iter()
        .filter(|t| t.blocked)
        .min_by(|a, b| a.progress.total_cmp(&b.progress).then(a.id.cmp(&b.id)))
        .map(|t| t.id);
    HalfDecision { admit: false, cancel }
}

fn over_limit(mature: usize, blocked_mature: usize, limit: f64) -> bool {
    mature > 0 && blocked_mature as f64 > limit * mature as f64
}

/// Hill climbing on the MPL bound: keep moving while throughput rises,
/// turn around when it falls.
pub fn feedback_incremental(bound: u32, direction: i32, rose: bool, floor: u32, ceiling: u32) -> (u32, i32) {
    let dir = if rose { direction } else { -direction };
    let next = (i64::from(bound) + i64::from(dir)).clamp(i64::from(floor), i64::from(ceiling)) as u32;
    // Bounce off the limits.
    let dir = if next == bound { -dir } else { dir };
    (next, dir)
}

/// Least-squares `(a0, a1, a2)` of `tput = a0 + a1 n + a2 n^2` over
/// `(n, tput)` samples; `None` with fewer than three distinct `n`.
pub fn fit_parabola(samples: &[(f64, f64)]) -> Option<[f64; 3]> {
    let mut xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return None;
    }
    // Fit in centred, scaled coordinates, then expand back.
    let n = samples.len() as f64;
    let m = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let sd = (samples.iter().map(|s| (s.0 - m).powi(2)).sum::<f64>() / n).sqrt();
    let mut a = [[0.0f64; 4]; 3];
    for &(x, y) in samples {
        let u = (x - m) / sd;
        let row = [1.0, u, u * u];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            a[i][3] += row[i] * y;
        }
    }
    let b = solve3(a)?;
    // y = b0 + b1 (x-m)/sd + b2 (x-m)^2/sd^2
    let c2 = b[2] / (sd * sd);
    let c1 = b[1] / sd - 2.0 * m * c2;
    let c0 = b[0] - b[1] * m / sd + c2 * m * m;
    Some([c0, c1, c2])
}

fn solve3(mut a: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        let pivot = a[col];
        for (row, r) in a.iter_mut().enumerate() {
            if row != col {
                let f = r[col] / pivot[col];
                for (x, p) in r[col..].iter_mut().zip(&pivot[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    Some([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

/// Vertex of the fitted throughput parabola, rounded into the bounds;
/// `None` when the fit is not concave.
pub fn feedback_parabola(samples: &[(f64, f64)], floor: u32, ceiling: u32) -> Option<u32> {
    let [_, a1, a2] = fit_parabola(samples)?;
    if !(a2 < 0.0) {
        return None;
    }
    let n = -a1 / (2.0 * a2);
    Some(n.round().clamp(f64::from(floor), f64::from(ceiling)) as u32)
}

/// Contention estimate `K1 p_c A` compared against the critical point.
pub fn contention_alarm(mean_locks: f64, p_c: f64, first_level_wait: f64) -> bool {
    mean_locks * p_c * first_level_wait > critical_point().alpha_star
}

const PARABOLA_SAMPLES: usize = 12;

/// Runtime state of one admission policy.
#[derive(Debug, Clone)]
pub struct LoadController {
    config: LoadControlConfig,
    suspended: bool,
    bound: u32,
    direction: i32,
    last_throughput: Option<f64>,
    samples: VecDeque<(f64, f64)>,
    alarm: bool,
    suspensions: u64,
}

impl LoadController {
    pub fn new(config: LoadControlConfig) -> Self {
        let bound = match config {
            LoadControlConfig::FixedMpl { max } => max,
            LoadControlConfig::Feedback { initial, .. } => initial,
            _ => u32::MAX,
        };
        Self {
            config,
            suspended: false,
            bound,
            direction: 1,
            last_throughput: None,
            samples: VecDeque::new(),
            alarm: false,
            suspensions: 0,
        }
    }

    pub fn config(&self) -> &LoadControlConfig {
        &self.config
    }

    /// Current MPL bound, if the method keeps one.
    pub fn bound(&self) -> Option<u32> {
        matches!(self.config, LoadControlConfig::FixedMpl { .. } | LoadControlConfig::Feedback { .. })
            .then_some(self.bound)
    }

    pub fn alarm(&self) -> bool {
        self.alarm
    }

    pub fn suspensions(&self) -> u64 {
        self.suspensions
    }

    /// Whether the next queued transaction may start. An empty system
    /// always admits, so a stale signal cannot stall it.
    pub fn admit(&mut self, sig: &LoadSignal) -> bool {
        let was = self.suspended;
        let ok = match self.config {
            LoadControlConfig::None => true,
            LoadControlConfig::FixedMpl { max } => fixed_mpl(sig.admitted, max),
            LoadControlConfig::Feedback { .. } => fixed_mpl(sig.admitted, self.bound),
            LoadControlConfig::ConflictRatio { threshold, hysteresis } => {
                self.suspended = threshold_control(self.suspended, sig.conflict_ratio, threshold, hysteresis);
                !self.suspended
            }
            LoadControlConfig::CriticalBeta { threshold, hysteresis } => {
                if contention_alarm(sig.mean_locks, sig.p_c, crate::analytic::DEFAULT_FIRST_LEVEL_WAIT) {
                    self.alarm = true;
                }
                self.suspended = threshold_control(self.suspended, sig.beta, threshold, hysteresis);
                !self.suspended
            }
            LoadControlConfig::HalfAndHalf { blocked_limit, .. } => {
                self.suspended = over_limit(sig.mature, sig.blocked_mature, blocked_limit);
                !self.suspended
            }
        };
        if self.suspended && !was {
            self.suspensions += 1;
        }
        ok || sig.admitted == 0
    }

    pub fn wants_cancellation(&self) -> bool {
        matches!(self.config, LoadControlConfig::HalfAndHalf { .. })
    }

    pub fn cancellation(&mut self, txns: &[TxnProgress]) -> Option<TxnId> {
        match self.config {
            LoadControlConfig::HalfAndHalf { maturity, blocked_limit } => {
                half_and_half(txns, maturity, blocked_limit).cancel
            }
            _ => None,
        }
    }

    /// Feedback step at the end of a measurement window.
    pub fn on_window(&mut self, w: WindowSample) {
        let LoadControlConfig::Feedback { mode, floor, ceiling, .. } = self.config else {
            return;
        };
        if mode == FeedbackMode::Parabola {
            self.samples.push_back((w.mpl, w.throughput));
            if self.samples.len() > PARABOLA_SAMPLES {
                self.samples.pop_front();
            }
            let s: Vec<(f64, f64)> = self.samples.iter().copied().collect();
            if let Some(n) = feedback_parabola(&s, floor, ceiling) {
                if n != self.bound {
                    self.bound = n;
                    self.last_throughput = Some(w.throughput);
                    return;
                }
            }
        }
        let rose = self.last_throughput.is_none_or(|t| w.throughput >= t);
        (self.bound, self.direction) = feedback_incremental(self.bound, self.direction, rose, floor, ceiling);
        self.last_throughput = Some(w.throughput);
    }
}
