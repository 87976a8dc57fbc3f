//! Conflict-resolution policies.
//!
//! Each lock-based policy is a pure function from a [`Conflict`] to a
//! [`PolicyAction`]; the engine applies the action. The optimistic variants
//! never see conflicts and are driven through [`occ::OccState`] instead.
//!
//! Waits-for edges run from a blocked transaction to every granted holder
//! of the object it waits on. A conflict also lists the transactions already
//! queued ahead of the requester (flagged `queued`); under FCFS those are
//! granted before it.

pub mod multiphase;
pub mod occ;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::engine::TxnId;
use crate::workload::{LockMode, ObjectId};

pub use multiphase::{Multiphase, Phase};

/// What a policy sees of one transaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxnView {
    pub id: TxnId,
    /// Priority timestamp; smaller is older. Kept across restarts.
    pub birth: u64,
    pub locks_held: usize,
    pub blocked: bool,
    /// Wait depth: 0 when running, else one more than its deepest holder.
    pub level: u32,
    /// Some transaction waits on a lock this one holds.
    pub has_waiters: bool,
    pub restarts: u32,
    /// Queued ahead of the requester rather than granted.
    pub queued: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub requester: TxnView,
    pub holders: Vec<TxnView>,
    pub mode: LockMode,
    pub object: ObjectId,
    pub clock: f64,
}

impl Conflict {
    pub fn granted(&self) -> impl Iterator<Item = &TxnView> {
        self.holders.iter().filter(|h| !h.queued)
    }

    fn granted_ids(&self) -> Vec<TxnId> {
        self.granted().map(|h| h.id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RestartDiscipline {
    Immediate,
    /// Exponential delay; `None` means one mean transaction residence time.
    Delayed {
        mean: Option<f64>,
    },
    /// Restart once every listed transaction has finished its current run.
    RestartWaiting {
        on: Vec<TxnId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyAction {
    Block,
    AbortSelf(RestartDiscipline),
    /// Leave the system for good (generalized no-waiting).
    AbortPermanently,
    /// Abort these holders, then retry the request.
    AbortOthers(Vec<TxnId>),
}

/// Standard two-phase locking: always wait. Deadlocks are left to
/// detection.
pub fn blocking_2pl(_c: &Conflict) -> PolicyAction {
    PolicyAction::Block
}

/// Restart on every conflict. With a limit, the transaction is dropped on
/// the conflict after its `limit`-th restart.
pub fn no_waiting(c: &Conflict, attempts_limit: Option<u32>) -> PolicyAction {
    match attempts_limit {
        Some(limit) if c.requester.restarts >= limit => PolicyAction::AbortPermanently,
        _ => PolicyAction::AbortSelf(RestartDiscipline::Delayed { mean: None }),
    }
}

/// Wait only on running holders; conflicting with a blocked holder aborts
/// the requester, which restarts once those holders finish.
pub fn cautious_waiting(c: &Conflict) -> PolicyAction {
    if c.granted().any(|h| h.blocked) {
        PolicyAction::AbortSelf(RestartDiscipline::RestartWaiting { on: c.granted_ids() })
    } else {
        PolicyAction::Block
    }
}

/// Blocked holders give way to the running requester. In the symmetric
/// variant a requester that others already wait on is aborted rather than
/// allowed to block, so waits never exceed depth one.
pub fn running_priority(c: &Conflict, symmetric: bool) -> PolicyAction {
    let would_block = c.holders.iter().any(|h| h.queued || !h.blocked);
    if symmetric && would_block && c.requester.has_waiters {
        return PolicyAction::AbortSelf(RestartDiscipline::Immediate);
    }
    let blocked: Vec<TxnId> = c.granted().filter(|h| h.blocked).map(|h| h.id).collect();
    if blocked.is_empty() {
        PolicyAction::Block
    } else {
        PolicyAction::AbortOthers(blocked)
    }
}

/// Older requesters wait, younger ones die.
pub fn wait_die(c: &Conflict) -> PolicyAction {
    if c.holders.iter().all(|h| c.requester.birth < h.birth) {
        PolicyAction::Block
    } else {
        PolicyAction::AbortSelf(RestartDiscipline::Immediate)
    }
}

/// Older requesters wound younger holders; younger requesters wait.
pub fn wound_wait(c: &Conflict) -> PolicyAction {
    let younger: Vec<TxnId> = c.holders.iter().filter(|h| h.birth > c.requester.birth).map(|h| h.id).collect();
    if younger.is_empty() {
        PolicyAction::Block
    } else {
        PolicyAction::AbortOthers(younger)
    }
}

/// Wait-depth limited to one, with progress measured in held locks.
///
/// A request that would put a wait at depth two is resolved on the edge that
/// violates the limit: against a blocked holder (requester -> holder -> ...)
/// or, when others already wait on the requester, against a running holder.
/// The side with fewer locks is aborted; on a tie the holder goes.
pub fn wait_depth_limited(c: &Conflict) -> PolicyAction {
    let me = c.requester.locks_held;
    let mut victims = Vec::new();
    for h in c.granted() {
        let violates = h.blocked || c.requester.has_waiters;
        if !violates {
            continue;
        }
        if h.locks_held <= me {
            victims.push(h.id);
        } else {
            return PolicyAction::AbortSelf(RestartDiscipline::Immediate);
        }
    }
    if !victims.is_empty() {
        return PolicyAction::AbortOthers(victims);
    }
    if c.requester.has_waiters && c.holders.iter().any(|h| h.queued) {
        // Only queued transactions stand between the requester and the
        // lock; waiting would still put its own waiters at depth two.
        return PolicyAction::AbortSelf(RestartDiscipline::Immediate);
    }
    PolicyAction::Block
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccVariant {
    Die,
    Kill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Blocking,
    NoWaiting { attempts_limit: Option<u32> },
    CautiousWaiting,
    RunningPriority { symmetric: bool },
    WaitDie,
    WoundWait,
    WaitDepthLimited,
    Optimistic(OccVariant),
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Blocking => "blocking",
            PolicyKind::NoWaiting { .. } => "no_waiting",
            PolicyKind::CautiousWaiting => "cautious_waiting",
            PolicyKind::RunningPriority { symmetric: false } => "running_priority",
            PolicyKind::RunningPriority { symmetric: true } => "symmetric_running_priority",
            PolicyKind::WaitDie => "wait_die",
            PolicyKind::WoundWait => "wound_wait",
            PolicyKind::WaitDepthLimited => "wdl",
            PolicyKind::Optimistic(OccVariant::Die) => "occ_die",
            PolicyKind::Optimistic(OccVariant::Kill) => "occ_kill",
        }
    }

    /// Whether deadlocks are expected; for every other method a detection
    /// counts as a watchdog hit.
    pub fn admits_deadlock(&self) -> bool {
        matches!(self, PolicyKind::Blocking)
    }
}

/// Restart discipline as configured, before it is bound to a conflict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RestartChoice {
    Immediate,
    Delayed { mean: Option<f64> },
    RestartWaiting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Overrides the method's own restart discipline.
    pub restart: Option<RestartChoice>,
    pub multiphase: Multiphase,
}

/// `{ "name": ..., "params": { ... } }` as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub name: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyError(pub String);

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for PolicyError {}

pub const POLICY_NAMES: &[&str] = &[
    "blocking",
    "no_waiting",
    "cautious_waiting",
    "running_priority",
    "symmetric_running_priority",
    "wait_die",
    "wound_wait",
    "wdl",
    "occ_die",
    "occ_kill",
];

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self { kind, restart: None, multiphase: Multiphase::default() }
    }

    pub fn blocking() -> Self {
        Self::new(PolicyKind::Blocking)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn is_optimistic(&self) -> bool {
        matches!(self.kind, PolicyKind::Optimistic(_))
    }

    pub fn from_spec(spec: &PolicySpec) -> Result<Self, PolicyError> {
        let kind = match spec.name.as_str() {
            "blocking" | "2pl" => PolicyKind::Blocking,
            "no_waiting" | "nw" => PolicyKind::NoWaiting { attempts_limit: None },
            "cautious_waiting" | "cw" => PolicyKind::CautiousWaiting,
            "running_priority" | "rp" => PolicyKind::RunningPriority { symmetric: false },
            "symmetric_running_priority" | "srp" => PolicyKind::RunningPriority { symmetric: true },
            "wait_die" | "wd" => PolicyKind::WaitDie,
            "wound_wait" | "ww" => PolicyKind::WoundWait,
            "wdl" | "wait_depth_limited" => PolicyKind::WaitDepthLimited,
            "occ_die" => PolicyKind::Optimistic(OccVariant::Die),
            "occ_kill" => PolicyKind::Optimistic(OccVariant::Kill),
            other => {
                return Err(PolicyError(format!(
                    "unknown policy `{other}` (expected one of {})",
                    POLICY_NAMES.join(", ")
                )))
            }
        };
        let mut cfg = Self::new(kind);
        let mut delay_mean = None;
        let mut restart_name: Option<String> = None;
        for (key, value) in &spec.params {
            let bad = || PolicyError(format!("policy param `{key}` has an invalid value {value}"));
            match (key.as_str(), &mut cfg.kind) {
                ("attempts_limit", PolicyKind::NoWaiting { attempts_limit }) => {
                    *attempts_limit = Some(value.as_u64().ok_or_else(bad)? as u32);
                }
                ("symmetric", PolicyKind::RunningPriority { symmetric }) => {
                    *symmetric = value.as_bool().ok_or_else(bad)?;
                }
                ("restart", _) => restart_name = Some(value.as_str().ok_or_else(bad)?.to_string()),
                ("restart_delay_mean", _) => {
                    let m = value.as_f64().filter(|m| *m > 0.0).ok_or_else(bad)?;
                    delay_mean = Some(m);
                }
                ("virtual_first_phase", k) if !matches!(k, PolicyKind::Optimistic(_)) => {
                    cfg.multiphase.virtual_first_phase = value.as_bool().ok_or_else(bad)?;
                }
                ("preclaim", k) if !matches!(k, PolicyKind::Optimistic(_)) => {
                    cfg.multiphase.preclaim = value.as_bool().ok_or_else(bad)?;
                }
                _ => return Err(PolicyError(format!("policy `{}` does not accept param `{key}`", spec.name))),
            }
        }
        cfg.restart = match restart_name.as_deref() {
            None if delay_mean.is_some() => Some(RestartChoice::Delayed { mean: delay_mean }),
            None => None,
            Some("immediate") => Some(RestartChoice::Immediate),
            Some("delayed") => Some(RestartChoice::Delayed { mean: delay_mean }),
            Some("restart_waiting") => Some(RestartChoice::RestartWaiting),
            Some(other) => {
                return Err(PolicyError(format!(
                    "unknown restart discipline `{other}` (immediate, delayed, restart_waiting)"
                )))
            }
        };
        Ok(cfg)
    }

    pub fn to_spec(&self) -> PolicySpec {
        let mut params = Map::new();
        match self.kind {
            PolicyKind::NoWaiting { attempts_limit: Some(l) } => {
                params.insert("attempts_limit".into(), l.into());
            }
            PolicyKind::RunningPriority { symmetric } => {
                params.insert("symmetric".into(), symmetric.into());
            }
            _ => {}
        }
        match self.restart {
            Some(RestartChoice::Immediate) => {
                params.insert("restart".into(), "immediate".into());
            }
            Some(RestartChoice::Delayed { mean }) => {
                params.insert("restart".into(), "delayed".into());
                if let Some(m) = mean {
                    params.insert("restart_delay_mean".into(), m.into());
                }
            }
            Some(RestartChoice::RestartWaiting) => {
                params.insert("restart".into(), "restart_waiting".into());
            }
            None => {}
        }
        if self.multiphase.virtual_first_phase {
            params.insert("virtual_first_phase".into(), true.into());
        }
        if self.multiphase.preclaim {
            params.insert("preclaim".into(), true.into());
        }
        let name = match self.kind {
            PolicyKind::RunningPriority { .. } => "running_priority",
            k => k.name(),
        };
        PolicySpec { name: name.into(), params }
    }

    /// The method's decision, with the configured restart discipline
    /// substituted for its own when one is set.
    pub fn decide(&self, c: &Conflict) -> PolicyAction {
        let action = match self.kind {
            PolicyKind::Blocking => blocking_2pl(c),
            PolicyKind::NoWaiting { attempts_limit } => no_waiting(c, attempts_limit),
            PolicyKind::CautiousWaiting => cautious_waiting(c),
            PolicyKind::RunningPriority { symmetric } => running_priority(c, symmetric),
            PolicyKind::WaitDie => wait_die(c),
            PolicyKind::WoundWait => wound_wait(c),
            PolicyKind::WaitDepthLimited => wait_depth_limited(c),
            // No locks, so no conflicts reach a policy.
            PolicyKind::Optimistic(_) => PolicyAction::Block,
        };
        match (action, self.restart) {
            (PolicyAction::AbortSelf(_), Some(choice)) => PolicyAction::AbortSelf(self.bind(choice, c.granted_ids())),
            (a, _) => a,
        }
    }

    /// Restart discipline for a transaction aborted on someone else's
    /// behalf (wounded, displaced, or chosen as a deadlock victim);
    /// `conflicting` is who it gave way to.
    pub fn victim_restart(&self, conflicting: Vec<TxnId>) -> RestartDiscipline {
        let choice = self.restart.unwrap_or(match self.kind {
            PolicyKind::NoWaiting { .. } => RestartChoice::Delayed { mean: None },
            PolicyKind::CautiousWaiting => RestartChoice::RestartWaiting,
            _ => RestartChoice::Immediate,
        });
        self.bind(choice, conflicting)
    }

    fn bind(&self, choice: RestartChoice, conflicting: Vec<TxnId>) -> RestartDiscipline {
        match choice {
            RestartChoice::Immediate => RestartDiscipline::Immediate,
            RestartChoice::Delayed { mean } => RestartDiscipline::Delayed { mean },
            RestartChoice::RestartWaiting => RestartDiscipline::RestartWaiting { on: conflicting },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(id: TxnId, birth: u64, locks: usize, blocked: bool) -> TxnView {
        TxnView {
            id,
            birth,
            locks_held: locks,
            blocked,
            level: u32::from(blocked),
            has_waiters: false,
            restarts: 0,
            queued: false,
        }
    }

    fn conflict(requester: TxnView, holders: Vec<TxnView>) -> Conflict {
        Conflict { requester, holders, mode: LockMode::Exclusive, object: ObjectId { dbr: 0, index: 1 }, clock: 0.0 }
    }

    #[test]
    fn blocking_always_waits() {
        let c = conflict(view(1, 1, 0, false), vec![view(2, 2, 3, true)]);
        assert_eq!(blocking_2pl(&c), PolicyAction::Block);
        assert_eq!(PolicyConfig::blocking().decide(&c), PolicyAction::Block);
    }

    #[test]
    fn no_waiting_restarts_then_gives_up() {
        let mut c = conflict(view(1, 1, 0, false), vec![view(2, 2, 1, false)]);
        assert!(matches!(no_waiting(&c, None), PolicyAction::AbortSelf(RestartDiscipline::Delayed { .. })));
        c.requester.restarts = 1_000;
        assert!(matches!(no_waiting(&c, None), PolicyAction::AbortSelf(_)));
        c.requester.restarts = 2;
        assert!(matches!(no_waiting(&c, Some(3)), PolicyAction::AbortSelf(_)));
        c.requester.restarts = 3;
        assert_eq!(no_waiting(&c, Some(3)), PolicyAction::AbortPermanently);
    }

    #[test]
    fn cautious_waiting_cases() {
        let c = conflict(view(1, 1, 0, false), vec![view(2, 2, 1, false)]);
        assert_eq!(cautious_waiting(&c), PolicyAction::Block);
        let c = conflict(view(1, 1, 0, false), vec![view(2, 2, 1, true), view(3, 3, 1, false)]);
        assert_eq!(cautious_waiting(&c), PolicyAction::AbortSelf(RestartDiscipline::RestartWaiting { on: vec![2, 3] }));
        // Queued transactions are blocked by definition but are not holders.
        let mut q = view(4, 4, 0, true);
        q.queued = true;
        let c = conflict(view(1, 1, 0, false), vec![view(2, 2, 1, false), q]);
        assert_eq!(cautious_waiting(&c), PolicyAction::Block);
    }

    #[test]
    fn running_priority_cases() {
        let c = conflict(view(1, 5, 2, false), vec![view(2, 2, 4, true)]);
        assert_eq!(running_priority(&c, false), PolicyAction::AbortOthers(vec![2]));
        let c = conflict(view(1, 5, 2, false), vec![view(2, 2, 4, false)]);
        assert_eq!(running_priority(&c, false), PolicyAction::Block);
        // T_C -> T_B -> T_A: T_B blocks on T_A while T_C waits on it.
        let mut tb = view(1, 5, 2, false);
        tb.has_waiters = true;
        let c = conflict(tb, vec![view(2, 2, 4, false)]);
        assert_eq!(running_priority(&c, false), PolicyAction::Block);
        assert!(matches!(running_priority(&c, true), PolicyAction::AbortSelf(_)));
    }

    #[test]
    fn wait_die_and_wound_wait() {
        let older = conflict(view(1, 1, 0, false), vec![view(2, 2, 1, false)]);
        let younger = conflict(view(3, 9, 0, false), vec![view(2, 2, 1, false)]);
        assert_eq!(wait_die(&older), PolicyAction::Block);
        assert!(matches!(wait_die(&younger), PolicyAction::AbortSelf(_)));
        assert_eq!(wound_wait(&older), PolicyAction::AbortOthers(vec![2]));
        assert_eq!(wound_wait(&younger), PolicyAction::Block);
        // Mixed holders: wound only the younger ones.
        let mixed = conflict(view(5, 5, 0, false), vec![view(2, 2, 1, false), view(7, 7, 1, false)]);
        assert_eq!(wound_wait(&mixed), PolicyAction::AbortOthers(vec![7]));
        assert!(matches!(wait_die(&mixed), PolicyAction::AbortSelf(_)));
    }

    #[test]
    fn wdl_cases() {
        // Depth would be two and the blocked holder has less progress.
        let c = conflict(view(1, 1, 5, false), vec![view(2, 2, 3, true)]);
        assert_eq!(wait_depth_limited(&c), PolicyAction::AbortOthers(vec![2]));
        // Blocked holder further along: requester goes.
        let c = conflict(view(1, 1, 2, false), vec![view(2, 2, 3, true)]);
        assert!(matches!(wait_depth_limited(&c), PolicyAction::AbortSelf(_)));
        // Tie: abort the holder.
        let c = conflict(view(1, 1, 3, false), vec![view(2, 2, 3, true)]);
        assert_eq!(wait_depth_limited(&c), PolicyAction::AbortOthers(vec![2]));
        // Active blocker with 1 lock vs requester with 9 that others wait on.
        let mut req = view(1, 1, 9, false);
        req.has_waiters = true;
        let c = conflict(req, vec![view(2, 2, 1, false)]);
        assert_eq!(wait_depth_limited(&c), PolicyAction::AbortOthers(vec![2]));
        // No violation.
        let c = conflict(view(1, 1, 0, false), vec![view(2, 2, 1, false)]);
        assert_eq!(wait_depth_limited(&c), PolicyAction::Block);
    }

    #[test]
    fn spec_parsing() {
        let spec: PolicySpec = serde_json::from_str(
            r#"{"name":"no_waiting","params":{"attempts_limit":3,"restart":"delayed","restart_delay_mean":2.5}}"#,
        )
        .unwrap();
        let cfg = PolicyConfig::from_spec(&spec).unwrap();
        assert_eq!(cfg.kind, PolicyKind::NoWaiting { attempts_limit: Some(3) });
        assert_eq!(cfg.restart, Some(RestartChoice::Delayed { mean: Some(2.5) }));
        assert_eq!(PolicyConfig::from_spec(&cfg.to_spec()).unwrap(), cfg);

        let bad = PolicySpec {
            name: "wait_die".into(),
            params: [("symmetric".to_string(), true.into())].into_iter().collect(),
        };
        assert!(PolicyConfig::from_spec(&bad).is_err());
        let unknown = PolicySpec { name: "timestamp".into(), params: Map::new() };
        assert!(PolicyConfig::from_spec(&unknown).is_err());
        let occ_pre = PolicySpec {
            name: "occ_die".into(),
            params: [("preclaim".to_string(), true.into())].into_iter().collect(),
        };
        assert!(PolicyConfig::from_spec(&occ_pre).is_err());
        for name in POLICY_NAMES {
            let cfg = PolicyConfig::from_spec(&PolicySpec { name: name.to_string(), params: Map::new() }).unwrap();
            assert_eq!(cfg.name(), *name);
        }
    }

    #[test]
    fn restart_override() {
        let mut cfg = PolicyConfig::new(PolicyKind::WaitDie);
        cfg.restart = Some(RestartChoice::RestartWaiting);
        let c = conflict(view(3, 9, 0, false), vec![view(2, 2, 1, false)]);
        assert_eq!(cfg.decide(&c), PolicyAction::AbortSelf(RestartDiscipline::RestartWaiting { on: vec![2] }));
        assert_eq!(
            PolicyConfig::new(PolicyKind::CautiousWaiting).victim_restart(vec![4]),
            RestartDiscipline::RestartWaiting { on: vec![4] }
        );
    }
}
