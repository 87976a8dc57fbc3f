use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::ccpolicy::occ::{Access, OccState};
use crate::ccpolicy::{Conflict, Phase, PolicyAction, PolicyKind, RestartDiscipline, TxnView};
use crate::loadctl::{LoadControlConfig, LoadController, LoadSignal, TxnProgress, WindowSample, MATURITY};
use crate::workload::{LockMode, LockRequest, ObjectId, TxnPlan, WorkloadSampler};

use super::lock_table::{Acquire, LockTable};
use super::metrics::{AbortCause, ClassStats, DbrStats, HalfWidths, Integrals, SimReport, Totals};
use super::oracle::Op;
use super::waits_for::{chain_depth, choose_victim, find_cycle, VictimCandidate};
use super::{Mode, RunArtifacts, SimConfig, SimError, TraceEvent, TraceKind, TxnId};

/// Commits per load-control window.
const WINDOW: usize = 50;
/// The window never reaches back more than this many nominal response
/// times, so a drained system does not keep reading old contention.
const WINDOW_MAX_RESPONSES: f64 = 1.0;
/// Snapshots per maximum window span.
const WINDOW_TICKS: f64 = 20.0;

const STREAM_ARRIVALS: u64 = 1;
const STREAM_PLANS: u64 = 2;
const STREAM_RESTARTS: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival,
    StepComplete { txn: TxnId, epoch: u64 },
    Commit { txn: TxnId, epoch: u64 },
    RestartTimer { txn: TxnId, epoch: u64 },
    Checkpoint,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Queued,
    Active,
    Committing,
    Blocked,
    RestartWait,
}

impl State {
    fn executing(self) -> bool {
        matches!(self, State::Active | State::Committing | State::Blocked)
    }
}

#[derive(Debug, Clone)]
struct Txn {
    birth: u64,
    arrival: f64,
    plan: TxnPlan,
    exec: TxnPlan,
    phase: Phase,
    step: usize,
    state: State,
    epoch: u64,
    restarts: u32,
    speed: f64,
    held: Vec<(ObjectId, LockMode)>,
    waiting: Option<(ObjectId, LockMode)>,
    accesses: Vec<Access>,
    ops: Vec<Op>,
    waiting_on: BTreeSet<TxnId>,
}

enum After {
    Restart(RestartDiscipline),
    Requeue,
    Drop,
}

enum Outcome {
    Granted,
    Waiting,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    sampler: WorkloadSampler,
    controller: LoadController,
    occ: Option<(OccState, crate::ccpolicy::OccVariant)>,
    now: f64,
    seq: u64,
    heap: BinaryHeap<Event>,
    txns: BTreeMap<TxnId, Txn>,
    next_id: TxnId,
    queue: VecDeque<TxnId>,
    locks: LockTable,
    waited_by: HashMap<TxnId, Vec<TxnId>>,
    rng_arrivals: ChaCha8Rng,
    rng_plans: ChaCha8Rng,
    rng_restarts: ChaCha8Rng,
    n_queued: usize,
    n_admitted: usize,
    n_executing: usize,
    n_blocked: usize,
    locks_active: usize,
    locks_blocked: usize,
    totals: Totals,
    marks: Vec<Totals>,
    measuring: bool,
    max_level: u32,
    window: VecDeque<Integrals>,
    /// Set by arrivals and commits, the only events at which a
    /// signal-driven controller admits.
    admission_due: bool,
    /// Time-spaced snapshots covering the last `window_span`.
    ticks: VecDeque<Integrals>,
    window_span: f64,
    feedback_mark: Integrals,
    op_seq: u64,
    residence: (f64, u64),
    mean_locks: f64,
    maturity: f64,
    artifacts: Option<RunArtifacts>,
}

pub(super) fn simulate(cfg: &SimConfig) -> Result<(SimReport, RunArtifacts), SimError> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg)?;
    sim.run()?;
    let report = sim.report();
    Ok((report, sim.artifacts.unwrap_or_default()))
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn exp_draw(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean > 0.0 {
        Exp::new(1.0 / mean).expect("positive rate").sample(rng)
    } else {
        0.0
    }
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self, SimError> {
        let sampler = WorkloadSampler::new(&cfg.workload)?;
        let occ = match cfg.policy.kind {
            PolicyKind::Optimistic(v) => Some((OccState::new(), v)),
            _ => None,
        };
        let maturity = match cfg.load_control {
            LoadControlConfig::HalfAndHalf { maturity, .. } => maturity,
            _ => MATURITY,
        };
        Ok(Sim {
            cfg,
            sampler,
            controller: LoadController::new(cfg.load_control),
            occ,
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            txns: BTreeMap::new(),
            next_id: 0,
            queue: VecDeque::new(),
            locks: LockTable::new(),
            waited_by: HashMap::new(),
            rng_arrivals: stream(cfg.seed, STREAM_ARRIVALS),
            rng_plans: stream(cfg.seed, STREAM_PLANS),
            rng_restarts: stream(cfg.seed, STREAM_RESTARTS),
            n_queued: 0,
            n_admitted: 0,
            n_executing: 0,
            n_blocked: 0,
            locks_active: 0,
            locks_blocked: 0,
            totals: Totals::new(cfg.workload.classes.len(), cfg.workload.dbrs.len()),
            marks: Vec::with_capacity(cfg.batches + 1),
            measuring: false,
            max_level: 0,
            window: VecDeque::with_capacity(WINDOW + 1),
            admission_due: true,
            ticks: VecDeque::new(),
            window_span: match WINDOW_MAX_RESPONSES * cfg.workload.mean_nominal_response() {
                s if s > 0.0 => s,
                _ => f64::INFINITY,
            },
            feedback_mark: Integrals::default(),
            op_seq: 0,
            residence: (0.0, 0),
            mean_locks: cfg.workload.mean_locks(),
            maturity,
            artifacts: cfg.record_history.then(RunArtifacts::default),
        })
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event { time, seq: self.seq, kind });
    }

    fn run(&mut self) -> Result<(), SimError> {
        let (warmup, horizon, batches) = (self.cfg.warmup, self.cfg.horizon, self.cfg.batches);
        let len = (horizon - warmup) / batches as f64;
        for i in 0..=batches {
            let t = if i == batches { horizon } else { warmup + i as f64 * len };
            self.push(t, EventKind::Checkpoint);
        }
        match self.cfg.mode {
            Mode::Open { lambda } if lambda > 0.0 => {
                let t = exp_draw(1.0 / lambda, &mut self.rng_arrivals);
                self.push(t, EventKind::Arrival);
            }
            Mode::Open { .. } => {}
            Mode::Closed { mpl } => {
                for _ in 0..mpl {
                    self.spawn();
                }
            }
        }
        self.after_event();
        while let Some(ev) = self.heap.pop() {
            if ev.time > horizon {
                break;
            }
            self.advance(ev.time);
            match ev.kind {
                EventKind::Arrival => self.on_arrival(),
                EventKind::StepComplete { txn, epoch } => self.on_step(txn, epoch),
                EventKind::Commit { txn, epoch } => self.on_commit(txn, epoch),
                EventKind::RestartTimer { txn, epoch } => self.on_restart_timer(txn, epoch),
                EventKind::Checkpoint => {
                    self.measuring = true;
                    self.marks.push(self.totals.clone());
                }
            }
            self.after_event();
            if self.cfg.check_invariants {
                self.check().map_err(|what| SimError::Invariant { time: self.now, what })?;
            }
        }
        Ok(())
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.now;
        if dt > 0.0 {
            let i = &mut self.totals.integrals;
            i.time += dt;
            i.locks_active += self.locks_active as f64 * dt;
            i.locks_blocked += self.locks_blocked as f64 * dt;
            i.blocked += self.n_blocked as f64 * dt;
            i.executing += self.n_executing as f64 * dt;
            i.in_system += (self.n_queued + self.n_admitted) as f64 * dt;
            i.admitted += self.n_admitted as f64 * dt;
            self.now = t;
        }
    }

    fn trace(&mut self, txn: TxnId, kind: TraceKind) {
        if let Some(a) = &mut self.artifacts {
            a.trace.push(TraceEvent { time: self.now, txn, kind });
        }
    }

    fn next_op(&mut self) -> u64 {
        self.op_seq += 1;
        self.op_seq
    }

    // ---- bookkeeping -------------------------------------------------

    fn count(&mut self, state: State, locks: usize, add: bool) {
        let apply = |x: &mut usize, d: usize| {
            if add {
                *x += d
            } else {
                *x -= d
            }
        };
        match state {
            State::Queued => apply(&mut self.n_queued, 1),
            State::Active | State::Committing => {
                apply(&mut self.n_executing, 1);
                apply(&mut self.locks_active, locks);
            }
            State::Blocked => {
                apply(&mut self.n_executing, 1);
                apply(&mut self.n_blocked, 1);
                apply(&mut self.locks_blocked, locks);
            }
            State::RestartWait => {}
        }
    }

    fn set_state(&mut self, id: TxnId, new: State) {
        let t = &self.txns[&id];
        let (old, n) = (t.state, t.held.len());
        self.count(old, n, false);
        self.count(new, n, true);
        self.txns.get_mut(&id).expect("live txn").state = new;
    }

    fn add_lock(&mut self, id: TxnId, object: ObjectId, mode: LockMode) {
        let seq = self.next_op();
        let record = self.artifacts.is_some();
        let t = self.txns.get_mut(&id).expect("live txn");
        t.held.push((object, mode));
        if record {
            t.ops.push(Op { txn: id, object, write: mode == LockMode::Exclusive, seq });
        }
        match t.state {
            State::Active | State::Committing => self.locks_active += 1,
            State::Blocked => self.locks_blocked += 1,
            _ => unreachable!("locks are granted to executing txns"),
        }
        self.trace(id, TraceKind::Grant);
    }

    // ---- lifecycle ---------------------------------------------------

    fn spawn(&mut self) {
        let id = self.next_id;
        self.next_id += 1;
        let plan = self.sampler.sample(&mut self.rng_plans);
        let mp = self.cfg.policy.multiphase;
        let phase = mp.first_phase();
        let exec = mp.phase_plan(&plan, phase);
        self.txns.insert(
            id,
            Txn {
                birth: id,
                arrival: self.now,
                plan,
                exec,
                phase,
                step: 0,
                state: State::Queued,
                epoch: 0,
                restarts: 0,
                speed: 1.0,
                held: Vec::new(),
                waiting: None,
                accesses: Vec::new(),
                ops: Vec::new(),
                waiting_on: BTreeSet::new(),
            },
        );
        self.count(State::Queued, 0, true);
        self.queue.push_back(id);
    }

    fn on_arrival(&mut self) {
        self.spawn();
        self.admission_due = true;
        if let Mode::Open { lambda } = self.cfg.mode {
            let t = self.now + exp_draw(1.0 / lambda, &mut self.rng_arrivals);
            self.push(t, EventKind::Arrival);
        }
    }

    fn after_event(&mut self) {
        if self.controller.wants_cancellation() {
            let progress: Vec<TxnProgress> = self
                .txns
                .iter()
                .filter(|(_, t)| t.state.executing())
                .map(|(&id, t)| TxnProgress { id, progress: progress_of(t), blocked: t.state == State::Blocked })
                .collect();
            if let Some(victim) = self.controller.cancellation(&progress) {
                self.abort(victim, AbortCause::Cancelled, After::Requeue);
            }
        }
        if self.cfg.load_control.signal_driven() && self.window_span.is_finite() {
            let now = self.totals.integrals.time;
            if self.ticks.back().is_none_or(|t| now - t.time >= self.window_span / WINDOW_TICKS) {
                self.ticks.push_back(self.totals.integrals);
            }
            while self.ticks.front().is_some_and(|t| now - t.time > self.window_span) {
                self.ticks.pop_front();
            }
        }
        if self.cfg.load_control.signal_driven() && !self.admission_due {
            return;
        }
        while let Some(&id) = self.queue.front() {
            let sig = self.signal();
            if !self.controller.admit(&sig) {
                break;
            }
            self.queue.pop_front();
            self.n_admitted += 1;
            self.set_state(id, State::Active);
            self.start_run(id);
            if self.cfg.load_control.signal_driven() {
                break;
            }
        }
        self.admission_due = false;
    }

    fn signal(&self) -> LoadSignal {
        let mut base = self.window.front().copied().unwrap_or_default();
        if let Some(t) = self.ticks.front() {
            if t.time > base.time {
                base = *t;
            }
        }
        let w = self.totals.integrals.since(&base);
        let (mut mature, mut blocked_mature) = (0, 0);
        if matches!(self.cfg.load_control, LoadControlConfig::HalfAndHalf { .. }) {
            for t in self.txns.values().filter(|t| t.state.executing()) {
                if progress_of(t) >= self.maturity {
                    mature += 1;
                    blocked_mature += usize::from(t.state == State::Blocked);
                }
            }
        }
        LoadSignal {
            now: self.now,
            admitted: self.n_admitted,
            beta: w.beta(),
            conflict_ratio: w.conflict_ratio().0,
            p_c: w.p_c(),
            mean_locks: self.mean_locks,
            mature,
            blocked_mature,
        }
    }

    fn start_run(&mut self, id: TxnId) {
        self.txns.get_mut(&id).expect("live txn").step = 0;
        self.schedule_current(id);
    }

    fn schedule_current(&mut self, id: TxnId) {
        let t = &self.txns[&id];
        let dur = t.exec.steps[t.step].duration * t.speed;
        let last = t.step + 1 == t.exec.steps.len();
        let epoch = t.epoch;
        let at = self.now + dur;
        if last {
            self.set_state(id, State::Committing);
            self.push(at, EventKind::Commit { txn: id, epoch });
        } else {
            self.push(at, EventKind::StepComplete { txn: id, epoch });
        }
    }

    fn on_step(&mut self, id: TxnId, epoch: u64) {
        let Some(t) = self.txns.get(&id) else { return };
        if t.epoch != epoch || t.state != State::Active {
            return;
        }
        if let Some(req) = t.exec.steps[t.step].lock {
            if self.occ.is_some() {
                self.occ_access(id, req);
            } else if let Outcome::Waiting = self.request(id, req) {
                return;
            }
        }
        self.txns.get_mut(&id).expect("live txn").step += 1;
        self.schedule_current(id);
    }

    fn occ_access(&mut self, id: TxnId, req: LockRequest) {
        let seq = self.next_op();
        let record = self.artifacts.is_some();
        let t = self.txns.get_mut(&id).expect("live txn");
        t.accesses.push(Access { object: req.object, mode: req.mode, seq });
        if record {
            t.ops.push(Op { txn: id, object: req.object, write: false, seq });
        }
        if let Some((occ, _)) = &mut self.occ {
            occ.record_access(id, req.object);
        }
    }

    fn on_commit(&mut self, id: TxnId, epoch: u64) {
        let Some(t) = self.txns.get(&id) else { return };
        if t.epoch != epoch || t.state != State::Committing {
            return;
        }
        if t.phase == Phase::Virtual {
            let speed = self.cfg.workload.classes[t.plan.class].restart_speedup;
            let t = self.txns.get_mut(&id).expect("live txn");
            t.phase = Phase::Locking;
            t.exec = self.cfg.policy.multiphase.phase_plan(&t.plan, Phase::Locking);
            t.speed = speed;
            self.set_state(id, State::Active);
            self.start_run(id);
            return;
        }
        if let Some((occ, variant)) = &self.occ {
            let variant = *variant;
            if variant == crate::ccpolicy::OccVariant::Die && !occ.validate(&t.accesses) {
                let d = self.cfg.policy.victim_restart(Vec::new());
                self.abort(id, AbortCause::Validation, After::Restart(d));
                return;
            }
            let seq = self.next_op();
            let accesses = std::mem::take(&mut self.txns.get_mut(&id).expect("live txn").accesses);
            let victims = self.occ.as_mut().expect("optimistic").0.commit(id, &accesses, seq, variant);
            if self.artifacts.is_some() {
                let t = self.txns.get_mut(&id).expect("live txn");
                for a in accesses.iter().filter(|a| a.mode == LockMode::Exclusive) {
                    t.ops.push(Op { txn: id, object: a.object, write: true, seq });
                }
            }
            for v in victims {
                let d = self.cfg.policy.victim_restart(vec![id]);
                self.abort(v, AbortCause::Killed, After::Restart(d));
            }
        }

        let t = &self.txns[&id];
        let (class, response) = (t.plan.class, self.now - t.arrival);
        self.trace(id, TraceKind::Commit);
        let i = &mut self.totals.integrals;
        i.commits += 1;
        i.response_sum += response;
        self.totals.class_commits[class] += 1;
        self.totals.class_response[class] += response;
        self.residence.0 += response;
        self.residence.1 += 1;
        if let Some(a) = &mut self.artifacts {
            let t = self.txns.get_mut(&id).expect("live txn");
            a.history.ops.append(&mut t.ops);
            a.history.committed += 1;
        }
        self.release_all(id);
        self.leave(id);
        self.notify_done(id);
        self.on_commit_window();
        self.admission_due = true;
        if let Mode::Closed { .. } = self.cfg.mode {
            self.spawn();
        }
    }

    fn on_commit_window(&mut self) {
        self.window.push_back(self.totals.integrals);
        if self.window.len() > WINDOW {
            self.window.pop_front();
        }
        let d = self.totals.integrals.since(&self.feedback_mark);
        if d.commits as usize >= WINDOW && d.time > 0.0 {
            self.controller.on_window(WindowSample { mpl: d.admitted / d.time, throughput: d.throughput() });
            self.feedback_mark = self.totals.integrals;
        }
    }

    fn leave(&mut self, id: TxnId) {
        let t = self.txns.remove(&id).expect("live txn");
        debug_assert!(t.held.is_empty() && t.waiting.is_none());
        self.count(t.state, 0, false);
        if t.state != State::Queued {
            self.n_admitted -= 1;
        }
    }

    fn on_restart_timer(&mut self, id: TxnId, epoch: u64) {
        let Some(t) = self.txns.get(&id) else { return };
        if t.epoch == epoch && t.state == State::RestartWait && t.waiting_on.is_empty() {
            self.set_state(id, State::Active);
            self.start_run(id);
        }
    }

    /// The current run of `id` has ended (commit or abort); restart the
    /// transactions that were waiting for it.
    fn notify_done(&mut self, id: TxnId) {
        let Some(waiters) = self.waited_by.remove(&id) else { return };
        for w in waiters {
            let ready = match self.txns.get_mut(&w) {
                Some(t) if t.state == State::RestartWait => t.waiting_on.remove(&id) && t.waiting_on.is_empty(),
                _ => false,
            };
            if ready {
                self.set_state(w, State::Active);
                self.start_run(w);
            }
        }
    }

    // ---- locking -----------------------------------------------------

    fn request(&mut self, id: TxnId, req: LockRequest) -> Outcome {
        let (obj, mode) = (req.object, req.mode);
        let dbr = obj.dbr as usize;
        self.totals.integrals.requests += 1;
        self.totals.dbr_requests[dbr] += 1;
        let mut counted = false;
        loop {
            if self.locks.try_acquire(id, obj, mode) == Acquire::Granted {
                self.add_lock(id, obj, mode);
                return Outcome::Granted;
            }
            if !counted {
                counted = true;
                self.totals.integrals.conflicts += 1;
                self.totals.dbr_conflicts[dbr] += 1;
            }
            let conflict = self.conflict(id, obj, mode);
            match self.cfg.policy.decide(&conflict) {
                PolicyAction::Block => {
                    self.block(id, obj, mode);
                    return Outcome::Waiting;
                }
                PolicyAction::AbortSelf(d) => {
                    self.abort(id, AbortCause::Policy, After::Restart(d));
                    return Outcome::Waiting;
                }
                PolicyAction::AbortPermanently => {
                    self.abort(id, AbortCause::Permanent, After::Drop);
                    return Outcome::Waiting;
                }
                PolicyAction::AbortOthers(victims) => {
                    let mut any = false;
                    for v in victims {
                        if v == id || !self.txns.get(&v).is_some_and(|t| t.state.executing()) {
                            continue;
                        }
                        let mut conflicting = self.waits_on(v);
                        conflicting.push(id);
                        let d = self.cfg.policy.victim_restart(conflicting);
                        self.abort(v, AbortCause::Wounded, After::Restart(d));
                        any = true;
                    }
                    if !any {
                        self.block(id, obj, mode);
                        return Outcome::Waiting;
                    }
                }
            }
        }
    }

    /// Who `id` waits on: the granted holders of the object it is queued
    /// for.
    fn waits_on(&self, id: TxnId) -> Vec<TxnId> {
        match self.txns.get(&id) {
            Some(t) if t.state == State::Blocked => {
                let (obj, _) = t.waiting.expect("blocked txn has a request");
                self.locks.holders(obj).iter().map(|h| h.0).filter(|&h| h != id).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Who waits on `id`: transactions queued on objects it holds.
    fn waited_on_by(&self, id: TxnId) -> Vec<TxnId> {
        self.txns[&id]
            .held
            .iter()
            .flat_map(|(obj, _)| self.locks.waiters(*obj).map(|w| w.0))
            .filter(|&w| w != id)
            .collect()
    }

    fn view(&self, id: TxnId, queued: bool) -> TxnView {
        let t = &self.txns[&id];
        TxnView {
            id,
            birth: t.birth,
            locks_held: t.held.len(),
            blocked: t.state == State::Blocked,
            level: chain_depth(id, &|x| self.waits_on(x)),
            has_waiters: t.held.iter().any(|(obj, _)| self.locks.has_waiters(*obj)),
            restarts: t.restarts,
            queued,
        }
    }

    fn conflict(&self, id: TxnId, object: ObjectId, mode: LockMode) -> Conflict {
        let granted = self.locks.holders(object).iter().map(|h| h.0).filter(|&h| h != id);
        let queued = self.locks.waiters(object).map(|w| w.0).filter(|&w| w != id);
        let mut holders: Vec<TxnView> = granted.map(|h| self.view(h, false)).collect();
        holders.extend(queued.map(|q| self.view(q, true)));
        Conflict { requester: self.view(id, false), holders, mode, object, clock: self.now }
    }

    fn block(&mut self, id: TxnId, obj: ObjectId, mode: LockMode) {
        self.locks.enqueue(id, obj, mode);
        self.txns.get_mut(&id).expect("live txn").waiting = Some((obj, mode));
        self.set_state(id, State::Blocked);
        self.trace(id, TraceKind::Block);
        while self.txns.get(&id).is_some_and(|t| t.state == State::Blocked) {
            let Some(cycle) = find_cycle(id, |x| self.waits_on(x)) else { break };
            self.totals.deadlocks += 1;
            if cycle.len() == 2 {
                self.totals.deadlocks_2way += 1;
            }
            if !self.cfg.policy.kind.admits_deadlock() {
                self.totals.watchdog_hits += 1;
            }
            let candidates: Vec<VictimCandidate> = cycle
                .iter()
                .map(|&c| {
                    let t = &self.txns[&c];
                    VictimCandidate { id: c, locks_held: t.held.len(), birth: t.birth }
                })
                .collect();
            let victim = choose_victim(&candidates).expect("nonempty cycle");
            let d = self.cfg.policy.victim_restart(self.waits_on(victim));
            self.abort(victim, AbortCause::Deadlock, After::Restart(d));
        }
        if self.measuring && self.txns.get(&id).is_some_and(|t| t.state == State::Blocked) {
            let down = chain_depth(id, &|x| self.waits_on(x));
            let up = chain_depth(id, &|x| self.waited_on_by(x));
            self.max_level = self.max_level.max(down + up);
        }
    }

    /// Lock grants out of a queue: each grantee resumes with its next step.
    fn apply_grants(&mut self, grants: Vec<(TxnId, LockMode)>) {
        for (g, mode) in grants {
            let (obj, _) = self.txns.get_mut(&g).expect("live txn").waiting.take().expect("queued txn");
            self.set_state(g, State::Active);
            self.add_lock(g, obj, mode);
            self.txns.get_mut(&g).expect("live txn").step += 1;
            self.schedule_current(g);
        }
    }

    fn release_all(&mut self, id: TxnId) {
        let t = self.txns.get_mut(&id).expect("live txn");
        let held = std::mem::take(&mut t.held);
        match t.state {
            State::Active | State::Committing => self.locks_active -= held.len(),
            State::Blocked => self.locks_blocked -= held.len(),
            _ => {}
        }
        for (obj, _) in held {
            self.trace(id, TraceKind::Release);
            let grants = self.locks.release(id, obj);
            self.apply_grants(grants);
        }
    }

    fn abort(&mut self, id: TxnId, cause: AbortCause, after: After) {
        if !self.txns.get(&id).is_some_and(|t| t.state.executing()) {
            return;
        }
        self.totals.aborts.add(cause);
        self.trace(id, TraceKind::Abort);
        self.set_state(id, State::RestartWait);
        let speed = {
            let t = &self.txns[&id];
            self.cfg.workload.classes[t.plan.class].restart_speedup
        };
        let t = self.txns.get_mut(&id).expect("live txn");
        t.epoch += 1;
        t.restarts += 1;
        t.speed = speed;
        t.step = 0;
        t.ops.clear();
        let waiting = t.waiting.take();
        let accesses = std::mem::take(&mut t.accesses);
        if let Some((occ, _)) = &mut self.occ {
            occ.forget(id, &accesses);
        }
        if let Some((obj, _)) = waiting {
            let grants = self.locks.remove_waiter(id, obj);
            self.apply_grants(grants);
        }
        self.release_all(id);
        self.notify_done(id);

        match after {
            After::Restart(RestartDiscipline::Immediate) => {
                self.set_state(id, State::Active);
                self.start_run(id);
            }
            After::Restart(RestartDiscipline::Delayed { mean }) => {
                let mean = mean.unwrap_or_else(|| self.mean_residence());
                let at = self.now + exp_draw(mean, &mut self.rng_restarts);
                let epoch = self.txns[&id].epoch;
                self.push(at, EventKind::RestartTimer { txn: id, epoch });
            }
            After::Restart(RestartDiscipline::RestartWaiting { on }) => {
                let on: BTreeSet<TxnId> = on
                    .into_iter()
                    .filter(|&m| m != id && self.txns.get(&m).is_some_and(|t| t.state.executing()))
                    .collect();
                if on.is_empty() {
                    self.set_state(id, State::Active);
                    self.start_run(id);
                } else {
                    for &m in &on {
                        self.waited_by.entry(m).or_default().push(id);
                    }
                    self.txns.get_mut(&id).expect("live txn").waiting_on = on;
                }
            }
            After::Requeue => {
                self.n_admitted -= 1;
                self.set_state(id, State::Queued);
                self.queue.push_front(id);
            }
            After::Drop => {
                self.leave(id);
                if let Mode::Closed { .. } = self.cfg.mode {
                    self.spawn();
                }
            }
        }
    }

    fn mean_residence(&self) -> f64 {
        match self.residence {
            (sum, n) if n > 0 => sum / n as f64,
            _ => self.cfg.workload.mean_nominal_response(),
        }
    }

    // ---- checks and report -------------------------------------------

    fn check(&self) -> Result<(), String> {
        self.locks.check_invariants()?;
        let (mut q, mut adm, mut ex, mut bl, mut la, mut lb) = (0, 0, 0, 0, 0, 0);
        for (&id, t) in &self.txns {
            match t.state {
                State::Queued => q += 1,
                State::Active | State::Committing => {
                    ex += 1;
                    la += t.held.len();
                }
                State::Blocked => {
                    ex += 1;
                    bl += 1;
                    lb += t.held.len();
                    let (obj, _) = t.waiting.ok_or_else(|| format!("blocked txn {id} has no request"))?;
                    if !self.locks.waiters(obj).any(|w| w.0 == id) {
                        return Err(format!("blocked txn {id} missing from queue"));
                    }
                }
                State::RestartWait => {
                    if !t.held.is_empty() {
                        return Err(format!("restart-waiting txn {id} holds locks"));
                    }
                }
            }
            if t.state != State::Blocked && t.waiting.is_some() {
                return Err(format!("txn {id} has a request but is not blocked"));
            }
            if t.state != State::Queued {
                adm += 1;
            }
            for (obj, mode) in &t.held {
                if !self.locks.holders(*obj).contains(&(id, *mode)) {
                    return Err(format!("txn {id} lost its lock on {obj:?}"));
                }
            }
        }
        let got = (q, adm, ex, bl, la, lb);
        let want =
            (self.n_queued, self.n_admitted, self.n_executing, self.n_blocked, self.locks_active, self.locks_blocked);
        if got != want {
            return Err(format!("counters drifted: recount {got:?}, tracked {want:?}"));
        }
        if self.cfg.policy.kind == PolicyKind::Blocking {
            for (&id, t) in &self.txns {
                if t.state == State::Blocked && find_cycle(id, |x| self.waits_on(x)).is_some() {
                    return Err(format!("undetected deadlock through {id}"));
                }
            }
        }
        Ok(())
    }

    fn report(&self) -> SimReport {
        let empty = Totals::new(self.cfg.workload.classes.len(), self.cfg.workload.dbrs.len());
        let base = self.marks.first().unwrap_or(&empty);
        let end = self.marks.last().unwrap_or(&self.totals);
        let d = end.since(base);
        let i = d.integrals;
        let elapsed = i.time;
        let per_time = |x: f64| if elapsed > 0.0 { x / elapsed } else { 0.0 };
        let l_active = per_time(i.locks_active);
        let l_blocked = per_time(i.locks_blocked);
        let l_total = l_active + l_blocked;
        let conflict_ratio = if l_total == 0.0 {
            1.0
        } else if l_active > 0.0 {
            l_total / l_active
        } else {
            f64::INFINITY
        };
        let batches: Vec<Integrals> = self.marks.windows(2).map(|w| w[1].integrals.since(&w[0].integrals)).collect();
        let w = &self.cfg.workload;
        SimReport {
            policy: self.cfg.policy.name().to_string(),
            seed: self.cfg.seed,
            elapsed,
            committed: i.commits,
            throughput: i.throughput(),
            response_time: i.response_time(),
            requests: i.requests,
            conflicts: i.conflicts,
            p_c: i.p_c(),
            beta: i.beta(),
            l_total,
            l_active,
            l_blocked,
            conflict_ratio,
            rho: 1.0 - 1.0 / conflict_ratio,
            mean_in_system: per_time(i.in_system),
            mean_executing: per_time(i.executing),
            deadlocks: d.deadlocks,
            deadlocks_2way: d.deadlocks_2way,
            watchdog_hits: d.watchdog_hits,
            max_blocking_level: self.max_level,
            aborts: d.aborts,
            load_alarm: self.controller.alarm(),
            per_class: w
                .classes
                .iter()
                .enumerate()
                .map(|(c, spec)| {
                    let n = d.class_commits[c];
                    ClassStats {
                        id: spec.id.clone(),
                        committed: n,
                        throughput: per_time(n as f64),
                        response_time: if n > 0 { d.class_response[c] / n as f64 } else { 0.0 },
                    }
                })
                .collect(),
            per_dbr: w
                .dbrs
                .iter()
                .enumerate()
                .map(|(j, spec)| {
                    let (r, c) = (d.dbr_requests[j], d.dbr_conflicts[j]);
                    DbrStats {
                        id: spec.id.clone(),
                        requests: r,
                        conflicts: c,
                        p_c: if r > 0 { c as f64 / r as f64 } else { 0.0 },
                    }
                })
                .collect(),
            ci: HalfWidths::from_batches(&batches),
        }
    }
}

fn progress_of(t: &Txn) -> f64 {
    let k = t.plan.lock_count();
    if k == 0 {
        1.0
    } else {
        t.held.len() as f64 / k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccpolicy::PolicyConfig;
    use crate::workload::WorkloadSpec;

    fn closed(k: u32, d: u64, m: u32) -> SimConfig {
        let mut cfg = SimConfig::new(WorkloadSpec::uniform(k, d, 1.0), Mode::Closed { mpl: m });
        cfg.horizon = 2_000.0;
        cfg.warmup = 200.0;
        cfg.check_invariants = true;
        cfg
    }

    #[test]
    fn single_txn_never_conflicts() {
        let r = simulate(&closed(10, 100, 1)).unwrap().0;
        assert_eq!(r.conflicts, 0);
        assert_eq!(r.p_c, 0.0);
        assert_eq!(r.beta, 0.0);
        assert_eq!(r.deadlocks, 0);
        // Fixed unit steps: 11 per txn.
        assert!((r.response_time - 11.0).abs() < 1e-9);
        assert!((r.l_total - 5.0).abs() < 0.05, "{}", r.l_total);
    }

    #[test]
    fn empty_open_run() {
        let mut cfg = closed(4, 100, 1);
        cfg.mode = Mode::Open { lambda: 0.0 };
        let r = simulate(&cfg).unwrap().0;
        assert_eq!(r.committed, 0);
        assert_eq!(r.throughput, 0.0);
        assert_eq!(r.conflict_ratio, 1.0);
    }

    #[test]
    fn contended_run_keeps_invariants() {
        for policy in [
            "blocking",
            "no_waiting",
            "cautious_waiting",
            "running_priority",
            "wait_die",
            "wound_wait",
            "wdl",
            "occ_die",
            "occ_kill",
        ] {
            let mut cfg = closed(6, 60, 8);
            cfg.policy = PolicyConfig::from_spec(&crate::ccpolicy::PolicySpec {
                name: policy.into(),
                params: Default::default(),
            })
            .unwrap();
            cfg.record_history = true;
            let (r, a) = simulate(&cfg).unwrap();
            assert!(r.committed > 100, "{policy}: {}", r.committed);
            assert!(crate::engine::is_serializable(&a.history), "{policy}");
            assert!((r.rho - (1.0 - 1.0 / r.conflict_ratio)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = closed(8, 200, 10);
        let a = serde_json::to_string(&simulate(&cfg).unwrap().0).unwrap();
        let b = serde_json::to_string(&simulate(&cfg).unwrap().0).unwrap();
        assert_eq!(a, b);
    }
}
