//! A deliberately naive closed-system 2PL simulator, written separately from
//! the engine, used to cross-check its blocking statistics.
//!
//! Model: `mpl` transactions of `k + 1` unit-time steps. Each of the first
//! `k` ends in an exclusive request for a distinct uniformly chosen object
//! out of `d`; the last commits. FCFS lock queues, deadlock check on every block, and the cycle
//! member holding the fewest locks restarts immediately with the same
//! objects.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use contention_lab::engine::{run_replications, Mode, SimConfig};
use contention_lab::stats::Estimate;
use contention_lab::workload::WorkloadSpec;

struct Txn {
    objects: Vec<usize>,
    next: usize,
    held: Vec<usize>,
    waiting: Option<usize>,
    epoch: u64,
}

struct MiniDes {
    rng: ChaCha8Rng,
    k: usize,
    d: usize,
    now: f64,
    seq: u64,
    events: BinaryHeap<Reverse<(u64, u64, usize, u64)>>,
    owner: HashMap<usize, usize>,
    queues: HashMap<usize, VecDeque<usize>>,
    txns: Vec<Txn>,
}

/// Event times in whole units.
fn ticks(t: f64) -> u64 {
    t.round() as u64
}

impl MiniDes {
    fn schedule(&mut self, i: usize) {
        self.seq += 1;
        let at = ticks(self.now) + 1;
        self.events.push(Reverse((at, self.seq, i, self.txns[i].epoch)));
    }

    fn fresh(&mut self, i: usize) {
        let objects = sample(&mut self.rng, self.d, self.k).into_vec();
        let t = &mut self.txns[i];
        t.objects = objects;
        t.next = 0;
        t.epoch += 1;
        self.schedule(i);
    }

    fn grant(&mut self, i: usize, o: usize) {
        self.owner.insert(o, i);
        let t = &mut self.txns[i];
        t.held.push(o);
        t.next += 1;
        t.waiting = None;
        self.schedule(i);
    }

    fn release_all(&mut self, i: usize) {
        for o in std::mem::take(&mut self.txns[i].held) {
            match self.queues.get_mut(&o).and_then(VecDeque::pop_front) {
                Some(w) => self.grant(w, o),
                None => {
                    self.owner.remove(&o);
                }
            }
        }
    }

    /// The waits-for cycle through `start`, if any. Exclusive locks give
    /// each blocked txn exactly one holder to wait on.
    fn cycle(&self, start: usize) -> Option<Vec<usize>> {
        let mut path = vec![start];
        let mut cur = start;
        while let Some(o) = self.txns[cur].waiting {
            let h = self.owner[&o];
            if h == start {
                return Some(path);
            }
            if path.contains(&h) {
                return None;
            }
            path.push(h);
            cur = h;
        }
        None
    }

    fn restart(&mut self, i: usize) {
        if let Some(o) = self.txns[i].waiting.take() {
            self.queues.get_mut(&o).unwrap().retain(|&w| w != i);
        }
        self.release_all(i);
        let t = &mut self.txns[i];
        t.next = 0;
        t.epoch += 1;
        self.schedule(i);
    }
}

/// Returns (throughput, mean blocked fraction).
fn mini_des(mpl: usize, k: usize, d: usize, horizon: f64, warmup: f64, seed: u64) -> (f64, f64) {
    let mut s = MiniDes {
        rng: ChaCha8Rng::seed_from_u64(seed),
        k,
        d,
        now: 0.0,
        seq: 0,
        events: BinaryHeap::new(),
        owner: HashMap::new(),
        queues: HashMap::new(),
        txns: (0..mpl).map(|_| Txn { objects: vec![], next: 0, held: vec![], waiting: None, epoch: 0 }).collect(),
    };
    for i in 0..mpl {
        s.fresh(i);
    }
    let (mut commits, mut blocked_area) = (0u64, 0.0);
    while let Some(Reverse((at, _, i, epoch))) = s.events.pop() {
        let t = at as f64;
        if t > horizon {
            break;
        }
        let blocked = s.txns.iter().filter(|t| t.waiting.is_some()).count() as f64;
        blocked_area += blocked * (t.max(warmup) - s.now.max(warmup)).max(0.0);
        s.now = t;
        if s.txns[i].epoch != epoch {
            continue;
        }
        if s.txns[i].next == k {
            s.release_all(i);
            commits += u64::from(t > warmup);
            s.fresh(i);
            continue;
        }
        let o = s.txns[i].objects[s.txns[i].next];
        if !s.owner.contains_key(&o) {
            s.grant(i, o);
            continue;
        }
        s.txns[i].waiting = Some(o);
        s.queues.entry(o).or_default().push_back(i);
        if let Some(cyc) = s.cycle(i) {
            let victim = *cyc.iter().min_by_key(|&&x| (s.txns[x].held.len(), Reverse(x))).unwrap();
            s.restart(victim);
        }
    }
    let span = horizon - warmup;
    (commits as f64 / span, blocked_area / span / mpl as f64)
}

#[test]
fn engine_matches_independent_simulator() {
    let (k, d, horizon, warmup) = (8, 400, 6_000.0, 600.0);
    for mpl in [6u32, 12, 16] {
        let oracle: Vec<(f64, f64)> = (0..6).map(|s| mini_des(mpl as usize, k, d, horizon, warmup, 1000 + s)).collect();
        let ox = Estimate::of(&oracle.iter().map(|o| o.0).collect::<Vec<_>>());
        let ob = Estimate::of(&oracle.iter().map(|o| o.1).collect::<Vec<_>>());

        let mut cfg = SimConfig::new(WorkloadSpec::uniform(k as u32, d as u64, 1.0), Mode::Closed { mpl });
        cfg.horizon = horizon;
        cfg.warmup = warmup;
        let reps = run_replications(&cfg, &[1, 2, 3, 4, 5, 6]).unwrap();
        let ex = Estimate::of(&reps.iter().map(|r| r.throughput).collect::<Vec<_>>());
        let eb = Estimate::of(&reps.iter().map(|r| r.beta).collect::<Vec<_>>());

        let close = |a: &Estimate, b: &Estimate, rel: f64| {
            (a.mean - b.mean).abs() <= rel * b.mean + a.half_width + b.half_width
        };
        assert!(close(&ex, &ox, 0.02), "M={mpl}: throughput engine {ex:?} vs oracle {ox:?}");
        assert!(close(&eb, &ob, 0.05), "M={mpl}: beta engine {eb:?} vs oracle {ob:?}");
    }
}

#[test]
fn mini_des_without_contention_is_exact() {
    let (x, b) = mini_des(3, 4, 1_000_000, 2_000.0, 0.0, 1);
    assert_eq!(b, 0.0);
    // Three txns of four steps plus the commit step.
    assert!((x - 3.0 / 5.0).abs() < 2e-3, "{x}");
}
