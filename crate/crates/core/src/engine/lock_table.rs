use std::collections::{HashMap, VecDeque};

use crate::workload::{LockMode, ObjectId};

use super::TxnId;

/// Granted holders and the FCFS wait queue of one object.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LockEntry {
    pub granted: Vec<(TxnId, LockMode)>,
    pub queue: VecDeque<(TxnId, LockMode)>,
}

impl LockEntry {
    fn compatible_with_holders(&self, txn: TxnId, mode: LockMode) -> bool {
        self.granted.iter().all(|&(h, m)| h == txn || m.compatible(mode))
    }

    /// Grants the head of the queue and every compatible request behind it.
    fn grant_scan(&mut self) -> Vec<(TxnId, LockMode)> {
        let mut out = Vec::new();
        while let Some(&(t, m)) = self.queue.front() {
            if !self.compatible_with_holders(t, m) {
                break;
            }
            self.queue.pop_front();
            self.granted.push((t, m));
            out.push((t, m));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acquire {
    Granted,
    Conflict,
}

/// Object lock table with S/X modes and FCFS queues. A request is granted
/// only if it is compatible with every holder and nobody is queued.
#[derive(Debug, Clone, Default)]
pub struct LockTable {
    entries: HashMap<ObjectId, LockEntry>,
}

impl LockTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn try_acquire(&mut self, txn: TxnId, object: ObjectId, mode: LockMode) -> Acquire {
        let entry = self.entries.entry(object).or_default();
        if entry.queue.is_empty() && entry.compatible_with_holders(txn, mode) {
            entry.granted.push((txn, mode));
            Acquire::Granted
        } else {
            Acquire::Conflict
        }
    }

    pub fn enqueue(&mut self, txn: TxnId, object: ObjectId, mode: LockMode) {
        self.entries.entry(object).or_default().queue.push_back((txn, mode));
    }

    /// Drops `txn`'s lock on `object`; returns the requests granted as a
    /// result.
    pub fn release(&mut self, txn: TxnId, object: ObjectId) -> Vec<(TxnId, LockMode)> {
        self.update(object, |e| e.granted.retain(|&(t, _)| t != txn))
    }

    /// Withdraws a queued request (the waiter was aborted).
    pub fn remove_waiter(&mut self, txn: TxnId, object: ObjectId) -> Vec<(TxnId, LockMode)> {
        self.update(object, |e| e.queue.retain(|&(t, _)| t != txn))
    }

    fn update(&mut self, object: ObjectId, f: impl FnOnce(&mut LockEntry)) -> Vec<(TxnId, LockMode)> {
        let Some(entry) = self.entries.get_mut(&object) else {
            return Vec::new();
        };
        f(entry);
        let granted = entry.grant_scan();
        if entry.granted.is_empty() && entry.queue.is_empty() {
            self.entries.remove(&object);
        }
        granted
    }

    pub fn entry(&self, object: ObjectId) -> Option<&LockEntry> {
        self.entries.get(&object)
    }

    pub fn holders(&self, object: ObjectId) -> &[(TxnId, LockMode)] {
        self.entries.get(&object).map_or(&[], |e| &e.granted)
    }

    pub fn waiters(&self, object: ObjectId) -> impl Iterator<Item = (TxnId, LockMode)> + '_ {
        self.entries.get(&object).into_iter().flat_map(|e| e.queue.iter().copied())
    }

    pub fn has_waiters(&self, object: ObjectId) -> bool {
        self.entries.get(&object).is_some_and(|e| !e.queue.is_empty())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Compatibility of holders, no stale entries, and no grantable head.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (obj, e) in &self.entries {
            if e.granted.is_empty() && e.queue.is_empty() {
                return Err(format!("{obj:?}: empty entry kept"));
            }
            for (i, &(a, ma)) in e.granted.iter().enumerate() {
                for &(b, mb) in &e.granted[i + 1..] {
                    if a == b {
                        return Err(format!("{obj:?}: txn {a} granted twice"));
                    }
                    if !ma.compatible(mb) {
                        return Err(format!("{obj:?}: incompatible holders {a} and {b}"));
                    }
                }
            }
            if let Some(&(t, m)) = e.queue.front() {
                if e.compatible_with_holders(t, m) {
                    return Err(format!("{obj:?}: queue head {t} is grantable"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use LockMode::{Exclusive as X, Shared as S};

    const O: ObjectId = ObjectId { dbr: 0, index: 0 };

    #[test]
    fn shared_then_exclusive() {
        let mut lt = LockTable::new();
        assert_eq!(lt.try_acquire(1, O, S), Acquire::Granted);
        assert_eq!(lt.try_acquire(2, O, S), Acquire::Granted);
        assert_eq!(lt.try_acquire(3, O, X), Acquire::Conflict);
        lt.enqueue(3, O, X);
        // A later S must queue behind the X.
        assert_eq!(lt.try_acquire(4, O, S), Acquire::Conflict);
        lt.enqueue(4, O, S);
        assert!(lt.release(1, O).is_empty());
        assert_eq!(lt.release(2, O), vec![(3, X)]);
        assert_eq!(lt.release(3, O), vec![(4, S)]);
        assert!(lt.release(4, O).is_empty());
        assert!(lt.is_empty());
    }

    #[test]
    fn batch_of_shared_granted_together() {
        let mut lt = LockTable::new();
        lt.try_acquire(1, O, X);
        for (t, m) in [(2, S), (3, S), (4, X), (5, S)] {
            lt.enqueue(t, O, m);
        }
        assert_eq!(lt.release(1, O), vec![(2, S), (3, S)]);
        assert_eq!(lt.waiters(O).collect::<Vec<_>>(), vec![(4, X), (5, S)]);
    }

    #[test]
    fn removing_head_waiter_rescans() {
        let mut lt = LockTable::new();
        lt.try_acquire(1, O, S);
        lt.enqueue(2, O, X);
        lt.enqueue(3, O, S);
        assert_eq!(lt.remove_waiter(2, O), vec![(3, S)]);
        lt.check_invariants().unwrap();
    }

    #[derive(Debug, Clone)]
    enum Op {
        Request(u64, bool),
        Release(u64),
    }

    proptest! {
        #[test]
        fn random_ops_keep_invariants(ops in prop::collection::vec(
            prop_oneof![
                (0u64..6, any::<bool>()).prop_map(|(t, x)| Op::Request(t, x)),
                (0u64..6).prop_map(Op::Release),
            ],
            1..200,
        )) {
            let mut lt = LockTable::new();
            let mut state: HashMap<u64, bool> = HashMap::new(); // txn -> queued?
            for op in ops {
                match op {
                    Op::Request(t, x) if !state.contains_key(&t) => {
                        let m = if x { X } else { S };
                        match lt.try_acquire(t, O, m) {
                            Acquire::Granted => { state.insert(t, false); }
                            Acquire::Conflict => { lt.enqueue(t, O, m); state.insert(t, true); }
                        }
                    }
                    Op::Release(t) => match state.remove(&t) {
                        Some(false) => {
                            for (g, _) in lt.release(t, O) { state.insert(g, false); }
                        }
                        Some(true) => {
                            for (g, _) in lt.remove_waiter(t, O) { state.insert(g, false); }
                        }
                        None => {}
                    },
                    _ => {}
                }
                prop_assert!(lt.check_invariants().is_ok(), "{:?}", lt.check_invariants());
                let holders: Vec<u64> = lt.holders(O).iter().map(|h| h.0).collect();
                for (&t, &queued) in &state {
                    prop_assert_eq!(holders.contains(&t), !queued);
                }
            }
        }
    }
}
