use std::collections::{BTreeSet, HashMap};

use crate::engine::TxnId;
use crate::workload::{LockMode, ObjectId};

use super::OccVariant;

/// One access of an optimistic transaction; `seq` is the global operation
/// counter when the object was read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Access {
    pub object: ObjectId,
    pub mode: LockMode,
    pub seq: u64,
}

/// Shared state of optimistic concurrency control. Writes are deferred to
/// commit, so an object's version is the commit sequence number of its
/// last writer.
#[derive(Debug, Clone, Default)]
pub struct OccState {
    last_write: HashMap<ObjectId, u64>,
    accessors: HashMap<ObjectId, BTreeSet<TxnId>>,
}

impl OccState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_access(&mut self, txn: TxnId, object: ObjectId) {
        self.accessors.entry(object).or_default().insert(txn);
    }

    /// Backward validation: fails if any accessed object was overwritten
    /// by a commit after it was read.
    pub fn validate(&self, accesses: &[Access]) -> bool {
        accesses.iter().all(|a| self.last_write.get(&a.object).is_none_or(|&w| w <= a.seq))
    }

    /// Installs the write set of `txn` at `seq` and drops its accesses.
    /// Under the kill variant returns the in-flight transactions that
    /// accessed a written object, in id order.
    pub fn commit(&mut self, txn: TxnId, accesses: &[Access], seq: u64, variant: OccVariant) -> Vec<TxnId> {
        let mut victims = BTreeSet::new();
        for a in accesses.iter().filter(|a| a.mode == LockMode::Exclusive) {
            self.last_write.insert(a.object, seq);
            if variant == OccVariant::Kill {
                if let Some(set) = self.accessors.get(&a.object) {
                    victims.extend(set.iter().copied().filter(|&t| t != txn));
                }
            }
        }
        self.forget(txn, accesses);
        victims.into_iter().collect()
    }

    /// Removes the accesses of an aborted or committed run.
    pub fn forget(&mut self, txn: TxnId, accesses: &[Access]) {
        for a in accesses {
            if let Some(set) = self.accessors.get_mut(&a.object) {
                set.remove(&txn);
                if set.is_empty() {
                    self.accessors.remove(&a.object);
                }
            }
        }
    }

    pub fn in_flight_objects(&self) -> usize {
        self.accessors.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(i: u64) -> ObjectId {
        ObjectId { dbr: 0, index: i }
    }

    fn acc(i: u64, mode: LockMode, seq: u64) -> Access {
        Access { object: obj(i), mode, seq }
    }

    #[test]
    fn die_validation() {
        let mut occ = OccState::new();
        let t1 = [acc(1, LockMode::Shared, 1), acc(2, LockMode::Exclusive, 2)];
        let t2 = [acc(2, LockMode::Exclusive, 3)];
        for (t, a) in [(1, &t1[..]), (2, &t2[..])] {
            for x in a {
                occ.record_access(t, x.object);
            }
        }
        assert!(occ.validate(&t2));
        assert!(occ.commit(2, &t2, 4, OccVariant::Die).is_empty());
        // T1 read object 2 at seq 2 but T2 wrote it at seq 4.
        assert!(!occ.validate(&t1));
        occ.forget(1, &t1);
        assert_eq!(occ.in_flight_objects(), 0);
        // A fresh read after the commit validates.
        assert!(occ.validate(&[acc(2, LockMode::Shared, 5)]));
    }

    #[test]
    fn kill_targets_accessors_of_the_write_set() {
        let mut occ = OccState::new();
        occ.record_access(1, obj(7));
        occ.record_access(2, obj(7));
        occ.record_access(3, obj(8));
        occ.record_access(4, obj(9));
        let writer = [acc(7, LockMode::Exclusive, 1), acc(9, LockMode::Shared, 2)];
        // Reads by the committer do not kill anyone.
        assert_eq!(occ.commit(1, &writer, 3, OccVariant::Kill), vec![2]);
    }
}
