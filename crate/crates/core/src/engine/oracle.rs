use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::workload::ObjectId;

/// One operation of a committed transaction, stamped with the global
/// operation counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Op {
    pub txn: u64,
    pub object: ObjectId,
    pub write: bool,
    pub seq: u64,
}

/// Operations of committed transaction runs, in commit order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub ops: Vec<Op>,
    pub committed: u64,
}

/// Edges `a -> b` of the precedence graph: some operation of `a` conflicts
/// with and precedes one of `b`.
pub fn precedence_edges(h: &History) -> BTreeMap<u64, Vec<u64>> {
    let mut by_object: HashMap<ObjectId, Vec<Op>> = HashMap::new();
    for op in &h.ops {
        by_object.entry(op.object).or_default().push(*op);
    }
    let mut edges: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for ops in by_object.values_mut() {
        ops.sort_by_key(|o| o.seq);
        for (i, a) in ops.iter().enumerate() {
            for b in &ops[i + 1..] {
                if a.txn != b.txn && (a.write || b.write) {
                    edges.entry(a.txn).or_default().push(b.txn);
                }
            }
        }
    }
    for v in edges.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    edges
}

/// Conflict serializability: the precedence graph is acyclic.
pub fn is_serializable(h: &History) -> bool {
    let edges = precedence_edges(h);
    let mut indegree: BTreeMap<u64, usize> = BTreeMap::new();
    for op in &h.ops {
        indegree.entry(op.txn).or_insert(0);
    }
    for targets in edges.values() {
        for t in targets {
            *indegree.entry(*t).or_insert(0) += 1;
        }
    }
    let mut ready: Vec<u64> = indegree.iter().filter(|e| *e.1 == 0).map(|e| *e.0).collect();
    let mut seen = 0;
    while let Some(t) = ready.pop() {
        seen += 1;
        for n in edges.get(&t).into_iter().flatten() {
            let d = indegree.get_mut(n).expect("node registered");
            *d -= 1;
            if *d == 0 {
                ready.push(*n);
            }
        }
    }
    seen == indegree.len()
}
