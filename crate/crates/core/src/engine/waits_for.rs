use std::collections::{HashMap, HashSet};

use super::TxnId;

/// A cycle through `start` in the waits-for graph, listed from `start`
/// along its edges, or `None`. `edges(t)` is who `t` waits on.
pub fn find_cycle(start: TxnId, edges: impl Fn(TxnId) -> Vec<TxnId>) -> Option<Vec<TxnId>> {
    let mut visited = HashSet::from([start]);
    let mut path = vec![start];
    let mut stack = vec![edges(start).into_iter()];
    while let Some(next) = stack.last_mut() {
        match next.next() {
            Some(t) if t == start => return Some(path),
            Some(t) => {
                if visited.insert(t) {
                    path.push(t);
                    stack.push(edges(t).into_iter());
                }
            }
            None => {
                stack.pop();
                path.pop();
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VictimCandidate {
    pub id: TxnId,
    pub locks_held: usize,
    pub birth: u64,
}

/// Deadlock victim: fewest locks held, ties to the youngest.
pub fn choose_victim(cycle: &[VictimCandidate]) -> Option<TxnId> {
    cycle.iter().min_by(|a, b| a.locks_held.cmp(&b.locks_held).then(b.birth.cmp(&a.birth))).map(|c| c.id)
}

/// Length of the longest waits-for chain starting at `start` (0 when it
/// waits on nobody). Edges closing a cycle are ignored.
pub fn chain_depth(start: TxnId, edges: &impl Fn(TxnId) -> Vec<TxnId>) -> u32 {
    fn go(t: TxnId, edges: &impl Fn(TxnId) -> Vec<TxnId>, memo: &mut HashMap<TxnId, Option<u32>>) -> u32 {
        match memo.get(&t) {
            Some(Some(d)) => return *d,
            Some(None) => return 0,
            None => {}
        }
        memo.insert(t, None);
        let d = edges(t).into_iter().map(|n| 1 + go(n, edges, memo)).max().unwrap_or(0);
        memo.insert(t, Some(d));
        d
    }
    go(start, edges, &mut HashMap::new())
}
