//! Optimistic validation against locking as the database shrinks.

use anyhow::Result;
use contention_lab::ccpolicy::{PolicyConfig, PolicySpec};
use contention_lab::engine::{replication_seeds, run_replications, Mode, SimConfig};
use contention_lab::workload::WorkloadSpec;

fn main() -> Result<()> {
    let policies = ["blocking", "occ_die", "occ_kill"];
    println!("k=8 M=10, mean throughput over 4 replications\n");
    println!("{:>6} {:>10} {:>10} {:>10}", "D", policies[0], policies[1], policies[2]);
    for d in [3_200u64, 1_600, 800, 400, 200] {
        let mut row = format!("{d:>6}");
        for name in policies {
            let mut cfg = SimConfig::new(WorkloadSpec::uniform(8, d, 1.0), Mode::Closed { mpl: 10 });
            cfg.horizon = 4_000.0;
            cfg.warmup = 400.0;
            cfg.policy = PolicyConfig::from_spec(&PolicySpec { name: name.into(), params: Default::default() })?;
            let reps = run_replications(&cfg, &replication_seeds(5, 4))?;
            let x = reps.iter().map(|r| r.throughput).sum::<f64>() / reps.len() as f64;
            row.push_str(&format!(" {x:>10.4}"));
        }
        println!("{row}");
    }
    Ok(())
}
