//! Measured two-way deadlock rate against the closed-form estimate as the
//! database grows.

use anyhow::Result;
use contention_lab::analytic::{deadlock_probability_2way, DeadlockVariant, SingleClassParams};
use contention_lab::engine::{replication_seeds, run_replications, Mode, SimConfig};
use contention_lab::workload::WorkloadSpec;

fn main() -> Result<()> {
    let (k, m) = (8u32, 8u32);
    println!("k={k} M={m}; deadlocks per commit\n");
    println!("{:>6} {:>12} {:>12} {:>12}", "D", "measured", "modified", "original");
    for d in [400u64, 800, 1600, 3200] {
        let mut cfg = SimConfig::new(WorkloadSpec::uniform(k, d, 1.0), Mode::Closed { mpl: m });
        cfg.horizon = 40_000.0;
        cfg.warmup = 1_000.0;
        let reps = run_replications(&cfg, &replication_seeds(2, 4))?;
        let dl: u64 = reps.iter().map(|r| r.deadlocks_2way).sum();
        let c: u64 = reps.iter().map(|r| r.committed).sum();
        let p = SingleClassParams::new(k.into(), m.into(), d as f64, 1.0)?;
        println!(
            "{d:>6} {:>12.3e} {:>12.3e} {:>12.3e}",
            dl as f64 / c as f64,
            deadlock_probability_2way(&p, DeadlockVariant::Modified)?,
            deadlock_probability_2way(&p, DeadlockVariant::Original)?
        );
    }
    Ok(())
}
