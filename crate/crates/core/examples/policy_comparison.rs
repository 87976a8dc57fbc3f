//! Every concurrency-control method on the same high-contention workload.

use anyhow::Result;
use contention_lab::ccpolicy::{PolicyConfig, PolicySpec, POLICY_NAMES};
use contention_lab::engine::{replication_seeds, run_replications, Mode, SimConfig};
use contention_lab::stats::Estimate;
use contention_lab::workload::WorkloadSpec;

fn main() -> Result<()> {
    println!("k=8 D=400 M=10, 6 replications\n");
    println!("{:<28} {:>16} {:>8} {:>10} {:>6}", "policy", "throughput", "R", "aborts/c", "depth");
    for name in POLICY_NAMES {
        let mut cfg = SimConfig::new(WorkloadSpec::uniform(8, 400, 1.0), Mode::Closed { mpl: 10 });
        cfg.horizon = 5_000.0;
        cfg.warmup = 500.0;
        cfg.policy = PolicyConfig::from_spec(&PolicySpec { name: name.to_string(), params: Default::default() })?;
        let reps = run_replications(&cfg, &replication_seeds(21, 6))?;
        let x = Estimate::of(&reps.iter().map(|r| r.throughput).collect::<Vec<_>>());
        let r = Estimate::of(&reps.iter().map(|r| r.response_time).collect::<Vec<_>>());
        let commits: u64 = reps.iter().map(|r| r.committed).sum();
        let aborts: u64 = reps.iter().map(|r| r.aborts.total()).sum();
        let depth = reps.iter().map(|r| r.max_blocking_level).max().unwrap_or(0);
        println!(
            "{name:<28} {:>7.4} ± {:.4} {:>8.2} {:>10.3} {depth:>6}",
            x.mean,
            x.half_width,
            r.mean,
            aborts as f64 / commits as f64
        );
    }
    Ok(())
}
