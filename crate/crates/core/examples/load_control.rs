//! Admission control on an overloaded open system, against the best fixed
//! multiprogramming limit found by search.

use anyhow::Result;
use contention_lab::engine::{replication_seeds, run_replications, Mode, SimConfig};
use contention_lab::loadctl::{LoadControlConfig, LoadControlSpec};
use contention_lab::workload::WorkloadSpec;

fn throughput(lc: LoadControlConfig) -> Result<f64> {
    let mut cfg = SimConfig::new(WorkloadSpec::uniform(8, 400, 1.0), Mode::Open { lambda: 1.5 });
    cfg.horizon = 6_000.0;
    cfg.warmup = 1_000.0;
    cfg.load_control = lc;
    let reps = run_replications(&cfg, &replication_seeds(5, 4))?;
    Ok(reps.iter().map(|r| r.throughput).sum::<f64>() / reps.len() as f64)
}

fn main() -> Result<()> {
    println!("k=8 D=400, Poisson arrivals at 1.5 per step time\n");
    let mut best = (0, 0.0);
    for m in 1..=40 {
        let x = throughput(LoadControlConfig::FixedMpl { max: m })?;
        if x > best.1 {
            best = (m, x);
        }
    }
    println!("{:<16} {:.4} (M={})", "best fixed MPL", best.1, best.0);
    for name in ["none", "half_and_half", "conflict_ratio", "critical_beta"] {
        let lc = LoadControlConfig::from_spec(&LoadControlSpec { name: name.into(), params: Default::default() })?;
        let x = throughput(lc)?;
        println!("{name:<16} {x:.4} ({:.0}% of best)", 100.0 * x / best.1);
    }
    Ok(())
}
