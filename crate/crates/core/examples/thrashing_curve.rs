//! Throughput, blocked fraction and conflict ratio as the multiprogramming
//! level of a closed system grows past its peak.

use anyhow::Result;
use contention_lab::engine::{replication_seeds, run_replications, Mode, SimConfig};
use contention_lab::stats::Estimate;
use contention_lab::workload::WorkloadSpec;

fn main() -> Result<()> {
    println!("k=8 D=400, fixed unit steps\n");
    println!("  M  throughput       beta     CR     rho");
    for mpl in (2..=30).step_by(2) {
        let mut cfg = SimConfig::new(WorkloadSpec::uniform(8, 400, 1.0), Mode::Closed { mpl });
        cfg.horizon = 4_000.0;
        cfg.warmup = 400.0;
        let reps = run_replications(&cfg, &replication_seeds(3, 4))?;
        let e =
            |f: fn(&contention_lab::engine::SimReport) -> f64| Estimate::of(&reps.iter().map(f).collect::<Vec<_>>());
        let x = e(|r| r.throughput);
        println!(
            "{mpl:>3}  {:.4} ± {:.4}  {:.3}  {:.3}  {:.3}",
            x.mean,
            x.half_width,
            e(|r| r.beta).mean,
            e(|r| r.conflict_ratio).mean,
            e(|r| r.rho).mean
        );
    }
    Ok(())
}
