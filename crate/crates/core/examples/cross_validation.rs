//! Measured conflict probability against the closed-form prediction in a
//! low-contention closed system.

use anyhow::Result;
use contention_lab::analytic::{conflict_probability, SingleClassParams};
use contention_lab::engine::{replication_seeds, run_replications, Mode, SimConfig};
use contention_lab::stats::Estimate;
use contention_lab::workload::WorkloadSpec;

fn main() -> Result<()> {
    let (k, m, d) = (10u32, 11u32, 1000u64);
    let predicted = conflict_probability(&SingleClassParams::new(k as f64, m as f64, d as f64, 1.0)?)?;

    let mut cfg = SimConfig::new(WorkloadSpec::uniform(k, d, 1.0), Mode::Closed { mpl: m });
    cfg.horizon = 3_000.0;
    cfg.warmup = 300.0;
    let reports = run_replications(&cfg, &replication_seeds(7, 10))?;

    let p_c = Estimate::of(&reports.iter().map(|r| r.p_c).collect::<Vec<_>>());
    let l = Estimate::of(&reports.iter().map(|r| r.l_total).collect::<Vec<_>>());
    let committed: u64 = reports.iter().map(|r| r.committed).sum();
    println!("k={k} M={m} D={d}: {committed} commits over {} replications", reports.len());
    println!("predicted p_c = {:.5}", predicted.value);
    println!("measured  p_c = {:.5} +- {:.5}", p_c.mean, p_c.half_width);
    println!("mean locks held = {:.3} +- {:.3}", l.mean, l.half_width);
    println!("relative error = {:.2}%", 100.0 * (p_c.mean - predicted.value).abs() / predicted.value);
    Ok(())
}
