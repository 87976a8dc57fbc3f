//! Draws transactions from a skewed, mixed-mode workload and tallies where
//! their locks land.

use anyhow::Result;
use contention_lab::workload::{DbrSpec, HotSet, LockMode, WorkloadSampler, WorkloadSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut spec = WorkloadSpec::uniform(8, 10_000, 1.0);
    spec.dbrs = vec![DbrSpec { id: "orders".into(), size: 10_000, skew: Some(HotSet { b: 0.8, c: 0.2 }) }];
    spec.classes[0].s = vec![0.25];
    let sampler = WorkloadSampler::new(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let first = sampler.sample(&mut rng);
    println!("one plan: {} steps, {} locks", first.steps.len(), first.lock_count());
    for s in &first.steps {
        match s.lock {
            Some(l) => println!("  {:.1}  {:?} object {}", s.duration, l.mode, l.object.index),
            None => println!("  {:.1}  commit", s.duration),
        }
    }

    let (mut hot, mut shared, mut total) = (0u64, 0u64, 0u64);
    for _ in 0..20_000 {
        for l in sampler.sample(&mut rng).steps.iter().filter_map(|s| s.lock) {
            total += 1;
            hot += u64::from(l.object.index < 2_000);
            shared += u64::from(l.mode == LockMode::Shared);
        }
    }
    println!(
        "\n{total} requests: {:.3} to the hot 20%, {:.3} shared",
        hot as f64 / total as f64,
        shared as f64 / total as f64
    );
    Ok(())
}
