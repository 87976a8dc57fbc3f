//! Two transaction classes over two database regions: per-region conflict
//! probabilities from the heterogeneous model and from simulation.

use std::path::Path;

use anyhow::Result;
use contention_lab::cli::{analyze, Scenario};
use contention_lab::engine::{replication_seeds, run_replications};

fn main() -> Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/two_class.json");
    let r = Scenario::load(&path)?;
    let report = analyze(&r);
    print!("{}", report.markdown());

    let Some(pred) = report.prediction else {
        println!("no prediction: the model is past its range");
        return Ok(());
    };
    let reps =
        run_replications(&r.sim_config(r.scenario.seed), &replication_seeds(r.scenario.seed, r.scenario.replications))?;
    println!("\n| region | predicted p_c | simulated p_c |\n|---|---|---|");
    for (j, dbr) in r.workload.dbrs.iter().enumerate() {
        let sim = reps.iter().map(|x| x.per_dbr[j].p_c).sum::<f64>() / reps.len() as f64;
        println!("| {} | {:.5} | {:.5} |", dbr.id, pred.per_dbr[j], sim);
    }
    Ok(())
}
