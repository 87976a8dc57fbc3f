use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytic::{critical_point, response_time_quadratic, solve_cubic_beta, ModelError};
use crate::ccpolicy::{PolicyConfig, PolicySpec};
use crate::engine::{replication_seeds, run_replications, Mode, SimReport};
use crate::stats::Estimate;

use super::aggregate::{Aggregate, SweepRow};
use super::analyze::{analyze, fmt_value, Prediction};
use super::scenario::{Resolved, Scenario};
use super::{Axis, RunArgs, ScenarioArgs, Solve, Status, SweepArgs, THREADS_ENV};

/// Relative tolerances for `validate`, as (quantity, tolerance).
pub const TOLERANCES: [(&str, f64); 5] = [("p_c", 0.10), ("beta", 0.25), ("R", 0.10), ("CR", 0.10), ("p_c[dbr]", 0.15)];

fn tolerance(q: &str) -> f64 {
    TOLERANCES.iter().find(|(n, _)| *n == q).map_or(0.10, |(_, t)| *t)
}

/// One analytic-versus-simulated comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub quantity: String,
    pub analytic: f64,
    pub simulated: f64,
    pub half_width: f64,
    pub rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ValidationRow {
    fn new(quantity: String, tol_key: &str, analytic: f64, sim: &Estimate) -> Self {
        let tolerance = tolerance(tol_key);
        let diff = (sim.mean - analytic).abs();
        let rel_error = if analytic == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / analytic.abs()
        };
        let pass = rel_error <= tolerance || (sim.half_width.is_finite() && diff <= sim.half_width);
        ValidationRow {
            quantity,
            analytic,
            simulated: sim.mean,
            half_width: sim.half_width,
            rel_error,
            tolerance,
            pass,
        }
    }
}

/// Pairs each predicted quantity with its simulated estimate. Region rows
/// are added only when there is more than one region.
pub fn validation_rows(p: &Prediction, a: &Aggregate, dbr_ids: &[String]) -> Vec<ValidationRow> {
    let mut rows = vec![
        ValidationRow::new("p_c".into(), "p_c", p.p_c, &a.p_c),
        ValidationRow::new("beta".into(), "beta", p.beta, &a.beta),
        ValidationRow::new("R".into(), "R", p.response_time, &a.response_time),
        ValidationRow::new("CR".into(), "CR", p.conflict_ratio, &a.conflict_ratio),
    ];
    if p.per_dbr.len() > 1 {
        for ((id, pred), sim) in dbr_ids.iter().zip(&p.per_dbr).zip(&a.per_dbr_p_c) {
            rows.push(ValidationRow::new(format!("p_c[{id}]"), "p_c[dbr]", *pred, sim));
        }
    }
    rows
}

/// Expands `a,b,c` and integer ranges `lo..hi` (inclusive) into strings.
pub fn parse_values(spec: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let lo: u64 = lo.trim().parse().with_context(|| format!("bad range start in `{part}`"))?;
            let hi: u64 = hi.trim().parse().with_context(|| format!("bad range end in `{part}`"))?;
            if lo > hi {
                bail!("empty range `{part}`");
            }
            out.extend((lo..=hi).map(|v| v.to_string()));
        } else {
            out.push(part.to_string());
        }
    }
    if out.is_empty() {
        bail!("no sweep values given");
    }
    Ok(out)
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV} must be a positive integer"))?;
            if n == 0 {
                bail!("{THREADS_ENV} must be a positive integer");
            }
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

fn out_dir(args: &ScenarioArgs, r: &Resolved) -> Result<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| r.scenario.output.as_ref().map(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn replicate(r: &Resolved, args: &RunArgs) -> Result<(Vec<SimReport>, Aggregate)> {
    let n = args.replications.unwrap_or(r.scenario.replications);
    if n < 1 {
        bail!("replications must be >= 1");
    }
    let seeds = replication_seeds(args.seed.unwrap_or(r.scenario.seed), n);
    let cfg = r.sim_config(seeds[0]);
    let reports = with_pool(|| run_replications(&cfg, &seeds))??;
    let agg = Aggregate::of(r.name(), r.load_control.name(), &reports);
    Ok((reports, agg))
}

fn est(e: &Estimate) -> String {
    if e.half_width.is_finite() {
        format!("{} ± {}", fmt_value(e.mean), fmt_value(e.half_width))
    } else {
        fmt_value(e.mean)
    }
}

fn summary(out: &mut dyn Write, a: &Aggregate) -> Result<()> {
    writeln!(out, "## simulation: {} ({}, load control {})\n", a.scenario, a.policy, a.load_control)?;
    writeln!(out, "replications {}, committed {}\n", a.replications, a.committed)?;
    writeln!(out, "| quantity | mean ± 95% half-width |\n|---|---|")?;
    for (q, e) in [
        ("throughput", &a.throughput),
        ("R", &a.response_time),
        ("p_c", &a.p_c),
        ("beta", &a.beta),
        ("CR", &a.conflict_ratio),
        ("rho", &a.rho),
        ("L", &a.l_total),
        ("N in system", &a.mean_in_system),
        ("deadlocks/commit", &a.deadlocks_per_commit),
        ("aborts/commit", &a.aborts_per_commit),
    ] {
        writeln!(out, "| {q} | {} |", est(e))?;
    }
    if a.watchdog_hits > 0 {
        writeln!(out, "\nwarning: {} blocked waits exceeded the watchdog", a.watchdog_hits)?;
    }
    Ok(())
}

pub(super) fn cmd_analyze(args: &ScenarioArgs, out: &mut dyn Write) -> Result<Status> {
    let r = Scenario::load(&args.scenario)?;
    let rep = analyze(&r);
    if args.out.is_some() || r.scenario.output.is_some() {
        write_json(&out_dir(args, &r)?.join("analysis.json"), &rep)?;
    }
    write!(out, "{}", rep.markdown())?;
    Ok(if rep.thrashing { Status::Thrashing } else { Status::Ok })
}

pub(super) fn cmd_simulate(args: &RunArgs, out: &mut dyn Write) -> Result<Status> {
    let r = Scenario::load(&args.base.scenario)?;
    let (reports, agg) = replicate(&r, args)?;
    let dir = out_dir(&args.base, &r)?;
    write_csv(&dir.join("replications.csv"), &reports.iter().map(SimReport::row).collect::<Vec<_>>())?;
    write_json(&dir.join("aggregate.json"), &agg)?;
    summary(out, &agg)?;
    writeln!(out, "\nwrote {}", dir.display())?;
    Ok(Status::Ok)
}

fn apply_axis(base: &Resolved, axis: Axis, value: &str) -> Result<Resolved> {
    let mut r = base.clone();
    let int = || value.parse::<u64>().with_context(|| format!("`{value}` is not a non-negative integer"));
    match axis {
        Axis::Lambda => {
            let lambda: f64 = value.parse().with_context(|| format!("`{value}` is not a number"))?;
            r.scenario.mode = Mode::Open { lambda };
        }
        Axis::M => {
            let mpl = u32::try_from(int()?).context("M out of range")?;
            r.scenario.mode = Mode::Closed { mpl };
        }
        Axis::K => {
            let k = u32::try_from(int()?).context("k out of range")?;
            if r.workload.dbrs.len() != 1 {
                bail!("sweeping k needs a single-region workload");
            }
            for c in &mut r.workload.classes {
                c.k = vec![k];
            }
        }
        Axis::D => {
            let d = int()?;
            for dbr in &mut r.workload.dbrs {
                dbr.size = d;
            }
        }
        Axis::Policy => {
            r.policy = PolicyConfig::from_spec(&PolicySpec { name: value.to_string(), params: Default::default() })?;
        }
    }
    r.workload.validate()?;
    r.sim_config(r.scenario.seed).validate()?;
    Ok(r)
}

pub(super) fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<Status> {
    let base = Scenario::load(&args.run.base.scenario)?;
    let values = parse_values(&args.values)?;
    // Check every point before running any.
    let points = values.iter().map(|v| apply_axis(&base, args.axis, v)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(points.len());
    writeln!(out, "## sweep: {} over {}\n", base.name(), args.axis.name())?;
    writeln!(
        out,
        "| {} | policy | throughput | R | p_c | beta | CR |\n|---|---|---|---|---|---|---|",
        args.axis.name()
    )?;
    for (v, r) in values.iter().zip(&points) {
        let (_, agg) = replicate(r, &args.run)?;
        let row = SweepRow::new(args.axis.name(), v, &agg);
        writeln!(
            out,
            "| {v} | {} | {} | {} | {} | {} | {} |",
            row.policy,
            fmt_value(row.throughput),
            fmt_value(row.response_time),
            fmt_value(row.p_c),
            fmt_value(row.beta),
            fmt_value(row.conflict_ratio)
        )?;
        rows.push(row);
    }
    let dir = out_dir(&args.run.base, &base)?;
    write_csv(&dir.join("sweep.csv"), &rows)?;
    writeln!(out, "\nwrote {}", dir.display())?;
    Ok(Status::Ok)
}

pub(super) fn cmd_validate(args: &RunArgs, out: &mut dyn Write) -> Result<Status> {
    let r = Scenario::load(&args.base.scenario)?;
    let rep = analyze(&r);
    let Some(pred) = rep.prediction.clone() else {
        write!(out, "{}", rep.markdown())?;
        writeln!(out, "\nno analytic prediction to validate against")?;
        return Ok(Status::Thrashing);
    };
    let (reports, agg) = replicate(&r, args)?;
    let ids: Vec<String> = r.workload.dbrs.iter().map(|d| d.id.clone()).collect();
    let rows = validation_rows(&pred, &agg, &ids);
    let dir = out_dir(&args.base, &r)?;
    write_csv(&dir.join("validation.csv"), &rows)?;
    write_csv(&dir.join("replications.csv"), &reports.iter().map(SimReport::row).collect::<Vec<_>>())?;
    write_json(&dir.join("aggregate.json"), &agg)?;
    write_json(&dir.join("analysis.json"), &rep)?;

    writeln!(out, "## validation: {} ({} replications)\n", r.name(), agg.replications)?;
    writeln!(out, "| quantity | analytic | simulated | rel. error | tolerance | result |\n|---|---|---|---|---|---|")?;
    for v in &rows {
        writeln!(
            out,
            "| {} | {} | {} | {:.1}% | {:.0}% | {} |",
            v.quantity,
            fmt_value(v.analytic),
            est(&Estimate { mean: v.simulated, half_width: v.half_width, n: agg.replications }),
            100.0 * v.rel_error,
            100.0 * v.tolerance,
            if v.pass { "pass" } else { "FAIL" }
        )?;
    }
    let ok = rows.iter().all(|v| v.pass);
    writeln!(out, "\n{}", if ok { "all quantities within tolerance" } else { "validation failed" })?;
    Ok(if ok { Status::Ok } else { Status::ValidationFailed })
}

fn model_status(e: &ModelError) -> Status {
    if matches!(e, ModelError::Thrashing { .. } | ModelError::ModelRange { .. }) {
        Status::Thrashing
    } else {
        Status::Ok
    }
}

pub(super) fn cmd_solve(what: &Solve, out: &mut dyn Write) -> Result<Status> {
    let cp = critical_point();
    let (value, status) = match *what {
        Solve::Critical => (json!({"alpha_star": cp.alpha_star, "beta_star": cp.beta_star}), Status::Ok),
        Solve::Cubic { alpha } => match solve_cubic_beta(alpha) {
            Ok(beta) => (json!({"alpha": alpha, "beta": beta, "alpha_star": cp.alpha_star}), Status::Ok),
            Err(e) if model_status(&e) == Status::Thrashing => {
                (json!({"alpha": alpha, "error": e.to_string(), "alpha_star": cp.alpha_star}), Status::Thrashing)
            }
            Err(e) => return Err(e.into()),
        },
        Solve::Quadratic { r, a } => match response_time_quadratic(r, a) {
            Ok(resp) => (json!({"r": r, "a": a, "R": resp, "discriminant": 1.0 - 4.0 * a * r}), Status::Ok),
            Err(e) if model_status(&e) == Status::Thrashing => {
                (json!({"r": r, "a": a, "error": e.to_string(), "discriminant": 1.0 - 4.0 * a * r}), Status::Thrashing)
            }
            Err(e) => return Err(e.into()),
        },
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&value)?)?;
    Ok(status)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists_and_ranges() {
        assert_eq!(parse_values("1, 2,3").unwrap(), ["1", "2", "3"]);
        assert_eq!(parse_values("3..5,9").unwrap(), ["3", "4", "5", "9"]);
        assert_eq!(parse_values("1..=2").unwrap(), ["1", "2"]);
        assert_eq!(parse_values("blocking,wait_die").unwrap(), ["blocking", "wait_die"]);
        assert!(parse_values(" , ").is_err());
        assert!(parse_values("5..2").is_err());
        assert!(parse_values("a..b").is_err());
    }

    #[test]
    fn verdicts() {
        let e = |mean, half_width| Estimate { mean, half_width, n: 5 };
        assert!(ValidationRow::new("p_c".into(), "p_c", 0.05, &e(0.054, f64::NAN)).pass);
        assert!(!ValidationRow::new("p_c".into(), "p_c", 0.05, &e(0.06, 0.001)).pass);
        // Outside the relative band but inside the interval.
        assert!(ValidationRow::new("p_c".into(), "p_c", 0.05, &e(0.06, 0.02)).pass);
        assert!(ValidationRow::new("beta".into(), "beta", 0.0, &e(0.0, 0.0)).pass);
        assert!(!ValidationRow::new("beta".into(), "beta", 0.0, &e(0.01, 0.0)).pass);
        assert!(ValidationRow::new("beta".into(), "beta", 0.1, &e(0.124, f64::NAN)).pass);
    }
}
