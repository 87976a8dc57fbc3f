use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analytic::{
    asymptotic_job_bound, balanced_closed_throughput, conflict_probability, critical_point, deadlock_probability_2way,
    effective_db_size, extrapolate_conflict, hdam_conflict_probability, min_mpl, open_qn_response,
    response_time_quadratic, thrashing_load_index, AccessSkew, ContentionState, DeadlockVariant, ModelError, QnSystem,
    SingleClassParams, DEFAULT_FIRST_LEVEL_WAIT, THRASHING_LOAD_INDEX,
};
use crate::engine::Mode;
use crate::workload::WorkloadSpec;

use super::scenario::{Resolved, TimeUnit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub quantity: String,
    pub value: f64,
    pub unit: String,
    pub note: String,
}

/// The quantities `validate` compares against simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_c: f64,
    pub per_dbr: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    #[serde(rename = "CR")]
    pub conflict_ratio: f64,
    #[serde(rename = "R")]
    pub response_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub rows: Vec<Row>,
    pub prediction: Option<Prediction>,
    /// Model-range and thrashing diagnostics.
    pub problems: Vec<String>,
    pub thrashing: bool,
}

impl AnalysisReport {
    fn row(&mut self, quantity: &str, value: f64, unit: &str, note: &str) {
        self.rows.push(Row { quantity: quantity.into(), value, unit: unit.into(), note: note.into() });
    }

    fn problem(&mut self, e: &ModelError) {
        if matches!(e, ModelError::Thrashing { .. } | ModelError::ModelRange { .. }) {
            self.thrashing = true;
        }
        self.problems.push(e.to_string());
    }

    pub fn markdown(&self) -> String {
        let mut out =
            format!("## analysis: {}\n\n| quantity | value | unit | note |\n|---|---|---|---|\n", self.scenario);
        for r in &self.rows {
            let _ = writeln!(out, "| {} | {} | {} | {} |", r.quantity, fmt_value(r.value), r.unit, r.note);
        }
        for p in &self.problems {
            let _ = writeln!(out, "\n**{p}**");
        }
        out
    }
}

pub fn fmt_value(v: f64) -> String {
    if v == 0.0 || v.is_nan() || v.is_infinite() {
        format!("{v}")
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.4e}")
    } else {
        format!("{v:.6}")
    }
}

/// Evaluates the closed-form models for a scenario. Failures of individual
/// models are recorded as problems; the rest of the report still fills in.
pub fn analyze(s: &Resolved) -> AnalysisReport {
    let w = &s.workload;
    let spec = &s.scenario.analysis;
    let a = spec.first_level_wait.unwrap_or(DEFAULT_FIRST_LEVEL_WAIT);
    let mut rep = AnalysisReport {
        scenario: s.name().to_string(),
        rows: Vec::new(),
        prediction: None,
        problems: Vec::new(),
        thrashing: false,
    };
    let k1 = w.mean_locks();
    let r = w.mean_nominal_response();
    rep.row("K1", k1, "locks", "mean lock requests per txn");
    rep.row("r", r, "time", "contention-free response time");

    // Effective region sizes.
    let lambdas: Vec<f64> = w.classes.iter().map(|c| c.frequency).collect();
    let mut hdam = w.hdam_params(&lambdas);
    let shared = match hdam.shared_fractions() {
        Ok(s) => s,
        Err(e) => {
            rep.problem(&e);
            return rep;
        }
    };
    let mut d_eff = Vec::with_capacity(w.dbrs.len());
    for (j, dbr) in w.dbrs.iter().enumerate() {
        let d = spec.assumed_db_size.unwrap_or(dbr.size as f64);
        let (b, c) = dbr.skew.map_or((0.5, 0.5), |h| (h.b, h.c));
        match effective_db_size(d, &AccessSkew { b, c, s: shared[j] }) {
            Ok(e) => {
                rep.row(
                    &format!("D_eff[{}]", dbr.id),
                    e,
                    "objects",
                    &format!("D={d}, b={b}, c={c}, s={:.3}", shared[j]),
                );
                d_eff.push(e);
            }
            Err(e) => {
                rep.problem(&e);
                return rep;
            }
        }
        hdam.dbr_sizes[j] = d;
    }
    let d_total: f64 = d_eff.iter().sum();

    // Concurrency and per-class populations lambda_i R_i.
    let (m, response, pops) = match s.scenario.mode {
        Mode::Closed { mpl } => {
            let m = f64::from(mpl);
            // Class i occupies a share f_i r_i of the other M - 1 slots.
            let shares: Vec<f64> =
                (0..w.classes.len()).map(|i| w.classes[i].frequency * w.nominal_response(i)).collect();
            let total: f64 = shares.iter().sum();
            let pops: Vec<f64> = w
                .classes
                .iter()
                .zip(&shares)
                .map(|(c, sh)| (m - 1.0) * if total > 0.0 { sh / total } else { c.frequency })
                .collect();
            (m, None, pops)
        }
        Mode::Open { lambda } => {
            let k_bar = k1 / 2.0;
            let coeff = lambda * k1 * k_bar * a / d_total;
            rep.row("a", coeff, "1/time", "quadratic contention coefficient");
            let resp = match response_time_quadratic(r, coeff) {
                Ok(v) => v,
                Err(e) => {
                    rep.problem(&e);
                    return rep;
                }
            };
            rep.row("R (quadratic)", resp, "time", "response time with lock waits");
            let scale = if r > 0.0 { resp / r } else { 1.0 };
            let pops: Vec<f64> = w
                .classes
                .iter()
                .enumerate()
                .map(|(i, c)| c.frequency * lambda * w.nominal_response(i) * scale)
                .collect();
            (1.0 + lambda * resp, Some(resp), pops)
        }
    };
    rep.row("M", m, "txns", "concurrency (open: 1 + lambda R)");

    // Per-DBR conflict probabilities with the population as lambda_i and
    // unit response times.
    for (class, pop) in hdam.classes.iter_mut().zip(&pops) {
        class.lambda = *pop;
    }
    let ones = vec![1.0; pops.len()];
    let per_dbr = match hdam_conflict_probability(&hdam, &ones) {
        Ok(p) => p.p_c,
        Err(e) => {
            rep.problem(&e);
            return rep;
        }
    };
    for (dbr, p) in w.dbrs.iter().zip(&per_dbr) {
        rep.row(&format!("p_c[{}]", dbr.id), *p, "", "per-region conflict probability");
    }
    // Request-weighted mean over regions.
    let p_c = if k1 > 0.0 {
        w.dbrs
            .iter()
            .enumerate()
            .map(|(j, _)| {
                let share: f64 = w.classes.iter().map(|c| c.frequency * f64::from(c.k[j])).sum::<f64>() / k1;
                share * per_dbr[j]
            })
            .sum()
    } else {
        0.0
    };
    rep.row("p_c", p_c, "", "conflict probability per request");

    if k1 > 0.0 {
        match SingleClassParams::new(k1, m, d_total, r.max(f64::MIN_POSITIVE)) {
            Ok(params) => {
                match conflict_probability(&params) {
                    Ok(est) => rep.row(
                        "p_c (single class)",
                        est.value,
                        "",
                        if est.strained { "above 0.1: approximation strained" } else { "k(M-1)/(2D)" },
                    ),
                    Err(e) => rep.problem(&e),
                }
                let variant = spec.deadlock_variant.unwrap_or_default();
                for v in [DeadlockVariant::Original, DeadlockVariant::Modified] {
                    if let Ok(p) = deadlock_probability_2way(&params, v) {
                        let note = if v == variant { "2-way, per txn (selected)" } else { "2-way, per txn" };
                        rep.row(
                            &format!("P_D ({})", if v == DeadlockVariant::Original { "original" } else { "modified" }),
                            p,
                            "",
                            note,
                        );
                    }
                }
                if let Ok(x) = thrashing_load_index(&params) {
                    rep.row("k^2 M / D", x, "", &format!("thrashing near {THRASHING_LOAD_INDEX}"));
                }
            }
            Err(e) => rep.problem(&e),
        }
    }

    // Blocked fraction and conflict ratio.
    let alpha_star = critical_point().alpha_star;
    let a_eff = a * holder_response_ratio(w);
    if a_eff != a {
        rep.row("A (effective)", a_eff, "", "A scaled by lock-weighted / mean response");
    }
    match ContentionState::from_conflicts(k1, p_c, a_eff) {
        Ok(st) => {
            rep.row("alpha", st.alpha, "", "K1 p_c A");
            rep.row("beta", st.beta, "", "blocked fraction (cubic)");
            rep.row("rho (implied)", st.rho_b, "", "from beta = alpha [1 + rho (1+rho) / (2 (1-rho^2))]");
            let rho = lock_split_rho(w, st.beta);
            let cr = 1.0 / (1.0 - rho);
            rep.row("rho", rho, "", "fraction of locks held by blocked txns");
            rep.row("CR", cr, "", "conflict ratio");
            rep.row(
                "thrashing margin",
                st.thrashing_margin(),
                "",
                &format!("alpha* - alpha, alpha* = {alpha_star:.4}"),
            );
            let resp = response.unwrap_or(if st.beta < 1.0 { r / (1.0 - st.beta) } else { f64::INFINITY });
            if response.is_none() {
                rep.row("R", resp, "time", "r / (1 - beta)");
            }
            rep.prediction = Some(Prediction {
                p_c,
                per_dbr: per_dbr.clone(),
                alpha: st.alpha,
                beta: st.beta,
                rho,
                conflict_ratio: cr,
                response_time: resp,
            });
        }
        Err(e) => {
            rep.row("alpha", k1 * p_c * a_eff, "", "K1 p_c A");
            rep.row("thrashing margin", alpha_star - k1 * p_c * a_eff, "", &format!("alpha* = {alpha_star:.4}"));
            rep.problem(&e);
        }
    }

    if let Some(qn) = &spec.qn {
        qn_rows(&mut rep, qn);
    }
    rep
}

/// Response time of the txn holding a typical lock over the mean response.
/// Holders are weighted by locks held, `f_i r_i k_i`; one class gives 1.
pub fn holder_response_ratio(w: &WorkloadSpec) -> f64 {
    let (mut num, mut den, mut mean) = (0.0, 0.0, 0.0);
    for (i, c) in w.classes.iter().enumerate() {
        let r = w.nominal_response(i);
        let held = c.frequency * r * f64::from(c.total_locks());
        num += held * r;
        den += held;
        mean += c.frequency * r;
    }
    if den > 0.0 && mean > 0.0 {
        num / den / mean
    } else {
        1.0
    }
}

/// `L_b / L` when a fraction `beta` of txns is blocked. A txn in step `j`
/// holds `j` locks, so an active txn averages `k/2`; a blocked one waits at
/// a uniformly placed request and averages `(k-1)/2`. Classes are weighted
/// by their share of time in the system, blocked ones also by `k`.
pub fn lock_split_rho(w: &WorkloadSpec, beta: f64) -> f64 {
    let (mut wa, mut la, mut wb, mut lb) = (0.0, 0.0, 0.0, 0.0);
    for (i, c) in w.classes.iter().enumerate() {
        let k = f64::from(c.total_locks());
        let share = c.frequency * w.nominal_response(i);
        wa += share;
        la += share * k / 2.0;
        wb += share * k;
        lb += share * k * (k - 1.0).max(0.0) / 2.0;
    }
    if wa == 0.0 || wb == 0.0 {
        return 0.0;
    }
    let (la, lb) = (la / wa, lb / wb);
    let held_blocked = beta * lb;
    let total = held_blocked + (1.0 - beta) * la;
    if total > 0.0 {
        held_blocked / total
    } else {
        0.0
    }
}

fn qn_rows(rep: &mut AnalysisReport, qn: &super::scenario::QnSpec) {
    let unit = qn.time_unit.map_or("time", TimeUnit::label);
    let sys = match QnSystem::new(qn.demands.clone()) {
        Ok(s) => s,
        Err(e) => return rep.problem(&e),
    };
    let n = qn.demands.len() as u32;
    let r1 = match open_qn_response(&sys, qn.lambda) {
        Ok(v) => v,
        Err(e) => return rep.problem(&e),
    };
    let rho1 = sys.utilizations(qn.lambda).into_iter().fold(0.0, f64::max);
    rep.row("QN rho", rho1, "", "bottleneck utilization at lambda");
    rep.row("QN R(lambda)", r1, unit, "sum X / (1 - rho)");
    let mut rho_max = rho1;
    if let Some(l2) = qn.lambda_prime {
        match open_qn_response(&sys, l2) {
            Ok(r2) => {
                rho_max = sys.utilizations(l2).into_iter().fold(0.0, f64::max);
                rep.row("QN rho'", rho_max, "", "bottleneck utilization at lambda'");
                rep.row("QN R(lambda')", r2, unit, "");
                let factor = (l2 * r2) / (qn.lambda * r1);
                rep.row("p_c extrapolation factor", factor, "", "lambda' R' / (lambda R)");
                if let Some(p) = qn.p_c {
                    match extrapolate_conflict(p, qn.lambda, r1, l2, r2) {
                        Ok(v) => rep.row("p_c(lambda')", v, "", "extrapolated"),
                        Err(e) => rep.problem(&e),
                    }
                }
            }
            Err(e) => rep.problem(&e),
        }
    }
    if let Ok(ajb) = asymptotic_job_bound(&sys) {
        rep.row("AJB", ajb, &format!("txn/{unit}"), "1 / max X");
        if let Some(u) = qn.time_unit {
            rep.row("AJB", ajb * u.per_second(), "txn/s", "");
        }
    }
    match min_mpl(n, rho_max) {
        Ok(mm) => {
            rep.row("MPL bound", mm.bound, "txns", "(N-1) rho / (1-rho)");
            rep.row("MPL minimum", f64::from(mm.minimum), "txns", "smallest M carrying the load");
            let x = qn.demands.iter().sum::<f64>() / f64::from(n);
            if let Ok(t) = balanced_closed_throughput(f64::from(mm.minimum), n, x) {
                rep.row("T(M minimum)", t, &format!("txn/{unit}"), "balanced closed network");
            }
        }
        Err(e) => rep.problem(&e),
    }
}
