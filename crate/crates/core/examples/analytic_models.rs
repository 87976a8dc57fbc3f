//! Closed-form lock contention and hardware queueing estimates for one
//! transaction class.

use anyhow::Result;
use contention_lab::analytic::{
    asymptotic_job_bound, conflict_probability, deadlock_probability_2way, effective_db_size, extrapolate_conflict,
    min_mpl, open_qn_response, thrashing_load_index, AccessSkew, DeadlockVariant, QnSystem, SingleClassParams,
};

fn main() -> Result<()> {
    let p = SingleClassParams::new(10.0, 11.0, 1000.0, 1.0)?;
    println!("k=10 M=11 D=1000");
    println!("  p_c               {:.4}", conflict_probability(&p)?.value);
    println!("  P_D (modified)    {:.3e}", deadlock_probability_2way(&p, DeadlockVariant::Modified)?);
    println!("  P_D (original)    {:.3e}", deadlock_probability_2way(&p, DeadlockVariant::Original)?);
    println!("  k^2 M / D         {:.3} (thrashing above 1.5)", thrashing_load_index(&p)?);

    for skew in [AccessSkew::UNIFORM, AccessSkew { b: 0.8, c: 0.2, s: 0.0 }, AccessSkew { b: 0.5, c: 0.5, s: 0.5 }] {
        println!("  D_eff(b={}, c={}, s={}) = {:.1}", skew.b, skew.c, skew.s, effective_db_size(1000.0, &skew)?);
    }

    let qn = QnSystem::new(vec![100.0, 100.0, 100.0])?;
    let (l1, l2) = (1.0 / 300.0, 1.0 / 150.0);
    let (r1, r2) = (open_qn_response(&qn, l1)?, open_qn_response(&qn, l2)?);
    println!("\nthree devices of 100 ms each");
    println!("  R at {:.2} txn/s  {r1:.0} ms", 1000.0 * l1);
    println!("  R at {:.2} txn/s  {r2:.0} ms", 1000.0 * l2);
    println!("  p_c 0.01 becomes  {:.3}", extrapolate_conflict(0.01, l1, r1, l2, r2)?);
    println!("  AJB               {:.1} txn/s", 1000.0 * asymptotic_job_bound(&qn)?);
    let m = min_mpl(3, 2.0 / 3.0)?;
    println!("  MPL for rho=2/3   bound {:.2}, minimum {}", m.bound, m.minimum);
    Ok(())
}
