//! Blocked fraction against contention level, the fold where the cubic loses
//! its stable root, and the quadratic response-time model.

use anyhow::Result;
use contention_lab::analytic::{critical_point, response_time_quadratic, solve_cubic_beta, ModelError};

fn main() -> Result<()> {
    let cp = critical_point();
    println!("fold: alpha* = {:.6}, beta* = {:.6}\n", cp.alpha_star, cp.beta_star);
    println!("alpha   beta");
    for i in 0..=12 {
        let alpha = 0.02 * f64::from(i);
        match solve_cubic_beta(alpha) {
            Ok(beta) => println!("{alpha:.3}   {beta:.4}"),
            Err(e) => println!("{alpha:.3}   none ({e})"),
        }
    }

    println!("\nr = 10, R = 2r / (1 + sqrt(1 - 4ar))");
    for a in [0.0, 0.01, 0.02, 0.025, 0.03] {
        match response_time_quadratic(10.0, a) {
            Ok(r) => println!("a={a:<6} R={r:.3}"),
            Err(ModelError::Thrashing { .. }) => println!("a={a:<6} thrashing"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
