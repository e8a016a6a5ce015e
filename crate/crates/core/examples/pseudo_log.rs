//! The pseudo-logarithm and the pooled EL multiplier on a tiny sample.
//!
//! cargo run --example pseudo_log

use decentral_el::{log_star, solve_reference, Scores};

fn main() -> decentral_el::Result<()> {
    let eps = 0.1;
    for z in [-0.5, 0.0, 0.05, 0.1, 0.5, 1.0] {
        let (v, d1, d2) = log_star(z, eps);
        println!("log*({z:>5}) = {v:>9.5}   d = {d1:>8.3}   d2 = {d2:>9.3}");
    }
    // Scores of the mean at θ = 0.2 for four observations.
    let scores = Scores::from_values(1, vec![0.1 - 0.2, 0.4 - 0.2, -0.3 - 0.2, 0.9 - 0.2]);
    let sol = solve_reference(&[scores], 0.25)?;
    println!("lambda* = {:.6}, statistic = {:.6}", sol.lambda[0], sol.statistic());
    Ok(())
}
