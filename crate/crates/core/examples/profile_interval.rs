//! Profile confidence intervals for a regression slope, with the
//! statistic evaluated by each solver.
//!
//! cargo run --release --example profile_interval

use decentral_el::data::{generate_data, substream, true_theta};
use decentral_el::interval::{profile_interval, ProfileOptions, Solver};
use decentral_el::{gen_erdos_renyi, EstimatingFunction};

fn main() -> decentral_el::Result<()> {
    let ef = EstimatingFunction::linear(2)?;
    let graph = gen_erdos_renyi(6, 0.5, 2)?;
    let data = generate_data(&ef, 6, 80, &mut substream(2, 0))?;
    let truth = true_theta(&ef);
    let options = ProfileOptions { x_tol: 1e-5, ..Default::default() };
    println!("true value {:.4}", truth[1]);
    for solver in Solver::ALL {
        let ci = profile_interval(&ef, &graph, &data, 1, 0.95, solver, &truth, &options)?;
        println!(
            "{:>4}: estimate {:.4}  95% interval [{:.4}, {:.4}]  ({} evaluations)",
            solver.name(),
            ci.estimate,
            ci.lower.unwrap_or(f64::NAN),
            ci.upper.unwrap_or(f64::NAN),
            ci.evaluations
        );
    }
    Ok(())
}
