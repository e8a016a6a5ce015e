//! Small coverage experiment for the quantile example.
//!
//! cargo run --release --example coverage [reps]

use decentral_el::config::{ExperimentSpec, Topology};
use decentral_el::experiments::{experiment_coverage, CoverageOptions};

fn main() -> decentral_el::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let spec = ExperimentSpec { k: 10, n: 100, reps, topology: Topology::ErdosRenyi(0.3), ..Default::default() };
    let report = experiment_coverage(&spec, &CoverageOptions::default())?;
    print!("{}", report.to_csv());
    println!("decision agreement across solvers: {:.3}", report.agreement);
    Ok(())
}
