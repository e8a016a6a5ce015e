//! Iteration counts as the penalty ρ moves away from n.
//!
//! cargo run --release --example rho_sweep

use decentral_el::config::{ExperimentSpec, Topology};
use decentral_el::experiments::{experiment_rho_sweep, rho_csv};
use decentral_el::EstimatingFunction;

fn main() -> decentral_el::Result<()> {
    let spec = ExperimentSpec {
        family: EstimatingFunction::mean(3)?,
        k: 10,
        n: 400,
        topology: Topology::ErdosRenyi(0.3),
        reps: 2,
        ..Default::default()
    };
    let rows = experiment_rho_sweep(&spec, &[0.1, 0.3, 1.0, 3.0, 10.0])?;
    print!("{}", rho_csv(&rows));
    Ok(())
}
