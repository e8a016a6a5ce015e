//! Iterations and time per iteration for PCM and MAOM across topologies.
//!
//! cargo run --release --example iterations_table

use decentral_el::config::{ExperimentSpec, IterationGrid, Topology};
use decentral_el::experiments::experiment_iterations;

fn main() -> decentral_el::Result<()> {
    let base = ExperimentSpec { k: 20, reps: 2, ..Default::default() };
    let grid = IterationGrid {
        family: "mean".into(),
        topologies: vec![Topology::Tree, Topology::ErdosRenyi(0.3), Topology::Complete],
        dims: vec![3],
        ns: vec![500],
    };
    println!("{:<10} {:>5} {:>10} {:>14}", "topology", "algo", "iterations", "us/iteration");
    for row in experiment_iterations(&base, &grid)? {
        println!(
            "{:<10} {:>5} {:>10.1} {:>14.1}",
            row.topology,
            row.algo.name(),
            row.mean_iters,
            row.median_iter_time_s * 1e6
        );
    }
    Ok(())
}
