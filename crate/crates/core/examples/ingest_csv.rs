//! Logistic regression on a CSV table spread over ten nodes.
//!
//! cargo run --release --example ingest_csv

use decentral_el::ingest::{ingest_csv, Model};
use decentral_el::interval::{profile_interval, ProfileOptions, Solver};
use decentral_el::{gen_erdos_renyi, SolverConfig};

fn main() -> decentral_el::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/trial.csv");
    let covariates = ["age", "dose", "bmi"].map(String::from);
    let data = ingest_csv(path, "response", Some(&covariates), Model::Logistic, 10, 1)?;
    let graph = gen_erdos_renyi(10, 0.3, 1)?;
    let p = data.family.dims().param;
    let n = data.nodes.iter().map(|d| d.len()).sum::<usize>() / 10;
    let options = ProfileOptions { solver_config: Some(SolverConfig::for_sizes(10, n)), ..Default::default() };
    for c in 0..p {
        let ci = profile_interval(&data.family, &graph, &data.nodes, c, 0.95, Solver::Maom, &vec![0.0; p], &options)?;
        println!(
            "{:<12} {:>8.4}  [{:.4}, {:.4}]",
            data.names[c],
            ci.estimate,
            ci.lower.unwrap_or(f64::NAN),
            ci.upper.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
