//! Run both schemes as message-passing node actors and print the traffic
//! tally of the first two rounds.
//!
//! cargo run --release --example netsim_certificate

use decentral_el::data::{generate_data, substream, true_theta};
use decentral_el::netsim::{run_decentralized, RoundSchedule};
use decentral_el::{Algorithm, EstimatingFunction, Graph, Problem, SolverConfig};

fn main() -> decentral_el::Result<()> {
    let ef = EstimatingFunction::linear(2)?;
    let graph = Graph::from_one_based(5, &[(1, 2), (1, 3), (2, 3), (3, 4), (4, 5)])?;
    let data = generate_data(&ef, 5, 120, &mut substream(4, 0))?;
    let problem = Problem::new(graph.clone(), &data, &ef, &true_theta(&ef), None)?;
    let config = SolverConfig::for_problem(&problem);

    for algo in [Algorithm::Pcm, Algorithm::Maom] {
        let (state, report, cert) = run_decentralized(algo, &problem, &config)?;
        println!(
            "{}: {} iterations, {} messages ({} per round), clean = {}",
            algo.name(),
            report.iterations(),
            cert.total_messages(),
            RoundSchedule::for_algorithm(algo).messages_per_iteration(&graph),
            cert.is_clean()
        );
        let lambda: Vec<String> = state.lambdas()[0].iter().map(|v| format!("{v:.6e}")).collect();
        println!("  lambda at node 1: [{}]", lambda.join(", "));
        for row in cert.traffic.iter().filter(|r| r.round <= 2) {
            println!("  node {} round {}: {} msgs, {} blocks", row.node + 1, row.round, row.msgs_sent, row.blocks_sent);
        }
    }
    Ok(())
}
