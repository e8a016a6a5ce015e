//! Load an experiment from TOML and show what it resolves to.
//!
//! cargo run --example config_file [path]

use decentral_el::config::Config;

fn main() -> decentral_el::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/experiment.toml").into());
    let cfg = Config::load(&path)?;
    let e = &cfg.experiment;
    let solver = e.solver_config();
    println!("family {}  K={} n={}  graph {}  reps {}  seed {}", e.family.name(), e.k, e.n, e.topology, e.reps, e.seed);
    println!("rho {}  eta {:.3e}  eps_abs {}  eps_rel {}  max_iter {}", solver.rho, solver.eta, solver.eps_abs, solver.eps_rel, solver.max_iter);
    println!("replication 0 graph has {} edges", e.graph(0)?.edge_count());
    println!("iteration grid {:?} x dims {:?}; rho multipliers {:?}", cfg.iterations.topologies, cfg.iterations.dims, cfg.rho_multipliers);
    Ok(())
}
