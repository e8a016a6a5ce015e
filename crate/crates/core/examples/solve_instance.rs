//! One EL ratio test, solved three ways: pooled Newton, PCM and MAOM.
//!
//! cargo run --release --example solve_instance

use decentral_el::admm::max_abs_deviation;
use decentral_el::chisq::{chisq_quantile, chisq_sf};
use decentral_el::data::{generate_data, substream, true_theta};
use decentral_el::maom::run_maom;
use decentral_el::pcm::run_pcm;
use decentral_el::{el_statistic, gen_erdos_renyi, solve_reference, EstimatingFunction, Problem, SolverConfig};

fn main() -> decentral_el::Result<()> {
    let ef = EstimatingFunction::mean(3)?;
    let (k, n) = (10, 300);
    let graph = gen_erdos_renyi(k, 0.3, 1)?;
    let data = generate_data(&ef, k, n, &mut substream(1, 0))?;
    let problem = Problem::new(graph, &data, &ef, &true_theta(&ef), None)?;
    let config = SolverConfig::for_problem(&problem);
    let dof = ef.dims().eq;
    println!("graph: K={} M={}, threshold {:.4}", k, problem.graph.edge_count(), chisq_quantile(dof, 0.95)?);

    let pooled = solve_reference(&problem.scores, problem.eps)?;
    println!("  el: statistic {:.8}  p-value {:.4}", pooled.statistic(), chisq_sf(pooled.statistic(), dof));

    let (pcm, pcm_report) = run_pcm(&problem, &config)?;
    let (maom, maom_report) = run_maom(&problem, &config, false)?;
    for (name, lambdas, iters) in
        [("pcm", &pcm.lambdas, pcm_report.iterations()), ("maom", &maom.lambdas, maom_report.iterations())]
    {
        let stat = el_statistic(lambdas, &problem.scores, problem.eps);
        println!(
            "{name:>4}: statistic {stat:.8}  p-value {:.4}  {iters} iterations  max deviation {:.1e}",
            chisq_sf(stat, dof),
            max_abs_deviation(lambdas, &pooled.lambda)
        );
    }
    Ok(())
}
