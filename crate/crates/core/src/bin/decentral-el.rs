use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use decentral_el::admm::{Algorithm, EtaRule, Problem};
use decentral_el::config::{Config, ExperimentSpec, Topology};
use decentral_el::experiments::{
    experiment_coverage, experiment_iterations, experiment_rho_sweep, iterations_csv, rho_csv, CoverageOptions,
    Lengths,
};
use decentral_el::ingest::{ingest_csv, Model};
use decentral_el::interval::{el_test, profile_interval, solve_problem, Evaluation, ProfileOptions, Solver};
use decentral_el::netsim::run_decentralized;
use decentral_el::{gen_erdos_renyi, EstimatingFunction, Graph};

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "decentral-el", version, about = "Decentralized empirical likelihood over a network")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Test one θ on one synthetic instance
    Solve(SolveArgs),
    /// Empirical coverage of the EL test over replications
    Coverage(CoverageArgs),
    /// Mean iterations and time per topology, dimension and n
    Iterations(IterationsArgs),
    /// Mean iterations over a grid of ρ = m·n
    RhoSweep(RhoArgs),
    /// Random graphs and spanning trees as edge lists
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Profile confidence interval for one component of θ
    Interval(IntervalArgs),
    /// Intervals for a linear or logistic model fitted to a CSV file
    IngestCsv(IngestArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone, Default)]
struct ExpArgs {
    /// Estimating function: quantile[:tau], linear:d, logistic:d, mean:d, repeated
    #[arg(long)]
    family: Option<String>,
    /// Number of nodes
    #[arg(long = "K", visible_alias = "k")]
    k: Option<usize>,
    /// Samples per node
    #[arg(long)]
    n: Option<usize>,
    /// tree | tree:<p> | er:<p> | complete | path | star
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated confidence levels
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// ρ as a multiple of n
    #[arg(long)]
    rho_mult: Option<f64>,
    /// strict | relaxed | <number>
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    exp: ExpArgs,
    /// el | pcm | maom
    #[arg(long, default_value = "maom")]
    algo: String,
    /// θ to test, comma-separated; defaults to the generating value
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Run through the message-passing simulator and write the traffic tally
    #[arg(long)]
    netsim: bool,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    exp: ExpArgs,
    /// Interval lengths for: none | el | all
    #[arg(long, default_value = "el")]
    lengths: String,
}

#[derive(Args)]
struct IterationsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    exp: ExpArgs,
    /// Family name used across the grid (dimension taken from --dims)
    #[arg(long)]
    grid_family: Option<String>,
    #[arg(long, value_delimiter = ',')]
    topologies: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
}

#[derive(Args)]
struct RhoArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    exp: ExpArgs,
    #[arg(long, value_delimiter = ',')]
    multipliers: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Draw a connected Erdős–Rényi graph
    Gen {
        #[arg(long = "K", visible_alias = "k")]
        k: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// BFS spanning tree of an edge-list file
    Tree {
        /// Input edge list; defaults to <out>/graph.txt
        #[arg(long)]
        input: Option<PathBuf>,
        /// Unused; accepted for uniformity
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct IntervalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    exp: ExpArgs,
    /// Component of θ, 1-based
    #[arg(long, default_value_t = 1)]
    component: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Comma-separated: el, pcm, maom
    #[arg(long, value_delimiter = ',', default_value = "el,pcm,maom")]
    solvers: Vec<String>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    response: String,
    /// Covariate columns; defaults to every other column
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// linear | logistic
    #[arg(long, default_value = "linear")]
    model: String,
    #[arg(long = "K", visible_alias = "k", default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "er:0.3")]
    graph: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, value_delimiter = ',', default_value = "el,pcm,maom")]
    solvers: Vec<String>,
}

fn base_config(common: &Common, fallback: impl FnOnce() -> Config) -> AnyResult<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => fallback(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn apply(spec: &mut ExperimentSpec, a: &ExpArgs) -> AnyResult<()> {
    if let Some(f) = &a.family {
        spec.family = f.parse()?;
    }
    spec.k = a.k.unwrap_or(spec.k);
    spec.n = a.n.unwrap_or(spec.n);
    if let Some(g) = &a.graph {
        spec.topology = g.parse()?;
    }
    spec.reps = a.reps.unwrap_or(spec.reps);
    if let Some(l) = &a.levels {
        spec.levels = l.clone();
    }
    spec.solver.rho_mult = a.rho_mult.unwrap_or(spec.solver.rho_mult);
    if let Some(e) = &a.eta {
        spec.solver.eta = e.parse::<EtaRule>()?;
    }
    spec.solver.max_iter = a.max_iter.unwrap_or(spec.solver.max_iter);
    spec.validate()?;
    Ok(())
}

fn write_out(dir: &Path, name: &str, content: &str) -> AnyResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

fn solve(a: SolveArgs) -> AnyResult<()> {
    let mut cfg = base_config(&a.common, Config::default)?;
    apply(&mut cfg.experiment, &a.exp)?;
    let spec = &cfg.experiment;
    let solver: Solver = a.algo.parse()?;
    let theta = a.theta.unwrap_or_else(|| decentral_el::data::true_theta(&spec.family));
    let problem = Problem::new(spec.graph(0)?, &spec.data(0)?, &spec.family, &theta, None)?;
    let mut config = spec.solver_config();
    config.track_statistic = true;
    let dof = spec.family.dims().eq;

    let (eval, report) = if a.netsim && solver != Solver::Reference {
        let algo = if solver == Solver::Pcm { Algorithm::Pcm } else { Algorithm::Maom };
        let (state, report, cert) = run_decentralized(algo, &problem, &config)?;
        let path = write_out(&a.common.out, "traffic.csv", &cert.to_csv())?;
        println!(
            "netsim: {} messages, {} violations, tally in {}",
            cert.total_messages(),
            cert.violations.len(),
            path.display()
        );
        let statistic = decentral_el::el_statistic(state.lambdas(), &problem.scores, problem.eps);
        let eval = Evaluation { statistic, iterations: report.iterations(), converged: report.converged };
        (eval, Some(report))
    } else {
        solve_problem(solver, &problem, Some(&config))?
    };
    if let Some(r) = report {
        write_out(&a.common.out, "solve_trace.csv", &r.to_csv())?;
    }
    let t = el_test(&eval, dof, a.level)?;
    println!(
        "statistic={:.6} dof={} p_value={:.6} threshold={:.6} decision={} iterations={} converged={}",
        t.statistic,
        t.dof,
        t.p_value,
        t.threshold,
        if t.reject { "reject" } else { "accept" },
        eval.iterations,
        eval.converged
    );
    Ok(())
}

fn coverage(a: CoverageArgs) -> AnyResult<()> {
    let mut cfg = base_config(&a.common, Config::default)?;
    apply(&mut cfg.experiment, &a.exp)?;
    let options = CoverageOptions { lengths: a.lengths.parse::<Lengths>()?, ..Default::default() };
    let report = experiment_coverage(&cfg.experiment, &options)?;
    let csv = report.to_csv();
    print!("{csv}");
    for (rep, method, msg) in &report.failures {
        eprintln!("replication {rep} ({}) failed: {msg}", method.name());
    }
    let path = write_out(&a.common.out, "coverage.csv", &csv)?;
    eprintln!("decision agreement {:.4}; wrote {}", report.agreement, path.display());
    Ok(())
}

fn iterations(a: IterationsArgs) -> AnyResult<()> {
    let mut cfg = base_config(&a.common, || {
        let mut c = Config::default();
        c.experiment.k = 50;
        c.experiment.reps = 3;
        c
    })?;
    apply(&mut cfg.experiment, &a.exp)?;
    let grid = &mut cfg.iterations;
    if let Some(f) = a.grid_family {
        grid.family = f;
    }
    if let Some(t) = a.topologies {
        grid.topologies = t.iter().map(|s| s.parse::<Topology>()).collect::<Result<_, _>>()?;
    }
    grid.dims = a.dims.unwrap_or(std::mem::take(&mut grid.dims));
    grid.ns = a.ns.unwrap_or(std::mem::take(&mut grid.ns));
    let rows = experiment_iterations(&cfg.experiment, &cfg.iterations)?;
    let csv = iterations_csv(&rows);
    print!("{csv}");
    let path = write_out(&a.common.out, "iterations.csv", &csv)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn rho_sweep(a: RhoArgs) -> AnyResult<()> {
    let mut cfg = base_config(&a.common, || {
        let mut c = Config::default();
        c.experiment.family = EstimatingFunction::Mean { d: 3 };
        c.experiment.k = 20;
        c.experiment.n = 1000;
        c.experiment.topology = Topology::ErdosRenyi(0.2);
        c.experiment.reps = 3;
        c
    })?;
    apply(&mut cfg.experiment, &a.exp)?;
    let multipliers = a.multipliers.unwrap_or(cfg.rho_multipliers);
    let rows = experiment_rho_sweep(&cfg.experiment, &multipliers)?;
    let csv = rho_csv(&rows);
    print!("{csv}");
    for r in rows.iter().filter(|r| r.converged < r.runs) {
        eprintln!("rho={} {}: {}/{} runs hit the iteration cap", r.rho, r.algo.name(), r.runs - r.converged, r.runs);
    }
    let path = write_out(&a.common.out, "rho.csv", &csv)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn graph(cmd: GraphCmd) -> AnyResult<()> {
    match cmd {
        GraphCmd::Gen { k, p, seed, out } => {
            let g = gen_erdos_renyi(k, p, seed)?;
            let path = write_out(&out, "graph.txt", &g.to_edge_list())?;
            println!("K={} M={} written to {}", g.node_count(), g.edge_count(), path.display());
        }
        GraphCmd::Tree { input, out, .. } => {
            let input = input.unwrap_or_else(|| out.join("graph.txt"));
            let tree = Graph::load(&input)?.spanning_tree()?;
            let path = write_out(&out, "tree.txt", &tree.to_edge_list())?;
            println!("K={} M={} written to {}", tree.node_count(), tree.edge_count(), path.display());
        }
    }
    Ok(())
}

fn parse_solvers(names: &[String]) -> AnyResult<Vec<Solver>> {
    Ok(names.iter().map(|s| s.parse()).collect::<Result<_, _>>()?)
}

fn interval(a: IntervalArgs) -> AnyResult<()> {
    let mut cfg = base_config(&a.common, Config::default)?;
    apply(&mut cfg.experiment, &a.exp)?;
    let spec = &cfg.experiment;
    let component = a.component.checked_sub(1).ok_or("component is 1-based")?;
    let (graph, data) = (spec.graph(0)?, spec.data(0)?);
    let start = decentral_el::data::true_theta(&spec.family);
    let options = ProfileOptions { solver_config: Some(spec.solver_config()), ..Default::default() };
    let mut csv = String::from("method,component,level,estimate,lower,upper\n");
    for solver in parse_solvers(&a.solvers)? {
        let ci = profile_interval(&spec.family, &graph, &data, component, a.level, solver, &start, &options)?;
        csv += &format!(
            "{},{},{},{:.6},{},{}\n",
            solver.name(),
            a.component,
            a.level,
            ci.estimate,
            fmt_end(ci.lower),
            fmt_end(ci.upper)
        );
    }
    print!("{csv}");
    write_out(&a.common.out, "interval.csv", &csv)?;
    Ok(())
}

fn fmt_end(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_owned(), |v| format!("{v:.6}"))
}

fn ingest(a: IngestArgs) -> AnyResult<()> {
    let seed = match &a.common.config {
        Some(p) => Config::load(p)?.experiment.seed,
        None => 1,
    };
    let seed = a.common.seed.unwrap_or(seed);
    let model: Model = a.model.parse()?;
    let data = ingest_csv(&a.input, &a.response, a.covariates.as_deref(), model, a.k, seed)?;
    let topology: Topology = a.graph.parse()?;
    let graph = topology.build(a.k, seed)?;
    let p = data.family.dims().param;
    let n = (data.nodes.iter().map(|d| d.len()).sum::<usize>() / a.k).max(1);
    let options = ProfileOptions {
        solver_config: Some(decentral_el::SolverConfig::for_sizes(a.k, n)),
        ..Default::default()
    };
    let mut csv = String::from("method,parameter,estimate,lower,upper\n");
    for solver in parse_solvers(&a.solvers)? {
        for c in 0..p {
            let ci = profile_interval(&data.family, &graph, &data.nodes, c, a.level, solver, &vec![0.0; p], &options)?;
            csv += &format!(
                "{},{},{:.6},{},{}\n",
                solver.name(),
                data.names[c],
                ci.estimate,
                fmt_end(ci.lower),
                fmt_end(ci.upper)
            );
        }
    }
    print!("{csv}");
    write_out(&a.common.out, "ingest.csv", &csv)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Solve(a) => solve(a),
        Cmd::Coverage(a) => coverage(a),
        Cmd::Iterations(a) => iterations(a),
        Cmd::RhoSweep(a) => rho_sweep(a),
        Cmd::Graph(g) => graph(g),
        Cmd::Interval(a) => interval(a),
        Cmd::IngestCsv(a) => ingest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
