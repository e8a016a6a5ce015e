//! Replicated experiments: coverage of the EL test, iteration counts and
//! timings across topologies, and sensitivity to ρ.
//!
//! Replication `i` always uses the data and graph substreams of index `i`,
//! so any single replication can be rerun on its own.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::admm::{Algorithm, Problem};
use crate::config::{ExperimentSpec, IterationGrid};
use crate::data::true_theta;
use crate::error::Result;
use crate::estfun::EstimatingFunction;
use crate::interval::{evaluate_problem, profile_intervals, ProfileOptions, Solver};
use crate::maom::run_maom;
use crate::pcm::run_pcm;

/// Which methods get profile intervals (scalar θ only) for `mean_length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lengths {
    None,
    /// Pooled reference only; the ADMM columns are left empty.
    Reference,
    All,
}

impl std::str::FromStr for Lengths {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "el" | "reference" => Ok(Self::Reference),
            "all" => Ok(Self::All),
            _ => Err(crate::error::Error::InvalidArgument(format!("lengths must be none, el or all, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageOptions {
    pub methods: Vec<Solver>,
    pub lengths: Lengths,
    pub profile: ProfileOptions,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self {
            methods: Solver::ALL.to_vec(),
            lengths: Lengths::Reference,
            profile: ProfileOptions { x_tol: 1e-4, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub method: Solver,
    pub level: f64,
    pub coverage: f64,
    /// NaN when lengths were not computed.
    pub mean_length: f64,
}

/// Per-replication outcome for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub rep: usize,
    pub method: Solver,
    pub statistic: f64,
    pub converged: bool,
    /// Interval length per level, when computed.
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub replications: Vec<ReplicationResult>,
    /// `(rep, method, message)` for replications that errored.
    pub failures: Vec<(usize, Solver, String)>,
    /// Fraction of (replication, level) pairs on which all methods made the
    /// same accept/reject decision.
    pub agreement: f64,
}

impl CoverageReport {
    pub const CSV_HEADER: &'static str = "method,level,coverage,mean_length";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.4},{}", r.method.name(), r.level, r.coverage, fmt_opt(r.mean_length));
        }
        s
    }

    pub fn row(&self, method: Solver, level: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.method == method && (r.level - level).abs() < 1e-12)
    }
}

fn fmt_opt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.6}")
    }
}

/// Tests θ₀ on every replication with each method and tabulates the
/// acceptance rate at each level.
pub fn experiment_coverage(spec: &ExperimentSpec, options: &CoverageOptions) -> Result<CoverageReport> {
    spec.validate()?;
    let theta0 = true_theta(&spec.family);
    let dims = spec.family.dims();
    let thresholds: Vec<f64> =
        spec.levels.iter().map(|&l| crate::chisq::chisq_quantile(dims.eq, l)).collect::<Result<_>>()?;
    let config = spec.solver_config();
    let wants_length = |m: Solver| {
        dims.param == 1
            && match options.lengths {
                Lengths::None => false,
                Lengths::Reference => m == Solver::Reference,
                Lengths::All => true,
            }
    };
    let mut profile = options.profile.clone();
    profile.solver_config = Some(config.clone());

    let per_rep: Vec<Vec<std::result::Result<ReplicationResult, (usize, Solver, String)>>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let setup = spec.data(rep).and_then(|d| Ok((spec.graph(rep)?, d)));
            options
                .methods
                .iter()
                .map(|&method| {
                    let (graph, data) = setup.as_ref().map_err(|e| (rep, method, e.to_string()))?;
                    let run = || -> Result<ReplicationResult> {
                        let problem = Problem::new(graph.clone(), data, &spec.family, &theta0, None)?;
                        let ev = evaluate_problem(method, &problem, Some(&config))?;
                        let mut lengths = Vec::new();
                        if wants_length(method) {
                            let cis = profile_intervals(
                                &spec.family,
                                graph,
                                data,
                                0,
                                &spec.levels,
                                method,
                                &theta0,
                                &profile,
                            )?;
                            lengths = cis.iter().map(|ci| ci.length().unwrap_or(f64::NAN)).collect();
                        }
                        Ok(ReplicationResult { rep, method, statistic: ev.statistic, converged: ev.converged, lengths })
                    };
                    run().map_err(|e| (rep, method, e.to_string()))
                })
                .collect()
        })
        .collect();

    let mut report = CoverageReport::default();
    for outcome in per_rep.into_iter().flatten() {
        match outcome {
            Ok(r) => report.replications.push(r),
            Err(f) => report.failures.push(f),
        }
    }

    for &method in &options.methods {
        let mine: Vec<&ReplicationResult> = report.replications.iter().filter(|r| r.method == method).collect();
        for (li, (&level, &q)) in spec.levels.iter().zip(&thresholds).enumerate() {
            let covered = mine.iter().filter(|r| r.statistic <= q).count();
            let lens: Vec<f64> = mine.iter().filter_map(|r| r.lengths.get(li).copied()).filter(|l| l.is_finite()).collect();
            let mean_length =
                if wants_length(method) && !lens.is_empty() { lens.iter().sum::<f64>() / lens.len() as f64 } else { f64::NAN };
            report.rows.push(CoverageRow {
                method,
                level,
                coverage: if mine.is_empty() { f64::NAN } else { covered as f64 / mine.len() as f64 },
                mean_length,
            });
        }
    }

    let mut agree = 0usize;
    let mut total = 0usize;
    for rep in 0..spec.reps {
        let stats: Vec<f64> =
            report.replications.iter().filter(|r| r.rep == rep).map(|r| r.statistic).collect();
        if stats.len() != options.methods.len() {
            continue;
        }
        for &q in &thresholds {
            total += 1;
            let first = stats[0] <= q;
            if stats.iter().all(|&s| (s <= q) == first) {
                agree += 1;
            }
        }
    }
    report.agreement = if total == 0 { f64::NAN } else { agree as f64 / total as f64 };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRow {
    pub topology: String,
    pub d: usize,
    pub n: usize,
    pub algo: Algorithm,
    pub mean_iters: f64,
    /// Mean wall time of a whole run.
    pub mean_time_s: f64,
    /// Mean over runs of the median per-iteration update time.
    pub median_iter_time_s: f64,
    pub converged: usize,
    pub runs: usize,
}

pub const ITERATIONS_CSV_HEADER: &str = "topology,d,n,algo,mean_iters,mean_time_s";

pub fn iterations_csv(rows: &[IterationRow]) -> String {
    let mut s = String::from(ITERATIONS_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{:.2},{:.6}", r.topology, r.d, r.n, r.algo.name(), r.mean_iters, r.mean_time_s);
    }
    s
}

/// Runs PCM and MAOM over the topology × d × n grid; K, replications, seed
/// and solver settings come from `base`. Runs are sequential so that the
/// timings are not disturbed by other replications.
pub fn experiment_iterations(base: &ExperimentSpec, grid: &IterationGrid) -> Result<Vec<IterationRow>> {
    let mut rows = Vec::new();
    for &topology in &grid.topologies {
        for &d in &grid.dims {
            let family = EstimatingFunction::from_name(&grid.family, d, 0.05)?;
            for &n in &grid.ns {
                let spec = ExperimentSpec { family: family.clone(), n, topology, ..base.clone() };
                spec.validate()?;
                let config = spec.solver_config();
                let theta0 = true_theta(&family);
                let mut acc = [(0.0, 0.0, 0.0, 0usize); 2];
                for rep in 0..spec.reps {
                    let problem = Problem::new(spec.graph(rep)?, &spec.data(rep)?, &family, &theta0, None)?;
                    let reports = [run_pcm(&problem, &config)?.1, run_maom(&problem, &config, false)?.1];
                    for (a, rep) in acc.iter_mut().zip(&reports) {
                        a.0 += rep.iterations() as f64;
                        a.1 += rep.wall_time.as_secs_f64();
                        a.2 += rep.median_iteration_time().as_secs_f64();
                        a.3 += usize::from(rep.converged);
                    }
                }
                let runs = spec.reps as f64;
                for (algo, a) in [Algorithm::Pcm, Algorithm::Maom].into_iter().zip(acc) {
                    rows.push(IterationRow {
                        topology: topology.to_string(),
                        d,
                        n,
                        algo,
                        mean_iters: a.0 / runs,
                        mean_time_s: a.1 / runs,
                        median_iter_time_s: a.2 / runs,
                        converged: a.3,
                        runs: spec.reps,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoRow {
    pub rho: f64,
    pub multiplier: f64,
    pub algo: Algorithm,
    pub mean_iters: f64,
    pub converged: usize,
    pub runs: usize,
}

pub const RHO_CSV_HEADER: &str = "rho,algo,mean_iters";

pub fn rho_csv(rows: &[RhoRow]) -> String {
    let mut s = String::from(RHO_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{:.2}", r.rho, r.algo.name(), r.mean_iters);
    }
    s
}

/// Mean iterations of both algorithms for ρ = m·n over `multipliers`.
/// Runs that hit the iteration cap count with the cap.
pub fn experiment_rho_sweep(spec: &ExperimentSpec, multipliers: &[f64]) -> Result<Vec<RhoRow>> {
    spec.validate()?;
    let theta0 = true_theta(&spec.family);
    let problems: Vec<Problem> = (0..spec.reps)
        .map(|rep| Problem::new(spec.graph(rep)?, &spec.data(rep)?, &spec.family, &theta0, None))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &m in multipliers {
        let mut settings = spec.solver.clone();
        settings.rho_mult = m;
        let config = settings.to_config(spec.k, spec.n);
        config.validate()?;
        let counts: Vec<[(usize, bool); 2]> = problems
            .par_iter()
            .map(|p| {
                let a = run_pcm(p, &config)?.1;
                let b = run_maom(p, &config, false)?.1;
                Ok([(a.iterations(), a.converged), (b.iterations(), b.converged)])
            })
            .collect::<Result<_>>()?;
        for (idx, algo) in [Algorithm::Pcm, Algorithm::Maom].into_iter().enumerate() {
            let iters: usize = counts.iter().map(|c| c[idx].0).sum();
            rows.push(RhoRow {
                rho: config.rho,
                multiplier: m,
                algo,
                mean_iters: iters as f64 / spec.reps as f64,
                converged: counts.iter().filter(|c| c[idx].1).count(),
                runs: spec.reps,
            });
        }
    }
    Ok(rows)
}
