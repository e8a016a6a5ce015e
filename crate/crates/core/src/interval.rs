//! EL ratio tests and profile confidence intervals, with the statistic
//! evaluated by the pooled reference solver or by either ADMM scheme.

use crate::admm::{Algorithm, Problem, RunReport, SolverConfig};
use crate::chisq::{chisq_quantile, chisq_sf};
use crate::el::{el_statistic, point_estimate, solve_reference, NodeDataset};
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::graph::Graph;
use crate::maom::run_maom;
use crate::pcm::run_pcm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Solver {
    Reference,
    Pcm,
    Maom,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::Reference, Solver::Pcm, Solver::Maom];

    pub fn name(self) -> &'static str {
        match self {
            Self::Reference => "el",
            Self::Pcm => "pcm",
            Self::Maom => "maom",
        }
    }
}

impl From<Algorithm> for Solver {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::Pcm => Self::Pcm,
            Algorithm::Maom => Self::Maom,
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "el" | "reference" => Ok(Self::Reference),
            "pcm" => Ok(Self::Pcm),
            "maom" => Ok(Self::Maom),
            _ => Err(Error::InvalidArgument(format!("unknown solver '{s}' (el, pcm, maom)"))),
        }
    }
}

/// Outcome of one EL ratio evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub statistic: f64,
    /// ADMM iterations; 0 for the reference solver.
    pub iterations: usize,
    pub converged: bool,
}

/// The EL ratio statistic at `theta` on `graph`.
///
/// `config` defaults to [`SolverConfig::for_problem`].
pub fn evaluate(
    solver: Solver,
    graph: &Graph,
    data: &[NodeDataset],
    ef: &EstimatingFunction,
    theta: &[f64],
    config: Option<&SolverConfig>,
) -> Result<Evaluation> {
    let problem = Problem::new(graph.clone(), data, ef, theta, None)?;
    evaluate_problem(solver, &problem, config)
}

pub fn evaluate_problem(solver: Solver, problem: &Problem, config: Option<&SolverConfig>) -> Result<Evaluation> {
    Ok(solve_problem(solver, problem, config)?.0)
}

/// Like [`evaluate_problem`], also returning the ADMM run report.
pub fn solve_problem(
    solver: Solver,
    problem: &Problem,
    config: Option<&SolverConfig>,
) -> Result<(Evaluation, Option<RunReport>)> {
    let default;
    let config = match config {
        Some(c) => c,
        None => {
            default = SolverConfig::for_problem(problem);
            &default
        }
    };
    let (lambdas, report) = match solver {
        Solver::Reference => {
            let sol = solve_reference(&problem.scores, problem.eps)?;
            return Ok((Evaluation { statistic: sol.statistic(), iterations: 0, converged: true }, None));
        }
        Solver::Pcm => {
            let (s, r) = run_pcm(problem, config)?;
            (s.lambdas, r)
        }
        Solver::Maom => {
            let (s, r) = run_maom(problem, config, false)?;
            (s.lambdas, r)
        }
    };
    let eval = Evaluation {
        statistic: el_statistic(&lambdas, &problem.scores, problem.eps),
        iterations: report.iterations(),
        converged: report.converged,
    };
    Ok((eval, Some(report)))
}

/// Test of H₀: θ = `theta` at the given level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub threshold: f64,
    pub reject: bool,
}

pub fn el_test(evaluation: &Evaluation, dof: usize, level: f64) -> Result<TestOutcome> {
    let threshold = chisq_quantile(dof, level)?;
    Ok(TestOutcome {
        statistic: evaluation.statistic,
        dof,
        p_value: chisq_sf(evaluation.statistic.max(0.0), dof),
        threshold,
        reject: evaluation.statistic > threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileInterval {
    pub component: usize,
    pub level: f64,
    pub threshold: f64,
    pub estimate: f64,
    /// `None` when no crossing was found within the scan range.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Distinct statistic evaluations spent (shared across levels when
    /// computed together).
    pub evaluations: usize,
}

impl ProfileInterval {
    pub fn length(&self) -> Option<f64> {
        Some(self.upper? - self.lower?)
    }

    pub fn contains(&self, x: f64) -> Option<bool> {
        Some(self.lower? <= x && x <= self.upper?)
    }
}

/// Scan and bisection controls for [`profile_interval`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions {
    /// First outward step, relative to `max(|θ̂_j|, 1)`.
    pub initial_step: f64,
    pub max_doublings: usize,
    /// Bisection stops when the bracket is narrower than
    /// `x_tol · max(|θ̂_j|, 1)`.
    pub x_tol: f64,
    pub solver_config: Option<SolverConfig>,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { initial_step: 0.01, max_doublings: 40, x_tol: 1e-6, solver_config: None }
    }
}

/// Confidence interval for component `component` of θ: the set where the
/// EL ratio statistic stays below the χ²₁ quantile. The other components
/// are held at the pooled point estimate.
#[allow(clippy::too_many_arguments)]
pub fn profile_interval(
    ef: &EstimatingFunction,
    graph: &Graph,
    data: &[NodeDataset],
    component: usize,
    level: f64,
    solver: Solver,
    start: &[f64],
    options: &ProfileOptions,
) -> Result<ProfileInterval> {
    let mut out = profile_intervals(ef, graph, data, component, &[level], solver, start, options)?;
    Ok(out.remove(0))
}

/// [`profile_interval`] at several levels, sharing statistic evaluations
/// between them.
#[allow(clippy::too_many_arguments)]
pub fn profile_intervals(
    ef: &EstimatingFunction,
    graph: &Graph,
    data: &[NodeDataset],
    component: usize,
    levels: &[f64],
    solver: Solver,
    start: &[f64],
    options: &ProfileOptions,
) -> Result<Vec<ProfileInterval>> {
    let p = ef.dims().param;
    if component >= p {
        return Err(Error::InvalidArgument(format!("component {component} out of range for p = {p}")));
    }
    let theta_hat = point_estimate(ef, data, start)?;
    let centre = theta_hat[component];
    let scale = centre.abs().max(1.0);
    let mut memo: Vec<(f64, f64)> = Vec::new();
    let mut stat = |x: f64| -> Result<f64> {
        if let Some(&(_, v)) = memo.iter().find(|(y, _)| *y == x) {
            return Ok(v);
        }
        let mut theta = theta_hat.clone();
        theta[component] = x;
        let problem = Problem::new(graph.clone(), data, ef, &theta, None)?;
        let v = evaluate_problem(solver, &problem, options.solver_config.as_ref())?.statistic;
        memo.push((x, v));
        Ok(v)
    };

    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        let threshold = chisq_quantile(1, level)?;
        let mut ends = [None, None];
        for (slot, dir) in ends.iter_mut().zip([-1.0, 1.0]) {
            let mut inside = centre;
            let mut step = options.initial_step * scale;
            let mut outside = None;
            for _ in 0..=options.max_doublings {
                let x = centre + dir * step;
                if stat(x)? > threshold {
                    outside = Some(x);
                    break;
                }
                inside = x;
                step *= 2.0;
            }
            let Some(mut far) = outside else { continue };
            while (far - inside).abs() > options.x_tol * scale {
                let mid = 0.5 * (inside + far);
                if stat(mid)? > threshold {
                    far = mid;
                } else {
                    inside = mid;
                }
            }
            *slot = Some(0.5 * (inside + far));
        }
        out.push(ProfileInterval {
            component,
            level,
            threshold,
            estimate: centre,
            lower: ends[0],
            upper: ends[1],
            evaluations: 0,
        });
    }
    let evaluations = memo.len();
    for ci in &mut out {
        ci.evaluations = evaluations;
    }
    Ok(out)
}
