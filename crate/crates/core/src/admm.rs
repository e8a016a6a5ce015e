//! Pieces shared by the two ADMM solvers: the problem instance, solver
//! settings, stopping tolerances and the per-run report.

use std::fmt::Write as _;
use std::time::Duration;

use nalgebra::DVector;

use crate::el::{default_eps, node_scores, NodeDataset, Scores};
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::graph::Graph;

/// A multiplier problem at fixed θ: the graph plus each node's scores.
#[derive(Debug, Clone)]
pub struct Problem {
    pub graph: Graph,
    pub scores: Vec<Scores>,
    /// Pseudo-log switch point.
    pub eps: f64,
}

impl Problem {
    /// Evaluates the scores at θ; `eps` defaults to 1/N.
    pub fn new(
        graph: Graph,
        data: &[NodeDataset],
        ef: &EstimatingFunction,
        theta: &[f64],
        eps: Option<f64>,
    ) -> Result<Self> {
        if data.len() != graph.node_count() {
            return Err(Error::DimensionMismatch { expected: graph.node_count(), got: data.len() });
        }
        let scores = node_scores(data, ef, theta)?;
        let total = scores.iter().map(Scores::len).sum();
        Self::from_scores(graph, scores, eps.unwrap_or_else(|| default_eps(total)))
    }

    pub fn from_scores(graph: Graph, scores: Vec<Scores>, eps: f64) -> Result<Self> {
        if scores.len() != graph.node_count() {
            return Err(Error::DimensionMismatch { expected: graph.node_count(), got: scores.len() });
        }
        let r = scores[0].dim();
        if let Some(bad) = scores.iter().find(|s| s.dim() != r) {
            return Err(Error::DimensionMismatch { expected: r, got: bad.dim() });
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("pseudo-log eps must be positive, got {eps}")));
        }
        Ok(Self { graph, scores, eps })
    }

    pub fn dim(&self) -> usize {
        self.scores[0].dim()
    }

    pub fn total_samples(&self) -> usize {
        self.scores.iter().map(Scores::len).sum()
    }

    /// Same scores on a different graph over the same nodes.
    pub fn with_graph(&self, graph: Graph) -> Result<Self> {
        Self::from_scores(graph, self.scores.clone(), self.eps)
    }
}

/// Choice of the fusion weight η_n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    /// η_n = N².
    Strict,
    /// η_n = K √(n log K) · log n, for θ near θ₀.
    Relaxed,
    Fixed(f64),
}

impl EtaRule {
    pub fn value(self, k: usize, n: usize) -> f64 {
        let (kf, nf) = (k as f64, n as f64);
        match self {
            Self::Strict => (kf * nf).powi(2),
            Self::Relaxed => kf * (nf * kf.max(2.0).ln()).sqrt() * nf.max(2.0).ln(),
            Self::Fixed(v) => v,
        }
    }
}

impl std::str::FromStr for EtaRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Self::Strict),
            "relaxed" => Ok(Self::Relaxed),
            v => v
                .parse()
                .map(Self::Fixed)
                .map_err(|_| Error::Parse(format!("eta must be strict, relaxed or a number, got '{v}'"))),
        }
    }
}

/// ADMM settings shared by PCM and MAOM.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Augmented-Lagrangian penalty ρ.
    pub rho: f64,
    /// Fusion weight η_n.
    pub eta: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    /// PCM inner Newton tolerance is `inner_tol * (1 + ρ|N_i|)`.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Evaluate −Σℓ_i(λ_i) after every iteration (observer side, untimed).
    pub track_statistic: bool,
    /// Keep a copy of Λ after every iteration.
    pub record_lambdas: bool,
}

impl SolverConfig {
    /// Defaults for K nodes holding n samples each: ρ = n, η_n = N².
    pub fn for_sizes(k: usize, n: usize) -> Self {
        Self {
            rho: n as f64,
            eta: EtaRule::Strict.value(k, n),
            eps_abs: 1e-8,
            eps_rel: 1e-7,
            max_iter: 10_000,
            inner_tol: 1e-10,
            inner_max_iter: 50,
            track_statistic: true,
            record_lambdas: false,
        }
    }

    /// Defaults for a problem, using its average node size.
    pub fn for_problem(p: &Problem) -> Self {
        let k = p.graph.node_count();
        Self::for_sizes(k, (p.total_samples() / k).max(1))
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("eta", self.eta),
            ("eps_abs", self.eps_abs),
            ("eps_rel", self.eps_rel),
            ("inner_tol", self.inner_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::InvalidArgument("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Which solver produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Pcm,
    Maom,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pcm => "pcm",
            Self::Maom => "maom",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm" => Ok(Self::Pcm),
            "maom" => Ok(Self::Maom),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm '{s}'"))),
        }
    }
}

/// Observer-side diagnostics for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    /// ρ Aᵀ(edge variable change), the textbook dual residual.
    pub dual_textbook: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
    pub consensus_gap: f64,
    /// −Σℓ_i(λ_i); NaN when not tracked.
    pub statistic: f64,
    /// Time spent in the update phases only.
    pub elapsed: Duration,
}

/// Per-run log. Residual norms are computed by an omniscient observer,
/// not by the nodes themselves.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub algorithm: Option<Algorithm>,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub wall_time: Duration,
    pub lambda_trajectory: Vec<Vec<DVector<f64>>>,
}

impl RunReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Median of the per-iteration update times.
    pub fn median_iteration_time(&self) -> Duration {
        let mut times: Vec<Duration> = self.records.iter().map(|r| r.elapsed).collect();
        if times.is_empty() {
            return Duration::ZERO;
        }
        times.sort_unstable();
        let m = times.len() / 2;
        if times.len() % 2 == 1 {
            times[m]
        } else {
            (times[m - 1] + times[m]) / 2
        }
    }

    pub const CSV_HEADER: &'static str = "iter,primal_residual,dual_residual,consensus_gap,statistic";

    /// Rows `iter, ‖r‖, ‖s‖, consensus gap, statistic`; residuals are
    /// observer-only quantities.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{},{:e},{:e},{:e},{}", r.iter, r.primal, r.dual, r.consensus_gap, r.statistic);
        }
        s
    }
}

/// ADMM stopping tolerance `ε_abs √dim + ε_rel · scale`.
pub fn tolerance(eps_abs: f64, eps_rel: f64, dim: usize, scale: f64) -> f64 {
    eps_abs * (dim as f64).sqrt() + eps_rel * scale
}

/// max over edges of ‖λ_i − λ_i'‖₂.
pub fn consensus_gap(graph: &Graph, lambdas: &[DVector<f64>]) -> f64 {
    graph
        .edges()
        .iter()
        .map(|&(i, j)| (&lambdas[i] - &lambdas[j]).norm())
        .fold(0.0, f64::max)
}

/// ‖Λ − 1⊗λ‖₂.
pub fn distance_to_consensus(lambdas: &[DVector<f64>], target: &DVector<f64>) -> f64 {
    lambdas.iter().map(|l| (l - target).norm_squared()).sum::<f64>().sqrt()
}

/// max_i ‖λ_i − λ‖∞.
pub fn max_abs_deviation(lambdas: &[DVector<f64>], target: &DVector<f64>) -> f64 {
    lambdas.iter().map(|l| (l - target).amax()).fold(0.0, f64::max)
}

/// Builds the observer-side record for one finished iteration.
#[allow(clippy::too_many_arguments)]
pub(crate) fn observe(
    iter: usize,
    (primal, dual, dual_textbook, eps_pri, eps_dual): (f64, f64, f64, f64, f64),
    problem: &Problem,
    config: &SolverConfig,
    lambdas: &[DVector<f64>],
    elapsed: Duration,
) -> IterationRecord {
    IterationRecord {
        iter,
        primal,
        dual,
        dual_textbook,
        eps_pri,
        eps_dual,
        consensus_gap: consensus_gap(&problem.graph, lambdas),
        statistic: if config.track_statistic {
            crate::el::el_statistic(lambdas, &problem.scores, problem.eps)
        } else {
            f64::NAN
        },
        elapsed,
    }
}

impl IterationRecord {
    pub fn converged(&self) -> bool {
        self.primal <= self.eps_pri && self.dual <= self.eps_dual
    }
}

pub(crate) fn sum_sq(blocks: impl IntoIterator<Item = f64>) -> f64 {
    blocks.into_iter().sum::<f64>().sqrt()
}
