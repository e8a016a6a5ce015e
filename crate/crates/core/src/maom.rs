//! Modified approximation objective method.
//!
//! One difference variable `z_{ii'}` and one dual `t_{ii'}` per edge. The
//! Λ-step replaces Σℓ_i by its second-order expansion at Λ⁽ᵗ⁾ plus the
//! proximal term ½‖Λ − Λ⁽ᵗ⁾‖²_Q with `Q = D − ρL⊗I_r`,
//! `D = diag(2ρ|N_i| + 1)⊗I_r`. The choice of `Q` cancels the coupling
//! `ρÃᵀÃ`, so each node solves one r×r system per iteration.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::admm::{
    observe, sum_sq, tolerance, Algorithm, IterationRecord, Problem, RunReport, SolverConfig,
};
use crate::el::{local_objective, Scores};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq)]
pub struct MaomState {
    pub lambdas: Vec<DVector<f64>>,
    /// `z_{ii'}` per edge.
    pub z: Vec<DVector<f64>>,
    /// `t_{ii'}` per edge.
    pub t: Vec<DVector<f64>>,
    pub iteration: usize,
    pub r2_norm: f64,
    pub s2_norm: f64,
}

impl MaomState {
    pub fn zeros(k: usize, m: usize, r: usize) -> Self {
        Self {
            lambdas: vec![DVector::zeros(r); k],
            z: vec![DVector::zeros(r); m],
            t: vec![DVector::zeros(r); m],
            iteration: 0,
            r2_norm: f64::INFINITY,
            s2_norm: f64::INFINITY,
        }
    }
}

/// Per-node proximal weights `d_i = 2ρ|N_i| + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxMatrix {
    pub rho: f64,
    pub d: Vec<f64>,
}

impl ProxMatrix {
    pub fn new(graph: &Graph, rho: f64) -> Self {
        let d = graph.degrees().into_iter().map(|deg| 2.0 * rho * deg as f64 + 1.0).collect();
        Self { rho, d }
    }

    /// Dense `D − ρL` (K×K); the r-fold Kronecker factor does not change
    /// the spectrum. For checking only.
    pub fn dense(&self, graph: &Graph) -> DMatrix<f64> {
        let l = graph.incidence().laplacian;
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.d)) - l * self.rho
    }

    pub fn min_eigenvalue(&self, graph: &Graph) -> f64 {
        self.dense(graph).symmetric_eigen().eigenvalues.min()
    }
}

/// Group soft-thresholding `(1 − t/‖h‖₂)₊ h`.
pub fn soft_threshold(h: &DVector<f64>, t: f64) -> DVector<f64> {
    let n = h.norm();
    if n <= t {
        DVector::zeros(h.len())
    } else {
        h * (1.0 - t / n)
    }
}

/// `z = S(λ_i − λ_i' + ρ⁻¹t, ρ⁻¹η)`.
pub fn maom_z_update(
    lambda_i: &DVector<f64>,
    lambda_j: &DVector<f64>,
    t: &DVector<f64>,
    rho: f64,
    eta: f64,
) -> DVector<f64> {
    soft_threshold(&(lambda_i - lambda_j + t / rho), eta / rho)
}

/// One incident edge as seen from a node during the Λ-step.
#[derive(Debug, Clone, Copy)]
pub struct MaomNeighbor<'a> {
    pub lambda: &'a DVector<f64>,
    pub z: &'a DVector<f64>,
    pub t: &'a DVector<f64>,
    /// Node is the lower endpoint, so the edge enters with sign +1.
    pub lower: bool,
}

/// Closed-form Λ-step for one node:
///
/// `λ⁺ = [H + (2ρ|N|+1)I]⁻¹ ([H + (ρ|N|+1)I]λ + ρΣλ_i' ± Σ(ρz − t) − ∇ℓ_i)`
///
/// with `H = ∇²ℓ_i(λ)` and the sign of each edge term taken from the
/// node's side of the incidence row.
pub fn maom_node_update(
    scores: &Scores,
    eps: f64,
    lambda: &DVector<f64>,
    neighbors: &[MaomNeighbor<'_>],
    rho: f64,
) -> Result<DVector<f64>> {
    let r = lambda.len();
    let deg = neighbors.len() as f64;
    let lo = local_objective(scores, lambda, eps)?;
    let mut rhs = (&lo.hess + DMatrix::identity(r, r) * (rho * deg + 1.0)) * lambda - &lo.grad;
    for nb in neighbors {
        rhs += nb.lambda * rho;
        let edge_term = nb.z * rho - nb.t;
        if nb.lower {
            rhs += edge_term;
        } else {
            rhs -= edge_term;
        }
    }
    let system = lo.hess + DMatrix::identity(r, r) * (2.0 * rho * deg + 1.0);
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::SolveFailed("MAOM node system is not positive definite".into()))?;
    let out = chol.solve(&rhs);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MAOM node update"));
    }
    Ok(out)
}

/// `t + ρ(λ_i − λ_i' − z)`.
pub fn maom_dual_update(
    t: &DVector<f64>,
    lambda_i: &DVector<f64>,
    lambda_j: &DVector<f64>,
    z: &DVector<f64>,
    rho: f64,
) -> DVector<f64> {
    t + (lambda_i - lambda_j - z) * rho
}

pub(crate) fn node_neighbors<'a>(
    graph: &Graph,
    node: usize,
    lambdas: &'a [DVector<f64>],
    z: &'a [DVector<f64>],
    t: &'a [DVector<f64>],
) -> Vec<MaomNeighbor<'a>> {
    graph
        .incident(node)
        .iter()
        .map(|inc| MaomNeighbor { lambda: &lambdas[inc.other], z: &z[inc.edge], t: &t[inc.edge], lower: inc.lower })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaomResiduals {
    pub primal: f64,
    pub dual: f64,
    pub dual_textbook: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
}

impl MaomResiduals {
    pub(crate) fn parts(&self) -> (f64, f64, f64, f64, f64) {
        (self.primal, self.dual, self.dual_textbook, self.eps_pri, self.eps_dual)
    }
}

/// `r₂ = ÃΛ − Z`, `s₂ = ρÃᵀ(T_prev − T)` and the textbook `ρÃᵀ(Z − Z_prev)`.
pub fn maom_residuals(
    graph: &Graph,
    config: &SolverConfig,
    lambdas: &[DVector<f64>],
    z: &[DVector<f64>],
    t: &[DVector<f64>],
    prev_z: &[DVector<f64>],
    prev_t: &[DVector<f64>],
) -> MaomResiduals {
    let r = lambdas[0].len();
    let (k, m) = (graph.node_count(), graph.edge_count());
    let primal = sum_sq(
        graph.edges().iter().enumerate().map(|(l, &(i, j))| (&lambdas[i] - &lambdas[j] - &z[l]).norm_squared()),
    );
    let aggregate = |f: &dyn Fn(usize) -> DVector<f64>| -> f64 {
        sum_sq((0..k).map(|i| {
            graph
                .incident(i)
                .iter()
                .fold(DVector::zeros(r), |acc, inc| if inc.lower { acc + f(inc.edge) } else { acc - f(inc.edge) })
                .norm_squared()
        }))
    };
    let dual = config.rho * aggregate(&|l| &prev_t[l] - &t[l]);
    let dual_textbook = config.rho * aggregate(&|l| &z[l] - &prev_z[l]);
    let t_norm = aggregate(&|l| t[l].clone());
    let a_lambda = sum_sq(graph.edges().iter().map(|&(i, j)| (&lambdas[i] - &lambdas[j]).norm_squared()));
    let z_norm = sum_sq(z.iter().map(DVector::norm_squared));
    MaomResiduals {
        primal,
        dual,
        dual_textbook,
        eps_pri: tolerance(config.eps_abs, config.eps_rel, m * r, a_lambda.max(z_norm)),
        eps_dual: tolerance(config.eps_abs, config.eps_rel, k * r, t_norm),
    }
}

/// Runs MAOM from zero initial values, optionally on the BFS spanning tree
/// of the problem graph.
pub fn run_maom(problem: &Problem, config: &SolverConfig, use_spanning_tree: bool) -> Result<(MaomState, RunReport)> {
    if use_spanning_tree {
        let tree = problem.with_graph(problem.graph.spanning_tree()?)?;
        return run_maom_on(&tree, config);
    }
    run_maom_on(problem, config)
}

fn run_maom_on(problem: &Problem, config: &SolverConfig) -> Result<(MaomState, RunReport)> {
    config.validate()?;
    let graph = &problem.graph;
    let (k, m, r) = (graph.node_count(), graph.edge_count(), problem.dim());
    let mut state = MaomState::zeros(k, m, r);
    let mut report = RunReport { algorithm: Some(Algorithm::Maom), ..Default::default() };
    let wall = Instant::now();

    for it in 1..=config.max_iter {
        let start = Instant::now();
        let z: Vec<DVector<f64>> = graph
            .edges()
            .par_iter()
            .enumerate()
            .map(|(l, &(i, j))| maom_z_update(&state.lambdas[i], &state.lambdas[j], &state.t[l], config.rho, config.eta))
            .collect();

        let lambdas: Vec<DVector<f64>> = (0..k)
            .into_par_iter()
            .map(|i| {
                let nbrs = node_neighbors(graph, i, &state.lambdas, &z, &state.t);
                maom_node_update(&problem.scores[i], problem.eps, &state.lambdas[i], &nbrs, config.rho)
            })
            .collect::<Result<_>>()?;

        let t: Vec<DVector<f64>> = graph
            .edges()
            .par_iter()
            .enumerate()
            .map(|(l, &(i, j))| maom_dual_update(&state.t[l], &lambdas[i], &lambdas[j], &z[l], config.rho))
            .collect();
        let elapsed = start.elapsed();

        let res = maom_residuals(graph, config, &lambdas, &z, &t, &state.z, &state.t);
        state.lambdas = lambdas;
        state.z = z;
        state.t = t;
        state.iteration = it;
        state.r2_norm = res.primal;
        state.s2_norm = res.dual;

        report.records.push(observe(it, res.parts(), problem, config, &state.lambdas, elapsed));
        if config.record_lambdas {
            report.lambda_trajectory.push(state.lambdas.clone());
        }
        if report.records.last().is_some_and(IterationRecord::converged) {
            report.converged = true;
            break;
        }
    }
    report.wall_time = wall.elapsed();
    Ok((state, report))
}
