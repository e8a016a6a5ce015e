//! Pairwise copy method.
//!
//! Every edge (i, i') carries two copies `c_{i,i'}`, `c_{i',i}` of the
//! endpoint multipliers and two duals `v_{i,i'}`, `v_{i',i}`. One iteration
//! updates the copies in closed form, then each node's multiplier by a
//! small Newton solve, then the duals.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::admm::{
    observe, sum_sq, tolerance, Algorithm, IterationRecord, Problem, RunReport, SolverConfig,
};
use crate::el::{damped_newton, local_objective, local_value, Scores};
use crate::error::Result;
use crate::graph::Graph;

/// A pair of blocks attached to one edge: the lower endpoint's and the
/// upper endpoint's.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePair {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl EdgePair {
    pub fn zeros(r: usize) -> Self {
        Self { lower: DVector::zeros(r), upper: DVector::zeros(r) }
    }

    /// The block belonging to the given side.
    pub fn side(&self, lower: bool) -> &DVector<f64> {
        if lower {
            &self.lower
        } else {
            &self.upper
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcmState {
    pub lambdas: Vec<DVector<f64>>,
    /// `c_{i,i'}` (lower) and `c_{i',i}` (upper) per edge.
    pub copies: Vec<EdgePair>,
    /// `v_{i,i'}` (lower) and `v_{i',i}` (upper) per edge.
    pub duals: Vec<EdgePair>,
    pub iteration: usize,
    pub r1_norm: f64,
    pub s1_norm: f64,
}

impl PcmState {
    pub fn zeros(k: usize, m: usize, r: usize) -> Self {
        Self {
            lambdas: vec![DVector::zeros(r); k],
            copies: vec![EdgePair::zeros(r); m],
            duals: vec![EdgePair::zeros(r); m],
            iteration: 0,
            r1_norm: f64::INFINITY,
            s1_norm: f64::INFINITY,
        }
    }
}

/// `λ + ρ⁻¹ v`, the block an endpoint contributes to its edge update.
pub fn shifted_copy(lambda: &DVector<f64>, v: &DVector<f64>, rho: f64) -> DVector<f64> {
    lambda + v / rho
}

/// Closed-form edge minimizer from the shifted blocks `a = λ_i + ρ⁻¹v_{i,i'}`
/// and `b = λ_i' + ρ⁻¹v_{i',i}`.
///
/// `ω = max(1 − η/(ρ‖a − b‖), ½)`, with `ω = ½` when `a = b`.
pub fn edge_copies(a: &DVector<f64>, b: &DVector<f64>, rho: f64, eta: f64) -> (DVector<f64>, DVector<f64>) {
    let scaled = rho * (a - b).norm();
    let omega = if scaled > 0.0 { (1.0 - eta / scaled).max(0.5) } else { 0.5 };
    let c_lower = a * omega + b * (1.0 - omega);
    let c_upper = a * (1.0 - omega) + b * omega;
    (c_lower, c_upper)
}

/// Edge update written in terms of the endpoint multipliers and duals.
pub fn pcm_edge_update(
    lambda_i: &DVector<f64>,
    lambda_j: &DVector<f64>,
    v_ij: &DVector<f64>,
    v_ji: &DVector<f64>,
    rho: f64,
    eta: f64,
) -> (DVector<f64>, DVector<f64>) {
    edge_copies(&shifted_copy(lambda_i, v_ij, rho), &shifted_copy(lambda_j, v_ji, rho), rho, eta)
}

/// Node update: the minimizer of
/// `ℓ_i(λ) + Σ v_kᵀλ + (ρ/2) Σ ‖λ − c_k‖²` over the node's incident
/// `(v_k, c_k)` pairs, by damped Newton warm-started at `lambda_prev`.
pub fn pcm_node_update(
    scores: &Scores,
    eps: f64,
    lambda_prev: &DVector<f64>,
    incident: &[(&DVector<f64>, &DVector<f64>)],
    rho: f64,
    inner_tol: f64,
    inner_max_iter: usize,
) -> Result<DVector<f64>> {
    let r = lambda_prev.len();
    let deg = incident.len() as f64;
    let mut v_sum = DVector::zeros(r);
    let mut c_sum = DVector::zeros(r);
    for (v, c) in incident {
        v_sum += *v;
        c_sum += *c;
    }
    let tol = inner_tol * (1.0 + rho * deg);
    let out = damped_newton(
        lambda_prev.clone(),
        tol,
        inner_max_iter,
        |lam| {
            let lo = local_objective(scores, lam, eps)?;
            let value = lo.value + v_sum.dot(lam) + 0.5 * rho * (deg * lam.norm_squared() - 2.0 * c_sum.dot(lam));
            let grad = lo.grad + &v_sum + (lam * deg - &c_sum) * rho;
            let hess = lo.hess + DMatrix::identity(r, r) * (rho * deg);
            Ok((value, grad, hess))
        },
        |lam| {
            local_value(scores, lam, eps)
                + v_sum.dot(lam)
                + 0.5 * rho * (deg * lam.norm_squared() - 2.0 * c_sum.dot(lam))
        },
        "PCM node Newton",
    )?;
    Ok(out.x)
}

/// `v + ρ(λ − c)`.
pub fn pcm_dual_update(v: &DVector<f64>, lambda: &DVector<f64>, copy: &DVector<f64>, rho: f64) -> DVector<f64> {
    v + (lambda - copy) * rho
}

/// The node's incident `(v, c)` blocks in edge-id order.
pub(crate) fn node_incident<'a>(
    graph: &Graph,
    node: usize,
    duals: &'a [EdgePair],
    copies: &'a [EdgePair],
) -> Vec<(&'a DVector<f64>, &'a DVector<f64>)> {
    graph
        .incident(node)
        .iter()
        .map(|inc| (duals[inc.edge].side(inc.lower), copies[inc.edge].side(inc.lower)))
        .collect()
}

/// Residual norms and tolerances after an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcmResiduals {
    pub primal: f64,
    pub dual: f64,
    pub dual_textbook: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
}

impl PcmResiduals {
    pub(crate) fn parts(&self) -> (f64, f64, f64, f64, f64) {
        (self.primal, self.dual, self.dual_textbook, self.eps_pri, self.eps_dual)
    }
}

/// `r₁ = Ã_LR Λ − C`, `s₁ = ρ Ã_LRᵀ(V_prev − V)` and the textbook
/// `ρ Ã_LRᵀ(C − C_prev)`, with the absolute/relative tolerances.
pub fn pcm_residuals(
    graph: &Graph,
    config: &SolverConfig,
    lambdas: &[DVector<f64>],
    copies: &[EdgePair],
    duals: &[EdgePair],
    prev_copies: &[EdgePair],
    prev_duals: &[EdgePair],
) -> PcmResiduals {
    let r = lambdas[0].len();
    let (k, m) = (graph.node_count(), graph.edge_count());
    let primal = sum_sq(graph.edges().iter().enumerate().map(|(l, &(i, j))| {
        (&lambdas[i] - &copies[l].lower).norm_squared() + (&lambdas[j] - &copies[l].upper).norm_squared()
    }));
    let aggregate = |f: &dyn Fn(usize, bool) -> DVector<f64>| -> f64 {
        sum_sq((0..k).map(|i| {
            graph
                .incident(i)
                .iter()
                .fold(DVector::zeros(r), |acc, inc| acc + f(inc.edge, inc.lower))
                .norm_squared()
        }))
    };
    let dual = config.rho
        * aggregate(&|l, lower| prev_duals[l].side(lower) - duals[l].side(lower));
    let dual_textbook = config.rho
        * aggregate(&|l, lower| copies[l].side(lower) - prev_copies[l].side(lower));
    let v_norm = aggregate(&|l, lower| duals[l].side(lower).clone());
    let a_lambda = sum_sq((0..k).map(|i| graph.degree(i) as f64 * lambdas[i].norm_squared()));
    let c_norm = sum_sq(copies.iter().map(|c| c.lower.norm_squared() + c.upper.norm_squared()));
    PcmResiduals {
        primal,
        dual,
        dual_textbook,
        eps_pri: tolerance(config.eps_abs, config.eps_rel, 2 * m * r, a_lambda.max(c_norm)),
        eps_dual: tolerance(config.eps_abs, config.eps_rel, k * r, v_norm),
    }
}

/// Runs the pairwise copy method from zero initial values.
///
/// Hitting `max_iter` is not an error: the state is returned with
/// `report.converged == false`.
pub fn run_pcm(problem: &Problem, config: &SolverConfig) -> Result<(PcmState, RunReport)> {
    config.validate()?;
    let graph = &problem.graph;
    let (k, m, r) = (graph.node_count(), graph.edge_count(), problem.dim());
    let mut state = PcmState::zeros(k, m, r);
    let mut report = RunReport { algorithm: Some(Algorithm::Pcm), ..Default::default() };
    let wall = Instant::now();

    for it in 1..=config.max_iter {
        let start = Instant::now();
        let copies: Vec<EdgePair> = graph
            .edges()
            .par_iter()
            .enumerate()
            .map(|(l, &(i, j))| {
                let (lower, upper) = pcm_edge_update(
                    &state.lambdas[i],
                    &state.lambdas[j],
                    &state.duals[l].lower,
                    &state.duals[l].upper,
                    config.rho,
                    config.eta,
                );
                EdgePair { lower, upper }
            })
            .collect();

        let lambdas: Vec<DVector<f64>> = (0..k)
            .into_par_iter()
            .map(|i| {
                let incident = node_incident(graph, i, &state.duals, &copies);
                pcm_node_update(
                    &problem.scores[i],
                    problem.eps,
                    &state.lambdas[i],
                    &incident,
                    config.rho,
                    config.inner_tol,
                    config.inner_max_iter,
                )
            })
            .collect::<Result<_>>()?;

        let duals: Vec<EdgePair> = graph
            .edges()
            .par_iter()
            .enumerate()
            .map(|(l, &(i, j))| EdgePair {
                lower: pcm_dual_update(&state.duals[l].lower, &lambdas[i], &copies[l].lower, config.rho),
                upper: pcm_dual_update(&state.duals[l].upper, &lambdas[j], &copies[l].upper, config.rho),
            })
            .collect();
        let elapsed = start.elapsed();

        let res = pcm_residuals(graph, config, &lambdas, &copies, &duals, &state.copies, &state.duals);
        state.lambdas = lambdas;
        state.copies = copies;
        state.duals = duals;
        state.iteration = it;
        state.r1_norm = res.primal;
        state.s1_norm = res.dual;

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

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn large_eta_averages() {
        let (li, lj) = (v(&[0.1, -0.2]), v(&[0.3, 0.4]));
        let (vi, vj) = (v(&[1.0, 0.0]), v(&[-0.5, 2.0]));
        let rho = 2.0;
        let norm = (&li * rho - &lj * rho + &vi - &vj).norm();
        let (ci, cj) = pcm_edge_update(&li, &lj, &vi, &vj, rho, norm / 2.0);
        let a = &li + &vi / rho;
        let b = &lj + &vj / rho;
        let mid = (&a + &b) / 2.0;
        assert_relative_eq!(ci, mid, epsilon = 1e-15);
        assert_relative_eq!(cj, mid, epsilon = 1e-15);
    }

    #[test]
    fn equal_inputs_give_lambda() {
        let l = v(&[0.3, -0.1, 0.7]);
        let z = DVector::zeros(3);
        let (ci, cj) = pcm_edge_update(&l, &l, &z, &z, 5.0, 1.0);
        assert_eq!(ci, l);
        assert_eq!(cj, l);
    }

    #[test]
    fn small_eta_keeps_copies_apart() {
        let (a, b) = (v(&[1.0, 0.0]), v(&[0.0, 0.0]));
        let (ci, cj) = edge_copies(&a, &b, 1.0, 0.25);
        // ω = 1 − 0.25/1 = 0.75
        assert_relative_eq!(ci, v(&[0.75, 0.0]));
        assert_relative_eq!(cj, v(&[0.25, 0.0]));
    }

    #[test]
    fn dual_update_examples() {
        let vv = v(&[0.5, -1.0]);
        let l = v(&[0.2, 0.3]);
        assert_eq!(pcm_dual_update(&vv, &l, &l, 3.0), vv);
        let out = pcm_dual_update(&DVector::zeros(2), &v(&[1.0, 0.0]), &DVector::zeros(2), 1.0);
        assert_eq!(out, v(&[1.0, 0.0]));
    }

    #[test]
    fn empty_node_update_is_linear_solve() {
        let scores = Scores::from_values(2, vec![]);
        let (v1, c1) = (v(&[1.0, 2.0]), v(&[0.3, 0.1]));
        let (v2, c2) = (v(&[-0.5, 0.0]), v(&[0.5, -0.3]));
        let rho = 4.0;
        let out = pcm_node_update(&scores, 0.1, &DVector::zeros(2), &[(&v1, &c1), (&v2, &c2)], rho, 1e-12, 50).unwrap();
        let expect = (&c1 + &c2) / 2.0 - (&v1 + &v2) / (rho * 2.0);
        assert_relative_eq!(out, expect, epsilon = 1e-14);
    }

    #[test]
    fn node_update_satisfies_first_order_condition() {
        let scores = Scores::from_values(2, vec![0.4, -1.0, -0.8, 0.2, 1.3, 0.5, -0.2, -0.6, 0.1, 0.9]);
        let (v1, c1) = (v(&[2.0, -1.0]), v(&[0.05, 0.02]));
        let (v2, c2) = (v(&[-0.3, 0.7]), v(&[-0.04, 0.01]));
        let (rho, eps) = (5.0, 0.1);
        let lam = pcm_node_update(&scores, eps, &DVector::zeros(2), &[(&v1, &c1), (&v2, &c2)], rho, 1e-10, 50).unwrap();
        let lo = local_objective(&scores, &lam, eps).unwrap();
        let resid = lo.grad + &v1 + &v2 + ((&lam - &c1) + (&lam - &c2)) * rho;
        assert!(resid.norm() < 1e-9, "{}", resid.norm());
    }
}
