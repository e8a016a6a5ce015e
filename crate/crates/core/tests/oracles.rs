//! Cross-checks against independent implementations.

mod common;

use decentral_el::admm::max_abs_deviation;
use decentral_el::chisq::{chisq_cdf, chisq_quantile, chisq_sf};
use decentral_el::data::{generate_data, substream, true_theta};
use decentral_el::el::{local_objective, local_value, point_estimate};
use decentral_el::maom::{maom_node_update, run_maom, MaomNeighbor};
use decentral_el::{gen_erdos_renyi, log_star, solve_reference, EstimatingFunction, Problem, Scores, SolverConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn chisq_matches_statrs() {
    for dof in 1..=12 {
        let dist = ChiSquared::new(dof as f64).unwrap();
        for i in 1..200 {
            let x = i as f64 * 0.15;
            assert!((chisq_cdf(x, dof) - dist.cdf(x)).abs() < 1e-12, "cdf dof={dof} x={x}");
            assert!((chisq_sf(x, dof) - dist.sf(x)).abs() < 1e-12, "sf dof={dof} x={x}");
        }
        for level in [0.5, 0.9, 0.95, 0.99, 0.999] {
            let q = chisq_quantile(dof, level).unwrap();
            let want = dist.inverse_cdf(level);
            assert!((q - want).abs() < 1e-8 * want, "quantile dof={dof} level={level}: {q} vs {want}");
        }
    }
}

fn smooth_families() -> Vec<EstimatingFunction> {
    vec![
        EstimatingFunction::linear(3).unwrap(),
        EstimatingFunction::logistic(2).unwrap(),
        EstimatingFunction::mean(4).unwrap(),
        EstimatingFunction::repeated(),
    ]
}

#[test]
fn jacobians_match_finite_differences() {
    let mut rng = substream(21, 0);
    for ef in smooth_families() {
        let data = generate_data(&ef, 1, 20, &mut rng).unwrap();
        let p = ef.dims().param;
        let theta: Vec<f64> = true_theta(&ef).iter().map(|t| t + rng.random_range(-0.3..0.3)).collect();
        for x in data[0].rows() {
            let jac = ef.jacobian(x, &theta);
            for b in 0..p {
                let h = 1e-6;
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[b] += h;
                dn[b] -= h;
                let (gu, gd) = (ef.eval(x, &up).unwrap(), ef.eval(x, &dn).unwrap());
                for a in 0..gu.len() {
                    let fd = (gu[a] - gd[a]) / (2.0 * h);
                    assert!((fd - jac[(a, b)]).abs() < 1e-6 * (1.0 + fd.abs()), "{} ({a},{b})", ef.name());
                }
            }
        }
    }
}

/// Gradient and Hessian of −2Σ log*(1 + λᵀg) written out directly.
fn direct_derivatives(scores: &Scores, lambda: &DVector<f64>, eps: f64) -> (DVector<f64>, DMatrix<f64>) {
    let r = lambda.len();
    let mut grad = DVector::zeros(r);
    let mut hess = DMatrix::zeros(r, r);
    for row in scores.rows() {
        let g = DVector::from_column_slice(row);
        let (_, d1, d2) = log_star(1.0 + lambda.dot(&g), eps);
        grad -= &g * (2.0 * d1);
        hess -= &g * g.transpose() * (2.0 * d2);
    }
    (grad, hess)
}

#[test]
fn local_objective_derivatives() {
    let mut rng = substream(22, 0);
    for ef in smooth_families() {
        let data = generate_data(&ef, 1, 60, &mut rng).unwrap();
        let scores = Scores::compute(&data[0], &ef, &true_theta(&ef)).unwrap();
        let r = scores.dim();
        // Large enough that some points fall on the quadratic branch.
        let lambda = DVector::from_fn(r, |_, _| rng.random_range(-0.8..0.8));
        let eps = 0.05;
        let lo = local_objective(&scores, &lambda, eps).unwrap();
        let (grad, hess) = direct_derivatives(&scores, &lambda, eps);
        assert!((&lo.grad - &grad).amax() < 1e-9 * (1.0 + grad.amax()));
        assert!((&lo.hess - &hess).amax() < 1e-9 * (1.0 + hess.amax()));
        for a in 0..r {
            let h = 1e-6;
            let mut e = DVector::zeros(r);
            e[a] = h;
            let fd = (local_value(&scores, &(&lambda + &e), eps) - local_value(&scores, &(&lambda - &e), eps)) / (2.0 * h);
            assert!((fd - lo.grad[a]).abs() < 1e-5 * (1.0 + fd.abs()), "{} grad[{a}]", ef.name());
        }
    }
}

#[test]
fn erdos_renyi_mean_edge_count() {
    // Conditioning on connectivity shifts the mean slightly above p·K(K−1)/2 = 57.
    let total: usize = (0..1000).map(|s| gen_erdos_renyi(20, 0.3, s).unwrap().edge_count()).sum();
    let mean = total as f64 / 1000.0;
    assert!((mean - 57.0).abs() < 3.0, "mean edges {mean}");
}

#[test]
fn logistic_estimate_is_unbiased() {
    let ef = EstimatingFunction::logistic(2).unwrap();
    let theta0 = true_theta(&ef);
    let reps = 40;
    let mut sum = vec![0.0; 2];
    let mut sq = vec![0.0; 2];
    for rep in 0..reps {
        let data = generate_data(&ef, 4, 250, &mut substream(23, rep)).unwrap();
        let est = point_estimate(&ef, &data, &[0.0, 0.0]).unwrap();
        for j in 0..2 {
            sum[j] += est[j] - theta0[j];
            sq[j] += (est[j] - theta0[j]).powi(2);
        }
    }
    for j in 0..2 {
        let bias = sum[j] / reps as f64;
        let se = (sq[j] / reps as f64 - bias * bias).sqrt() / (reps as f64).sqrt();
        assert!(bias.abs() < 4.0 * se + 1e-3, "component {j}: bias {bias}, se {se}");
    }
}

/// One linearized step over the whole network as a dense (Kr)×(Kr) solve:
/// `(H + D)Λ⁺ = (H + D − ρL)Λ − ∇ℓ + Aᵀ(ρz − t)`.
#[test]
fn maom_node_step_matches_global_system() {
    let ef = EstimatingFunction::mean(2).unwrap();
    let g = gen_erdos_renyi(7, 0.5, 24).unwrap();
    let (k, m, r) = (7, g.edge_count(), 2);
    let data = generate_data(&ef, k, 40, &mut substream(24, 0)).unwrap();
    let p = Problem::new(g.clone(), &data, &ef, &[0.1, -0.1], None).unwrap();
    let mut rng = substream(24, 1);
    let mut vecs = |n: usize, s: f64| -> Vec<DVector<f64>> {
        (0..n).map(|_| DVector::from_fn(r, |_, _| s * rng.random_range(-1.0..1.0))).collect()
    };
    let lambdas = vecs(k, 0.05);
    let z = vecs(m, 0.02);
    let t = vecs(m, 1.0);
    let rho = 3.0;

    let kr = k * r;
    let mut h = DMatrix::zeros(kr, kr);
    let mut rhs = DVector::zeros(kr);
    let mut a = DMatrix::zeros(m * r, kr);
    for (l, &(i, j)) in g.edges().iter().enumerate() {
        for c in 0..r {
            a[(l * r + c, i * r + c)] = 1.0;
            a[(l * r + c, j * r + c)] = -1.0;
        }
    }
    let lap = a.transpose() * &a;
    let mut dmat = DMatrix::zeros(kr, kr);
    let lam = DVector::from_iterator(kr, lambdas.iter().flat_map(|l| l.iter().copied()));
    for i in 0..k {
        let (gi, hi) = direct_derivatives(&p.scores[i], &lambdas[i], p.eps);
        h.view_mut((i * r, i * r), (r, r)).copy_from(&hi);
        rhs.rows_mut(i * r, r).copy_from(&(-gi));
        for c in 0..r {
            dmat[(i * r + c, i * r + c)] = 2.0 * rho * g.degree(i) as f64 + 1.0;
        }
    }
    let zt = DVector::from_iterator(m * r, (0..m).flat_map(|l| (&z[l] * rho - &t[l]).iter().copied().collect::<Vec<_>>()));
    rhs += (&h + &dmat - &lap * rho) * &lam + a.transpose() * zt;
    let global = (&h + &dmat).lu().solve(&rhs).unwrap();

    for i in 0..k {
        let nbrs: Vec<MaomNeighbor> = g
            .incident(i)
            .iter()
            .map(|inc| MaomNeighbor { lambda: &lambdas[inc.other], z: &z[inc.edge], t: &t[inc.edge], lower: inc.lower })
            .collect();
        let local = maom_node_update(&p.scores[i], p.eps, &lambdas[i], &nbrs, rho).unwrap();
        let want = global.rows(i * r, r);
        assert!((local - want).amax() < 1e-10, "node {i}");
    }
}

#[test]
fn maom_duals_satisfy_stationarity() {
    let ef = EstimatingFunction::linear(2).unwrap();
    let g = gen_erdos_renyi(6, 0.5, 25).unwrap();
    let data = generate_data(&ef, 6, 150, &mut substream(25, 0)).unwrap();
    let p = Problem::new(g.clone(), &data, &ef, &true_theta(&ef), None).unwrap();
    let (state, report) = run_maom(&p, &SolverConfig::for_problem(&p), false).unwrap();
    assert!(report.converged);
    let reference = solve_reference(&p.scores, p.eps).unwrap();
    assert!(max_abs_deviation(&state.lambdas, &reference.lambda) < 1e-6);
    // ∇ℓ_i(λ_i) + (AᵀT)_i = 0 node by node.
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..6 {
        let mut kkt = direct_derivatives(&p.scores[i], &state.lambdas[i], p.eps).0;
        scale = scale.max(kkt.amax());
        for inc in g.incident(i) {
            let t = &state.t[inc.edge];
            if inc.lower {
                kkt += t;
            } else {
                kkt -= t;
            }
        }
        worst = worst.max(kkt.amax());
    }
    assert!(worst < 1e-6 * (1.0 + scale), "residual {worst}, gradient scale {scale}");
}

#[test]
fn brute_force_oracles_agree_with_each_other() {
    // The edge problem separates into a mean and a soft-thresholded difference.
    let a = DVector::from_vec(vec![1.0, -0.5]);
    let b = DVector::from_vec(vec![0.2, 0.4]);
    let (rho, eta) = (2.0, 0.7);
    let (c1, c2) = common::brute_edge(&a, &b, rho, eta);
    let d = common::brute_soft_threshold(&(&a - &b), 2.0 * eta / rho);
    assert!((&c1 + &c2 - (&a + &b)).amax() < 1e-9);
    assert!((&c1 - &c2 - d).amax() < 1e-9);
}
