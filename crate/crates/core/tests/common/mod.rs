//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Minimizes `f` (value, gradient, Hessian) by damped Newton. A generic
/// routine, independent of the solver code under test.
pub fn newton_min(
    mut x: DVector<f64>,
    f: impl Fn(&DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>),
    iters: usize,
) -> DVector<f64> {
    for _ in 0..iters {
        let (v, g, h) = f(&x);
        if g.norm() < 1e-15 {
            break;
        }
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone(),
        };
        let mut t = 1.0;
        loop {
            let cand = &x - &step * t;
            if f(&cand).0 <= v || t < 1e-20 {
                x = cand;
                break;
            }
            t *= 0.5;
        }
    }
    x
}

/// Smoothed ‖d‖: value, gradient and Hessian of `sqrt(‖d‖² + δ²)`.
fn smooth_norm(d: &DVector<f64>, delta: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
    let s = (d.norm_squared() + delta * delta).sqrt();
    let g = d / s;
    let h = (DMatrix::identity(d.len(), d.len()) - &g * g.transpose()) / s;
    (s, g, h)
}

/// argmin_z  t‖z‖ + ½‖z − h‖², by smoothed Newton with continuation on δ.
pub fn brute_soft_threshold(h: &DVector<f64>, t: f64) -> DVector<f64> {
    let r = h.len();
    let mut z = h.clone();
    let mut delta = 1.0;
    while delta > 1e-13 {
        z = newton_min(
            z,
            |z| {
                let (s, g, hs) = smooth_norm(z, delta);
                (t * s + 0.5 * (z - h).norm_squared(), g * t + (z - h), hs * t + DMatrix::identity(r, r))
            },
            200,
        );
        delta *= 0.1;
    }
    z
}

/// argmin over (c₁, c₂) of  η‖c₁ − c₂‖ + ρ/2‖c₁ − a‖² + ρ/2‖c₂ − b‖².
pub fn brute_edge(a: &DVector<f64>, b: &DVector<f64>, rho: f64, eta: f64) -> (DVector<f64>, DVector<f64>) {
    let r = a.len();
    let mut x = DVector::zeros(2 * r);
    x.rows_mut(0, r).copy_from(a);
    x.rows_mut(r, r).copy_from(b);
    let mut delta = 1.0;
    while delta > 1e-13 {
        x = newton_min(
            x,
            |x| {
                let c1 = x.rows(0, r).into_owned();
                let c2 = x.rows(r, r).into_owned();
                let (s, g, hs) = smooth_norm(&(&c1 - &c2), delta);
                let value = eta * s + 0.5 * rho * ((&c1 - a).norm_squared() + (&c2 - b).norm_squared());
                let mut grad = DVector::zeros(2 * r);
                grad.rows_mut(0, r).copy_from(&(&g * eta + (&c1 - a) * rho));
                grad.rows_mut(r, r).copy_from(&(-&g * eta + (&c2 - b) * rho));
                let mut hess = DMatrix::identity(2 * r, 2 * r) * rho;
                let hs = hs * eta;
                hess.view_mut((0, 0), (r, r)).add_assign(&hs);
                hess.view_mut((r, r), (r, r)).add_assign(&hs);
                hess.view_mut((0, r), (r, r)).add_assign(&(-&hs));
                hess.view_mut((r, 0), (r, r)).add_assign(&(-&hs));
                (value, grad, hess)
            },
            200,
        );
        delta *= 0.1;
    }
    (x.rows(0, r).into_owned(), x.rows(r, r).into_owned())
}

trait AddAssign<T> {
    fn add_assign(&mut self, other: &T);
}

impl<'a> AddAssign<DMatrix<f64>> for nalgebra::DMatrixViewMut<'a, f64> {
    fn add_assign(&mut self, other: &DMatrix<f64>) {
        *self += other;
    }
}

/// Least-squares slope and R² of y on x.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    (sxy / sxx, sxy * sxy / (sxx * syy))
}
