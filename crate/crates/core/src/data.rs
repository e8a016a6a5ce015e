//! Synthetic data generators for each estimating-function family.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal, Weibull};

use crate::el::NodeDataset;
use crate::error::{Error, Result};
use crate::estfun::{ar1_covariance, compound_symmetry, sigmoid, EstimatingFunction};

pub const WEIBULL_SHAPE: f64 = 1.5;
pub const WEIBULL_SCALE: f64 = 200.0;

const LINEAR_BETA: [f64; 5] = [2.0, 0.5, 4.0, 2.449_489_742_783_178, -3.0];
const LOGISTIC_BETA: [f64; 5] = [1.0, -2.0, 4.0, 2.0, -0.5];
const REPEATED_BETA: [f64; 2] = [1.0, 5.0];

/// RNG for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// τ-quantile of Weibull(shape 1.5, scale 200).
pub fn weibull_quantile(tau: f64) -> f64 {
    WEIBULL_SCALE * (-(1.0 - tau).ln()).powf(1.0 / WEIBULL_SHAPE)
}

/// The generating parameter θ₀ of the synthetic design for `ef`.
///
/// Regression coefficients for dimensions other than 5 cycle through the
/// 5-vector used at d = 5.
pub fn true_theta(ef: &EstimatingFunction) -> Vec<f64> {
    match *ef {
        EstimatingFunction::Quantile { tau } => vec![weibull_quantile(tau)],
        EstimatingFunction::Linear { d } => (0..d).map(|a| LINEAR_BETA[a % 5]).collect(),
        EstimatingFunction::Logistic { d } => (0..d).map(|a| LOGISTIC_BETA[a % 5]).collect(),
        EstimatingFunction::Mean { d } => vec![1.0; d],
        EstimatingFunction::Repeated => REPEATED_BETA.to_vec(),
    }
}

/// Gaussian sampler N(μ, Σ) through the Cholesky factor of Σ.
#[derive(Debug, Clone)]
pub struct Mvn {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl Mvn {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let factor = cov
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?
            .l();
        Ok(Self { mean, factor })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }
}

/// Draws one observation row for `ef` at the design's θ₀.
pub struct Sampler {
    ef: EstimatingFunction,
    theta: Vec<f64>,
    covariates: Option<Mvn>,
    errors: Option<Mvn>,
}

impl Sampler {
    pub fn new(ef: &EstimatingFunction) -> Result<Self> {
        let theta = true_theta(ef);
        let (covariates, errors) = match *ef {
            EstimatingFunction::Quantile { .. } => (None, None),
            EstimatingFunction::Linear { d } | EstimatingFunction::Logistic { d } => {
                (Some(Mvn::new(DVector::zeros(d), ar1_covariance(d))?), None)
            }
            EstimatingFunction::Mean { d } => {
                (Some(Mvn::new(DVector::from_element(d, 1.0), compound_symmetry(d))?), None)
            }
            EstimatingFunction::Repeated => (
                Some(Mvn::new(DVector::zeros(2), ar1_covariance(2))?),
                Some(Mvn::new(DVector::zeros(3), compound_symmetry(3))?),
            ),
        };
        Ok(Self { ef: ef.clone(), theta, covariates, errors })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self.ef {
            EstimatingFunction::Quantile { .. } => {
                let w = Weibull::new(WEIBULL_SCALE, WEIBULL_SHAPE).expect("valid Weibull parameters");
                out.push(w.sample(rng));
            }
            EstimatingFunction::Linear { .. } => {
                let x = self.covariates.as_ref().unwrap().sample(rng);
                let noise: f64 = rng.sample(StandardNormal);
                out.push(x.dot(&DVector::from_column_slice(&self.theta)) + noise);
                out.extend(x.iter());
            }
            EstimatingFunction::Logistic { .. } => {
                let x = self.covariates.as_ref().unwrap().sample(rng);
                let p = sigmoid(x.dot(&DVector::from_column_slice(&self.theta)));
                let y = Bernoulli::new(p).expect("probability in [0, 1]").sample(rng);
                out.push(if y { 1.0 } else { 0.0 });
                out.extend(x.iter());
            }
            EstimatingFunction::Mean { .. } => {
                out.extend(self.covariates.as_ref().unwrap().sample(rng).iter());
            }
            EstimatingFunction::Repeated => {
                let cov = self.covariates.as_ref().unwrap();
                let xs: Vec<DVector<f64>> = (0..3).map(|_| cov.sample(rng)).collect();
                let eps = self.errors.as_ref().unwrap().sample(rng);
                for t in 0..3 {
                    out.push(xs[t][0] * self.theta[0] + xs[t][1] * self.theta[1] + eps[t]);
                }
                for x in &xs {
                    out.extend(x.iter());
                }
            }
        }
    }
}

/// Draws N = K·n observations for `ef`, shuffles them and splits them into
/// K equal node blocks.
pub fn generate_data(ef: &EstimatingFunction, k: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<NodeDataset>> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("K and n must be positive".into()));
    }
    let sampler = Sampler::new(ef)?;
    let width = ef.dims().obs;
    let mut rows: Vec<Vec<f64>> = (0..k * n)
        .map(|_| {
            let mut row = Vec::with_capacity(width);
            sampler.sample(rng, &mut row);
            row
        })
        .collect();
    rows.shuffle(rng);
    rows.chunks(n).enumerate().map(|(i, block)| NodeDataset::from_rows(i, block)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weibull_truth() {
        let b = weibull_quantile(0.05);
        assert_relative_eq!(b, 200.0 * (-(0.95f64).ln()).powf(1.0 / 1.5), epsilon = 1e-12);
        assert!((b - 27.61).abs() < 0.01, "{b}");
    }

    #[test]
    fn deterministic_given_seed() {
        let ef = EstimatingFunction::linear(3).unwrap();
        let a = generate_data(&ef, 4, 10, &mut substream(9, 0)).unwrap();
        let b = generate_data(&ef, 4, 10, &mut substream(9, 0)).unwrap();
        assert_eq!(a, b);
        let c = generate_data(&ef, 4, 10, &mut substream(9, 1)).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|d| d.len() == 10 && d.dim() == 4));
    }

    #[test]
    fn logistic_rows_are_valid() {
        let ef = EstimatingFunction::logistic(5).unwrap();
        let data = generate_data(&ef, 2, 50, &mut substream(1, 0)).unwrap();
        for d in &data {
            d.validate(&ef).unwrap();
        }
    }
}
