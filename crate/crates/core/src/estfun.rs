//! Estimating functions g(x; θ) ∈ ℝʳ.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Observation, parameter and equation dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Length of one observation row.
    pub obs: usize,
    /// Parameter dimension p.
    pub param: usize,
    /// Equation dimension r (≥ p).
    pub eq: usize,
}

/// Compound-symmetry correlation used as M₂ in the repeated-measures
/// score: unit diagonal, 0.5 elsewhere.
pub fn compound_symmetry(s: usize) -> DMatrix<f64> {
    DMatrix::from_fn(s, s, |a, b| if a == b { 1.0 } else { 0.5 })
}

/// AR(1) covariance with σ_ab = 0.5^|a−b|.
pub fn ar1_covariance(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |a, b| 0.5f64.powi((a as i32 - b as i32).abs()))
}

const REPEATED_T: usize = 3;
const REPEATED_P: usize = 2;

/// The estimating-function families.
///
/// Observation layouts:
/// - `Quantile`: `(X)`
/// - `Linear`, `Logistic`: `(Y, X₁..X_d)`
/// - `Mean`: `(X₁..X_d)`
/// - `Repeated`: `(Y₁, Y₂, Y₃, X₁ᵀ, X₂ᵀ, X₃ᵀ)` with each `X_t ∈ ℝ²`
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatingFunction {
    Quantile { tau: f64 },
    Linear { d: usize },
    Logistic { d: usize },
    Mean { d: usize },
    Repeated,
}

impl EstimatingFunction {
    pub fn quantile(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1), got {tau}")));
        }
        Ok(Self::Quantile { tau })
    }

    pub fn linear(d: usize) -> Result<Self> {
        Self::check_dim(d)?;
        Ok(Self::Linear { d })
    }

    pub fn logistic(d: usize) -> Result<Self> {
        Self::check_dim(d)?;
        Ok(Self::Logistic { d })
    }

    pub fn mean(d: usize) -> Result<Self> {
        Self::check_dim(d)?;
        Ok(Self::Mean { d })
    }

    pub fn repeated() -> Self {
        Self::Repeated
    }

    fn check_dim(d: usize) -> Result<()> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        Ok(())
    }

    /// Builds a family from its config name. `dim` is the covariate
    /// dimension for linear/logistic/mean and the level τ is used only by
    /// the quantile family.
    pub fn from_name(name: &str, dim: usize, tau: f64) -> Result<Self> {
        match name {
            "quantile" => Self::quantile(tau),
            "linear" => Self::linear(dim),
            "logistic" => Self::logistic(dim),
            "mean" => Self::mean(dim),
            "repeated" => Ok(Self::repeated()),
            other => Err(Error::InvalidArgument(format!("unknown estimating function '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Quantile { .. } => "quantile",
            Self::Linear { .. } => "linear",
            Self::Logistic { .. } => "logistic",
            Self::Mean { .. } => "mean",
            Self::Repeated => "repeated",
        }
    }

    pub fn dims(&self) -> Dims {
        match *self {
            Self::Quantile { .. } => Dims { obs: 1, param: 1, eq: 1 },
            Self::Linear { d } | Self::Logistic { d } => Dims { obs: d + 1, param: d, eq: d },
            Self::Mean { d } => Dims { obs: d, param: d, eq: d },
            Self::Repeated => Dims {
                obs: REPEATED_T + REPEATED_T * REPEATED_P,
                param: REPEATED_P,
                eq: 2 * REPEATED_P,
            },
        }
    }

    /// Checks one observation row against the family's layout.
    pub fn validate_observation(&self, x: &[f64]) -> Result<()> {
        let dims = self.dims();
        if x.len() != dims.obs {
            return Err(Error::DimensionMismatch { expected: dims.obs, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        if let Self::Logistic { .. } = self {
            if x[0] != 0.0 && x[0] != 1.0 {
                return Err(Error::InvalidArgument(format!("logistic response must be 0 or 1, got {}", x[0])));
            }
        }
        Ok(())
    }

    /// Checked evaluation.
    pub fn eval(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.validate_observation(x)?;
        let dims = self.dims();
        if theta.len() != dims.param {
            return Err(Error::DimensionMismatch { expected: dims.param, got: theta.len() });
        }
        let mut out = vec![0.0; dims.eq];
        self.eval_into(x, theta, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation into `out` (length r). Shapes must already be
    /// validated.
    pub fn eval_into(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        match *self {
            Self::Quantile { tau } => {
                out[0] = if x[0] - theta[0] <= 0.0 { -1.0 } else { tau / (1.0 - tau) };
            }
            Self::Linear { d } => {
                let (y, cov) = (x[0], &x[1..=d]);
                let resid = y - dot(cov, theta);
                for (o, c) in out.iter_mut().zip(cov) {
                    *o = c * resid;
                }
            }
            Self::Logistic { d } => {
                let (y, cov) = (x[0], &x[1..=d]);
                let resid = y - sigmoid(dot(cov, theta));
                for (o, c) in out.iter_mut().zip(cov) {
                    *o = c * resid;
                }
            }
            Self::Mean { .. } => {
                for ((o, xv), m) in out.iter_mut().zip(x).zip(theta) {
                    *o = xv - m;
                }
            }
            Self::Repeated => {
                let (ys, xs) = x.split_at(REPEATED_T);
                let mut resid = [0.0; REPEATED_T];
                for t in 0..REPEATED_T {
                    let xt = &xs[t * REPEATED_P..(t + 1) * REPEATED_P];
                    resid[t] = ys[t] - dot(xt, theta);
                }
                // M₂ e with unit diagonal and 0.5 off-diagonal.
                let total: f64 = resid.iter().sum();
                let mut weighted = [0.0; REPEATED_T];
                for t in 0..REPEATED_T {
                    weighted[t] = 0.5 * resid[t] + 0.5 * total;
                }
                out.iter_mut().for_each(|o| *o = 0.0);
                let (g1, g2) = out.split_at_mut(REPEATED_P);
                for t in 0..REPEATED_T {
                    let xt = &xs[t * REPEATED_P..(t + 1) * REPEATED_P];
                    for k in 0..REPEATED_P {
                        g1[k] += xt[k] * resid[t];
                        g2[k] += xt[k] * weighted[t];
                    }
                }
            }
        }
    }

    /// Analytic Jacobian ∂g/∂θ (r×p) at one observation. The quantile
    /// score is piecewise constant, so its Jacobian is zero away from the
    /// jump.
    pub fn jacobian(&self, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let dims = self.dims();
        match *self {
            Self::Quantile { .. } => DMatrix::zeros(1, 1),
            Self::Linear { d } => {
                let cov = &x[1..=d];
                DMatrix::from_fn(d, d, |a, b| -cov[a] * cov[b])
            }
            Self::Logistic { d } => {
                let cov = &x[1..=d];
                let s = sigmoid(dot(cov, theta));
                let w = s * (1.0 - s);
                DMatrix::from_fn(d, d, |a, b| -w * cov[a] * cov[b])
            }
            Self::Mean { d } => -DMatrix::identity(d, d),
            Self::Repeated => {
                let xs = &x[REPEATED_T..];
                let m2 = compound_symmetry(REPEATED_T);
                let mut jac = DMatrix::zeros(dims.eq, dims.param);
                // ∂e_s/∂β_b = −X_{s,b}
                for t in 0..REPEATED_T {
                    for s in 0..REPEATED_T {
                        let w1 = if s == t { 1.0 } else { 0.0 };
                        let w2 = m2[(t, s)];
                        for a in 0..REPEATED_P {
                            for b in 0..REPEATED_P {
                                let v = xs[t * REPEATED_P + a] * xs[s * REPEATED_P + b];
                                jac[(a, b)] -= w1 * v;
                                jac[(REPEATED_P + a, b)] -= w2 * v;
                            }
                        }
                    }
                }
                jac
            }
        }
    }
}

impl fmt::Display for EstimatingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Quantile { tau } => write!(f, "quantile(τ={tau})"),
            Self::Linear { d } => write!(f, "linear(d={d})"),
            Self::Logistic { d } => write!(f, "logistic(d={d})"),
            Self::Mean { d } => write!(f, "mean(d={d})"),
            Self::Repeated => write!(f, "repeated"),
        }
    }
}

impl FromStr for EstimatingFunction {
    type Err = Error;

    /// Accepts `name` or `name:dim` (`quantile:0.05` sets τ).
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let parse_err = |e: &dyn fmt::Display| Error::Parse(format!("'{s}': {e}"));
        match name {
            "quantile" => {
                let tau = arg.map(str::parse::<f64>).transpose().map_err(|e| parse_err(&e))?;
                Self::quantile(tau.unwrap_or(0.05))
            }
            _ => {
                let dim = arg.map(str::parse::<usize>).transpose().map_err(|e| parse_err(&e))?;
                Self::from_name(name, dim.unwrap_or(1), 0.05)
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic sigmoid computed branch-wise so that `exp` never overflows.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantile_scores() {
        let ef = EstimatingFunction::quantile(0.05).unwrap();
        assert_eq!(ef.eval(&[10.0], &[20.0]).unwrap(), vec![-1.0]);
        assert_relative_eq!(ef.eval(&[30.0], &[20.0]).unwrap()[0], 0.05 / 0.95);
        assert_relative_eq!(ef.eval(&[30.0], &[20.0]).unwrap()[0], 0.052631578947368, epsilon = 1e-12);
        // boundary belongs to the negative branch
        assert_eq!(ef.eval(&[20.0], &[20.0]).unwrap(), vec![-1.0]);
        // E g = -τ + (τ/(1-τ))(1-τ) = 0
        let tau = 0.05;
        assert_relative_eq!(-tau + tau / (1.0 - tau) * (1.0 - tau), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quantile_level_validated() {
        assert!(EstimatingFunction::quantile(0.0).is_err());
        assert!(EstimatingFunction::quantile(1.0).is_err());
        assert!(EstimatingFunction::quantile(f64::NAN).is_err());
    }

    #[test]
    fn linear_scores() {
        let ef = EstimatingFunction::linear(2).unwrap();
        assert_eq!(ef.eval(&[2.0, 1.0, 0.0], &[2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(ef.eval(&[0.0, 1.0, 1.0], &[1.0, 1.0]).unwrap(), vec![-2.0, -2.0]);
        assert!(matches!(
            ef.eval(&[0.0, 1.0], &[1.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn linear_noiseless_recovers_beta() {
        let beta = [2.0, 0.5, 4.0, 6f64.sqrt(), -3.0];
        let ef = EstimatingFunction::linear(5).unwrap();
        let x = [0.3, -1.2, 0.7, 2.0, -0.4];
        let y = dot(&x, &beta);
        let mut obs = vec![y];
        obs.extend_from_slice(&x);
        for v in ef.eval(&obs, &beta).unwrap() {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn logistic_scores() {
        let ef = EstimatingFunction::logistic(2).unwrap();
        let g = ef.eval(&[1.0, 0.8, -0.8], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(g[0], 0.4);
        assert_relative_eq!(g[1], -0.4);
        let g = ef.eval(&[1.0, 1.0, 1.0], &[500.0, 500.0]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-300));
        let g = ef.eval(&[0.0, 1.0, 1.0], &[-800.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| v.is_finite() && v.abs() < 1e-300));
        assert!(ef.eval(&[0.5, 1.0, 1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_relative_eq!(sigmoid(2.0) + sigmoid(-2.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mean_scores() {
        let ef = EstimatingFunction::mean(2).unwrap();
        assert_eq!(ef.eval(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(ef.eval(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
    }

    fn repeated_obs(beta: &[f64], xs: &[f64; 6], noise: [f64; 3]) -> Vec<f64> {
        let mut obs = Vec::new();
        for t in 0..3 {
            obs.push(dot(&xs[2 * t..2 * t + 2], beta) + noise[t]);
        }
        obs.extend_from_slice(xs);
        obs
    }

    #[test]
    fn repeated_dimensions_and_noiseless_zero() {
        let ef = EstimatingFunction::repeated();
        let dims = ef.dims();
        assert_eq!((dims.obs, dims.param, dims.eq), (9, 2, 4));
        assert_eq!(dims.eq, 2 * dims.param);
        let beta = [1.0, 5.0];
        let obs = repeated_obs(&beta, &[0.2, -1.0, 1.5, 0.3, -0.7, 0.9], [0.0; 3]);
        for v in ef.eval(&obs, &beta).unwrap() {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn repeated_first_block_is_stacked_linear_score() {
        let ef = EstimatingFunction::repeated();
        let beta = [1.0, 5.0];
        let xs = [0.2, -1.0, 1.5, 0.3, -0.7, 0.9];
        let obs = repeated_obs(&beta, &xs, [0.4, -1.1, 0.25]);
        let theta = [0.7, 4.2];
        let g = ef.eval(&obs, &theta).unwrap();
        let mut expect = [0.0; 2];
        for t in 0..3 {
            let xt = &xs[2 * t..2 * t + 2];
            let e = obs[t] - dot(xt, &theta);
            expect[0] += xt[0] * e;
            expect[1] += xt[1] * e;
        }
        assert_relative_eq!(g[0], expect[0], epsilon = 1e-12);
        assert_relative_eq!(g[1], expect[1], epsilon = 1e-12);
        // second block against an explicit X M₂ e product
        let m2 = compound_symmetry(3);
        let e = nalgebra::DVector::from_fn(3, |t, _| obs[t] - dot(&xs[2 * t..2 * t + 2], &theta));
        let xmat = DMatrix::from_fn(2, 3, |a, t| xs[2 * t + a]);
        let g2 = xmat * m2 * e;
        assert_relative_eq!(g[2], g2[0], epsilon = 1e-12);
        assert_relative_eq!(g[3], g2[1], epsilon = 1e-12);
    }

    #[test]
    fn names_round_trip() {
        for s in ["quantile", "linear:5", "logistic:3", "mean:2", "repeated"] {
            let ef: EstimatingFunction = s.parse().unwrap();
            assert_eq!(ef.name(), s.split(':').next().unwrap());
        }
        assert!("bogus".parse::<EstimatingFunction>().is_err());
        assert_eq!("quantile:0.1".parse::<EstimatingFunction>().unwrap(), EstimatingFunction::Quantile { tau: 0.1 });
    }

    #[test]
    fn ar1_entries() {
        let s = ar1_covariance(5);
        assert_eq!(s[(0, 2)], 0.25);
        assert_eq!(s[(4, 0)], 0.0625);
        assert_eq!(s[(3, 3)], 1.0);
    }
}
