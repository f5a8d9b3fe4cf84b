//! Independent marginal priors and the map from standard Gaussian space.
//!
//! Samplers work on a [`StateVector`] of `n + 1` standard normal coordinates.
//! The first `n` map to physical parameters through `F_j^{-1}(Φ(u_j))`; the
//! last one encodes the auxiliary uniform `U = Φ(u_{n+1})`.

use crate::error::{Error, Result};
use crate::normal;
use rand::Rng;
use rand_distr::StandardNormal;
use std::ops::Deref;

/// One independent marginal prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    StandardNormal,
    Normal { mean: f64, std: f64 },
    /// Parameters of the underlying normal: `ln X ~ N(mu, sigma^2)`.
    LogNormal { mu: f64, sigma: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl Marginal {
    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "normal marginal needs finite mean and std > 0, got mean = {mean}, std = {std}"
            )));
        }
        Ok(Marginal::Normal { mean, std })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lognormal marginal needs finite mu and sigma > 0, got mu = {mu}, sigma = {sigma}"
            )));
        }
        Ok(Marginal::LogNormal { mu, sigma })
    }

    /// Lognormal with the given mode and standard deviation of the variate itself.
    pub fn lognormal_from_mode_std(mode: f64, std: f64) -> Result<Self> {
        let (mu, sigma) = lognormal_from_mode_std(mode, std)?;
        Self::lognormal(mu, sigma)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidParameter(format!(
                "uniform marginal needs finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Marginal::Uniform { lower, upper })
    }

    /// `F^{-1}(Φ(u))`.
    pub fn from_standard(&self, u: f64) -> f64 {
        match *self {
            Marginal::StandardNormal => u,
            Marginal::Normal { mean, std } => mean + std * u,
            Marginal::LogNormal { mu, sigma } => (mu + sigma * u).exp(),
            Marginal::Uniform { lower, upper } => {
                // Evaluate from the nearer end so both tails keep precision.
                if u <= 0.0 {
                    lower + (upper - lower) * normal::cdf(u)
                } else {
                    upper - (upper - lower) * normal::cdf(-u)
                }
            }
        }
    }

    /// `Φ^{-1}(F(x))`, evaluated without passing through `F` where possible.
    pub fn to_standard(&self, x: f64) -> f64 {
        match *self {
            Marginal::StandardNormal => x,
            Marginal::Normal { mean, std } => (x - mean) / std,
            Marginal::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (x.ln() - mu) / sigma
                }
            }
            Marginal::Uniform { lower, upper } => {
                let mid = 0.5 * (lower + upper);
                if x <= mid {
                    normal::quantile(((x - lower) / (upper - lower)).clamp(0.0, 1.0))
                } else {
                    -normal::quantile(((upper - x) / (upper - lower)).clamp(0.0, 1.0))
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
            _ => normal::cdf(self.to_standard(x)),
        }
    }

    /// Log density of the physical variate.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::StandardNormal => normal::ln_pdf(x),
            Marginal::Normal { mean, std } => normal::ln_pdf((x - mean) / std) - std.ln(),
            Marginal::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    normal::ln_pdf((x.ln() - mu) / sigma) - sigma.ln() - x.ln()
                }
            }
            Marginal::Uniform { lower, upper } => {
                if (lower..=upper).contains(&x) {
                    -(upper - lower).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Solves for the lognormal `(mu, sigma)` whose variate has the given mode and standard deviation.
///
/// With `x = sigma^2` and `mu = ln(mode) + x`, the variance condition reduces to
/// `mode^2 (e^x - 1) e^{3x} = std^2`, whose left side is increasing in `x`.
pub fn lognormal_from_mode_std(mode: f64, std: f64) -> Result<(f64, f64)> {
    if !(mode.is_finite() && std.is_finite() && mode > 0.0 && std > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lognormal mode and std must be positive and finite, got mode = {mode}, std = {std}"
        )));
    }
    // h(x) = ln(e^x - 1) + 3x - ln(std^2 / mode^2), strictly increasing on x > 0.
    let target = 2.0 * (std / mode).ln();
    let h = |x: f64| x.exp_m1().ln() + 3.0 * x - target;
    let dh = |x: f64| 1.0 / (-(-x).exp_m1()) + 3.0;

    let mut lo = f64::MIN_POSITIVE;
    let mut hi = 1.0;
    while h(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidParameter(format!(
                "lognormal std {std} too large relative to mode {mode}"
            )));
        }
    }
    // Safeguarded Newton: fall back to bisection when a step leaves the bracket.
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = h(x);
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - fx / dh(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(f64::MIN_POSITIVE) {
            x = next;
            break;
        }
        x = next;
    }
    let sigma = x.sqrt();
    let mu = mode.ln() + x;
    Ok((mu, sigma))
}

/// A point in `(n+1)`-dimensional standard Gaussian space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = u.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::CorruptState(format!("component {i} is {v}")));
        }
        Ok(Self(u))
    }

    /// Builds a state without the finiteness check. Callers guarantee finite input.
    pub(crate) fn from_vec_unchecked(u: Vec<f64>) -> Self {
        Self(u)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `U = Φ(u_{n+1})`, the auxiliary uniform encoded by the last coordinate.
    pub fn aux_uniform(&self) -> f64 {
        aux_uniform(&self.0)
    }

    /// `ln(1 / U)`, exact in the far tails.
    pub fn ln_inv_aux_uniform(&self) -> f64 {
        -normal::ln_cdf(*self.0.last().expect("state vector is never empty"))
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `Φ` of the last coordinate.
pub fn aux_uniform(u: &[f64]) -> f64 {
    normal::cdf(*u.last().expect("state vector is never empty"))
}

/// Product of independent marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    marginals: Vec<Marginal>,
}

impl Prior {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidParameter("prior needs at least one marginal".into()));
        }
        Ok(Self { marginals })
    }

    pub fn standard_normal(n: usize) -> Result<Self> {
        Self::new(vec![Marginal::StandardNormal; n])
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    /// Number of physical parameters `n`.
    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// Maps the first `n` coordinates of `u` to physical space.
    ///
    /// Accepts either a full `n + 1` state or just the `n` parameter coordinates.
    pub fn to_physical(&self, u: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if u.len() != n && u.len() != n + 1 {
            return Err(Error::CorruptState(format!(
                "expected {} or {} coordinates, got {}",
                n,
                n + 1,
                u.len()
            )));
        }
        if let Some((i, v)) = u.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::CorruptState(format!("component {i} is {v}")));
        }
        Ok(self
            .marginals
            .iter()
            .zip(u)
            .map(|(m, &ui)| m.from_standard(ui))
            .collect())
    }

    pub fn to_standard(&self, theta: &[f64]) -> Vec<f64> {
        self.marginals
            .iter()
            .zip(theta)
            .map(|(m, &x)| m.to_standard(x))
            .collect()
    }

    /// Draws `n + 1` i.i.d. standard normal coordinates (parameters plus auxiliary).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        StateVector((0..=self.dim()).map(|_| rng.sample(StandardNormal)).collect())
    }

    /// Draws a physical-space prior sample.
    pub fn sample_physical<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.marginals
            .iter()
            .map(|m| m.from_standard(rng.sample(StandardNormal)))
            .collect()
    }

    pub fn ln_pdf(&self, theta: &[f64]) -> f64 {
        self.marginals.iter().zip(theta).map(|(m, &x)| m.ln_pdf(x)).sum()
    }
}
