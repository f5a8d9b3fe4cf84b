//! Log-likelihood contract and the built-in models.

use crate::error::{Error, Result};
use crate::priors::{Marginal, Prior};
use std::f64::consts::PI;

/// A log-likelihood over physical parameters.
///
/// Implementations must never return `+inf` or NaN; `-inf` encodes zero likelihood.
pub trait LogLikelihood: Send + Sync {
    /// Number of physical parameters.
    fn dim(&self) -> usize;

    fn log_likelihood(&self, theta: &[f64]) -> Result<f64>;

    /// `ln max L` when known in closed form.
    fn max_log_likelihood(&self) -> Option<f64> {
        None
    }
}

impl<T: LogLikelihood + ?Sized> LogLikelihood for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        (**self).log_likelihood(theta)
    }
    fn max_log_likelihood(&self) -> Option<f64> {
        (**self).max_log_likelihood()
    }
}

impl<T: LogLikelihood + ?Sized> LogLikelihood for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        (**self).log_likelihood(theta)
    }
    fn max_log_likelihood(&self) -> Option<f64> {
        (**self).max_log_likelihood()
    }
}

/// Evaluates `model` and rejects values that break the contract.
pub(crate) fn checked_log_likelihood<M: LogLikelihood + ?Sized>(model: &M, theta: &[f64]) -> Result<f64> {
    let v = model.log_likelihood(theta)?;
    if v.is_nan() || v == f64::INFINITY {
        return Err(Error::model(format!("log-likelihood returned {v}")));
    }
    Ok(v)
}

fn check_dim(expected: usize, theta: &[f64]) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::model(format!(
            "dimension mismatch: model expects {expected} parameters, got {}",
            theta.len()
        )));
    }
    Ok(())
}

/// Constant likelihood `L ≡ e^{ln_value}`; posterior equals prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLikelihood {
    pub dim: usize,
    pub ln_value: f64,
}

impl LogLikelihood for ConstantLikelihood {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim, theta)?;
        Ok(self.ln_value)
    }
    fn max_log_likelihood(&self) -> Option<f64> {
        Some(self.ln_value)
    }
}

/// Independent Gaussian observations `d_j ~ N(θ_j, s^2)` under standard normal priors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConjugate {
    data: Vec<f64>,
    noise_std: f64,
}

impl GaussianConjugate {
    pub fn new(data: Vec<f64>, noise_std: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidParameter("gaussian model needs at least one datum".into()));
        }
        if !(noise_std.is_finite() && noise_std > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise std must be positive, got {noise_std}"
            )));
        }
        if data.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter("gaussian data must be finite".into()));
        }
        Ok(Self { data, noise_std })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    fn ln_norm(&self) -> f64 {
        -(self.noise_std * (2.0 * PI).sqrt()).ln()
    }

    /// Analytic `ln P_D = Σ ln N(d_j; 0, 1 + s^2)`.
    pub fn ln_evidence(&self) -> f64 {
        let v = 1.0 + self.noise_std * self.noise_std;
        self.data
            .iter()
            .map(|d| -0.5 * (2.0 * PI * v).ln() - d * d / (2.0 * v))
            .sum()
    }

    /// `ln max L`, the admissible threshold.
    pub fn b_min(&self) -> f64 {
        self.data.len() as f64 * self.ln_norm()
    }

    /// Posterior mean and standard deviation (identical for every component).
    pub fn posterior_moments(&self) -> (Vec<f64>, f64) {
        let s2 = self.noise_std * self.noise_std;
        let means = self.data.iter().map(|d| d / (1.0 + s2)).collect();
        (means, (s2 / (1.0 + s2)).sqrt())
    }
}

impl LogLikelihood for GaussianConjugate {
    fn dim(&self) -> usize {
        self.data.len()
    }

    fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.data.len(), theta)?;
        let c = self.ln_norm();
        let inv = 1.0 / (2.0 * self.noise_std * self.noise_std);
        Ok(self
            .data
            .iter()
            .zip(theta)
            .map(|(d, t)| c - (d - t) * (d - t) * inv)
            .sum())
    }

    fn max_log_likelihood(&self) -> Option<f64> {
        Some(self.b_min())
    }
}

/// Which parameters of the two-story frame are uncertain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShearMode {
    /// `θ = [θ₁, θ₂]` scale the story stiffnesses.
    Identifiable,
    /// Adds `θ₃, θ₄` scaling the story masses.
    Unidentifiable,
}

/// Two-degree-of-freedom shear frame identified from its two modal frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ShearFrame {
    pub masses: [f64; 2],
    pub stiffnesses: [f64; 2],
    pub measured: [f64; 2],
    pub weights: [f64; 2],
    pub error_std: f64,
    pub mode: ShearMode,
    pub include_normalization: bool,
}

impl ShearFrame {
    pub fn new(mode: ShearMode) -> Self {
        Self {
            masses: [16.5e3, 16.1e3],
            stiffnesses: [29.7e6, 29.7e6],
            measured: [3.13, 9.83],
            weights: [1.0, 1.0],
            error_std: 0.1,
            mode,
            include_normalization: false,
        }
    }

    pub fn with_error_std(mut self, error_std: f64) -> Self {
        self.error_std = error_std;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self
            .masses
            .iter()
            .chain(&self.stiffnesses)
            .chain(&self.measured)
            .chain(std::iter::once(&self.error_std))
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive {
            return Err(Error::InvalidParameter(
                "shear frame masses, stiffnesses, frequencies and error std must be positive".into(),
            ));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("shear frame weights must be finite".into()));
        }
        Ok(())
    }

    /// Lognormal priors by mode and std: stiffness scalings (1.3, 1.0) and (0.8, 1.0),
    /// mass scalings (0.95, 0.1) each.
    pub fn default_prior(&self) -> Result<Prior> {
        let mut m = vec![
            Marginal::lognormal_from_mode_std(1.3, 1.0)?,
            Marginal::lognormal_from_mode_std(0.8, 1.0)?,
        ];
        if self.mode == ShearMode::Unidentifiable {
            let mass = Marginal::lognormal_from_mode_std(0.95, 0.1)?;
            m.extend([mass, mass]);
        }
        Prior::new(m)
    }

    fn n_params(&self) -> usize {
        match self.mode {
            ShearMode::Identifiable => 2,
            ShearMode::Unidentifiable => 4,
        }
    }

    /// Story stiffnesses and masses for a scaling vector.
    pub fn structure(&self, theta: &[f64]) -> Result<([f64; 2], [f64; 2])> {
        check_dim(self.n_params(), theta)?;
        if let Some(t) = theta.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::model(format!("scaling factors must be positive, got {t}")));
        }
        let k = [theta[0] * self.stiffnesses[0], theta[1] * self.stiffnesses[1]];
        let m = match self.mode {
            ShearMode::Identifiable => self.masses,
            ShearMode::Unidentifiable => [theta[2] * self.masses[0], theta[3] * self.masses[1]],
        };
        Ok((k, m))
    }

    /// Predicted modal frequencies in Hz, ascending.
    pub fn frequencies(&self, theta: &[f64]) -> Result<[f64; 2]> {
        let (k, m) = self.structure(theta)?;
        let [w1, w2] = shear_eigenvalues(k, m);
        Ok([w1.sqrt() / (2.0 * PI), w2.sqrt() / (2.0 * PI)])
    }

    /// Modal misfit `J(θ) = Σ λ_j² (f_j²/f̃_j² − 1)²`.
    pub fn misfit(&self, theta: &[f64]) -> Result<f64> {
        let f = self.frequencies(theta)?;
        Ok((0..2)
            .map(|j| {
                let r = f[j] * f[j] / (self.measured[j] * self.measured[j]) - 1.0;
                self.weights[j] * self.weights[j] * r * r
            })
            .sum())
    }

    fn ln_norm(&self) -> f64 {
        if self.include_normalization {
            -2.0 * (self.error_std * (2.0 * PI).sqrt()).ln()
        } else {
            0.0
        }
    }
}

impl LogLikelihood for ShearFrame {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        let j = self.misfit(theta)?;
        Ok(self.ln_norm() - j / (2.0 * self.error_std * self.error_std))
    }

    fn max_log_likelihood(&self) -> Option<f64> {
        // Both frequencies can be matched exactly, so J attains zero.
        Some(self.ln_norm())
    }
}

/// Squared circular frequencies of the 2-DOF shear building, ascending.
///
/// Roots of `m₁m₂ω⁴ − (m₁k₂ + m₂(k₁+k₂))ω² + k₁k₂ = 0`.
pub fn shear_eigenvalues(k: [f64; 2], m: [f64; 2]) -> [f64; 2] {
    let a = m[0] * m[1];
    let b = m[0] * k[1] + m[1] * (k[0] + k[1]);
    let c = k[0] * k[1];
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    // Larger root directly, smaller one through Vieta to avoid cancellation.
    let hi = (b + disc) / (2.0 * a);
    let lo = c / (a * hi);
    [lo, hi]
}
