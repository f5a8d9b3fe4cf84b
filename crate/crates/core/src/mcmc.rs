//! Independent-component (modified Metropolis) MCMC conditional on `{Y ≥ b}`.
//!
//! Each coordinate takes a symmetric uniform step and is accepted against the
//! standard normal density alone. The assembled candidate is then kept only if
//! its driving value stays in the conditioning event.

use crate::error::{Error, Result};
use crate::priors::StateVector;
use crate::sus::Driving;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-coordinate uniform proposal `ξ = u + w (2V − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub width: f64,
}

impl Default for Proposal {
    fn default() -> Self {
        Self { width: 1.0 }
    }
}

impl Proposal {
    pub fn new(width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "proposal width must be positive, got {width}"
            )));
        }
        Ok(Self { width })
    }
}

/// Acceptance bookkeeping for one chain or a pool of chains.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStats {
    pub component_proposals: u64,
    pub component_accepts: u64,
    /// Steps whose candidate entered the chain.
    pub moved: u64,
    /// Steps that repeated the current state.
    pub repeated: u64,
    pub evaluations: u64,
}

impl ChainStats {
    pub fn merge(&mut self, other: &ChainStats) {
        self.component_proposals += other.component_proposals;
        self.component_accepts += other.component_accepts;
        self.moved += other.moved;
        self.repeated += other.repeated;
        self.evaluations += other.evaluations;
    }

    /// Fraction of steps that moved the chain; zero when no steps were taken.
    pub fn acceptance_rate(&self) -> f64 {
        let steps = self.moved + self.repeated;
        if steps == 0 {
            0.0
        } else {
            self.moved as f64 / steps as f64
        }
    }
}

/// Outcome of one kernel application.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: StateVector,
    pub y: f64,
    pub moved: bool,
}

/// `ln[φ(ξ) / φ(u)]` for the standard normal density `φ`.
pub fn component_ln_ratio(u: f64, xi: f64) -> f64 {
    0.5 * (u * u - xi * xi)
}

/// One modified Metropolis transition conditional on `{Y ≥ threshold}`.
///
/// Random numbers are consumed in a fixed order: for each coordinate the step
/// variate and then the acceptance variate.
pub fn mma_step<D, R>(
    current: &StateVector,
    y_current: f64,
    threshold: f64,
    driving: &D,
    proposal: &Proposal,
    rng: &mut R,
    stats: &mut ChainStats,
) -> Result<Step>
where
    D: Driving + ?Sized,
    R: Rng + ?Sized,
{
    debug_assert!(y_current >= threshold);
    let mut candidate = current.to_vec();
    let mut any = false;
    for u in candidate.iter_mut() {
        let v: f64 = rng.random();
        let a: f64 = rng.random();
        let xi = *u + proposal.width * (2.0 * v - 1.0);
        let ln_ratio = component_ln_ratio(*u, xi);
        stats.component_proposals += 1;
        if ln_ratio >= 0.0 || a < ln_ratio.exp() {
            *u = xi;
            any = true;
            stats.component_accepts += 1;
        }
    }
    if !any {
        stats.repeated += 1;
        return Ok(Step {
            state: current.clone(),
            y: y_current,
            moved: false,
        });
    }
    let candidate = StateVector::from_vec_unchecked(candidate);
    stats.evaluations += 1;
    let y = driving.evaluate(&candidate)?;
    if y >= threshold {
        stats.moved += 1;
        Ok(Step {
            state: candidate,
            y,
            moved: true,
        })
    } else {
        stats.repeated += 1;
        Ok(Step {
            state: current.clone(),
            y: y_current,
            moved: false,
        })
    }
}

/// A Markov chain of `length` states started at `seed` (included as the first state).
pub fn run_chain<D, R>(
    seed: StateVector,
    y_seed: f64,
    length: usize,
    threshold: f64,
    driving: &D,
    proposal: &Proposal,
    rng: &mut R,
) -> Result<(Vec<(StateVector, f64)>, ChainStats)>
where
    D: Driving + ?Sized,
    R: Rng + ?Sized,
{
    let mut stats = ChainStats::default();
    let mut out = Vec::with_capacity(length);
    if length == 0 {
        return Ok((out, stats));
    }
    out.push((seed, y_seed));
    for _ in 1..length {
        let (cur, y) = out.last().expect("chain is non-empty");
        let step = mma_step(cur, *y, threshold, driving, proposal, rng, &mut stats)?;
        out.push((step.state, step.y));
    }
    Ok((out, stats))
}
