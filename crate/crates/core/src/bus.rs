//! Bayesian updating with Subset Simulation.
//!
//! The outer run drives `Y = ln L(θ) + ln(1/U)`. Once a level threshold `b`
//! exceeds `ln max L`, the conditional samples at that level follow the
//! posterior exactly and `b + ln P(Y > b)` equals the log-evidence. Because
//! `ln max L` is unknown in general, each level also runs an inner SuS on
//! `ln L(θ)` alone to estimate the prior mass `a_k = P(L(θ) > e^{b_k})` of the
//! inadmissible set; the run stops at the first level with `a_k ≤ tol`.

use crate::error::{Error, Result};
use crate::models::{checked_log_likelihood, LogLikelihood};
use crate::priors::{Prior, StateVector};
use crate::rng::{label, StreamTree};
use crate::sus::{
    advance_level, assemble_ccdf, ccdf_cov, estimate_cov, grow_level, run_level_zero, select_threshold,
    CcdfCurve, Driving, LevelRecord, SusConfig, Threshold,
};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// `Y(u) = ln L(θ(u)) + ln(1 / Φ(u_{n+1}))`.
pub struct BusDriving<'a, M: ?Sized> {
    pub model: &'a M,
    pub prior: &'a Prior,
}

impl<'a, M: LogLikelihood + ?Sized> BusDriving<'a, M> {
    pub fn new(model: &'a M, prior: &'a Prior) -> Result<Self> {
        check_dims(model, prior)?;
        Ok(Self { model, prior })
    }
}

fn check_dims<M: LogLikelihood + ?Sized>(model: &M, prior: &Prior) -> Result<()> {
    if model.dim() != prior.dim() {
        return Err(Error::InvalidParameter(format!(
            "model has {} parameters but prior has {} marginals",
            model.dim(),
            prior.dim()
        )));
    }
    Ok(())
}

impl<M: LogLikelihood + ?Sized> Driving for BusDriving<'_, M> {
    fn dim(&self) -> usize {
        self.prior.dim() + 1
    }

    fn evaluate(&self, u: &[f64]) -> Result<f64> {
        let theta = self.prior.to_physical(u)?;
        let ln_l = checked_log_likelihood(self.model, &theta)?;
        let ln_inv_u = -crate::normal::ln_cdf(u[self.prior.dim()]);
        Ok(ln_l + ln_inv_u)
    }
}

/// Evaluates the revised driving variable at one state.
pub fn evaluate_driving<M: LogLikelihood + ?Sized>(
    state: &StateVector,
    model: &M,
    prior: &Prior,
) -> Result<f64> {
    BusDriving::new(model, prior)?.evaluate(state)
}

/// `ln L(θ(u))` over the `n` parameter coordinates only.
struct LikelihoodDriving<'a, M: ?Sized> {
    model: &'a M,
    prior: &'a Prior,
}

impl<M: LogLikelihood + ?Sized> Driving for LikelihoodDriving<'_, M> {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn evaluate(&self, u: &[f64]) -> Result<f64> {
        checked_log_likelihood(self.model, &self.prior.to_physical(u)?)
    }
}

/// Stopping rule and inner-run settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub tol: f64,
    pub inner_samples: usize,
    pub inner_level_probability: f64,
    /// Number of inner levels, level 0 included.
    pub inner_max_levels: usize,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            inner_samples: 1000,
            inner_level_probability: 0.1,
            inner_max_levels: 8,
        }
    }
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tol
            )));
        }
        self.inner_config(0).validate()?;
        let reach = self.inner_max_levels as f64 * (1.0 / self.inner_level_probability).ln();
        if reach < (1.0 / self.tol).ln() - 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "inner level cap {} cannot resolve tolerance {:e} at p0 = {}",
                self.inner_max_levels, self.tol, self.inner_level_probability
            )));
        }
        Ok(())
    }

    fn inner_config(&self, seed: u64) -> SusConfig {
        SusConfig {
            level_probability: self.inner_level_probability,
            samples_per_level: self.inner_samples,
            max_levels: self.inner_max_levels.saturating_sub(1).max(1),
            seed,
            ..SusConfig::default()
        }
    }
}

/// Inner estimate of the inadmissible prior mass at one outer threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inadmissibility {
    pub level: usize,
    pub threshold: f64,
    pub a: f64,
    /// c.o.v. of `a`; zero when `a` is 0 or 1 exactly.
    pub cov: f64,
    pub inner_levels: usize,
}

impl Inadmissibility {
    pub fn std_error(&self) -> f64 {
        self.a * self.cov
    }
}

/// Estimates `a = P_θ(ln L(θ) > b)` with an independent SuS on `ln L`.
///
/// Stops as soon as the next inner threshold would pass `b`. Returns exactly 0
/// when no sample of the last permitted inner level reaches `b`.
pub fn inner_inadmissibility<M: LogLikelihood + ?Sized>(
    b: f64,
    model: &M,
    prior: &Prior,
    stopping: &StoppingConfig,
    tree: &StreamTree,
) -> Result<Inadmissibility> {
    if b == f64::NEG_INFINITY {
        return Ok(Inadmissibility {
            level: 0,
            threshold: b,
            a: 1.0,
            cov: 0.0,
            inner_levels: 0,
        });
    }
    check_dims(model, prior)?;
    let config = stopping.inner_config(0);
    let p0 = config.level_probability;
    let driving = LikelihoodDriving { model, prior };
    let mut levels = vec![run_level_zero(&config, &driving, tree)?];
    loop {
        let last = levels.last_mut().expect("at least one level");
        let frac = last.fraction_at_or_above(b);
        let done = last.index + 1 >= stopping.inner_max_levels || frac > p0;
        if done {
            let a = p0.powi(last.index as i32) * frac;
            let cov = if a > 0.0 { ccdf_cov(&levels, p0, b) } else { 0.0 };
            return Ok(Inadmissibility {
                level: 0,
                threshold: b,
                a,
                cov,
                inner_levels: levels.len(),
            });
        }
        let next = advance_level(last, &config, &driving, tree)?;
        levels.push(next);
    }
}

/// Outer levels and the inner estimates gathered before stopping.
#[derive(Debug, Clone)]
pub struct BusTrace {
    pub levels: Vec<LevelRecord>,
    /// One entry per level from 1 onward.
    pub inadmissibility: Vec<Inadmissibility>,
}

/// Log-evidence from the stopping level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub stopping_level: usize,
    pub b_m: f64,
    /// `b_m + m ln p₀`.
    pub ln_evidence: f64,
    /// c.o.v. of `P̂(Y > b)` at `b = b_m`, used as the std of `ln P̂_D`.
    pub cov_proxy: f64,
}

/// Posterior samples in physical space.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSampleSet {
    pub theta: Vec<Vec<f64>>,
    /// Index ranges of the Markov chains within `theta`.
    pub chains: Vec<Range<usize>>,
    pub level: usize,
    pub threshold: f64,
    pub a: f64,
}

impl PosteriorSampleSet {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// The last state of every chain; close to independent draws.
    pub fn chain_ends(&self) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .filter(|c| !c.is_empty())
            .map(|c| self.theta[c.end - 1].clone())
            .collect()
    }

    /// Values of parameter `j` across samples.
    pub fn marginal(&self, j: usize) -> Vec<f64> {
        self.theta.iter().map(|t| t[j]).collect()
    }
}

/// Full result of a revised-BUS run.
#[derive(Debug, Clone)]
pub struct BusRun {
    pub trace: BusTrace,
    pub posterior: PosteriorSampleSet,
    pub evidence: EvidenceEstimate,
    pub ccdf: CcdfCurve,
    pub tol: f64,
}

impl BusRun {
    pub fn levels(&self) -> &[LevelRecord] {
        &self.trace.levels
    }

    pub fn a_sequence(&self) -> Vec<f64> {
        self.trace.inadmissibility.iter().map(|a| a.a).collect()
    }
}

fn to_posterior(level: &LevelRecord, prior: &Prior, a: f64) -> Result<PosteriorSampleSet> {
    let theta = level
        .states
        .iter()
        .map(|s| prior.to_physical(s))
        .collect::<Result<_>>()?;
    Ok(PosteriorSampleSet {
        theta,
        chains: level.chains.clone(),
        level: level.index,
        threshold: level.threshold,
        a,
    })
}

/// Revised BUS with automatic inner/outer stopping.
pub fn run_bus<M: LogLikelihood + ?Sized>(
    model: &M,
    prior: &Prior,
    config: &SusConfig,
    stopping: &StoppingConfig,
) -> Result<BusRun> {
    config.validate()?;
    stopping.validate()?;
    let driving = BusDriving::new(model, prior)?;
    let tree = StreamTree::new(config.seed);
    let inner_tree = tree.child(label::INNER);
    let p0 = config.level_probability;

    let mut levels = vec![run_level_zero(config, &driving, &tree)?];
    let mut inadmissibility = Vec::new();
    loop {
        let last = levels.last_mut().expect("at least one level");
        if last.index == config.max_levels {
            let last_a = inadmissibility.last().map_or(1.0, |a: &Inadmissibility| a.a);
            return Err(Error::LevelsExhausted {
                max_levels: config.max_levels,
                last_a,
                tol: stopping.tol,
                partial: Box::new(BusTrace {
                    levels,
                    inadmissibility,
                }),
            });
        }
        let next = advance_level(last, config, &driving, &tree)?;
        let mut a = inner_inadmissibility(
            next.threshold,
            model,
            prior,
            stopping,
            &inner_tree.child(next.index as u64),
        )?;
        a.level = next.index;
        levels.push(next);
        inadmissibility.push(a);
        if a.a <= stopping.tol {
            break;
        }
    }

    let m = levels.len() - 1;
    let top = &levels[m];
    let b_m = top.threshold;
    let evidence = EvidenceEstimate {
        stopping_level: m,
        b_m,
        ln_evidence: b_m + m as f64 * p0.ln(),
        cov_proxy: estimate_cov(&levels, p0).delta,
    };
    let posterior = to_posterior(top, prior, inadmissibility[m - 1].a)?;
    let ccdf = assemble_ccdf(&levels, p0);
    Ok(BusRun {
        trace: BusTrace {
            levels,
            inadmissibility,
        },
        posterior,
        evidence,
        ccdf,
        tol: stopping.tol,
    })
}

/// Mean of `r(θ)` over posterior samples.
pub fn posterior_expectation<F>(samples: &PosteriorSampleSet, r: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if samples.is_empty() {
        return Err(Error::InsufficientData("posterior sample set is empty".into()));
    }
    let mut sum = 0.0;
    for (i, t) in samples.theta.iter().enumerate() {
        sum += r(t).map_err(|e| e.at_sample(i))?;
    }
    Ok(sum / samples.len() as f64)
}

/// `Y = c L(θ) − U` of the original formulation.
struct OriginalDriving<'a, M: ?Sized> {
    model: &'a M,
    prior: &'a Prior,
    ln_c: f64,
}

impl<M: LogLikelihood + ?Sized> Driving for OriginalDriving<'_, M> {
    fn dim(&self) -> usize {
        self.prior.dim() + 1
    }

    fn evaluate(&self, u: &[f64]) -> Result<f64> {
        let theta = self.prior.to_physical(u)?;
        let ln_l = checked_log_likelihood(self.model, &theta)?;
        let cl = (self.ln_c + ln_l).exp().min(f64::MAX);
        Ok(cl - crate::normal::cdf(u[self.prior.dim()]))
    }
}

/// Result of an original-BUS run with a fixed multiplier.
#[derive(Debug, Clone)]
pub struct OriginalBusRun {
    pub multiplier: f64,
    pub levels: Vec<LevelRecord>,
    /// `P̂(Y > 0)`.
    pub exceedance: f64,
    /// `P̂(Y > 0) / c`; correct only when `c ≤ 1 / max L`.
    pub evidence: f64,
    pub posterior: PosteriorSampleSet,
}

/// Original BUS on `Y = cL(θ) − U` with target threshold 0.
///
/// Admissibility of `c` is deliberately not checked; with `c > 1/max L` the
/// samples follow the truncated composite `q(θ) min(1, cL(θ))`.
pub fn run_bus_original<M: LogLikelihood + ?Sized>(
    model: &M,
    prior: &Prior,
    multiplier: f64,
    config: &SusConfig,
) -> Result<OriginalBusRun> {
    config.validate()?;
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "multiplier must be positive, got {multiplier}"
        )));
    }
    check_dims(model, prior)?;
    let driving = OriginalDriving {
        model,
        prior,
        ln_c: multiplier.ln(),
    };
    let tree = StreamTree::new(config.seed);
    let p0 = config.level_probability;
    let n_seeds = config.seeds_per_level();
    let mut levels = vec![run_level_zero(config, &driving, &tree)?];
    loop {
        let last = levels.last_mut().expect("at least one level");
        let above: Vec<usize> = (0..last.len()).filter(|&i| last.ys[i] > 0.0).collect();
        if above.len() > n_seeds {
            // The next threshold would pass 0: clamp it and finish on {Y > 0}.
            let exceedance = p0.powi(last.index as i32) * above.len() as f64 / last.len() as f64;
            let threshold = Threshold {
                value: 0.0,
                seeds: above,
            };
            let final_level = grow_level(last, &threshold, config, &driving, &tree)?;
            let posterior = to_posterior(&final_level, prior, f64::NAN)?;
            levels.push(final_level);
            return Ok(OriginalBusRun {
                multiplier,
                levels,
                exceedance,
                evidence: exceedance / multiplier,
                posterior,
            });
        }
        if last.index == config.max_levels {
            return Err(Error::InsufficientData(format!(
                "threshold 0 not reached within {} levels",
                config.max_levels
            )));
        }
        // Validates the plateau condition before the standard step.
        select_threshold(last, n_seeds)?;
        let next = advance_level(last, config, &driving, &tree)?;
        levels.push(next);
    }
}

/// Least-squares fit of `ln P(Y > b)` against `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

impl TailFit {
    /// A slope shallower than `-1 + tolerance` means the curve has not yet settled.
    pub fn is_pre_transition(&self, tolerance: f64) -> bool {
        self.slope > -1.0 + tolerance
    }
}

/// Fits the log-CCDF over `b ∈ [lo, hi]`.
pub fn fit_tail_slope(curve: &CcdfCurve, lo: f64, hi: f64) -> Result<TailFit> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.b >= lo && p.b <= hi && p.ln_ccdf.is_finite())
        .map(|p| (p.b, p.ln_ccdf))
        .collect();
    if pts.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "tail fit needs at least 5 points in [{lo}, {hi}], found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("tail fit window has no spread in b".into()));
    }
    let slope = sxy / sxx;
    Ok(TailFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}
