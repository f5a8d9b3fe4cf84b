//! Subset Simulation engine.
//!
//! Level 0 is direct Monte Carlo. Each later level is conditional on
//! `{Y ≥ b_i}` where `b_i` is the `(p₀N+1)`-th largest driving value of the
//! level below; the `p₀N` samples above it seed Markov chains of length `1/p₀`.
//! The engine knows nothing about what `Y` means.

use crate::error::{Error, Result};
use crate::mcmc::{run_chain, ChainStats, Proposal};
use crate::priors::StateVector;
use crate::rng::{label, StreamTree};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// A scalar response over standard Gaussian space.
pub trait Driving: Sync {
    /// Length of the state vectors this response accepts.
    fn dim(&self) -> usize;

    fn evaluate(&self, u: &[f64]) -> Result<f64>;
}

/// Adapts a closure into a [`Driving`] response.
pub struct FnDriving<F> {
    dim: usize,
    f: F,
}

impl<F> FnDriving<F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Driving for FnDriving<F>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, u: &[f64]) -> Result<f64> {
        (self.f)(u)
    }
}

/// Parameters of one Subset Simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SusConfig {
    pub level_probability: f64,
    pub samples_per_level: usize,
    /// Highest conditional level index that may be generated.
    pub max_levels: usize,
    pub seed: u64,
    pub proposal: Proposal,
}

impl Default for SusConfig {
    fn default() -> Self {
        Self {
            level_probability: 0.1,
            samples_per_level: 1000,
            max_levels: 10,
            seed: 0,
            proposal: Proposal::default(),
        }
    }
}

impl SusConfig {
    pub fn validate(&self) -> Result<()> {
        let p0 = self.level_probability;
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "level probability must lie in (0, 1), got {p0}"
            )));
        }
        if self.samples_per_level < 100 {
            return Err(Error::InvalidParameter(format!(
                "samples per level must be at least 100, got {}",
                self.samples_per_level
            )));
        }
        if !is_near_integer(1.0 / p0) || !is_near_integer(p0 * self.samples_per_level as f64) {
            return Err(Error::InvalidParameter(format!(
                "p0 * N and 1 / p0 must be positive integers (p0 = {p0}, N = {})",
                self.samples_per_level
            )));
        }
        if self.max_levels < 1 {
            return Err(Error::InvalidParameter("max levels must be at least 1".into()));
        }
        Proposal::new(self.proposal.width)?;
        Ok(())
    }

    /// Number of seeds `p₀N`.
    pub fn seeds_per_level(&self) -> usize {
        (self.level_probability * self.samples_per_level as f64).round() as usize
    }

    /// Chain length `1/p₀`.
    pub fn chain_length(&self) -> usize {
        (1.0 / self.level_probability).round() as usize
    }
}

fn is_near_integer(x: f64) -> bool {
    x >= 1.0 - 1e-9 && (x - x.round()).abs() < 1e-9
}

/// Correlation summary of a level relative to the next threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCov {
    pub gamma: f64,
    pub delta: f64,
}

/// Samples of one level, stored chain by chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub index: usize,
    /// Conditioning threshold; `-inf` at level 0.
    pub threshold: f64,
    pub states: Vec<StateVector>,
    pub ys: Vec<f64>,
    /// Contiguous index ranges of each chain in `states`.
    pub chains: Vec<Range<usize>>,
    pub stats: ChainStats,
    /// Filled once the next threshold is known.
    pub cov: Option<LevelCov>,
}

impl LevelRecord {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    /// Number of chains grown from seeds; zero for direct Monte Carlo.
    pub fn seed_count(&self) -> usize {
        if self.index == 0 {
            0
        } else {
            self.chains.len()
        }
    }

    /// Driving values in ascending order.
    pub fn sorted_ys(&self) -> Vec<f64> {
        let mut ys = self.ys.clone();
        ys.sort_by(f64::total_cmp);
        ys
    }

    /// Fraction of samples with `Y ≥ b`.
    pub fn fraction_at_or_above(&self, b: f64) -> f64 {
        self.ys.iter().filter(|&&y| y >= b).count() as f64 / self.len() as f64
    }
}

/// The next threshold and the indices of the samples that seed the next level.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub seeds: Vec<usize>,
}

/// Draws `N` independent prior states and evaluates the driving response.
pub fn run_level_zero<D: Driving + ?Sized>(
    config: &SusConfig,
    driving: &D,
    tree: &StreamTree,
) -> Result<LevelRecord> {
    let n = config.samples_per_level;
    let dim = driving.dim();
    let node = tree.child(label::LEVEL_ZERO);
    let pairs: Vec<(StateVector, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = node.stream(k as u64);
            let u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let state = StateVector::from_vec_unchecked(u);
            let y = driving.evaluate(&state).map_err(|e| e.at_sample(k))?;
            Ok((state, y))
        })
        .collect::<Result<_>>()?;
    let (states, ys): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(LevelRecord {
        index: 0,
        threshold: f64::NEG_INFINITY,
        states,
        ys,
        chains: (0..n).map(|k| k..k + 1).collect(),
        stats: ChainStats {
            evaluations: n as u64,
            ..ChainStats::default()
        },
        cov: None,
    })
}

/// Selects the `(n_seeds + 1)`-th largest driving value as the next threshold.
///
/// Ties at the boundary between copies of the same state (chain repeats) are
/// harmless and resolved by stable order. Ties between distinct states are a
/// plateau of the driving response and abort the run.
pub fn select_threshold(level: &LevelRecord, n_seeds: usize) -> Result<Threshold> {
    let n = level.len();
    if n_seeds == 0 || n_seeds >= n {
        return Err(Error::InvalidParameter(format!(
            "need 0 < seeds < samples, got {n_seeds} seeds for {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| level.ys[b].total_cmp(&level.ys[a]));
    let value = level.ys[order[n_seeds]];
    if level.ys[order[n_seeds - 1]] == value {
        let tied: Vec<usize> = order.iter().copied().filter(|&i| level.ys[i] == value).collect();
        let first = &level.states[tied[0]];
        if tied.iter().any(|&i| level.states[i] != *first) {
            return Err(Error::Plateau {
                level: level.index,
                threshold: value,
                required: n_seeds,
            });
        }
    }
    Ok(Threshold {
        value,
        seeds: order[..n_seeds].to_vec(),
    })
}

/// Next threshold for a standard level transition.
pub fn next_threshold(level: &LevelRecord, config: &SusConfig) -> Result<Threshold> {
    select_threshold(level, config.seeds_per_level())
}

/// Grows `N` conditional samples on `{Y ≥ threshold}` from the given seeds.
///
/// Chain lengths are `N / seeds`, with the remainder spread over the first chains.
pub fn grow_level<D: Driving + ?Sized>(
    prev: &LevelRecord,
    threshold: &Threshold,
    config: &SusConfig,
    driving: &D,
    tree: &StreamTree,
) -> Result<LevelRecord> {
    let level = prev.index + 1;
    let n = config.samples_per_level;
    let mut seeds = threshold.seeds.clone();
    let mut shuffle_rng = tree.child(label::SHUFFLE).stream(level as u64);
    seeds.shuffle(&mut shuffle_rng);

    let ns = seeds.len();
    let base = n / ns;
    let extra = n % ns;
    let chain_node = tree.child(label::CHAINS).child(level as u64);
    let b = threshold.value;
    let chains: Vec<(Vec<(StateVector, f64)>, ChainStats)> = seeds
        .par_iter()
        .enumerate()
        .map(|(c, &s)| {
            let len = base + usize::from(c < extra);
            let mut rng = chain_node.stream(c as u64);
            run_chain(
                prev.states[s].clone(),
                prev.ys[s],
                len,
                b,
                driving,
                &config.proposal,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;

    let mut states = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut ranges = Vec::with_capacity(ns);
    let mut stats = ChainStats::default();
    for (chain, st) in chains {
        let start = states.len();
        for (s, y) in chain {
            states.push(s);
            ys.push(y);
        }
        ranges.push(start..states.len());
        stats.merge(&st);
    }
    Ok(LevelRecord {
        index: level,
        threshold: b,
        states,
        ys,
        chains: ranges,
        stats,
        cov: None,
    })
}

/// Moves one level up: picks the threshold from `prev`, records `prev`'s
/// correlation summary, and grows the next level.
pub fn advance_level<D: Driving + ?Sized>(
    prev: &mut LevelRecord,
    config: &SusConfig,
    driving: &D,
    tree: &StreamTree,
) -> Result<LevelRecord> {
    let threshold = next_threshold(prev, config)?;
    prev.cov = Some(level_cov(prev, threshold.value, config.level_probability));
    grow_level(prev, &threshold, config, driving, tree)
}

/// Correlation factor `γ = 2 Σ_{k=1}^{L-1} (1 − k/L) ρ(k)` for chains of length `L`.
pub fn correlation_factor(rho: &[f64], chain_length: f64) -> f64 {
    2.0 * rho
        .iter()
        .enumerate()
        .map(|(i, r)| (1.0 - (i + 1) as f64 / chain_length) * r)
        .sum::<f64>()
}

/// Lag-`k` correlation of the indicator `I(Y ≥ b)` pooled over the chains of a level.
///
/// Uses the biased (divide by `N`) autocovariance and clips negative values at zero.
pub fn indicator_correlations(level: &LevelRecord, b: f64) -> Vec<f64> {
    let n = level.len() as f64;
    let ind: Vec<f64> = level.ys.iter().map(|&y| if y >= b { 1.0 } else { 0.0 }).collect();
    let p = ind.iter().sum::<f64>() / n;
    let r0 = p * (1.0 - p);
    let max_len = level.chains.iter().map(|c| c.len()).max().unwrap_or(0);
    if r0 <= 0.0 || max_len < 2 {
        return vec![0.0; max_len.saturating_sub(1)];
    }
    (1..max_len)
        .map(|k| {
            let mut acc = 0.0;
            for c in &level.chains {
                let xs = &ind[c.clone()];
                for l in 0..xs.len().saturating_sub(k) {
                    acc += (xs[l] - p) * (xs[l + k] - p);
                }
            }
            (acc / n / r0).max(0.0)
        })
        .collect()
}

/// c.o.v. of the estimate of `P(Y ≥ b | level)` from this level's samples.
pub fn conditional_cov(level: &LevelRecord, b: f64) -> LevelCov {
    let n = level.len() as f64;
    let p = level.fraction_at_or_above(b);
    if p <= 0.0 {
        return LevelCov {
            gamma: 0.0,
            delta: f64::INFINITY,
        };
    }
    let chain_length = n / level.chains.len() as f64;
    let gamma = correlation_factor(&indicator_correlations(level, b), chain_length);
    LevelCov {
        gamma,
        delta: ((1.0 - p) / (p * n) * (1.0 + gamma)).sqrt(),
    }
}

/// Level c.o.v. contribution for the transition at `next_threshold`, at the nominal `p₀`.
pub fn level_cov(level: &LevelRecord, next_threshold: f64, p0: f64) -> LevelCov {
    let n = level.len() as f64;
    let chain_length = n / level.chains.len() as f64;
    let gamma = correlation_factor(&indicator_correlations(level, next_threshold), chain_length);
    LevelCov {
        gamma,
        delta: ((1.0 - p0) / (p0 * n) * (1.0 + gamma)).sqrt(),
    }
}

/// Binomial c.o.v. of a direct Monte Carlo probability estimate.
pub fn binomial_cov(p: f64, n: usize) -> f64 {
    ((1.0 - p) / (p * n as f64)).sqrt()
}

/// Overall and per-level c.o.v.
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub delta: f64,
    pub levels: Vec<LevelCov>,
}

/// c.o.v. of `P̂(Y ≥ b_m)` where `b_m` is the threshold of the last level given.
///
/// Sums `δ_i²` over every level that has a successor. A lone level 0 reports
/// the binomial c.o.v. at `p₀`.
pub fn estimate_cov(levels: &[LevelRecord], p0: f64) -> CovEstimate {
    if levels.len() == 1 {
        let d = binomial_cov(p0, levels[0].len());
        return CovEstimate {
            delta: d,
            levels: vec![LevelCov { gamma: 0.0, delta: d }],
        };
    }
    let per: Vec<LevelCov> = levels
        .windows(2)
        .map(|w| level_cov(&w[0], w[1].threshold, p0))
        .collect();
    let delta = per.iter().map(|c| c.delta * c.delta).sum::<f64>().sqrt();
    CovEstimate { delta, levels: per }
}

/// One point of the pooled CCDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub b: f64,
    pub ln_ccdf: f64,
    /// `b + ln P(Y > b)`.
    pub v: f64,
    pub level: usize,
}

/// Estimated `ln P(Y > b)` versus `b`, pooled across levels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CcdfCurve {
    pub points: Vec<CcdfPoint>,
}

impl CcdfCurve {
    /// `ln P̂(Y > b)` at an arbitrary `b` (step interpolation, from above).
    pub fn ln_ccdf_at(&self, b: f64) -> Option<f64> {
        let idx = self.points.partition_point(|p| p.b < b);
        self.points.get(idx).map(|p| p.ln_ccdf)
    }
}

/// Pools the level-wise estimates `p₀^i (N−k)/N` into one strictly increasing curve.
///
/// Level `i` contributes only its samples below `b_{i+1}`; the top level contributes all.
pub fn assemble_ccdf(levels: &[LevelRecord], p0: f64) -> CcdfCurve {
    let mut points = Vec::new();
    for (i, level) in levels.iter().enumerate() {
        let upper = levels.get(i + 1).map_or(f64::INFINITY, |l| l.threshold);
        let n = level.len() as f64;
        let ln_scale = level.index as f64 * p0.ln();
        for (k, &b) in level.sorted_ys().iter().enumerate() {
            if !b.is_finite() || b >= upper {
                continue;
            }
            let ln_ccdf = ln_scale + ((n - k as f64) / n).ln();
            points.push(CcdfPoint {
                b,
                ln_ccdf,
                v: b + ln_ccdf,
                level: level.index,
            });
        }
    }
    points.sort_by(|a, b| a.b.total_cmp(&b.b));
    // Repeated chain states give equal b; keep the first (largest probability).
    points.dedup_by(|later, earlier| later.b == earlier.b);
    CcdfCurve { points }
}

/// c.o.v. of the pooled estimate of `P(Y ≥ b)`.
///
/// `b` is located in the level whose range `[b_i, b_{i+1})` contains it; the
/// levels below contribute their transition c.o.v.
pub fn ccdf_cov(levels: &[LevelRecord], p0: f64, b: f64) -> f64 {
    let m = levels
        .iter()
        .rposition(|l| l.threshold <= b)
        .unwrap_or(0);
    let below: f64 = levels[..=m]
        .windows(2)
        .map(|w| level_cov(&w[0], w[1].threshold, p0).delta.powi(2))
        .sum();
    let own = conditional_cov(&levels[m], b).delta;
    (below + own * own).sqrt()
}

/// Result of a plain reliability run.
#[derive(Debug, Clone)]
pub struct SusRun {
    pub levels: Vec<LevelRecord>,
    /// `P̂(Y ≥ target)` when a target was given and reached.
    pub failure_probability: Option<f64>,
}

/// Runs SuS up to `max_levels`, stopping early once `target` is reached.
pub fn run_sus<D: Driving + ?Sized>(
    config: &SusConfig,
    driving: &D,
    target: Option<f64>,
) -> Result<SusRun> {
    config.validate()?;
    let tree = StreamTree::new(config.seed);
    let p0 = config.level_probability;
    let mut levels = vec![run_level_zero(config, driving, &tree)?];
    loop {
        let last = levels.last_mut().expect("at least one level");
        if let Some(t) = target {
            let frac = last.fraction_at_or_above(t);
            if frac >= p0 || last.index == config.max_levels {
                let pf = p0.powi(last.index as i32) * frac;
                return Ok(SusRun {
                    levels,
                    failure_probability: Some(pf),
                });
            }
        }
        if last.index == config.max_levels {
            return Ok(SusRun {
                levels,
                failure_probability: None,
            });
        }
        let next = advance_level(last, config, driving, &tree)?;
        levels.push(next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn config(n: usize) -> SusConfig {
        SusConfig {
            samples_per_level: n,
            seed: 11,
            ..SusConfig::default()
        }
    }

    fn level_from_ys(ys: Vec<f64>) -> LevelRecord {
        let n = ys.len();
        LevelRecord {
            index: 0,
            threshold: f64::NEG_INFINITY,
            states: (0..n).map(|i| StateVector::new(vec![i as f64]).unwrap()).collect(),
            ys,
            chains: (0..n).map(|k| k..k + 1).collect(),
            stats: ChainStats::default(),
            cov: None,
        }
    }

    #[test]
    fn config_validation() {
        assert!(config(1000).validate().is_ok());
        assert!(config(50).validate().is_err());
        assert!(SusConfig { level_probability: 0.3, ..config(1000) }.validate().is_err());
        assert!(SusConfig { level_probability: 0.2, samples_per_level: 1003, ..config(1000) }
            .validate()
            .is_err());
        assert!(SusConfig { max_levels: 0, ..config(1000) }.validate().is_err());
        let c = config(10_000);
        assert_eq!(c.seeds_per_level(), 1000);
        assert_eq!(c.chain_length(), 10);
    }

    #[test]
    fn threshold_small_enumeration() {
        let level = level_from_ys((1..=10).map(f64::from).collect());
        let t = select_threshold(&level, 1).unwrap();
        assert_eq!(t.value, 9.0);
        assert_eq!(t.seeds, vec![9]);
    }

    #[test]
    fn threshold_is_the_101st_largest() {
        let ys: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let level = level_from_ys(ys);
        let t = next_threshold(&level, &config(1000)).unwrap();
        assert_eq!(t.value, 899.0);
        assert_eq!(t.seeds.len(), 100);
        assert!(t.seeds.iter().all(|&i| level.ys[i] > t.value));
    }

    #[test]
    fn plateau_aborts() {
        let level = level_from_ys(vec![3.0; 100]);
        assert!(matches!(
            select_threshold(&level, 10),
            Err(Error::Plateau { level: 0, .. })
        ));
    }

    #[test]
    fn duplicate_state_ties_are_not_a_plateau() {
        let mut level = level_from_ys(vec![1.0, 2.0, 5.0, 5.0, 6.0]);
        level.states[3] = level.states[2].clone();
        let t = select_threshold(&level, 2).unwrap();
        assert_eq!(t.value, 5.0);
    }

    #[test]
    fn constant_driving_flags_plateau_at_level_one() {
        let d = FnDriving::new(2, |_: &[f64]| Ok(3.0));
        let cfg = config(200);
        let tree = StreamTree::new(cfg.seed);
        let mut l0 = run_level_zero(&cfg, &d, &tree).unwrap();
        assert!(l0.ys.iter().all(|&y| y == 3.0));
        assert!(matches!(
            advance_level(&mut l0, &cfg, &d, &tree),
            Err(Error::Plateau { .. })
        ));
    }

    #[test]
    fn level_zero_exceedance_of_unit_exponential() {
        // ln(1/U) is a unit exponential: P(Y > 1) = e^{-1}.
        let d = FnDriving::new(1, |u: &[f64]| Ok(-crate::normal::ln_cdf(u[0])));
        let cfg = config(4000);
        let l0 = run_level_zero(&cfg, &d, &StreamTree::new(3)).unwrap();
        let p = l0.fraction_at_or_above(1.0);
        let e = (-1f64).exp();
        assert!((p - e).abs() <= 3.0 * (e * (1.0 - e) / 4000.0).sqrt(), "p = {p}");
    }

    #[test]
    fn level_zero_error_carries_index() {
        let d = FnDriving::new(1, |u: &[f64]| {
            if u[0] > 2.5 {
                Err(Error::model("boom"))
            } else {
                Ok(u[0])
            }
        });
        let err = run_level_zero(&config(1000), &d, &StreamTree::new(1)).unwrap_err();
        assert!(matches!(err, Error::Model { index: Some(_), .. }));
    }

    #[test]
    fn advance_produces_n_conditional_samples() {
        let d = FnDriving::new(2, |u: &[f64]| Ok(u[0] + u[1]));
        let cfg = config(1000);
        let tree = StreamTree::new(cfg.seed);
        let mut l0 = run_level_zero(&cfg, &d, &tree).unwrap();
        let l1 = advance_level(&mut l0, &cfg, &d, &tree).unwrap();
        assert_eq!(l1.len(), 1000);
        assert_eq!(l1.seed_count(), 100);
        assert!(l1.chains.iter().all(|c| c.len() == 10));
        assert!(l1.ys.iter().all(|&y| y >= l1.threshold));
        assert!(l0.cov.is_some());
        assert_eq!(l1.stats.moved + l1.stats.repeated, 900);
    }

    #[test]
    fn ccdf_boundary_values() {
        let level = level_from_ys((1..=10).map(f64::from).collect());
        let curve = assemble_ccdf(&[level], 0.1);
        assert_eq!(curve.points[0].ln_ccdf, 0.0);
        assert_eq!(curve.points.len(), 10);
        for p in &curve.points {
            assert_eq!(p.v, p.b + p.ln_ccdf);
        }
    }

    #[test]
    fn ccdf_second_level_starts_at_p0_squared() {
        let d = FnDriving::new(2, |u: &[f64]| Ok(u[0]));
        let run = run_sus(&SusConfig { max_levels: 2, ..config(1000) }, &d, None).unwrap();
        assert_eq!(run.levels.len(), 3);
        let curve = assemble_ccdf(&run.levels, 0.1);
        let first_l2 = curve.points.iter().find(|p| p.level == 2).unwrap();
        assert_abs_diff_eq!(first_l2.ln_ccdf, 2.0 * 0.1f64.ln(), epsilon = 1e-12);
        for w in curve.points.windows(2) {
            assert!(w[1].b > w[0].b);
            assert!(w[1].ln_ccdf <= w[0].ln_ccdf);
        }
    }

    #[test]
    fn cov_closed_forms() {
        assert_abs_diff_eq!(binomial_cov(0.1, 1000), 0.094_868_329_805_051_38, epsilon = 1e-15);
        // ρ ≡ 1 with p0 = 0.1: γ = 2 Σ_{k=1}^{9} (1 − 0.1k) = 9.
        assert_abs_diff_eq!(correlation_factor(&[1.0; 9], 10.0), 9.0, epsilon = 1e-12);
        assert_eq!(correlation_factor(&[0.0; 9], 10.0), 0.0);
        let level = level_from_ys((0..1000).map(f64::from).collect());
        let est = estimate_cov(&[level], 0.1);
        assert_abs_diff_eq!(est.delta, 0.094_868_329_805_051_38, epsilon = 1e-15);
    }

    #[test]
    fn constant_chains_have_large_gamma() {
        // Every chain is constant in its indicator: ρ(k) = (L − k) / L under the biased estimator.
        let n = 1000;
        let ys: Vec<f64> = (0..n).map(|i| if (i / 10) % 10 == 0 { 1.0 } else { 0.0 }).collect();
        let mut level = level_from_ys(ys);
        level.chains = (0..100).map(|c| c * 10..c * 10 + 10).collect();
        let rho = indicator_correlations(&level, 0.5);
        for (k, r) in rho.iter().enumerate() {
            assert_abs_diff_eq!(*r, (10.0 - (k + 1) as f64) / 10.0, epsilon = 1e-12);
        }
        let cov = level_cov(&level, 0.5, 0.1);
        assert!(cov.gamma > 5.0);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let d = FnDriving::new(3, |u: &[f64]| Ok(u.iter().sum::<f64>()));
        let cfg = SusConfig { max_levels: 3, ..config(500) };
        let run_with = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_sus(&cfg, &d, None).unwrap())
        };
        let a = run_with(1);
        let b = run_with(4);
        assert_eq!(a.levels, b.levels);
    }

    #[test]
    fn target_reached_gives_failure_probability() {
        // P(u1 > 3) = 1.3499e-3
        let d = FnDriving::new(2, |u: &[f64]| Ok(u[0]));
        let run = run_sus(&SusConfig { samples_per_level: 2000, ..config(1000) }, &d, Some(3.0)).unwrap();
        let pf = run.failure_probability.unwrap();
        let exact = crate::normal::sf(3.0);
        let delta = estimate_cov(&run.levels, 0.1).delta.max(0.1);
        assert!((pf / exact).ln().abs() < 4.0 * delta, "pf = {pf}");
    }
}
