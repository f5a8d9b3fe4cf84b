//! Brute-force references: rejection sampling, direct Monte Carlo evidence,
//! exact half-space conditionals, and the two-sample and goodness-of-fit
//! statistics used to compare samplers.

use crate::error::{Error, Result};
use crate::models::{checked_log_likelihood, LogLikelihood};
use crate::normal;
use crate::priors::{Prior, StateVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Default floor on the rejection acceptance rate.
pub const ACCEPTANCE_FLOOR: f64 = 1e-6;

/// Accepted prior draws from the rejection principle.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSamples {
    pub theta: Vec<Vec<f64>>,
    pub proposals: u64,
    pub acceptance_rate: f64,
}

impl RejectionSamples {
    pub fn marginal(&self, j: usize) -> Vec<f64> {
        self.theta.iter().map(|t| t[j]).collect()
    }
}

/// Draws `count` samples by accepting `θ ~ q` when `U < c L(θ)`.
pub fn rejection_sample<M, R>(
    model: &M,
    prior: &Prior,
    c: f64,
    count: usize,
    rng: &mut R,
) -> Result<RejectionSamples>
where
    M: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    rejection_sample_with_floor(model, prior, c, count, ACCEPTANCE_FLOOR, rng)
}

/// As [`rejection_sample`] with an explicit acceptance floor.
///
/// The floor is enforced once `10 / floor` proposals have been made.
pub fn rejection_sample_with_floor<M, R>(
    model: &M,
    prior: &Prior,
    c: f64,
    count: usize,
    floor: f64,
    rng: &mut R,
) -> Result<RejectionSamples>
where
    M: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidParameter(format!("multiplier must be positive, got {c}")));
    }
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::InvalidParameter(format!("acceptance floor must lie in (0, 1), got {floor}")));
    }
    if model.dim() != prior.dim() {
        return Err(Error::InvalidParameter("model and prior dimensions differ".into()));
    }
    let ln_c = c.ln();
    let check_after = (10.0 / floor).ceil() as u64;
    let mut theta = Vec::with_capacity(count);
    let mut proposals = 0u64;
    while theta.len() < count {
        let t = prior.sample_physical(rng);
        let u: f64 = rng.random();
        proposals += 1;
        let ln_l = checked_log_likelihood(model, &t)?;
        if u.ln() < ln_c + ln_l {
            theta.push(t);
        }
        if proposals >= check_after && (theta.len() as f64) < floor * proposals as f64 {
            return Err(Error::AcceptanceTooLow {
                rate: theta.len() as f64 / proposals as f64,
                floor,
            });
        }
    }
    let acceptance_rate = if proposals == 0 { 1.0 } else { count as f64 / proposals as f64 };
    Ok(RejectionSamples {
        theta,
        proposals,
        acceptance_rate,
    })
}

/// Direct Monte Carlo estimate of the evidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectEvidence {
    pub evidence: f64,
    pub ln_evidence: f64,
    /// Sample std of `L` over `√count`, relative to the mean; infinite when every draw gave `L = 0`.
    pub cov: f64,
}

/// Prior mean of `L(θ)` over `count` draws.
pub fn direct_mc_evidence<M, R>(model: &M, prior: &Prior, count: usize, rng: &mut R) -> Result<DirectEvidence>
where
    M: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    if count < 1000 {
        return Err(Error::InvalidParameter(format!(
            "direct evidence needs at least 1000 draws, got {count}"
        )));
    }
    if model.dim() != prior.dim() {
        return Err(Error::InvalidParameter("model and prior dimensions differ".into()));
    }
    let mut ln_ls = Vec::with_capacity(count);
    for _ in 0..count {
        let t = prior.sample_physical(rng);
        ln_ls.push(checked_log_likelihood(model, &t)?);
    }
    let top = ln_ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Ok(DirectEvidence {
            evidence: 0.0,
            ln_evidence: f64::NEG_INFINITY,
            cov: f64::INFINITY,
        });
    }
    let n = count as f64;
    let scaled: Vec<f64> = ln_ls.iter().map(|l| (l - top).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / n;
    let var = scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(DirectEvidence {
        evidence: mean * top.exp(),
        ln_evidence: mean.ln() + top,
        cov: var.sqrt() / n.sqrt() / mean,
    })
}

/// Standard normal vectors of length `dim` conditioned on `u₁ > beta`.
pub fn exact_halfspace_conditional<R: Rng + ?Sized>(
    beta: f64,
    dim: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<StateVector>> {
    if beta.is_nan() || beta == f64::INFINITY || dim == 0 {
        return Err(Error::InvalidParameter(format!(
            "half-space needs beta < inf and dim ≥ 1, got beta = {beta}, dim = {dim}"
        )));
    }
    let tail = normal::sf(beta);
    if tail <= 0.0 {
        return Err(Error::InvalidParameter(format!("half-space u1 > {beta} has no mass in f64")));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: f64 = rng.random();
        let u1 = -normal::quantile((1.0 - v) * tail);
        if !(u1 > beta && u1.is_finite()) {
            continue;
        }
        let mut u = Vec::with_capacity(dim);
        u.push(u1);
        u.extend((1..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        out.push(StateVector::new(u)?);
    }
    Ok(out)
}

/// Outcome of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
}

impl KsTest {
    /// Asymptotic critical value of the statistic at level `alpha`.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
        c * ((self.n + self.m) as f64 / (self.n * self.m) as f64).sqrt()
    }

    pub fn passes(&self, alpha: f64) -> bool {
        self.statistic <= self.critical_value(alpha)
    }
}

/// Two-sample KS statistic with its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("KS samples contain NaN".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsTest {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        n,
        m,
    })
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Outcome of a χ² goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Pearson χ² of observed counts against cell probabilities (normalized internally).
pub fn chi_square_gof(observed: &[u64], probabilities: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != probabilities.len() || observed.len() < 2 {
        return Err(Error::InvalidParameter(
            "χ² test needs at least two cells and matching lengths".into(),
        ));
    }
    let total_p: f64 = probabilities.iter().sum();
    if probabilities.iter().any(|p| p.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) || !total_p.is_finite() {
        return Err(Error::InvalidParameter("χ² cell probabilities must be positive".into()));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::InsufficientData("χ² test with no observations".into()));
    }
    let statistic: f64 = observed
        .iter()
        .zip(probabilities)
        .map(|(&o, &p)| {
            let e = n as f64 * p / total_p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = observed.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Two-cluster k-means split.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoMeans {
    pub centers: [Vec<f64>; 2],
    pub labels: Vec<u8>,
    pub weights: [f64; 2],
}

/// Lloyd iterations from a farthest-point start; deterministic for a given input.
pub fn two_means(points: &[Vec<f64>]) -> Result<TwoMeans> {
    if points.len() < 2 {
        return Err(Error::InsufficientData("2-means needs at least two points".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidParameter("points have mixed dimensions".into()));
    }
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mean = centroid(points.iter());
    let farthest = |from: &[f64]| {
        points
            .iter()
            .max_by(|a, b| dist2(a, from).total_cmp(&dist2(b, from)))
            .expect("non-empty")
            .clone()
    };
    let c0 = farthest(&mean);
    let c1 = farthest(&c0);
    let mut centers = [c0, c1];
    let mut labels = vec![0u8; points.len()];
    for _ in 0..100 {
        let next: Vec<u8> = points
            .iter()
            .map(|p| u8::from(dist2(p, &centers[1]) < dist2(p, &centers[0])))
            .collect();
        let changed = next != labels;
        labels = next;
        for (k, c) in centers.iter_mut().enumerate() {
            let members = points.iter().zip(&labels).filter(|(_, &l)| l as usize == k).map(|(p, _)| p);
            if labels.iter().any(|&l| l as usize == k) {
                *c = centroid(members);
            }
        }
        if !changed {
            break;
        }
    }
    let n1 = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n = points.len() as f64;
    Ok(TwoMeans {
        centers,
        labels,
        weights: [1.0 - n1 / n, n1 / n],
    })
}

fn centroid<'a>(points: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for p in points {
        if sum.is_empty() {
            sum = vec![0.0; p.len()];
        }
        for (s, x) in sum.iter_mut().zip(p) {
            *s += x;
        }
        n += 1;
    }
    sum.iter().map(|s| s / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ConstantLikelihood, GaussianConjugate};
    use crate::rng::StreamTree;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_likelihood_accepts_everything() {
        let model = ConstantLikelihood { dim: 2, ln_value: 0.0 };
        let prior = Prior::standard_normal(2).unwrap();
        let s = rejection_sample(&model, &prior, 1.0, 500, &mut StreamTree::new(1).stream(0)).unwrap();
        assert_eq!(s.acceptance_rate, 1.0);
        assert_eq!(s.proposals, 500);
        assert_eq!(s.theta.len(), 500);
    }

    #[test]
    fn acceptance_rate_matches_c_times_evidence() {
        let model = GaussianConjugate::new(vec![1.0], 0.2).unwrap();
        let prior = Prior::standard_normal(1).unwrap();
        let c = (-model.b_min()).exp();
        let s = rejection_sample(&model, &prior, c, 20_000, &mut StreamTree::new(2).stream(0)).unwrap();
        let expected = c * model.ln_evidence().exp();
        // Binomial count: proposals are negative binomial, use the rate's delta-method se.
        let se = expected * ((1.0 - expected) / 20_000.0).sqrt();
        assert!((s.acceptance_rate - expected).abs() < 4.0 * se, "{} vs {expected}", s.acceptance_rate);
        assert_abs_diff_eq!(expected, 0.121_260_094_408_050_24, epsilon = 1e-12);
    }

    #[test]
    fn floor_aborts() {
        let model = ConstantLikelihood { dim: 1, ln_value: -40.0 };
        let prior = Prior::standard_normal(1).unwrap();
        let r = rejection_sample_with_floor(&model, &prior, 1.0, 10, 1e-3, &mut StreamTree::new(3).stream(0));
        assert!(matches!(r, Err(Error::AcceptanceTooLow { .. })));
    }

    #[test]
    fn truncated_composite_above_c_max() {
        // c = 10 c_max: accepted density ∝ q · min(1, cL); B = {|θ − 1| < r} has mass ∝ q.
        let model = GaussianConjugate::new(vec![1.0], 0.2).unwrap();
        let prior = Prior::standard_normal(1).unwrap();
        let c = 10.0 * (-model.b_min()).exp();
        let s = rejection_sample(&model, &prior, c, 20_000, &mut StreamTree::new(4).stream(0)).unwrap();
        let r = 0.2 * (2.0 * 10f64.ln()).sqrt();
        let inside: Vec<f64> = s.marginal(0).into_iter().filter(|t| (t - 1.0).abs() < r).collect();
        let edges: Vec<f64> = (0..=5).map(|k| 1.0 - r + 2.0 * r * k as f64 / 5.0).collect();
        let mut counts = vec![0u64; 5];
        for t in &inside {
            let k = (((t - edges[0]) / (2.0 * r / 5.0)) as usize).min(4);
            counts[k] += 1;
        }
        let probs: Vec<f64> = edges.windows(2).map(|w| normal::cdf(w[1]) - normal::cdf(w[0])).collect();
        assert!(chi_square_gof(&counts, &probs).unwrap().passes(0.01));
    }

    #[test]
    fn direct_evidence_cases() {
        let prior = Prior::standard_normal(1).unwrap();
        let one = ConstantLikelihood { dim: 1, ln_value: 0.0 };
        let e = direct_mc_evidence(&one, &prior, 1000, &mut StreamTree::new(5).stream(0)).unwrap();
        assert_eq!(e.evidence, 1.0);
        assert_eq!(e.cov, 0.0);
        let zero = ConstantLikelihood { dim: 1, ln_value: f64::NEG_INFINITY };
        let e = direct_mc_evidence(&zero, &prior, 1000, &mut StreamTree::new(5).stream(0)).unwrap();
        assert_eq!(e.evidence, 0.0);
        assert!(e.cov.is_infinite());
        assert!(direct_mc_evidence(&one, &prior, 999, &mut StreamTree::new(5).stream(0)).is_err());
        let g = GaussianConjugate::new(vec![1.0], 0.2).unwrap();
        let e = direct_mc_evidence(&g, &prior, 200_000, &mut StreamTree::new(6).stream(0)).unwrap();
        let exact = g.ln_evidence().exp();
        assert!((e.evidence - exact).abs() < 3.0 * e.cov * e.evidence);
    }

    #[test]
    fn halfspace_sampler() {
        let mut rng = StreamTree::new(7).stream(0);
        let s = exact_halfspace_conditional(0.0, 3, 50_000, &mut rng).unwrap();
        assert!(s.iter().all(|u| u[0] > 0.0 && u.len() == 3));
        let mean = s.iter().map(|u| u[0]).sum::<f64>() / s.len() as f64;
        // Half-normal: mean √(2/π), variance 1 − 2/π.
        let se = ((1.0 - 2.0 / std::f64::consts::PI) / 50_000.0).sqrt();
        assert!((mean - 0.797_884_560_802_865_4).abs() < 4.0 * se);
        let s = exact_halfspace_conditional(5.0, 1, 2000, &mut rng).unwrap();
        assert!(s.iter().all(|u| u[0] > 5.0));
        let s = exact_halfspace_conditional(f64::NEG_INFINITY, 1, 20_000, &mut rng).unwrap();
        let m = s.iter().map(|u| u[0]).sum::<f64>() / 20_000.0;
        assert!(m.abs() < 4.0 / 20_000f64.sqrt());
    }

    #[test]
    fn ks_statistic_by_hand() {
        let t = ks_two_sample(&[1.0, 2.0, 3.0], &[2.5, 3.5, 4.5, 5.5]).unwrap();
        assert_abs_diff_eq!(t.statistic, 0.75, epsilon = 1e-15);
        let same = ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn kolmogorov_distribution_values() {
        // mpmath: Q(1) = 0.26999967167735456, c(0.01) = 1.6276236307187293.
        assert_abs_diff_eq!(kolmogorov_sf(1.0), 0.269_999_671_677_354_56, epsilon = 1e-12);
        let t = KsTest { statistic: 0.0, p_value: 1.0, n: 1000, m: 1000 };
        assert_abs_diff_eq!(t.critical_value(0.01), 1.627_623_630_718_729_3 * (2.0f64 / 1000.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ks_calibration_under_null() {
        let tree = StreamTree::new(8);
        let mut rejections = 0;
        for k in 0..200 {
            let mut r = tree.stream(k);
            let a: Vec<f64> = (0..300).map(|_| r.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..500).map(|_| r.sample(StandardNormal)).collect();
            if !ks_two_sample(&a, &b).unwrap().passes(0.05) {
                rejections += 1;
            }
        }
        assert!(rejections <= 22, "{rejections} rejections at 5%");
    }

    #[test]
    fn chi_square_values() {
        let t = chi_square_gof(&[10, 10], &[0.5, 0.5]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_abs_diff_eq!(t.p_value, 1.0, epsilon = 1e-12);
        // mpmath: P(χ²₁ > 4) = 0.04550026389635842.
        let t = chi_square_gof(&[30, 10], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(t.statistic, 10.0, epsilon = 1e-12);
        let t = chi_square_gof(&[60, 40], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(t.p_value, 0.045_500_263_896_358_42, epsilon = 1e-10);
        assert!(chi_square_gof(&[1], &[1.0]).is_err());
    }

    #[test]
    fn two_means_separates_clusters() {
        let mut pts = vec![vec![0.0, 0.0]; 30];
        pts.extend(vec![vec![5.0, 5.0]; 70]);
        pts[3] = vec![0.1, -0.1];
        let s = two_means(&pts).unwrap();
        let mut w = s.weights;
        w.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(w[0], 0.3, epsilon = 1e-12);
        assert_eq!(s.labels[0], s.labels[29]);
        assert_ne!(s.labels[0], s.labels[30]);
    }
}
