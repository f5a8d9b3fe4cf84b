//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 7
//! output = "out"
//!
//! [sus]
//! level_probability = 0.1
//! samples_per_level = 1000
//! max_levels = 10
//! proposal_width = 1.0
//!
//! [stopping]
//! tol = 1e-8
//! inner_samples = 1000
//! inner_level_probability = 0.1
//! inner_max_levels = 8
//!
//! [[model]]
//! name = "gaussian_conjugate"
//! data = [1.0]
//! noise_std = 0.2
//! ```
//!
//! Every value is validated while parsing, so errors carry the line of the
//! offending table.

use crate::bus::StoppingConfig;
use crate::error::Result as CoreResult;
use crate::mcmc::Proposal;
use crate::models::{GaussianConjugate, LogLikelihood, ShearFrame, ShearMode};
use crate::priors::{Marginal, Prior};
use crate::sus::SusConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Which subcommand a config is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Update,
    Compare,
    DemoBias,
    Validate,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Update => "update",
            Mode::Compare => "compare",
            Mode::DemoBias => "demo-bias",
            Mode::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sus: SusSection,
    #[serde(default)]
    pub stopping: StoppingSection,
    #[serde(rename = "model")]
    pub models: Vec<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo: Option<DemoSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSection>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    /// Outer SuS settings with the master seed applied.
    pub fn sus_config(&self) -> SusConfig {
        self.sus.to_config(self.seed)
    }

    pub fn stopping_config(&self) -> StoppingConfig {
        self.stopping.0
    }
}

/// `[sus]`: outer Subset Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "RawSus", into = "RawSus")]
pub struct SusSection(RawSus);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSus {
    level_probability: f64,
    samples_per_level: usize,
    max_levels: usize,
    proposal_width: f64,
}

impl Default for RawSus {
    fn default() -> Self {
        let d = SusConfig::default();
        Self {
            level_probability: d.level_probability,
            samples_per_level: d.samples_per_level,
            max_levels: d.max_levels,
            proposal_width: d.proposal.width,
        }
    }
}

impl SusSection {
    pub fn to_config(&self, seed: u64) -> SusConfig {
        SusConfig {
            level_probability: self.0.level_probability,
            samples_per_level: self.0.samples_per_level,
            max_levels: self.0.max_levels,
            seed,
            proposal: Proposal {
                width: self.0.proposal_width,
            },
        }
    }
}

impl TryFrom<RawSus> for SusSection {
    type Error = String;

    fn try_from(raw: RawSus) -> Result<Self, String> {
        let s = SusSection(raw);
        s.to_config(0).validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}

impl From<SusSection> for RawSus {
    fn from(s: SusSection) -> Self {
        s.0
    }
}

/// `[stopping]`: tolerance on `a_k` and inner-run settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "RawStopping", into = "RawStopping")]
pub struct StoppingSection(StoppingConfig);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawStopping {
    tol: f64,
    inner_samples: usize,
    inner_level_probability: f64,
    inner_max_levels: usize,
}

impl Default for RawStopping {
    fn default() -> Self {
        StoppingSection::default().into()
    }
}

impl TryFrom<RawStopping> for StoppingSection {
    type Error = String;

    fn try_from(r: RawStopping) -> Result<Self, String> {
        let c = StoppingConfig {
            tol: r.tol,
            inner_samples: r.inner_samples,
            inner_level_probability: r.inner_level_probability,
            inner_max_levels: r.inner_max_levels,
        };
        c.validate().map_err(|e| e.to_string())?;
        Ok(StoppingSection(c))
    }
}

impl From<StoppingSection> for RawStopping {
    fn from(s: StoppingSection) -> Self {
        let c = s.0;
        RawStopping {
            tol: c.tol,
            inner_samples: c.inner_samples,
            inner_level_probability: c.inner_level_probability,
            inner_max_levels: c.inner_max_levels,
        }
    }
}

/// One `[[model.prior]]` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarginal", into = "RawMarginal")]
pub struct MarginalSpec {
    raw: RawMarginal,
    marginal: Marginal,
}

impl MarginalSpec {
    pub fn marginal(&self) -> Marginal {
        self.marginal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawMarginal {
    StandardNormal,
    Normal {
        mean: f64,
        std: f64,
    },
    Lognormal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<f64>,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
}

impl TryFrom<RawMarginal> for MarginalSpec {
    type Error = String;

    fn try_from(raw: RawMarginal) -> Result<Self, String> {
        let marginal = match raw {
            RawMarginal::StandardNormal => Ok(Marginal::StandardNormal),
            RawMarginal::Normal { mean, std } => Marginal::normal(mean, std),
            RawMarginal::Lognormal { mu, sigma, mode, std } => match (mu, sigma, mode, std) {
                (Some(mu), Some(sigma), None, None) => Marginal::lognormal(mu, sigma),
                (None, None, Some(mode), Some(std)) => Marginal::lognormal_from_mode_std(mode, std),
                _ => {
                    return Err("lognormal prior takes either `mu` and `sigma` or `mode` and `std`".into());
                }
            },
            RawMarginal::Uniform { lower, upper } => Marginal::uniform(lower, upper),
        }
        .map_err(|e| e.to_string())?;
        Ok(MarginalSpec { raw, marginal })
    }
}

impl From<MarginalSpec> for RawMarginal {
    fn from(s: MarginalSpec) -> Self {
        s.raw
    }
}

/// One `[[model]]` block: a likelihood, its prior, and a label for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct ModelBlock {
    raw: RawModel,
    label: String,
    model: BuiltModel,
    prior: Prior,
}

/// A built-in likelihood.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltModel {
    Gaussian(GaussianConjugate),
    Shear(ShearFrame),
}

impl BuiltModel {
    pub fn as_dyn(&self) -> &dyn LogLikelihood {
        match self {
            BuiltModel::Gaussian(m) => m,
            BuiltModel::Shear(m) => m,
        }
    }
}

impl ModelBlock {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn model(&self) -> &BuiltModel {
        &self.model
    }

    pub fn likelihood(&self) -> &dyn LogLikelihood {
        self.model.as_dyn()
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    /// `1 / max L` when the maximum is known.
    pub fn c_max(&self) -> Option<f64> {
        self.likelihood().max_log_likelihood().map(|l| (-l).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
enum RawModel {
    GaussianConjugate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        data: Vec<f64>,
        noise_std: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<Vec<MarginalSpec>>,
    },
    ShearIdentifiable {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error_std: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        include_normalization: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<Vec<MarginalSpec>>,
    },
    ShearUnidentifiable {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error_std: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        include_normalization: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<Vec<MarginalSpec>>,
    },
}

fn shear(
    mode: ShearMode,
    error_std: Option<f64>,
    weights: Option<[f64; 2]>,
    include_normalization: Option<bool>,
) -> CoreResult<ShearFrame> {
    let mut f = ShearFrame::new(mode);
    if let Some(e) = error_std {
        f.error_std = e;
    }
    if let Some(w) = weights {
        f.weights = w;
    }
    if let Some(n) = include_normalization {
        f.include_normalization = n;
    }
    f.validate()?;
    Ok(f)
}

impl TryFrom<RawModel> for ModelBlock {
    type Error = String;

    fn try_from(raw: RawModel) -> Result<Self, String> {
        let (label, model, prior_spec, default_label) = match &raw {
            RawModel::GaussianConjugate {
                label,
                data,
                noise_std,
                prior,
            } => (
                label,
                GaussianConjugate::new(data.clone(), *noise_std).map(BuiltModel::Gaussian),
                prior,
                "gaussian_conjugate",
            ),
            RawModel::ShearIdentifiable {
                label,
                error_std,
                weights,
                include_normalization,
                prior,
            } => (
                label,
                shear(ShearMode::Identifiable, *error_std, *weights, *include_normalization).map(BuiltModel::Shear),
                prior,
                "shear_identifiable",
            ),
            RawModel::ShearUnidentifiable {
                label,
                error_std,
                weights,
                include_normalization,
                prior,
            } => (
                label,
                shear(ShearMode::Unidentifiable, *error_std, *weights, *include_normalization)
                    .map(BuiltModel::Shear),
                prior,
                "shear_unidentifiable",
            ),
        };
        let model = model.map_err(|e| e.to_string())?;
        let dim = model.as_dyn().dim();
        let prior = match (prior_spec, &model) {
            (Some(list), _) => Prior::new(list.iter().map(MarginalSpec::marginal).collect()),
            (None, BuiltModel::Gaussian(_)) => Prior::standard_normal(dim),
            (None, BuiltModel::Shear(f)) => f.default_prior(),
        }
        .map_err(|e| e.to_string())?;
        if prior.dim() != dim {
            return Err(format!(
                "model has {dim} parameters but the prior lists {} marginals",
                prior.dim()
            ));
        }
        Ok(ModelBlock {
            label: label.clone().unwrap_or_else(|| default_label.to_string()),
            raw,
            model,
            prior,
        })
    }
}

impl From<ModelBlock> for RawModel {
    fn from(b: ModelBlock) -> Self {
        b.raw
    }
}

/// `[demo]`: multipliers for the original-formulation bias demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDemo", into = "RawDemo")]
pub struct DemoSection(RawDemo);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDemo {
    multipliers: Vec<f64>,
    /// Multipliers are factors of `c_max` when true.
    #[serde(default = "yes")]
    relative: bool,
    #[serde(default = "reference_samples")]
    reference_samples: usize,
    #[serde(default = "alpha")]
    alpha: f64,
}

fn yes() -> bool {
    true
}

fn reference_samples() -> usize {
    5000
}

fn alpha() -> f64 {
    0.01
}

impl DemoSection {
    pub fn multipliers(&self) -> &[f64] {
        &self.0.multipliers
    }

    pub fn relative(&self) -> bool {
        self.0.relative
    }

    pub fn reference_samples(&self) -> usize {
        self.0.reference_samples
    }

    pub fn alpha(&self) -> f64 {
        self.0.alpha
    }
}

impl TryFrom<RawDemo> for DemoSection {
    type Error = String;

    fn try_from(r: RawDemo) -> Result<Self, String> {
        if r.multipliers.is_empty() || r.multipliers.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err("multipliers must be a non-empty list of positive numbers".into());
        }
        check_test_settings(r.reference_samples, r.alpha)?;
        Ok(DemoSection(r))
    }
}

impl From<DemoSection> for RawDemo {
    fn from(d: DemoSection) -> Self {
        d.0
    }
}

fn check_test_settings(samples: usize, alpha: f64) -> Result<(), String> {
    if samples < 100 {
        return Err(format!("reference sample count must be at least 100, got {samples}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(format!("significance must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

/// `[validate]`: oracle comparison settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "RawValidate", into = "RawValidate")]
pub struct ValidateSection(RawValidate);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawValidate {
    rejection_samples: usize,
    direct_samples: usize,
    alpha: f64,
}

impl Default for RawValidate {
    fn default() -> Self {
        Self {
            rejection_samples: reference_samples(),
            direct_samples: 100_000,
            alpha: alpha(),
        }
    }
}

impl ValidateSection {
    pub fn rejection_samples(&self) -> usize {
        self.0.rejection_samples
    }

    pub fn direct_samples(&self) -> usize {
        self.0.direct_samples
    }

    pub fn alpha(&self) -> f64 {
        self.0.alpha
    }
}

impl TryFrom<RawValidate> for ValidateSection {
    type Error = String;

    fn try_from(r: RawValidate) -> Result<Self, String> {
        check_test_settings(r.rejection_samples, r.alpha)?;
        if r.direct_samples < 1000 {
            return Err(format!("direct_samples must be at least 1000, got {}", r.direct_samples));
        }
        Ok(ValidateSection(r))
    }
}

impl From<ValidateSection> for RawValidate {
    fn from(v: ValidateSection) -> Self {
        v.0
    }
}
