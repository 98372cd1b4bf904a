//! Pipeline configuration: one JSON object per run, tagged by `command`.
//! Unknown keys are rejected everywhere.

use std::path::PathBuf;

use orlicz_core::conditions::SamplePlan;
use orlicz_core::degiorgi::{CaccioppoliSampling, ChainConstants};
use orlicz_core::variational::SolverOptions;
use orlicz_core::{DomainSpec, GrowthDescriptor, NFunctionDescriptor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum PipelineConfig {
    Conjugate(ConjugateConfig),
    Check(CheckConfig),
    Norm(NormConfig),
    Minimize(MinimizeConfig),
    Analyze(AnalyzeConfig),
    Sequence(SequenceConfig),
}

impl PipelineConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PipelineConfig::Conjugate(_) => "conjugate",
            PipelineConfig::Check(_) => "check",
            PipelineConfig::Norm(_) => "norm",
            PipelineConfig::Minimize(_) => "minimize",
            PipelineConfig::Analyze(_) => "analyze",
            PipelineConfig::Sequence(_) => "sequence",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
}

impl Default for Ladder {
    fn default() -> Self {
        Self { lo: 1e-2, hi: 1e2, per_decade: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugateConfig {
    pub nfunction: NFunctionDescriptor,
    pub dim: usize,
    /// Point `x` at which the functions are tabulated; the origin by default.
    #[serde(default)]
    pub point: Option<Vec<f64>>,
    #[serde(default)]
    pub ladder: Ladder,
    #[serde(default = "conjugate_out")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn conjugate_out() -> PathBuf {
    "conjugate.csv".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerOrderConfig {
    pub nfunction: NFunctionDescriptor,
    pub growth: GrowthDescriptor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub nfunction: NFunctionDescriptor,
    pub growth: GrowthDescriptor,
    #[serde(default)]
    pub lower: Option<LowerOrderConfig>,
    pub domain: DomainSpec,
    #[serde(default)]
    pub plan: SamplePlan,
    #[serde(default = "check_out")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn check_out() -> PathBuf {
    "check.json".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    pub nfunction: NFunctionDescriptor,
    /// Grid file (CSV or binary), relative to the config file.
    pub input: PathBuf,
    #[serde(default = "norm_out")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn norm_out() -> PathBuf {
    "norm.json".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// `Phi` in `f = scale Phi(x, |z|) + B(x, s)`.
    pub integrand: NFunctionDescriptor,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub lower: Option<NFunctionDescriptor>,
    /// Reference function of the growth sandwich, `Phi` by default.
    #[serde(default)]
    pub reference: Option<NFunctionDescriptor>,
    /// Constants `(a, b)` of the growth sandwich.
    #[serde(default)]
    pub sandwich: Option<(f64, f64)>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundaryConfig {
    /// Closed form in `x1..xn`.
    Expression(String),
    /// Grid file whose boundary values are used.
    File { file: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeConfig {
    pub density: DensityConfig,
    pub domain: DomainSpec,
    pub boundary: BoundaryConfig,
    /// Interior value of the initial guess.
    #[serde(default)]
    pub initial_fill: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Random bumps for the local-minimality check; none by default.
    #[serde(default)]
    pub local_min_trials: usize,
    /// Grid file for the solution; `.csv` selects CSV, anything else binary.
    #[serde(default = "solution_out")]
    pub output: PathBuf,
    #[serde(default = "minimize_report")]
    pub report: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn solution_out() -> PathBuf {
    "solution.grid".into()
}

fn minimize_report() -> PathBuf {
    "minimize.json".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// Ball center; the domain center by default.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    pub r0: f64,
    #[serde(default = "two")]
    pub b: f64,
    #[serde(default = "half")]
    pub theta: f64,
    #[serde(default = "ten")]
    pub c1: f64,
    #[serde(default = "one")]
    pub eps: f64,
}

fn two() -> f64 {
    2.0
}

fn half() -> f64 {
    0.5
}

fn ten() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Bound `M >= max |u|`; the sup-norm of the input by default.
    #[serde(default)]
    pub m: Option<f64>,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default)]
    pub sampling: CaccioppoliSampling,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { m: None, delta: 1.0, sampling: CaccioppoliSampling::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub input: PathBuf,
    /// `A` of the Caccioppoli inequality.
    pub nfunction: NFunctionDescriptor,
    /// `G` for the De Giorgi constants; skipped when absent.
    #[serde(default)]
    pub growth: Option<GrowthDescriptor>,
    pub decay: DecayConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub chain: ChainConstants,
    #[serde(default = "analyze_out")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn analyze_out() -> PathBuf {
    "analyze.json".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub growth: GrowthDescriptor,
    pub dim: usize,
    #[serde(default = "one")]
    pub c: f64,
    /// Fixed `beta`; otherwise each seed uses the first convergent `beta`
    /// of the search ladder.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub seeds: Vec<f64>,
    #[serde(default = "hmax")]
    pub hmax: usize,
    /// Relative tolerance of the threshold search.
    #[serde(default = "seq_tol")]
    pub tol: f64,
    #[serde(default = "sequence_out")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn hmax() -> usize {
    200
}

fn seq_tol() -> f64 {
    1e-6
}

fn sequence_out() -> PathBuf {
    "sequence.json".into()
}
