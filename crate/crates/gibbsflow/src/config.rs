use std::path::{Path, PathBuf};

use clap::ValueEnum;
use gibbsflow_core::dolgopyat::C0Variant;
use gibbsflow_core::gibbs::SamplerConfig;
use gibbsflow_core::system::BranchSource;
use gibbsflow_core::{presets, SystemSpec};
use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Eigen,
    GibbsAudit,
    Partition,
    Uni,
    Transversality,
    Cohomology,
    Cancellation,
    Contraction,
    Correlate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Eigen => "eigen",
            Experiment::GibbsAudit => "gibbs-audit",
            Experiment::Partition => "partition",
            Experiment::Uni => "uni",
            Experiment::Transversality => "transversality",
            Experiment::Cohomology => "cohomology",
            Experiment::Cancellation => "cancellation",
            Experiment::Contraction => "contraction",
            Experiment::Correlate => "correlate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub expr: String,
    pub image: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub partition: Vec<f64>,
    pub branches: Vec<BranchConfig>,
    pub roof: Vec<String>,
    #[serde(default = "zero_potential")]
    pub potential: Vec<String>,
    #[serde(default = "one")]
    pub alpha: f64,
}

fn zero_potential() -> Vec<String> {
    vec!["0".to_string()]
}

fn one() -> f64 {
    1.0
}

impl From<&SystemConfig> for SystemSpec {
    fn from(c: &SystemConfig) -> Self {
        SystemSpec {
            partition: c.partition.clone(),
            branches: c.branches.iter().map(|b| BranchSource { expr: b.expr.clone(), image: b.image }).collect(),
            roof: c.roof.clone(),
            potential: c.potential.clone(),
            alpha: c.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum C0Choice {
    #[default]
    Printed,
    Divided,
}

impl From<C0Choice> for C0Variant {
    fn from(c: C0Choice) -> Self {
        match c {
            C0Choice::Printed => C0Variant::Printed,
            C0Choice::Divided => C0Variant::Divided,
        }
    }
}

/// Numeric knobs shared by all experiments. Lists left empty fall back to
/// per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub sigma: f64,
    /// Operator grid nodes per element.
    pub nodes: usize,
    pub validation_grid: usize,
    pub cap: u64,
    pub depth: usize,
    pub b: Vec<f64>,
    /// Partition scale; derived from the transversality constants when unset.
    pub scale: Option<f64>,
    pub delta: f64,
    pub beta: Option<f64>,
    pub sweep_scale: f64,
    pub n_max: usize,
    pub ab_grid: usize,
    pub truncation: usize,
    pub coboundary_tol: f64,
    pub uni_depth: usize,
    pub uni_radius: f64,
    pub min_tail: usize,
    pub steps: usize,
    pub scan: usize,
    pub grid_factor: f64,
    pub c0_variant: C0Choice,
    pub c0_floor: f64,
    pub family: usize,
    pub refine: usize,
    pub samples: usize,
    pub times: Vec<f64>,
    pub v: String,
    pub w: String,
    pub burn_in: usize,
    pub thin: usize,
    pub streams: usize,
    pub federer_budget: Option<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            sigma: 0.0,
            nodes: 1024,
            validation_grid: 2048,
            cap: gibbsflow_core::system::DEFAULT_CAP,
            depth: 8,
            b: Vec::new(),
            scale: None,
            delta: 0.05,
            beta: None,
            sweep_scale: 1.0,
            n_max: 10,
            ab_grid: 512,
            truncation: 40,
            coboundary_tol: 1e-6,
            uni_depth: 2,
            uni_radius: 0.05,
            min_tail: 1,
            steps: 10,
            scan: 64,
            grid_factor: 6.0,
            c0_variant: C0Choice::Printed,
            c0_floor: 0.1,
            family: 200,
            refine: 10,
            samples: 1_000_000,
            times: Vec::new(),
            v: "cos(2*pi*u)+x".to_string(),
            w: "cos(2*pi*u)+x".to_string(),
            burn_in: 1000,
            thin: 10,
            streams: 32,
            federer_budget: None,
        }
    }
}

impl Params {
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { burn_in: self.burn_in, thin: self.thin, streams: self.streams }
    }

    pub fn b_list(&self, exp: Experiment) -> Vec<f64> {
        if !self.b.is_empty() {
            return self.b.clone();
        }
        let pow = |lo: i32, hi: i32| (lo..=hi).map(|k| 2f64.powi(k)).collect();
        match exp {
            Experiment::Partition => pow(7, 12),
            Experiment::Cancellation => pow(8, 10).into_iter().step_by(2).collect(),
            _ => pow(8, 12),
        }
    }

    pub fn time_grid(&self) -> Vec<f64> {
        if self.times.is_empty() {
            (0..=60).map(|k| k as f64 * 0.5).collect()
        } else {
            self.times.clone()
        }
    }

    /// Range checks run before any computation.
    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, msg: &str| Err(ConfigError::invalid(&format!("/params/{}", field), msg));
        if !self.sigma.is_finite() {
            return bad("sigma", "must be finite");
        }
        if self.nodes < 64 {
            return bad("nodes", "need at least 64 nodes per element");
        }
        if self.validation_grid < 16 {
            return bad("validation_grid", "need at least 16 points");
        }
        if self.depth == 0 || self.depth > 16 {
            return bad("depth", "must lie in 1..=16");
        }
        if self.b.iter().any(|b| !(b.is_finite() && b.abs() >= 1.0)) {
            return bad("b", "frequencies must be finite with |b| >= 1");
        }
        if let Some(s) = self.scale {
            if !(s > 0.0 && s.is_finite()) {
                return bad("scale", "must be positive");
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", "must lie in (0, 1)");
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return bad("beta", "must be positive");
            }
        }
        if !(self.sweep_scale > 0.0) {
            return bad("sweep_scale", "must be positive");
        }
        if self.n_max == 0 || self.n_max > 24 {
            return bad("n_max", "must lie in 1..=24");
        }
        if self.truncation == 0 {
            return bad("truncation", "must be at least 1");
        }
        if !(self.coboundary_tol > 0.0) {
            return bad("coboundary_tol", "must be positive");
        }
        if self.uni_depth == 0 || !(self.uni_radius > 0.0) {
            return bad("uni_depth", "depth and radius must be positive");
        }
        if self.steps == 0 || self.scan < 2 {
            return bad("steps", "need at least one step and two scan points");
        }
        if !(self.grid_factor >= 1.0) {
            return bad("grid_factor", "must be at least 1");
        }
        if !(self.c0_floor > 0.0) {
            return bad("c0_floor", "must be positive");
        }
        if self.streams < 2 || self.samples < self.streams {
            return bad("samples", "need at least two streams and one sample per stream");
        }
        if self.times.iter().any(|t| !(*t >= 0.0)) || self.times.windows(2).any(|p| p[1] <= p[0]) {
            return bad("times", "must be non-negative and increasing");
        }
        if self.thin == 0 {
            return bad("thin", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| ConfigError::Invalid { pointer: pointer(e.path()), message: e.inner().to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    /// The system to run on: an explicit `system` entry wins over `preset`.
    pub fn system_spec(&self) -> Result<(String, SystemSpec), ConfigError> {
        if let Some(s) = &self.system {
            return Ok(("custom".to_string(), s.into()));
        }
        let name = self.preset.as_ref().ok_or(ConfigError::NoSystem)?;
        presets::spec(name).map(|s| (name.clone(), s)).ok_or_else(|| ConfigError::UnknownPreset(name.clone()))
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if let Some(p) = &self.preset {
            if presets::spec(p).is_none() {
                return Err(ConfigError::invalid("/preset", format!("unknown preset {:?}", p)));
            }
        }
        self.params.check()
    }
}
