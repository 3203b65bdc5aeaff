//! Configuration, experiment driver and report files for `gibbsflow-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use config::{Experiment, ExperimentConfig};
use error::{CliError, ConfigError};
use report::{Manifest, Outputs, MANIFEST};

pub const SEED_ENV: &str = "GIBBSFLOW_SEED";

/// One experiment invocation; command-line values override the config file.
#[derive(Debug, Clone, Default)]
pub struct Request {
    pub experiment: Option<Experiment>,
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Finished {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Finished {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.audit_failures.is_empty() {
            0
        } else {
            2
        }
    }
}

pub fn seed_from_env() -> Result<Option<u64>, ConfigError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| ConfigError::invalid("/seed", format!("{} is not an integer: {:?}", SEED_ENV, s))),
        Err(_) => Ok(None),
    }
}

pub fn resolve(req: &Request) -> Result<(Experiment, ExperimentConfig), ConfigError> {
    let mut cfg = match &req.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = req.experiment {
        cfg.experiment = Some(e);
    }
    if let Some(p) = &req.preset {
        cfg.preset = Some(p.clone());
        cfg.system = None;
    }
    if let Some(o) = &req.out {
        cfg.output = Some(o.clone());
    }
    if let Some(s) = req.seed {
        cfg.seed = s;
    }
    let exp = cfg.experiment.ok_or_else(|| ConfigError::invalid("/experiment", "no experiment given"))?;
    cfg.check()?;
    Ok((exp, cfg))
}

pub fn run(req: &Request) -> Result<Finished, CliError> {
    let start = Instant::now();
    let (exp, cfg) = resolve(req)?;
    let (name, spec) = cfg.system_spec()?;
    let system = spec.build()?;
    let dir = cfg.output.clone().unwrap_or_else(|| Path::new("runs").join(&name).join(exp.name()));
    let mut out = Outputs::new(&dir)?;
    let ctx = experiments::Context { system: &system, params: &cfg.params, seed: cfg.seed };
    let outcome = experiments::run(exp, &ctx, &mut out)?;
    // the output location does not change what is computed
    let hashed = ExperimentConfig { output: None, ..cfg.clone() };
    let manifest = Manifest {
        experiment: exp.name().to_string(),
        system: name,
        config_sha256: report::sha256_hex(&serde_json::to_vec(&hashed)?),
        versions: report::versions(),
        seed: cfg.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        status: if outcome.failures.is_empty() { "ok" } else { "audit_failed" }.to_string(),
        audit_failures: outcome.failures,
        flags: outcome.flags,
        outputs: out.files().to_vec(),
    };
    out.json(MANIFEST, &manifest)?;
    Ok(Finished { dir, manifest })
}
