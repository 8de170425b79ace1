//! Run configuration: seed, worker count, fit settings, augmentation plans,
//! and output locations. Loaded from JSON and fully validated before any
//! work starts; command-line flags override file values.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use suss_core::fitting::{DecompositionPlans, FitConfig};
use suss_core::{Error, Result};

use crate::args::Args;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub fit: FitConfig,
    pub plans: DecompositionPlans,
    pub weights_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 1,
            fit: FitConfig::default(),
            plans: DecompositionPlans::default(),
            weights_path: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers < 1 {
            return Err(Error::Invalid("workers must be >= 1".into()));
        }
        self.fit.validate()?;
        self.plans.geometric.validate()?;
        self.plans.color.validate()?;
        Ok(())
    }

    /// Load the config (if any), apply flag overrides, and validate.
    pub fn from_args(args: &Args) -> Result<RunConfig> {
        let mut config = match args.value("config") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::io(PathBuf::from(path), e))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Decode(format!("{path}: {e}")))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = args.u64_value("seed")? {
            config.seed = seed;
        }
        if let Some(workers) = args.usize_value("workers")? {
            config.workers = workers;
        }
        if let Some(dir) = args.value("output-dir") {
            config.output_dir = Some(PathBuf::from(dir));
        }
        if let Some(w) = args.value("weights") {
            config.weights_path = Some(PathBuf::from(w));
        }
        if let Some(steps) = args.usize_value("fit-steps")? {
            config.fit.steps = steps;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Stable hash over everything that influences a fit, for cache keys.
    pub fn fit_signature(&self) -> String {
        #[derive(Serialize)]
        struct Signature<'a> {
            seed: u64,
            fit: &'a FitConfig,
            plans: &'a DecompositionPlans,
        }
        let json = serde_json::to_string(&Signature {
            seed: self.seed,
            fit: &self.fit,
            plans: &self.plans,
        })
        .expect("config serializes");
        suss_core::util::fnv1a_hex(json.as_bytes())
    }
}
