//! TOML configuration. Command-line flags override file values, which
//! override built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::pipeline::PipelineParams;
use crate::priors::PriorParams;
use crate::repair::RepairParams;
use crate::ste::SteParams;
use crate::synth::FlickerSpec;

/// Environment variable consulted when no thread count is configured.
pub const THREADS_ENV: &str = "STE_DEFLICK_THREADS";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Worker threads; 0 picks one per core.
    pub threads: usize,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub flow_dir: Option<PathBuf>,
    pub ste: SteParams,
    pub priors: PriorParams,
    pub flow: FlowParams,
    pub repair: RepairParams,
    pub synth: FlickerSpec,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidParameter(m) => Error::InvalidParameter(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline().validate()?;
        self.synth.validate()
    }

    pub fn pipeline(&self) -> PipelineParams {
        PipelineParams {
            ste: self.ste,
            priors: self.priors,
            flow: self.flow,
            repair: self.repair,
        }
    }

    /// Thread count with the environment variable as a fallback.
    pub fn resolved_threads(&self, env: Option<&str>) -> Result<usize> {
        if self.threads > 0 {
            return Ok(self.threads);
        }
        match env.map(str::trim).filter(|s| !s.is_empty()) {
            Some(s) => s
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("{THREADS_ENV}={s} is not a thread count"))),
            None => Ok(0),
        }
    }
}
