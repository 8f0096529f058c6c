use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tripinfer::calibration::CalibrationConfig;
use tripinfer::ingest::synthetic::SyntheticConfig;
use tripinfer::pipeline::PipelineParams;
use tripinfer::robustness::RobustnessConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Agent-contiguous pings CSV; defaults to `<output_dir>/pings.csv`.
    pub pings: Option<PathBuf>,
    /// POI CSV; defaults to `<output_dir>/pois.csv`.
    pub pois: Option<PathBuf>,
    /// Reference statistics; the built-in tables when unset.
    pub reference: Option<PathBuf>,
    /// Category-to-activity table; the built-in table when unset.
    pub enrichment: Option<PathBuf>,
    /// Pipeline parameters (e.g. a calibrated `params_final.toml`) replacing `[pipeline]`.
    pub params: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    pub pipeline: PipelineParams,
    pub calibration: CalibrationConfig,
    pub robustness: RobustnessConfig,
    pub synth: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            workers: 0,
            output_dir: PathBuf::from("out"),
            inputs: Inputs::default(),
            pipeline: PipelineParams::default(),
            calibration: CalibrationConfig::default(),
            robustness: RobustnessConfig::default(),
            synth: SyntheticConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline.validate()?;
        self.calibration.validate()?;
        self.robustness.validate()?;
        Ok(())
    }

    pub fn pings_path(&self) -> PathBuf {
        self.inputs.pings.clone().unwrap_or_else(|| self.output_dir.join("pings.csv"))
    }

    pub fn pois_path(&self) -> PathBuf {
        self.inputs.pois.clone().unwrap_or_else(|| self.output_dir.join("pois.csv"))
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    /// Hash of everything that can change results; output location and worker count
    /// are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.workers = 0;
        let canonical = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Recorded in every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Provenance {
            tool: "tripinfer",
            version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.hash(),
            seed: cfg.seed,
        }
    }

    /// Single-line form for CSV comment headers.
    pub fn line(&self) -> String {
        format!("{} {} config={} seed={}", self.tool, self.version, self.config_hash, self.seed)
    }
}
