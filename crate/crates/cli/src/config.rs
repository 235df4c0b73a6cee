use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use smilegan::data::{AtrophySpec, Rate, SyntheticCounts};
use smilegan::selection::HoldoutConfig;
use smilegan::TrainingConfig;

use crate::CliError;

pub const SEED_ENV: &str = "SMILEGAN_SEED";
pub const RESOLVED_CONFIG: &str = "resolved-config.json";
pub const DEFAULT_RERUNS: usize = 30;

/// Settings of a synthetic cohort or an atrophy injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub spec: AtrophySpec,
    /// Cohort shape; unused by `inject`, which keeps the base table's shape.
    pub counts: SyntheticCounts,
}

/// Every parameter a command can take. Commands fill in what they use and
/// write the result as `resolved-config.json`; reading that file back with
/// `--config` reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: Option<u64>,
    pub training: TrainingConfig,
    pub reruns: usize,
    pub jobs: Option<usize>,
    pub holdout: HoldoutConfig,
    pub simulation: Option<SimulationConfig>,
    pub residualize: Option<bool>,
    /// Input files by role (`data`, `model`, `stats`, `model_k`).
    pub inputs: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: None,
            training: TrainingConfig::default(),
            reruns: DEFAULT_RERUNS,
            jobs: None,
            holdout: HoldoutConfig::default(),
            simulation: None,
            residualize: None,
            inputs: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Seed from the flag, else the config file, else `SMILEGAN_SEED`, else 0.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64, CliError> {
        let seed = match flag.or(self.seed) {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
                Err(_) => 0,
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn input(&mut self, role: &str, flag: Option<&Path>) -> Result<String, CliError> {
        if let Some(p) = flag {
            self.inputs.insert(role.into(), p.display().to_string());
        }
        self.inputs
            .get(role)
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("missing input `{role}`: pass it as a flag or in --config")))
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or(1).max(1)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

pub fn parse_rate(fixed: Option<f64>, range: Option<&[f64]>) -> Option<Rate> {
    match (fixed, range) {
        (_, Some([lo, hi])) => Some(Rate::Uniform { lo: *lo, hi: *hi }),
        (Some(r), _) => Some(Rate::Fixed(r)),
        _ => None,
    }
}

pub fn available_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
