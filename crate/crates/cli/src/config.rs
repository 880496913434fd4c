use std::path::Path;

use anyhow::{bail, Context};
use clap::ValueEnum;
use medstate_core::datamodel::SensorId;
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorChoice {
    Wrist,
    Ankle,
    Both,
}

impl SensorChoice {
    pub fn sensors(self) -> Vec<SensorId> {
        match self {
            SensorChoice::Wrist => vec![SensorId::Wrist],
            SensorChoice::Ankle => vec![SensorId::Ankle],
            SensorChoice::Both => SensorId::ALL.to_vec(),
        }
    }
}

/// Defaults read from `--config`; command-line flags take precedence.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub sensors: Option<SensorChoice>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub subjects: Option<u64>,
    pub positive_class: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("config: reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("config: parsing {}", path.display()))
    }

    pub fn resolve(&self, sensors: Option<SensorChoice>, jobs: Option<usize>) -> anyhow::Result<Shared> {
        let jobs = jobs.or(self.jobs);
        if jobs == Some(0) {
            bail!("config: --jobs must be at least 1");
        }
        Ok(Shared {
            sensors: sensors.or(self.sensors),
            jobs,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Shared {
    /// `None` when neither a flag nor the config file names the sensors.
    pub sensors: Option<SensorChoice>,
    pub jobs: Option<usize>,
}
