//! Fully resolved run configurations, written as `config.json` next to
//! every run's outputs and accepted back through `--config`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use msdnn::{MetricsConfig, NetworkConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic { count: usize, seed: u64 },
    Manifest { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRecord {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data: DataSource,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRecord {
    pub checkpoint: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub all_scales: bool,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundTruthSource {
    Dir { path: PathBuf },
    Manifest { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub predictions: PathBuf,
    pub ground_truth: GroundTruthSource,
    pub metrics: MetricsConfig,
    pub svg: bool,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckRecord {
    pub kernels: Vec<String>,
    pub seeds: u64,
    pub tolerance: f64,
    pub network_tolerance: f64,
    pub network_probes: usize,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateRecord {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data: DataSource,
    pub eval_data: DataSource,
    pub metrics: MetricsConfig,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunRecord {
    Train(TrainRecord),
    Predict(PredictRecord),
    Eval(EvalRecord),
    Gradcheck(GradcheckRecord),
    Ablate(AblateRecord),
}

impl RunRecord {
    pub fn command(&self) -> &'static str {
        match self {
            RunRecord::Train(_) => "train",
            RunRecord::Predict(_) => "predict",
            RunRecord::Eval(_) => "eval",
            RunRecord::Gradcheck(_) => "gradcheck",
            RunRecord::Ablate(_) => "ablate",
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("config.json");
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn read_record(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing run config {}", path.display()))
}

/// The record of `--config`, which must belong to `command`.
pub fn load_for<T: DeserializeOwned>(path: &Path, command: &str, pick: impl FnOnce(RunRecord) -> Option<T>) -> Result<T> {
    let record = read_record(path)?;
    let found = record.command();
    match pick(record) {
        Some(r) => Ok(r),
        None => bail!("{} is a `{found}` config, not `{command}`", path.display()),
    }
}
