//! TOML run configuration. Every field is optional; command-line flags
//! override whatever the file sets.

use std::path::{Path, PathBuf};

use saliency_core::eval::ResizePolicy;
use saliency_core::report::Metric;
use saliency_core::{LossConfig, LossId};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub eval: EvalSection,
    pub loss: LossSection,
    pub gradcheck: GradcheckSection,
    pub dedup: DedupSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub method: Option<String>,
    pub pred_dirs: Vec<PathBuf>,
    pub gt_dir: Option<PathBuf>,
    pub metrics: Option<Vec<Metric>>,
    pub resize: Option<ResizePolicy>,
    pub skip_unpaired: Option<bool>,
    pub gt_threshold: Option<f64>,
    pub beta2: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub id: Option<LossId>,
    pub beta2: Option<f64>,
    pub k: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
}

impl LossSection {
    pub fn config(&self) -> LossConfig {
        let d = LossConfig::default();
        LossConfig {
            beta2: self.beta2.unwrap_or(d.beta2),
            k: self.k.unwrap_or(d.k),
            lambda: self.lambda.unwrap_or(d.lambda),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub losses: Option<Vec<LossId>>,
    pub seeds: Option<u64>,
    pub sizes: Option<Vec<usize>>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupSection {
    pub k: Option<usize>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub losses: Option<Vec<LossId>>,
    pub learning_rate: Option<f64>,
    pub steps: Option<usize>,
    pub line_search: Option<bool>,
    pub eval_every: Option<usize>,
    pub train_size: Option<usize>,
    pub heldout_size: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {}", path.display(), e.message()))
    }
}
