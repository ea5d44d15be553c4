//! Run configuration: TOML file merged under command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use readpp_core::duration::{Distribution, GammaKernel, KernelClock};
use readpp_core::fit::{GridSpec, TrainConfig};
use readpp_core::saccade::{Link, MeanFn, Variant};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Overrides `train.seed` when set.
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub design: DesignConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub grid: Option<GridSpec>,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub scanpaths: Option<PathBuf>,
    pub layouts: Option<PathBuf>,
    pub effects: Option<PathBuf>,
    /// `[x0, y0, width, height]`; taken from the layout when absent.
    pub omega: Option<[f64; 4]>,
    /// Keep only word-assigned fixations.
    pub filtered: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub reader_encoding: bool,
    pub interactions: bool,
    /// Word-level effects.
    pub effects: Vec<String>,
    /// Character-level effects.
    pub char_effects: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Saccade,
    Duration,
    /// Linear model of aggregated word-level measures.
    Aggregated,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanKind {
    #[default]
    Plain,
    Convolution,
    Markov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Design columns the model uses; all when empty.
    pub columns: Vec<String>,
    pub variant: Variant,
    pub mean_fn: MeanFn,
    pub link: Link,
    pub mean: MeanKind,
    pub lags: usize,
    /// Spillover predictors: design column names or `duration`.
    pub spillover: Vec<String>,
    pub distribution: Distribution,
    pub clock: KernelClock,
    pub kernel_init: Vec<GammaKernel<f64>>,
    /// Aggregation measure for aggregated models.
    pub measure: String,
    /// Average aggregated records across readers.
    pub pool: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Saccade,
            columns: Vec::new(),
            variant: Variant::Hawkes,
            mean_fn: MeanFn::Baseline,
            link: Link::Softplus,
            mean: MeanKind::Plain,
            lags: 1,
            spillover: Vec::new(),
            distribution: Distribution::LogNormal,
            clock: KernelClock::Onset,
            kernel_init: Vec::new(),
            measure: "gaze".into(),
            pool: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub bootstrap_replicates: usize,
    pub block_bootstrap: bool,
    /// Dataset tag written into reports.
    pub variant: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bootstrap_replicates: 1000,
            block_bootstrap: false,
            variant: None,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the top-level seed to the training configuration.
    pub fn resolve_seed(&mut self, flag: Option<u64>) {
        if let Some(s) = flag.or(self.seed) {
            self.train.seed = s;
        }
        self.seed = Some(self.train.seed);
    }

    pub fn variant_tag(&self) -> String {
        match &self.eval.variant {
            Some(v) => v.clone(),
            None if self.model.kind == ModelKind::Aggregated => format!("aggregated:{}", self.model.measure),
            None if self.data.filtered => "filtered".into(),
            None => "full".into(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unprintable config: {e}>"))
    }
}
