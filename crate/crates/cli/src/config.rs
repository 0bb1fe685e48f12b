use std::path::{Path, PathBuf};

use nestgnn::data::{ChoiceDataset, DatasetFingerprint, FeatureSchema, IngestReport};
use nestgnn::engine::{Aggregation, ModelConfig, Preset, Readout, Update};
use nestgnn::seed::derive_seed;
use nestgnn::training::{F1Averaging, GridSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    /// Column bindings; the bundled travel-mode schema when absent.
    #[serde(default)]
    pub schema: Option<FeatureSchema>,
    /// Rows drawn before splitting; all rows when absent.
    #[serde(default)]
    pub subsample: Option<usize>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

/// A preset plus optional overrides; `config` bypasses presets entirely.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub nest_ids: Option<Vec<usize>>,
    #[serde(default)]
    pub layers: Option<usize>,
    #[serde(default)]
    pub aggregation: Option<Aggregation>,
    #[serde(default)]
    pub update: Option<Update>,
    #[serde(default)]
    pub readout: Option<Readout>,
    #[serde(default)]
    pub hidden_width: Option<usize>,
    #[serde(default)]
    pub config: Option<ModelConfig>,
}

fn default_top_k() -> usize {
    5
}

fn default_grid_points() -> usize {
    21
}

fn default_relative_step() -> f64 {
    1e-3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub variable: Option<String>,
    /// Explicit sweep values; a training-range grid when absent.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_relative_step")]
    pub relative_step: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            variable: None,
            grid: None,
            grid_points: default_grid_points(),
            top_k: default_top_k(),
            relative_step: default_relative_step(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSpec,
    /// Its `seed` field is replaced by the top-level seed.
    #[serde(default)]
    pub train: TrainConfig,
    /// The full travel-mode grid when absent.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub f1_averaging: F1Averaging,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }

    pub fn schema(&self) -> FeatureSchema {
        self.data.schema.clone().unwrap_or_else(FeatureSchema::travel_mode_default)
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grid.clone().unwrap_or_else(GridSpec::paper_default)
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&mut self) -> Result<(), CliError> {
        self.schema().validate()?;
        let f = self.data.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Usage(format!("train_fraction {f} must lie in (0, 1)")));
        }
        if self.train.seed != 0 && self.train.seed != self.seed {
            log::warn!("train.seed is ignored; the top-level seed {} governs training", self.seed);
        }
        self.train.seed = self.seed;
        self.train.validate()?;
        if self.analysis.relative_step <= 0.0 {
            return Err(CliError::Usage("analysis.relative_step must be positive".into()));
        }
        if let Some(g) = &self.grid {
            g.enumerate(self.schema().feature_dim())?;
        }
        Ok(())
    }

    /// Hash of the configuration with the output location removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        nestgnn::data::hex_digest(&bytes)
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let spec = &self.model;
        let schema = self.schema();
        let (alts, dim) = (schema.num_alternatives(), schema.feature_dim());
        if let Some(c) = &spec.config {
            c.validate()?;
            if c.input_dim != dim || c.alternatives() != alts {
                return Err(CliError::Usage("model.config does not match the data schema".into()));
            }
            return Ok(c.clone());
        }
        let preset = spec
            .preset
            .ok_or_else(|| CliError::Usage("no model preset given (use --preset or model.preset)".into()))?;
        let nests = || {
            spec.nest_ids.clone().ok_or_else(|| {
                CliError::Usage(format!("preset {preset} needs nest ids (use --nest-ids or model.nest_ids)"))
            })
        };
        let hidden = spec.hidden_width.unwrap_or(64);
        let mut config = match preset {
            Preset::Mnl => ModelConfig::mnl(alts, dim),
            Preset::AsuDnn => ModelConfig::asu_dnn(alts, dim, hidden),
            Preset::Nl => ModelConfig::nl(&nests()?, dim),
            Preset::HighdimLse => ModelConfig::highdim_lse(&nests()?, dim, hidden),
            Preset::Custom => ModelConfig::custom(
                &nests()?,
                dim,
                spec.layers.unwrap_or(1),
                spec.aggregation.unwrap_or(Aggregation::Mean),
                spec.update.unwrap_or(Update::Plus),
                spec.readout.unwrap_or(Readout::Linear),
                hidden,
            ),
        };
        if let (Some(ids), Preset::Mnl | Preset::AsuDnn) = (&spec.nest_ids, preset) {
            config.nest_ids = ids.clone();
        }
        if config.nest_ids.len() != alts {
            return Err(CliError::Usage(format!(
                "nest ids list {} alternatives but the schema has {alts}",
                config.nest_ids.len()
            )));
        }
        config.validate()?;
        Ok(config)
    }
}

/// Ingested, subsampled, and split data.
pub struct Prepared {
    pub source: ChoiceDataset,
    pub train: ChoiceDataset,
    pub test: ChoiceDataset,
}

impl Prepared {
    pub fn fingerprints(&self) -> serde_json::Value {
        let fp = |d: &ChoiceDataset| -> DatasetFingerprint { d.fingerprint() };
        serde_json::json!({
            "source": fp(&self.source),
            "train": fp(&self.train),
            "test": fp(&self.test),
        })
    }
}

/// Ingest then optional subsample, each randomized step on its own seed stream.
pub fn ingest(cfg: &RunConfig) -> Result<(ChoiceDataset, IngestReport), CliError> {
    let (ds, report) = ChoiceDataset::ingest(&cfg.data.path, &cfg.schema()).map_err(|e| match e {
        nestgnn::Error::Io(io) => {
            CliError::Usage(format!("cannot read data {}: {io}", cfg.data.path.display()))
        }
        other => other.into(),
    })?;
    let ds = match cfg.data.subsample {
        Some(n) => ds.subsample(n, derive_seed(cfg.seed, "subsample"))?,
        None => ds,
    };
    Ok((ds, report))
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let (source, _) = ingest(cfg)?;
    let (train, test) = source.split(cfg.data.train_fraction, derive_seed(cfg.seed, "split"))?;
    Ok(Prepared {
        source,
        train,
        test,
    })
}
