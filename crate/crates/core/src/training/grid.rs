use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_report, F1Averaging, MetricsReport};
use super::trainer::{train, TrainConfig};
use crate::engine::{Aggregation, ChoiceBatch, ModelArtifact, ModelConfig, Readout, Update};
use crate::error::{Error, Result};

/// Hyperparameter grid of message-passing models plus baselines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Nest-id vectors; each defines one alternative graph and one nested logit.
    pub nest_structures: Vec<Vec<usize>>,
    pub aggregations: Vec<Aggregation>,
    pub updates: Vec<Update>,
    pub readouts: Vec<Readout>,
    pub layers: Vec<usize>,
    pub hidden_widths: Vec<usize>,
    /// Hidden widths of the alternative-specific deep baseline.
    #[serde(default)]
    pub asu_dnn_widths: Vec<usize>,
    /// One nested logit per nest structure.
    #[serde(default)]
    pub nested_logit: bool,
    #[serde(default)]
    pub multinomial_logit: bool,
}

impl GridSpec {
    /// The travel-mode experiment: 288 message-passing models, 4 deep
    /// baselines, 3 nested logits, and 1 multinomial logit (296 runs).
    pub fn paper_default() -> Self {
        Self {
            nest_structures: vec![vec![0, 0, 1, 2], vec![0, 0, 0, 1], vec![0, 0, 1, 1]],
            aggregations: vec![Aggregation::Mean, Aggregation::Lse, Aggregation::Max],
            updates: vec![Update::Concat, Update::Plus],
            readouts: vec![Readout::Linear, Readout::Mlp],
            layers: vec![1, 2],
            hidden_widths: vec![1, 64, 128, 512],
            asu_dnn_widths: vec![1, 64, 128, 512],
            nested_logit: true,
            multinomial_logit: true,
        }
    }

    /// Every model configuration, message-passing models first.
    pub fn enumerate(&self, input_dim: usize) -> Result<Vec<ModelConfig>> {
        let alternatives = self
            .nest_structures
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::config("grid lists no nest structures"))?;
        if self.nest_structures.iter().any(|s| s.len() != alternatives) {
            return Err(Error::config("nest structures differ in alternative count"));
        }
        let mut out = Vec::new();
        for ids in &self.nest_structures {
            for &agg in &self.aggregations {
                for &upd in &self.updates {
                    for &ro in &self.readouts {
                        for &l in &self.layers {
                            for &h in &self.hidden_widths {
                                out.push(ModelConfig::custom(ids, input_dim, l, agg, upd, ro, h));
                            }
                        }
                    }
                }
            }
        }
        for &h in &self.asu_dnn_widths {
            out.push(ModelConfig::asu_dnn(alternatives, input_dim, h));
        }
        if self.nested_logit {
            for ids in &self.nest_structures {
                out.push(ModelConfig::nl(ids, input_dim));
            }
        }
        if self.multinomial_logit {
            out.push(ModelConfig::mnl(alternatives, input_dim));
        }
        for c in &out {
            c.validate()?;
        }
        Ok(out)
    }
}

/// Outcome of one grid run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridResult {
    /// Position in enumeration order.
    pub run: usize,
    pub label: String,
    pub config: ModelConfig,
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub artifact: Option<PathBuf>,
    /// Not serialized, so result files stay reproducible.
    #[serde(default, skip_serializing)]
    pub wall_clock_secs: f64,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct ResultRow<'a> {
    run: usize,
    label: &'a str,
    preset: String,
    layers: usize,
    aggregation: String,
    update: String,
    readout: String,
    hidden_width: usize,
    nest_ids: String,
    seed: u64,
    train_lll: Option<f64>,
    train_f1: Option<f64>,
    train_accuracy: Option<f64>,
    test_lll: Option<f64>,
    test_f1: Option<f64>,
    test_accuracy: Option<f64>,
    error: &'a str,
}

impl GridResult {
    fn row(&self) -> ResultRow<'_> {
        let c = &self.config;
        let m = self.metrics.as_ref();
        ResultRow {
            run: self.run,
            label: &self.label,
            preset: c.preset.to_string(),
            layers: c.layers,
            aggregation: c.aggregation.to_string(),
            update: c.update.to_string(),
            readout: c.readout.to_string(),
            hidden_width: c.hidden_width,
            nest_ids: c.nest_ids.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("-"),
            seed: self.seed,
            train_lll: m.map(|m| m.train.log_likelihood),
            train_f1: m.map(|m| m.train.f1),
            train_accuracy: m.map(|m| m.train.accuracy),
            test_lll: m.map(|m| m.test.log_likelihood),
            test_f1: m.map(|m| m.test.f1),
            test_accuracy: m.map(|m| m.test.accuracy),
            error: self.error.as_deref().unwrap_or(""),
        }
    }

    pub fn test_log_likelihood(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.test.log_likelihood)
    }
}

/// Writes results as one delimited table. Timings are omitted so that
/// repeated runs produce identical files.
pub fn write_results<W: Write>(results: &[GridResult], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in results {
        w.serialize(r.row())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct GridOptions {
    /// Worker threads; `0` uses all cores.
    pub jobs: usize,
    /// Table appended to as runs finish, in completion order.
    pub progress: Option<PathBuf>,
    /// Directory for per-run parameter artifacts.
    pub artifacts_dir: Option<PathBuf>,
    pub f1_averaging: F1Averaging,
    /// Free-form metadata copied into every artifact (e.g. data fingerprint).
    pub metadata: serde_json::Value,
}

struct Sink {
    writer: csv::Writer<std::fs::File>,
}

/// Trains and evaluates every configuration; results are ranked by test
/// log-likelihood, best first, with failed runs last.
pub fn grid_search(
    configs: &[ModelConfig],
    train_data: &ChoiceBatch<f64>,
    test_data: &ChoiceBatch<f64>,
    train_cfg: &TrainConfig,
    opts: &GridOptions,
) -> Result<Vec<GridResult>> {
    train_cfg.validate()?;
    let sink = match &opts.progress {
        Some(p) => Some(Mutex::new(Sink {
            writer: csv::Writer::from_path(p)?,
        })),
        None => None,
    };
    if let Some(dir) = &opts.artifacts_dir {
        std::fs::create_dir_all(dir)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;

    let run_one = |(run, config): (usize, &ModelConfig)| -> Result<GridResult> {
        let start = Instant::now();
        let label = config.label();
        let mut result = GridResult {
            run,
            label: label.clone(),
            config: config.clone(),
            seed: train_cfg.seed,
            metrics: None,
            artifact: None,
            wall_clock_secs: 0.0,
            error: None,
        };
        let outcome = train(config, train_data, train_cfg)
            .map_err(|e| e.into_error())
            .and_then(|o| {
                let report = evaluate_report(&o.model, train_data, test_data, opts.f1_averaging)?;
                Ok((o, report))
            });
        match outcome {
            Ok((o, report)) => {
                if let Some(dir) = &opts.artifacts_dir {
                    let path = dir.join(format!("{run:03}-{label}.json"));
                    let meta = serde_json::json!({
                        "train": train_cfg,
                        "metrics": report,
                        "loss_trace": o.loss_trace,
                        "context": opts.metadata,
                    });
                    ModelArtifact::new(config, o.model.params(), train_cfg.seed, meta).save(&path)?;
                    result.artifact = Some(path);
                }
                result.metrics = Some(report);
            }
            Err(e) => {
                log::warn!("grid run {run} ({label}) failed: {e}");
                result.error = Some(e.to_string());
            }
        }
        result.wall_clock_secs = start.elapsed().as_secs_f64();
        if let Some(sink) = &sink {
            let mut s = sink.lock().unwrap_or_else(|p| p.into_inner());
            s.writer.serialize(result.row())?;
            s.writer.flush()?;
        }
        Ok(result)
    };

    let mut results = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(run_one)
            .collect::<Result<Vec<_>>>()
    })?;
    rank(&mut results);
    Ok(results)
}

/// Sorts by test log-likelihood descending; ties and failures by run order.
pub fn rank(results: &mut [GridResult]) {
    results.sort_by(|a, b| match (a.test_log_likelihood(), b.test_log_likelihood()) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.run.cmp(&b.run)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.run.cmp(&b.run),
    });
}
