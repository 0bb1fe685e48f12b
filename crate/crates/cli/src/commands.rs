use std::path::{Path, PathBuf};

use nestgnn::analysis::{
    elasticity_row, elasticity_table, ensemble_curves, ensemble_tables, linear_grid, substitution_curve,
    total_variation, ElasticityOptions, ElasticityTable, SubstitutionCurve,
};
use nestgnn::data::{summarize as summarize_data, ChoiceDataset};
use nestgnn::engine::{ModelArtifact, NestGnn, Preset};
use nestgnn::training::{
    evaluate_report, grid_search as run_grid, train as train_one, write_results, GridOptions, GridResult,
    MetricsReport, TrainError,
};
use nestgnn::Model;
use serde::Serialize;

use crate::config::{prepare, Prepared, RunConfig};
use crate::error::CliError;
use crate::output::{create_file, pretty_table, slug, unique, write_json, Manifest};
use crate::ModelSelection;

pub struct Context {
    pub cfg: RunConfig,
    pub pretty: bool,
    pub out_dir: PathBuf,
    pub config_hash: String,
}

impl Context {
    pub fn new(cfg: RunConfig, pretty: bool) -> Self {
        let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        let config_hash = cfg.hash();
        Self {
            cfg,
            pretty,
            out_dir,
            config_hash,
        }
    }

    fn dir(&self, parts: &[&str]) -> Result<PathBuf, CliError> {
        let mut d = self.out_dir.clone();
        for p in parts {
            d.push(p);
        }
        std::fs::create_dir_all(&d)?;
        Ok(d)
    }

    fn manifest<'a>(&self, command: &'a str, data: serde_json::Value) -> Manifest<'a> {
        Manifest::new(command, self.config_hash.clone(), self.cfg.seed, data)
    }

    /// Config hash and split fingerprints, embedded in model artifacts.
    fn provenance(&self, prep: &Prepared) -> serde_json::Value {
        serde_json::json!({
            "config_hash": self.config_hash,
            "data": prep.fingerprints(),
        })
    }

    /// Prints the table in pretty mode, otherwise the written paths.
    fn finish(&self, manifest: &Manifest, dir: &Path, pretty: impl FnOnce() -> String) -> Result<(), CliError> {
        let path = manifest.write(dir)?;
        if self.pretty {
            print!("{}", pretty());
        } else {
            for o in &manifest.outputs {
                println!("{}", o.display());
            }
            println!("{}", path.display());
        }
        Ok(())
    }
}

pub fn ingest(ctx: &Context) -> Result<(), CliError> {
    let (ds, report) = crate::config::ingest(&ctx.cfg)?;
    let dir = ctx.dir(&["ingest"])?;
    let data_path = dir.join("dataset.csv");
    ds.write_csv(&data_path)?;
    let report_path = dir.join("ingest_report.json");
    write_json(&report_path, &report)?;
    let mut m = ctx.manifest("ingest", serde_json::json!({ "dataset": ds.fingerprint() }));
    m.outputs = vec![data_path, report_path];
    ctx.finish(&m, &dir, || {
        format!(
            "read {} records: {} accepted, {} dropped (missing), {} rejected\n",
            report.records_read,
            report.accepted,
            report.dropped_missing,
            report.rejected.len()
        )
    })
}

pub fn summarize(ctx: &Context) -> Result<(), CliError> {
    let (ds, report) = crate::config::ingest(&ctx.cfg)?;
    let summary = summarize_data(&ds);
    let dir = ctx.dir(&["summarize"])?;
    let stats_path = dir.join("summary.csv");
    summary.write_csv(create_file(&stats_path)?)?;
    let shares_path = dir.join("choice_shares.csv");
    {
        let mut w = create_file(&shares_path)?;
        use std::io::Write;
        writeln!(w, "alternative,share")?;
        for (name, share) in &summary.choice_shares {
            writeln!(w, "{name},{share}")?;
        }
        w.flush()?;
    }
    let mut m = ctx.manifest("summarize", serde_json::json!({ "dataset": ds.fingerprint() }));
    m.settings = serde_json::json!({ "ingest": report });
    m.outputs = vec![stats_path, shares_path];
    ctx.finish(&m, &dir, || summary.pretty())
}

fn write_loss_trace(path: &Path, trace: &[f64]) -> Result<(), CliError> {
    use std::io::Write;
    let mut w = create_file(path)?;
    writeln!(w, "epoch,loss")?;
    for (e, l) in trace.iter().enumerate() {
        writeln!(w, "{e},{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn metrics_rows(ids: &[String], reports: &[&MetricsReport]) -> Vec<Vec<String>> {
    ids.iter()
        .zip(reports)
        .map(|(id, r)| {
            vec![
                id.clone(),
                format!("{:.3}", r.train.log_likelihood),
                format!("{:.4}", r.train.accuracy),
                format!("{:.4}", r.train.f1),
                format!("{:.3}", r.test.log_likelihood),
                format!("{:.4}", r.test.accuracy),
                format!("{:.4}", r.test.f1),
            ]
        })
        .collect()
}

fn metrics_header() -> Vec<String> {
    ["model", "train_lll", "train_acc", "train_f1", "test_lll", "test_acc", "test_f1"]
        .map(String::from)
        .to_vec()
}

pub fn train(ctx: &Context) -> Result<(), CliError> {
    let config = ctx.cfg.model_config()?;
    let prep = prepare(&ctx.cfg)?;
    let train_batch = prep.train.batch::<f64>()?;
    let test_batch = prep.test.batch::<f64>()?;
    let tc = &ctx.cfg.train;
    let label = config.label();
    let dir = ctx.dir(&["train", &label])?;
    let provenance = ctx.provenance(&prep);

    let outcome = match train_one(&config, &train_batch, tc) {
        Ok(o) => o,
        Err(TrainError::Aborted(a)) => {
            let path = dir.join("checkpoint.json");
            let meta = serde_json::json!({
                "train": tc,
                "abort": { "epoch": a.epoch, "step": a.step, "reason": a.reason },
                "context": provenance,
            });
            ModelArtifact::new(&config, &a.checkpoint, tc.seed, meta).save(&path)?;
            return Err(CliError::Failure(format!(
                "training aborted at epoch {}, step {}: {} (last good parameters in {})",
                a.epoch,
                a.step,
                a.reason,
                path.display()
            )));
        }
        Err(TrainError::Failed(e)) => return Err(e.into()),
    };
    let report = evaluate_report(&outcome.model, &train_batch, &test_batch, ctx.cfg.f1_averaging)?;

    let model_path = dir.join("model.json");
    let meta = serde_json::json!({
        "train": tc,
        "metrics": report,
        "loss_trace": outcome.loss_trace,
        "context": provenance,
    });
    ModelArtifact::new(&config, outcome.model.params(), tc.seed, meta).save(&model_path)?;
    let metrics_path = dir.join("metrics.json");
    write_json(&metrics_path, &serde_json::json!({ "model": label, "metrics": report }))?;
    let trace_path = dir.join("loss_trace.csv");
    write_loss_trace(&trace_path, &outcome.loss_trace)?;

    let mut m = ctx.manifest("train", prep.fingerprints());
    m.settings = serde_json::json!({
        "model": config,
        "train": tc,
        "effective_batch_size": tc.effective_batch_size(config.preset, prep.train.len()),
        "steps": outcome.steps,
        "nest_scales": outcome.model.nest_scales(),
    });
    m.outputs = vec![model_path, metrics_path, trace_path];
    ctx.finish(&m, &dir, || {
        let mut s = pretty_table(&metrics_header(), &metrics_rows(std::slice::from_ref(&label), &[&report]));
        if let Some(mu) = outcome.model.nest_scales() {
            s += &format!("nest scales: {mu:?}\n");
        }
        s
    })
}

pub fn grid_search(ctx: &Context, jobs: usize) -> Result<(), CliError> {
    let prep = prepare(&ctx.cfg)?;
    let spec = ctx.cfg.grid_spec();
    let configs = spec.enumerate(ctx.cfg.schema().feature_dim())?;
    let dir = ctx.dir(&["grid-search"])?;
    let opts = GridOptions {
        jobs,
        progress: Some(dir.join("progress.csv")),
        artifacts_dir: Some(dir.join("models")),
        f1_averaging: ctx.cfg.f1_averaging,
        metadata: ctx.provenance(&prep),
    };
    let start = std::time::Instant::now();
    let results = run_grid(
        &configs,
        &prep.train.batch::<f64>()?,
        &prep.test.batch::<f64>()?,
        &ctx.cfg.train,
        &opts,
    )?;
    let elapsed = start.elapsed().as_secs_f64();

    let csv_path = dir.join("results.csv");
    write_results(&results, create_file(&csv_path)?)?;
    let json_path = dir.join("results.json");
    write_json(&json_path, &results)?;

    let failed = results.iter().filter(|r| r.error.is_some()).count();
    let mut m = ctx.manifest("grid-search", prep.fingerprints());
    m.settings = serde_json::json!({
        "grid": spec,
        "train": ctx.cfg.train,
        "runs": results.len(),
        "failed": failed,
        "jobs": jobs,
        "wall_clock_secs": elapsed,
        "run_secs": results.iter().map(|r| (r.run, r.wall_clock_secs)).collect::<Vec<_>>(),
    });
    m.outputs = vec![csv_path, json_path, dir.join("progress.csv"), dir.join("models")];
    if failed == results.len() && !results.is_empty() {
        m.write(&dir)?;
        return Err(CliError::Failure(format!("all {failed} grid runs failed")));
    }
    if failed > 0 {
        log::warn!("{failed} of {} grid runs failed; see results.csv", results.len());
    }
    ctx.finish(&m, &dir, || {
        let top: Vec<&GridResult> = results.iter().filter(|r| r.metrics.is_some()).take(10).collect();
        let ids: Vec<String> = top.iter().map(|r| r.label.clone()).collect();
        let reports: Vec<&MetricsReport> = top.iter().filter_map(|r| r.metrics.as_ref()).collect();
        format!(
            "{} runs ({} failed); top {} by test log-likelihood:\n{}",
            results.len(),
            failed,
            top.len(),
            pretty_table(&metrics_header(), &metrics_rows(&ids, &reports))
        )
    })
}

/// A reloaded model with a short id for file names.
pub struct Loaded {
    pub id: String,
    pub path: PathBuf,
    pub model: Model,
}

fn load_artifact(path: &Path) -> Result<ModelArtifact, CliError> {
    ModelArtifact::load(path).map_err(|e| CliError::Usage(format!("cannot load model {}: {e}", path.display())))
}

/// Artifacts named by a grid results file, in ranked order.
fn from_results(path: &Path, nestgnn_only: bool) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let results: Vec<GridResult> = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is neither a model nor grid results: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(results
        .into_iter()
        .filter(|r| !nestgnn_only || r.config.preset == Preset::Custom)
        .filter_map(|r| r.artifact)
        .map(|a| {
            if a.exists() {
                a
            } else {
                base.join("models").join(a.file_name().unwrap_or_default())
            }
        })
        .collect())
}

fn is_results_file(path: &Path) -> bool {
    std::fs::read(path)
        .map(|b| b.iter().find(|c| !c.is_ascii_whitespace()) == Some(&b'['))
        .unwrap_or(false)
}

/// Trained models under the output directory, sorted by path.
fn default_models(ctx: &Context) -> Vec<PathBuf> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(ctx.out_dir.join("train"))
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("model.json"))
        .filter(|p| p.is_file())
        .collect();
    found.sort();
    found
}

fn load_models(
    ctx: &Context,
    prep: &Prepared,
    sel: &ModelSelection,
    fallback: Vec<PathBuf>,
    nestgnn_only: bool,
) -> Result<Vec<Loaded>, CliError> {
    let requested = if sel.models.is_empty() { fallback } else { sel.models.clone() };
    let mut paths = Vec::new();
    for p in requested {
        if !p.exists() {
            return Err(CliError::Usage(format!("model path {} does not exist", p.display())));
        }
        if is_results_file(&p) {
            paths.extend(from_results(&p, nestgnn_only)?);
        } else {
            paths.push(p);
        }
    }
    if let Some(k) = sel.top_k.or(nestgnn_only.then_some(ctx.cfg.analysis.top_k)) {
        paths.truncate(k);
    }
    if paths.is_empty() {
        return Err(CliError::Usage("no models selected (use --models)".into()));
    }
    let expected = serde_json::to_value(prep.train.fingerprint())?;
    let schema = ctx.cfg.schema();
    let mut loaded = Vec::new();
    for path in paths {
        let art = load_artifact(&path)?;
        if art.config.input_dim != schema.feature_dim() || art.config.alternatives() != schema.num_alternatives() {
            return Err(CliError::Usage(format!("model {} does not match the data schema", path.display())));
        }
        if art.metadata["context"]["data"]["train"] != expected {
            log::warn!("model {} was trained on a different split", path.display());
        }
        let model = NestGnn::new(art.config.clone(), art.parameters()?)?;
        loaded.push((art.config.label(), path, model));
    }
    let ids = unique(loaded.iter().map(|l| l.0.clone()).collect());
    Ok(loaded
        .into_iter()
        .zip(ids)
        .map(|((_, path, model), id)| Loaded { id, path, model })
        .collect())
}

fn model_records(models: &[Loaded]) -> serde_json::Value {
    models
        .iter()
        .map(|m| serde_json::json!({ "id": m.id, "path": m.path }))
        .collect()
}

pub fn evaluate(ctx: &Context, sel: &ModelSelection) -> Result<(), CliError> {
    let prep = prepare(&ctx.cfg)?;
    let models = load_models(ctx, &prep, sel, default_models(ctx), false)?;
    let train_batch = prep.train.batch::<f64>()?;
    let test_batch = prep.test.batch::<f64>()?;
    let reports = models
        .iter()
        .map(|m| evaluate_report(&m.model, &train_batch, &test_batch, ctx.cfg.f1_averaging))
        .collect::<nestgnn::Result<Vec<_>>>()?;
    let dir = ctx.dir(&["evaluate"])?;
    let path = dir.join("metrics.csv");
    #[derive(Serialize)]
    struct Row<'a> {
        model: &'a str,
        train_lll: f64,
        train_accuracy: f64,
        train_f1: f64,
        test_lll: f64,
        test_accuracy: f64,
        test_f1: f64,
    }
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    for (m, r) in models.iter().zip(&reports) {
        w.serialize(Row {
            model: &m.id,
            train_lll: r.train.log_likelihood,
            train_accuracy: r.train.accuracy,
            train_f1: r.train.f1,
            test_lll: r.test.log_likelihood,
            test_accuracy: r.test.accuracy,
            test_f1: r.test.f1,
        })
        .map_err(|e| CliError::Failure(e.to_string()))?;
    }
    w.flush()?;
    let mut m = ctx.manifest("evaluate", prep.fingerprints());
    m.settings = serde_json::json!({ "models": model_records(&models), "f1_averaging": ctx.cfg.f1_averaging });
    m.outputs = vec![path];
    ctx.finish(&m, &dir, || {
        let ids: Vec<String> = models.iter().map(|m| m.id.clone()).collect();
        pretty_table(&metrics_header(), &metrics_rows(&ids, &reports.iter().collect::<Vec<_>>()))
    })
}

fn elasticity_options(ctx: &Context) -> ElasticityOptions {
    ElasticityOptions {
        relative_step: ctx.cfg.analysis.relative_step,
        ..Default::default()
    }
}

fn table_for(
    model: &Model,
    data: &ChoiceDataset,
    variable: Option<&str>,
    opts: &ElasticityOptions,
) -> Result<ElasticityTable, CliError> {
    Ok(match variable {
        Some(v) => {
            let name = data.schema().variable(v)?.name;
            ElasticityTable {
                cells: vec![elasticity_row(model, data, &name, opts)?],
                variables: vec![name],
                alternatives: data.schema().alternatives.clone(),
            }
        }
        None => elasticity_table(model, data, opts)?,
    })
}

fn write_table(path: &Path, table: &ElasticityTable) -> Result<(), CliError> {
    table.write_csv(create_file(path)?)?;
    Ok(())
}

pub fn elasticity(ctx: &Context, sel: &ModelSelection, variable: Option<String>) -> Result<(), CliError> {
    let prep = prepare(&ctx.cfg)?;
    let models = load_models(ctx, &prep, sel, default_models(ctx), false)?;
    let variable = variable.or_else(|| ctx.cfg.analysis.variable.clone());
    let opts = elasticity_options(ctx);
    let dir = ctx.dir(&["elasticity"])?;
    let mut m = ctx.manifest("elasticity", prep.fingerprints());
    let mut pretty = String::new();
    for model in &models {
        let table = table_for(&model.model, &prep.test, variable.as_deref(), &opts)?;
        let path = dir.join(format!("{}.csv", slug(&model.id)));
        write_table(&path, &table)?;
        pretty += &format!("{}\n{}\n", model.id, table.pretty());
        m.outputs.push(path);
    }
    m.settings = serde_json::json!({
        "models": model_records(&models),
        "split": "test",
        "method": opts,
        "variable": variable,
    });
    ctx.finish(&m, &dir, || pretty)
}

/// `lo:hi:n`, a comma-separated list, or the training range of the column.
fn sweep_grid(ctx: &Context, spec: Option<&str>, train: &ChoiceDataset, variable: &str) -> Result<Vec<f64>, CliError> {
    let bad = |s: &str| CliError::Usage(format!("cannot parse grid `{s}` (use lo:hi:n or v1,v2,...)"));
    if let Some(s) = spec {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() == 3 {
            let lo = parts[0].trim().parse::<f64>().map_err(|_| bad(s))?;
            let hi = parts[1].trim().parse::<f64>().map_err(|_| bad(s))?;
            let n = parts[2].trim().parse::<usize>().map_err(|_| bad(s))?;
            return Ok(linear_grid(lo, hi, n)?);
        }
        return s.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad(s))).collect();
    }
    if let Some(g) = &ctx.cfg.analysis.grid {
        return Ok(g.clone());
    }
    let var = train.schema().variable(variable)?;
    let st = train
        .standardizer()
        .ok_or_else(|| CliError::Failure("training split has no standardizer".into()))?;
    let col = train
        .column_index(&var.column)
        .ok_or_else(|| CliError::Usage(format!("column `{}` missing", var.column)))?;
    let s = &st.stats[col];
    let n = if s.max > s.min { ctx.cfg.analysis.grid_points } else { 1 };
    Ok(linear_grid(s.min, s.max, n)?)
}

fn require_variable(ctx: &Context, variable: Option<String>) -> Result<String, CliError> {
    let v = variable
        .or_else(|| ctx.cfg.analysis.variable.clone())
        .ok_or_else(|| CliError::Usage("no variable given (use --variable or analysis.variable)".into()))?;
    Ok(ctx.cfg.schema().variable(&v)?.name)
}

fn curve_pretty(curve: &SubstitutionCurve) -> String {
    let mut header = vec![curve.variable.clone()];
    header.extend(curve.alternatives.iter().map(|a| format!("P({a})")));
    let rows: Vec<Vec<String>> = curve
        .grid
        .iter()
        .zip(&curve.probabilities)
        .map(|(x, p)| {
            let mut r = vec![format!("{x:.3}")];
            r.extend(p.iter().map(|v| format!("{v:.4}")));
            r
        })
        .collect();
    pretty_table(&header, &rows)
}

pub fn substitution(
    ctx: &Context,
    sel: &ModelSelection,
    variable: Option<String>,
    grid: Option<String>,
) -> Result<(), CliError> {
    let prep = prepare(&ctx.cfg)?;
    let models = load_models(ctx, &prep, sel, default_models(ctx), false)?;
    let variable = require_variable(ctx, variable)?;
    let grid = sweep_grid(ctx, grid.as_deref(), &prep.train, &variable)?;
    let base = prep.train.raw_means();
    let dir = ctx.dir(&["substitution"])?;
    let mut m = ctx.manifest("substitution", prep.fingerprints());
    let mut pretty = String::new();
    let mut out_of_range = Vec::new();
    for model in &models {
        let curve = substitution_curve(&model.model, &prep.train, &variable, &grid, &base)?;
        let path = dir.join(format!("{}-{}.csv", slug(&model.id), slug(&variable)));
        curve.write_csv(create_file(&path)?)?;
        pretty += &format!("{}\n{}\n", model.id, curve_pretty(&curve));
        out_of_range = curve.out_of_range;
        m.outputs.push(path);
    }
    m.settings = serde_json::json!({
        "models": model_records(&models),
        "variable": variable,
        "grid": grid,
        "base": "training raw means",
        "out_of_range": out_of_range,
    });
    ctx.finish(&m, &dir, || pretty)
}

pub fn ensemble(
    ctx: &Context,
    sel: &ModelSelection,
    variable: Option<String>,
    grid: Option<String>,
) -> Result<(), CliError> {
    let prep = prepare(&ctx.cfg)?;
    let fallback = vec![ctx.out_dir.join("grid-search").join("results.json")];
    let models = load_models(ctx, &prep, sel, fallback, true)?;
    let variable = require_variable(ctx, variable)?;
    let grid = sweep_grid(ctx, grid.as_deref(), &prep.train, &variable)?;
    let base = prep.train.raw_means();
    let curves = models
        .iter()
        .map(|m| substitution_curve(&m.model, &prep.train, &variable, &grid, &base))
        .collect::<nestgnn::Result<Vec<_>>>()?;
    let curve = ensemble_curves(&curves)?;
    let opts = elasticity_options(ctx);
    let tables = models
        .iter()
        .map(|m| elasticity_table(&m.model, &prep.test, &opts))
        .collect::<nestgnn::Result<Vec<_>>>()?;
    let table = ensemble_tables(&tables)?;

    let dir = ctx.dir(&["ensemble"])?;
    let curve_path = dir.join(format!("curve-{}.csv", slug(&variable)));
    curve.write_csv(create_file(&curve_path)?)?;
    let table_path = dir.join("elasticity.csv");
    write_table(&table_path, &table)?;

    let smoothness: Vec<serde_json::Value> = curve
        .pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let member_max = curves
                .iter()
                .map(|c| total_variation(&c.ratios.iter().map(|r| r[k]).collect::<Vec<_>>()))
                .fold(0.0, f64::max);
            serde_json::json!({
                "pair": [curve.alternatives[i], curve.alternatives[j]],
                "ensemble_total_variation": total_variation(&curve.ratios.iter().map(|r| r[k]).collect::<Vec<_>>()),
                "max_member_total_variation": member_max,
            })
        })
        .collect();
    let mut m = ctx.manifest("ensemble", prep.fingerprints());
    m.settings = serde_json::json!({
        "models": model_records(&models),
        "variable": variable,
        "grid": grid,
        "averaging": "mean of per-model ratios",
        "elasticity": opts,
        "smoothness": smoothness,
    });
    m.outputs = vec![curve_path, table_path];
    ctx.finish(&m, &dir, || {
        format!(
            "ensemble of {} models\n{}\n{}",
            models.len(),
            curve_pretty(&curve),
            table.pretty()
        )
    })
}
