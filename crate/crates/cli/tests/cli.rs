use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HEADER: &str = "driving_time,driving_cost,transit_time,transit_cost,biking_time,walking_time,age,male,vehicles,household_size,mode";

/// Travel-mode sample with logit choices on simple linear utilities.
fn write_sample(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from(HEADER);
    out.push('\n');
    let labels = ["drive", "pt", "cycle", "walk"];
    for _ in 0..n {
        let r = [
            rng.gen_range(5.0..45.0),
            rng.gen_range(0.5..8.0),
            rng.gen_range(10.0..60.0),
            rng.gen_range(1.0..4.0),
            rng.gen_range(5.0..50.0),
            rng.gen_range(5.0..60.0),
            rng.gen_range(18.0f64..80.0).round(),
            f64::from(rng.gen_bool(0.5) as u8),
            rng.gen_range(0..3) as f64,
            rng.gen_range(1..6) as f64,
        ];
        let v = [
            0.6 - 0.06 * r[0] - 0.3 * r[1] + 0.5 * r[8],
            0.9 - 0.05 * r[2] - 0.25 * r[3],
            -0.8 - 0.08 * r[4] + 0.6 * r[7],
            0.4 - 0.1 * r[5] + 0.1 * r[9],
        ];
        let w: Vec<f64> = v.iter().map(|u| u.exp()).collect();
        let mut draw = rng.gen_range(0.0..w.iter().sum::<f64>());
        let mut y = 3;
        for (k, wk) in w.iter().enumerate() {
            if draw < *wk {
                y = k;
                break;
            }
            draw -= wk;
        }
        let cells: Vec<String> = r.iter().map(|x| format!("{x:.3}")).collect();
        out.push_str(&format!("{},{}\n", cells.join(","), labels[y]));
    }
    std::fs::write(path, out).unwrap();
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(extra: serde_json::Value) -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_sample(&dir.path().join("trips.csv"), 400, 11);
        let mut cfg = serde_json::json!({
            "data": { "path": "trips.csv", "train_fraction": 0.75 },
            "seed": 5,
            "train": { "epochs": 5, "learning_rate": 0.01, "batch_size": 64 }
        });
        for (k, v) in extra.as_object().unwrap() {
            cfg[k] = v.clone();
        }
        std::fs::write(dir.path().join("run.json"), cfg.to_string()).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, out: &str, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_nestgnn"))
            .args(args)
            .arg("--config")
            .arg(self.path("run.json"))
            .arg("--out-dir")
            .arg(self.path(out))
            .env_remove("NESTGNN_OUT_DIR")
            .output()
            .unwrap()
    }
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_nestgnn")).arg("train").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("usage"));

    let o = Command::new(env!("CARGO_BIN_EXE_nestgnn"))
        .args(["summarize", "--config", "/nonexistent/run.json"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let ws = Workspace::new(serde_json::json!({ "epochs": 3 }));
    let o = ws.run("out", &["summarize"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));
}

#[test]
fn summarize_writes_column_statistics() {
    let ws = Workspace::new(serde_json::json!({}));
    ok(&ws.run("out", &["summarize"]));
    let (header, rows) = read_csv(&ws.path("out/summarize/summary.csv"));
    assert_eq!(header[..3], ["column", "count", "mean"]);
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r[1] == "400"));
    let (_, shares) = read_csv(&ws.path("out/summarize/choice_shares.csv"));
    let total: f64 = shares.iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("out/summarize/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["data"]["dataset"]["rows"], 400);
    assert!(manifest["config_hash"].as_str().unwrap().len() >= 16);
}

#[test]
fn nested_logit_training_then_elasticity_shows_two_layer_pattern() {
    let ws = Workspace::new(serde_json::json!({}));
    ok(&ws.run("out", &["train", "--preset", "nl", "--nest-ids", "0,0,1,1"]));
    assert!(ws.path("out/train/nl-n0011/model.json").is_file());
    ok(&ws.run("out", &["elasticity"]));
    let (header, rows) = read_csv(&ws.path("out/elasticity/nl-n0011.csv"));
    assert_eq!(header.len(), 1 + 2 * 4);
    assert_eq!(rows.len(), 6);
    let mean = |r: &Vec<String>, alt: usize| r[1 + 2 * alt].parse::<f64>().unwrap();
    for r in rows.iter().filter(|r| r[0].starts_with("automobile") || r[0].starts_with("transit")) {
        let (bike, walk) = (mean(r, 2), mean(r, 3));
        assert!((bike - walk).abs() <= 1e-9 * bike.abs().max(1e-12), "{r:?}");
    }
}

#[test]
fn identical_config_and_seed_give_identical_outputs() {
    let ws = Workspace::new(serde_json::json!({}));
    for out in ["a", "b"] {
        ok(&ws.run(out, &["train", "--preset", "custom", "--nest-ids", "0,0,1,1"]));
    }
    let label = "custom-L1-mean-plus-linear-h64-n0011";
    for f in ["metrics.json", "model.json", "loss_trace.csv"] {
        let a = std::fs::read(ws.path(&format!("a/train/{label}/{f}"))).unwrap();
        let b = std::fs::read(ws.path(&format!("b/train/{label}/{f}"))).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    ok(&ws.run("c", &["train", "--preset", "custom", "--nest-ids", "0,0,1,1", "--seed", "6"]));
    let a = std::fs::read(ws.path(&format!("a/train/{label}/model.json"))).unwrap();
    let c = std::fs::read(ws.path(&format!("c/train/{label}/model.json"))).unwrap();
    assert_ne!(a, c);
}

#[test]
fn divergent_training_exits_one_with_checkpoint() {
    let ws = Workspace::new(serde_json::json!({
        "train": { "epochs": 3, "learning_rate": 1e307, "batch_size": 64 }
    }));
    let o = ws.run("out", &["train", "--preset", "mnl"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("aborted"));
    assert!(ws.path("out/train/mnl-n0123/checkpoint.json").is_file());
}

#[test]
fn grid_search_feeds_evaluate_and_ensemble() {
    let ws = Workspace::new(serde_json::json!({
        "grid": {
            "nest_structures": [[0, 0, 1, 1]],
            "aggregations": ["mean", "lse"],
            "updates": ["plus"],
            "readouts": ["linear"],
            "layers": [1],
            "hidden_widths": [4],
            "nested_logit": true,
            "multinomial_logit": true
        }
    }));
    ok(&ws.run("out", &["grid-search", "--jobs", "2"]));
    let (_, rows) = read_csv(&ws.path("out/grid-search/results.csv"));
    assert_eq!(rows.len(), 4);
    let before = std::fs::read(ws.path("out/grid-search/results.csv")).unwrap();
    ok(&ws.run("out", &["grid-search", "--jobs", "1"]));
    assert_eq!(before, std::fs::read(ws.path("out/grid-search/results.csv")).unwrap());

    let results = ws.path("out/grid-search/results.json");
    ok(&ws.run("out", &["evaluate", "--models", results.to_str().unwrap()]));
    let (_, metrics) = read_csv(&ws.path("out/evaluate/metrics.csv"));
    assert_eq!(metrics.len(), 4);

    ok(&ws.run("out", &["ensemble", "--top-k", "2", "--variable", "automobile cost", "--grid", "1:7:13"]));
    let (header, curve) = read_csv(&ws.path("out/ensemble/curve-automobile_cost.csv"));
    assert_eq!(curve.len(), 13);
    assert_eq!(header.len(), 1 + 4 + 6);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("out/ensemble/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["settings"]["models"].as_array().unwrap().len(), 2);
    for s in manifest["settings"]["smoothness"].as_array().unwrap() {
        let e = s["ensemble_total_variation"].as_f64().unwrap();
        let m = s["max_member_total_variation"].as_f64().unwrap();
        assert!(e <= m * (1.0 + 1e-12) + 1e-15);
    }

    ok(&ws.run("out", &["substitution", "--models", results.to_str().unwrap(), "--top-k", "1", "--variable", "transit time"]));
}

#[test]
fn out_dir_comes_from_environment_when_no_flag() {
    let ws = Workspace::new(serde_json::json!({}));
    let o = Command::new(env!("CARGO_BIN_EXE_nestgnn"))
        .args(["ingest", "--config"])
        .arg(ws.path("run.json"))
        .env("NESTGNN_OUT_DIR", ws.path("env-out"))
        .output()
        .unwrap();
    ok(&o);
    assert!(ws.path("env-out/ingest/dataset.csv").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("env-out/ingest/ingest_report.json")).unwrap()).unwrap();
    assert_eq!(report["accepted"], 400);
}
