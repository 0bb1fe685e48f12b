mod common;

use common::Generator;
use nestgnn::analysis::{
    elasticity, elasticity_autodiff, elasticity_table, ensemble_curves, ensemble_tables, linear_grid,
    substitution_curve, total_variation, ElasticityOptions, EvaluationPoint,
};
use nestgnn::autodiff::tensor::softplus_inverse;
use nestgnn::autodiff::Tensor;
use nestgnn::data::{AttributeSpec, ChoiceDataset, FeatureSchema};
use nestgnn::engine::{Aggregation, ModelConfig, NestGnn, Readout, Update};
use nestgnn::training::{train, TrainConfig};
use nestgnn::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIKE: usize = 2;
const WALK: usize = 3;

fn two_mode_schema() -> FeatureSchema {
    FeatureSchema {
        alternatives: vec!["a".into(), "b".into()],
        choice_column: "choice".into(),
        choice_labels: Default::default(),
        alternative_attributes: vec![AttributeSpec {
            name: "time".into(),
            columns: vec![Some("a_time".into()), Some("b_time".into())],
        }],
        individual_attributes: vec![],
    }
}

fn two_mode_mnl(beta: f64, asc: f64) -> NestGnn<f64> {
    let mut m = NestGnn::<f64>::init(ModelConfig::mnl(2, 1), 0).unwrap();
    let p = m.params_mut();
    p.set("readout.w0", Tensor::matrix(1, 1, vec![beta]).unwrap()).unwrap();
    p.set("readout.w1", Tensor::matrix(1, 1, vec![beta]).unwrap()).unwrap();
    p.set("asc1", Tensor::scalar(asc)).unwrap();
    m
}

#[test]
fn mnl_point_elasticity_matches_analytic_value() {
    let ds = ChoiceDataset::from_rows(two_mode_schema(), vec![vec![1.0, 1.0]], vec![0]).unwrap();
    let model = two_mode_mnl(-1.0, 0.0);
    let e = elasticity(&model, &ds, "a time", 0, &ElasticityOptions::default()).unwrap();
    assert!((e.mean + 0.5).abs() < 1e-6, "{}", e.mean);

    // random rows: own β x (1 − P), cross −β x P
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0)]).collect();
    let ds = ChoiceDataset::from_rows(two_mode_schema(), rows.clone(), vec![0; 50]).unwrap();
    let model = two_mode_mnl(-0.7, 0.3);
    let opts = ElasticityOptions::default();
    let own = elasticity(&model, &ds, "a time", 0, &opts).unwrap();
    let cross = elasticity(&model, &ds, "a time", 1, &opts).unwrap();
    let (mut own_ref, mut cross_ref) = (0.0, 0.0);
    for r in &rows {
        let va = -0.7 * r[0];
        let vb = -0.7 * r[1] + 0.3;
        let pa = 1.0 / (1.0 + (vb - va).exp());
        own_ref += -0.7 * r[0] * (1.0 - pa) / 50.0;
        cross_ref += 0.7 * r[0] * pa / 50.0;
    }
    assert!((own.mean - own_ref).abs() / own_ref.abs() < 1e-6);
    assert!((cross.mean - cross_ref).abs() / cross_ref.abs() < 1e-6);
}

fn nl_model(ds: &ChoiceDataset, mu: [f64; 2], seed: u64) -> NestGnn<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = NestGnn::<f64>::init(ModelConfig::nl(&[0, 0, 1, 1], ds.schema().feature_dim()), seed).unwrap();
    let p = m.params_mut();
    for j in 0..4 {
        let w = (0..6).map(|_| rng.gen_range(-0.8..0.8)).collect();
        p.set(&format!("message.w{j}"), Tensor::matrix(6, 1, w).unwrap()).unwrap();
    }
    for (k, mu) in mu.iter().enumerate() {
        p.set(&format!("nest.theta{k}"), Tensor::scalar(softplus_inverse(*mu))).unwrap();
    }
    m
}

fn travel_split(n: usize, seed: u64) -> (ChoiceDataset, ChoiceDataset) {
    Generator::nested(&[0, 0, 1, 1], &[0.5, 1.0]).sample(n, seed).split(0.8, seed).unwrap()
}

#[test]
fn mnl_cross_elasticities_are_equal() {
    let (train_ds, test_ds) = travel_split(300, 2);
    let mut model = NestGnn::<f64>::init(ModelConfig::mnl(4, 6), 3).unwrap();
    let out = train(model.config(), &train_ds.batch::<f64>().unwrap(), &TrainConfig { epochs: 20, learning_rate: 0.05, batch_size: None, ..Default::default() }).unwrap();
    model = out.model;
    let table = elasticity_table(&model, &test_ds, &ElasticityOptions::default()).unwrap();
    assert_eq!((table.variables.len(), table.alternatives.len()), (6, 4));
    for (r, v) in table.variables.iter().enumerate() {
        let own = test_ds.schema().variable(v).unwrap().alternative;
        let cross: Vec<f64> = (0..4).filter(|&j| j != own).map(|j| table.cells[r][j].mean).collect();
        for c in &cross[1..] {
            assert!((c - cross[0]).abs() < 1e-9, "{v}: {cross:?}");
        }
    }
}

#[test]
fn nested_logit_two_layer_elasticity_pattern() {
    let (_, test_ds) = travel_split(300, 3);
    let model = nl_model(&test_ds, [0.4, 0.8], 4);
    let table = elasticity_table(&model, &test_ds, &ElasticityOptions::default()).unwrap();
    for v in ["automobile time", "automobile cost", "transit time", "transit cost"] {
        let bike = table.cell(v, BIKE).unwrap().mean;
        let walk = table.cell(v, WALK).unwrap().mean;
        assert!((bike - walk).abs() < 1e-9, "{v}");
    }
    let transit = table.cell("automobile time", 1).unwrap().mean;
    let walk = table.cell("automobile time", WALK).unwrap().mean;
    assert!((transit - walk).abs() > 1e-3);

    // table cells are the cell-wise operation
    let opts = ElasticityOptions::default();
    for (r, v) in table.variables.iter().enumerate() {
        for j in 0..4 {
            assert_eq!(table.cells[r][j], elasticity(&model, &test_ds, v, j, &opts).unwrap());
        }
    }
}

#[test]
fn finite_difference_agrees_with_autodiff() {
    let (train_ds, test_ds) = travel_split(200, 4);
    let smooth = [
        nl_model(&test_ds, [0.5, 0.9], 5),
        train(
            &ModelConfig::highdim_lse(&[0, 0, 1, 1], 6, 4),
            &train_ds.batch::<f64>().unwrap(),
            &TrainConfig { epochs: 2, ..Default::default() },
        )
        .unwrap()
        .model,
    ];
    for model in &smooth {
        for v in ["automobile cost", "bike time"] {
            for j in 0..4 {
                let exact = elasticity_autodiff(model, &test_ds, v, j, EvaluationPoint::PerObservation).unwrap();
                let opts = ElasticityOptions { point: EvaluationPoint::PerObservation, ..Default::default() };
                let fd = elasticity(model, &test_ds, v, j, &opts).unwrap();
                let mean = exact.iter().sum::<f64>() / exact.len() as f64;
                assert!((fd.mean - mean).abs() <= 1e-3 * mean.abs().max(1e-6), "{v} {j}: {} vs {mean}", fd.mean);
            }
        }
    }
}

#[test]
fn at_mean_elasticity_is_single_point() {
    let (_, test_ds) = travel_split(200, 5);
    let model = nl_model(&test_ds, [0.5, 0.9], 6);
    let opts = ElasticityOptions { point: EvaluationPoint::AtMean, ..Default::default() };
    let e = elasticity(&model, &test_ds, "transit time", 1, &opts).unwrap();
    assert_eq!((e.n, e.std), (1, 0.0));
    assert!(e.mean < 0.0);
}

#[test]
fn unknown_variable_is_usage_error() {
    let (_, test_ds) = travel_split(100, 6);
    let model = nl_model(&test_ds, [0.5, 0.9], 6);
    let err = elasticity(&model, &test_ds, "walking cost", 0, &ElasticityOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn substitution_patterns() {
    let (train_ds, _) = travel_split(300, 7);
    let base = train_ds.raw_means();
    let grid = linear_grid(0.5, 8.0, 12).unwrap();

    let mnl = NestGnn::<f64>::init(ModelConfig::mnl(4, 6), 8).unwrap();
    let c = substitution_curve(&mnl, &train_ds, "automobile cost", &grid, &base).unwrap();
    for (i, j) in [(1, 2), (1, 3), (2, 3)] {
        let r = c.ratio_series(i, j).unwrap();
        assert!(r.iter().all(|x| rel(*x, r[0]) < 1e-9));
    }
    for g in &c.probabilities {
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    let nl = nl_model(&train_ds, [0.4, 0.8], 9);
    let c = substitution_curve(&nl, &train_ds, "automobile cost", &grid, &base).unwrap();
    let bw = c.ratio_series(BIKE, WALK).unwrap();
    assert!(bw.iter().all(|x| rel(*x, bw[0]) < 1e-9));
    let tw = c.ratio_series(1, WALK).unwrap();
    let increasing = tw.windows(2).all(|w| w[1] > w[0]);
    let decreasing = tw.windows(2).all(|w| w[1] < w[0]);
    assert!(increasing || decreasing, "{tw:?}");

    let single = substitution_curve(&nl, &train_ds, "automobile cost", &[2.0], &base).unwrap();
    assert_eq!(single.probabilities.len(), 1);
    let mut out = Vec::new();
    single.write_csv(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);

    let wide = substitution_curve(&nl, &train_ds, "automobile cost", &[-5.0, 100.0], &base).unwrap();
    assert_eq!(wide.out_of_range, vec![-5.0, 100.0]);
    assert!(substitution_curve(&nl, &train_ds, "automobile cost", &[2.0, 1.0], &base).is_err());
}

#[test]
fn trained_models_keep_cross_nest_ratios_fixed() {
    let (train_ds, _) = travel_split(200, 8);
    let base = train_ds.raw_means();
    let cfg = TrainConfig { epochs: 2, ..Default::default() };
    let batch = train_ds.batch::<f64>().unwrap();
    let configs = [
        ModelConfig::custom(&[0, 0, 1, 1], 6, 2, Aggregation::Mean, Update::Plus, Readout::Mlp, 4),
        ModelConfig::custom(&[0, 0, 0, 1], 6, 1, Aggregation::Max, Update::Concat, Readout::Linear, 4),
        ModelConfig::custom(&[0, 0, 1, 2], 6, 2, Aggregation::Lse, Update::Concat, Readout::Mlp, 4),
    ];
    for config in &configs {
        let model = train(config, &batch, &cfg).unwrap().model;
        let graph = config.graph().unwrap();
        for var in train_ds.schema().variables() {
            let grid = linear_grid(1.0, 40.0, 6).unwrap();
            let c = substitution_curve(&model, &train_ds, &var.name, &grid, &base).unwrap();
            let m = var.alternative;
            for i in 0..4 {
                for j in 0..4 {
                    if i != j && graph.nest_of(i) == graph.nest_of(j) && graph.nest_of(i) != graph.nest_of(m) {
                        let r = c.ratio_series(i, j).unwrap();
                        assert!(r.iter().all(|x| rel(*x, r[0]) < 1e-9), "{} {} ({i},{j})", config.label(), var.name);
                    }
                }
            }
        }
    }
}

#[test]
fn ensemble_is_smoother_and_bounded() {
    let (train_ds, test_ds) = travel_split(300, 9);
    let base = train_ds.raw_means();
    let grid = linear_grid(0.5, 8.0, 10).unwrap();
    let batch = train_ds.batch::<f64>().unwrap();
    let models: Vec<NestGnn<f64>> = (0..3)
        .map(|s| {
            let config = ModelConfig::custom(&[0, 0, 1, 1], 6, 1, Aggregation::Mean, Update::Plus, Readout::Mlp, 4);
            train(&config, &batch, &TrainConfig { epochs: 2, seed: s, ..Default::default() }).unwrap().model
        })
        .collect();
    let curves: Vec<_> = models
        .iter()
        .map(|m| substitution_curve(m, &train_ds, "automobile cost", &grid, &base).unwrap())
        .collect();
    let avg = ensemble_curves(&curves).unwrap();
    for &(i, j) in &avg.pairs {
        let tv = total_variation(&avg.ratio_series(i, j).unwrap());
        let worst = curves
            .iter()
            .map(|c| total_variation(&c.ratio_series(i, j).unwrap()))
            .fold(0.0, f64::max);
        assert!(tv <= worst + 1e-12);
    }
    let tables: Vec<_> = models
        .iter()
        .map(|m| elasticity_table(m, &test_ds, &ElasticityOptions::default()).unwrap())
        .collect();
    let avg = ensemble_tables(&tables).unwrap();
    let members: Vec<f64> = tables.iter().map(|t| t.cell("automobile time", 1).unwrap().mean).collect();
    let e = avg.cell("automobile time", 1).unwrap().mean;
    let (lo, hi) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(lo <= e && e <= hi);
    assert_eq!(ensemble_tables(&tables[..1]).unwrap(), tables[0]);
}
