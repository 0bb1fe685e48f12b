#![allow(dead_code)]

use nestgnn::altgraph::AlternativeGraph;
use nestgnn::closedform::{mnl_log_probabilities, nl_log_probabilities_classical, NlScaleParams, UtilityVector};
use nestgnn::data::{ChoiceDataset, FeatureSchema};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Known travel-mode generator: linear utilities on raw attributes, with
/// nested-logit or multinomial-logit choice probabilities.
#[derive(Clone, Debug)]
pub struct Generator {
    pub nest_ids: Vec<usize>,
    /// Scale per nest position; `None` gives multinomial logit.
    pub mu: Option<Vec<f64>>,
}

impl Generator {
    pub fn nested(nest_ids: &[usize], mu: &[f64]) -> Self {
        Self {
            nest_ids: nest_ids.to_vec(),
            mu: Some(mu.to_vec()),
        }
    }

    pub fn multinomial() -> Self {
        Self {
            nest_ids: vec![0, 1, 2, 3],
            mu: None,
        }
    }

    /// Raw row layout follows `FeatureSchema::travel_mode_default().columns()`:
    /// auto time, auto cost, transit time, transit cost, bike time, walk time,
    /// age, male, vehicles, household size.
    pub fn utilities(&self, r: &[f64]) -> Vec<f64> {
        let age = (r[6] - 40.0) / 20.0;
        vec![
            0.6 - 0.06 * r[0] - 0.30 * r[1] + 0.5 * r[8],
            0.9 - 0.05 * r[2] - 0.25 * r[3] - 0.2 * age,
            -0.8 - 0.08 * r[4] + 0.6 * r[7] - 0.4 * age,
            0.4 - 0.10 * r[5] + 0.1 * r[9],
        ]
    }

    pub fn log_probabilities(&self, r: &[f64]) -> Vec<f64> {
        let v = UtilityVector::new(self.utilities(r)).unwrap();
        match &self.mu {
            Some(mu) => {
                let g = AlternativeGraph::from_nest_ids(&self.nest_ids).unwrap();
                nl_log_probabilities_classical(&v, &g, &NlScaleParams::new(mu.clone()).unwrap()).unwrap()
            }
            None => mnl_log_probabilities(&v),
        }
    }

    pub fn raw_row(rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![
            rng.gen_range(5.0..45.0),
            rng.gen_range(0.5..8.0),
            rng.gen_range(10.0..60.0),
            rng.gen_range(1.0..4.0),
            rng.gen_range(5.0..50.0),
            rng.gen_range(5.0..60.0),
            rng.gen_range(18.0..80.0),
            f64::from(rng.gen_bool(0.5) as u8),
            rng.gen_range(0..3) as f64,
            rng.gen_range(1..6) as f64,
        ]
    }

    /// `n` observations with choices sampled from the true probabilities.
    pub fn sample(&self, n: usize, seed: u64) -> ChoiceDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut choices = Vec::with_capacity(n);
        for _ in 0..n {
            let r = Self::raw_row(&mut rng);
            let p: Vec<f64> = self.log_probabilities(&r).into_iter().map(f64::exp).collect();
            choices.push(WeightedIndex::new(&p).unwrap().sample(&mut rng));
            rows.push(r);
        }
        ChoiceDataset::from_rows(FeatureSchema::travel_mode_default(), rows, choices).unwrap()
    }

    /// Log-likelihood of the dataset's choices under the true model.
    pub fn log_likelihood(&self, ds: &ChoiceDataset) -> f64 {
        ds.raw_rows()
            .iter()
            .zip(ds.choices())
            .map(|(r, &y)| self.log_probabilities(r)[y])
            .sum()
    }
}

pub mod gradcheck {
    use nestgnn::autodiff::{Tape, Tensor, Var};
    use nestgnn::engine::{ChoiceBatch, ModelConfig, NestGnn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const TEMPLATES: usize = 10;

    /// Input shapes: a [3,4], b [4,2], c [3,2], r [2], s [1], w [3,2].
    pub fn shapes() -> Vec<Vec<usize>> {
        vec![vec![3, 4], vec![4, 2], vec![3, 2], vec![2], vec![1], vec![3, 2]]
    }

    pub fn random_inputs(rng: &mut ChaCha8Rng) -> Vec<Tensor<f64>> {
        shapes()
            .into_iter()
            .map(|s| {
                let n = s.iter().product();
                Tensor::new(s, (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
            })
            .collect()
    }

    /// Scalar composite number `k` of the inputs.
    pub fn composite(k: usize, tape: &mut Tape<f64>, x: &[Var]) -> Var {
        let (a, b, c, r, s, w) = (x[0], x[1], x[2], x[3], x[4], x[5]);
        let ab = tape.matmul(a, b).unwrap();
        let body = match k {
            0 => ab,
            1 => {
                let t = tape.add(ab, c).unwrap();
                tape.softplus(t)
            }
            2 => {
                let t = tape.add_row(ab, r).unwrap();
                tape.sigmoid(t)
            }
            3 => tape.log_softmax(ab),
            4 => {
                let t = tape.scale_by(c, s).unwrap();
                tape.softmax(t)
            }
            5 => {
                let cc = tape.mul(c, c).unwrap();
                tape.lse_set(&[ab, c, cc]).unwrap()
            }
            6 => {
                let m = tape.mean_set(&[c, ab]).unwrap();
                let t = tape.sub(c, ab).unwrap();
                let mx = tape.max_set(&[ab, t]).unwrap();
                tape.add(m, mx).unwrap()
            }
            7 => {
                let t = tape.sub(ab, c).unwrap();
                tape.relu(t)
            }
            8 => {
                let cat = tape.concat(&[c, ab]).unwrap();
                tape.matmul(cat, b).unwrap()
            }
            _ => {
                let cc = tape.mul(c, c).unwrap();
                let shifted = tape.add_const(cc, 1.0);
                let inv = tape.reciprocal(shifted);
                let lp = tape.log_softmax(c);
                let picked = tape.pick(lp, &[0, 1, 1]).unwrap();
                let m = tape.mean(picked);
                let ms = tape.scale_by(inv, m).unwrap();
                tape.add(inv, ms).unwrap()
            }
        };
        let weighted = tape.mul(body, w).unwrap();
        tape.sum(weighted)
    }

    fn relative_error(a: f64, f: f64) -> f64 {
        let scale = a.abs().max(f.abs());
        if scale < 1e-8 {
            (a - f).abs()
        } else {
            (a - f).abs() / scale
        }
    }

    /// Max relative error between reverse-mode gradients of `f` and central
    /// differences, over every input element.
    pub fn max_relative_error(
        inputs: &[Tensor<f64>],
        f: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
    ) -> f64 {
        let eval = |vals: &[Tensor<f64>]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
            let out = f(&mut tape, &vars);
            tape.value(out).data()[0]
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let grads = tape.backward(out).unwrap();
        let mut worst = 0.0f64;
        for (p, v) in vars.iter().enumerate() {
            let g = grads.get_or_zero(*v, inputs[p].shape());
            for e in 0..inputs[p].len() {
                let x0 = inputs[p].data()[e];
                let h = 1e-6 * x0.abs().max(1.0);
                let mut plus = inputs.to_vec();
                plus[p].data_mut()[e] = x0 + h;
                let mut minus = inputs.to_vec();
                minus[p].data_mut()[e] = x0 - h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                worst = worst.max(relative_error(g.data()[e], fd));
            }
        }
        worst
    }

    /// Composite `k` on inputs drawn from `seed`.
    pub fn composite_error(k: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = random_inputs(&mut rng);
        max_relative_error(&inputs, |t, x| composite(k, t, x))
    }

    /// Mean NLL of a model on a random batch, checked against central
    /// differences over every parameter.
    pub fn model_loss_error(config: &ModelConfig, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = NestGnn::<f64>::init(config.clone(), seed).unwrap();
        let alts = config.alternatives();
        let rows = 5;
        let features = (0..alts)
            .map(|_| {
                let data = (0..rows * config.input_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                Tensor::matrix(rows, config.input_dim, data).unwrap()
            })
            .collect();
        let labels = (0..rows).map(|_| rng.gen_range(0..alts)).collect();
        let batch = ChoiceBatch::new(features, labels).unwrap();
        let params = model.params().values().to_vec();
        max_relative_error(&params, |tape, vars| {
            let x0: Vec<Var> = batch.features.iter().map(|f| tape.leaf(f.clone())).collect();
            let u = model.utilities_on(tape, vars, &x0).unwrap();
            nestgnn::training::record_nll(tape, u, &batch.labels).unwrap()
        })
    }
}
