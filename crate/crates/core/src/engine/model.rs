use std::collections::BTreeMap;

use crate::altgraph::AlternativeGraph;
use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::closedform::{ProbabilityVector, UtilityVector};
use crate::engine::config::{Aggregation, ModelConfig, Preset, Readout, Update};
use crate::engine::params::ParameterSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-alternative feature matrices (`[rows, input_dim]` each) with chosen labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceBatch<T> {
    pub features: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> ChoiceBatch<T> {
    pub fn new(features: Vec<Tensor<T>>, labels: Vec<usize>) -> Result<Self> {
        let first = features
            .first()
            .ok_or_else(|| Error::usage("batch needs at least one alternative"))?;
        let rows = first.rows();
        for f in &features {
            if f.shape().len() != 2 || f.shape() != first.shape() {
                return Err(Error::shape("choice-batch", first.shape(), f.shape()));
            }
        }
        if labels.len() != rows {
            return Err(Error::shape("choice-batch", &[rows], &[labels.len()]));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= features.len()) {
            return Err(Error::usage(format!(
                "label {y} out of range for {} alternatives",
                features.len()
            )));
        }
        Ok(Self { features, labels })
    }

    /// Single observation with no label attached.
    pub fn single(x: &[Vec<T>]) -> Result<Self> {
        let features = x
            .iter()
            .map(|row| Tensor::matrix(1, row.len(), row.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(features, vec![0])
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn alternatives(&self) -> usize {
        self.features.len()
    }

    pub fn input_dim(&self) -> usize {
        self.features[0].cols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let d = self.input_dim();
        let features = self
            .features
            .iter()
            .map(|f| {
                let mut data = Vec::with_capacity(indices.len() * d);
                for &r in indices {
                    data.extend_from_slice(f.row(r));
                }
                Tensor::matrix(indices.len(), d, data).expect("rows selected")
            })
            .collect();
        Self {
            features,
            labels: indices.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Feature vectors of row `r`, one per alternative.
    pub fn observation(&self, r: usize) -> Vec<Vec<T>> {
        self.features.iter().map(|f| f.row(r).to_vec()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ChoiceBatch<U> {
        ChoiceBatch {
            features: self.features.iter().map(Tensor::cast).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Parameter and feature leaves recorded on a tape.
pub struct Recorded {
    pub params: Vec<Var>,
    pub features: Vec<Var>,
    pub utilities: Var,
}

/// A configured model with its parameters.
#[derive(Clone, Debug)]
pub struct NestGnn<T> {
    config: ModelConfig,
    graph: AlternativeGraph,
    params: ParameterSet<T>,
}

impl<T: Scalar> NestGnn<T> {
    /// Validates `config` and checks `params` against its layout.
    pub fn new(config: ModelConfig, params: ParameterSet<T>) -> Result<Self> {
        config.validate()?;
        params.check_layout(&config)?;
        let graph = config.graph()?;
        Ok(Self { config, graph, params })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ParameterSet::init(&config, seed)?;
        Self::new(config, params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn graph(&self) -> &AlternativeGraph {
        &self.graph
    }

    pub fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<T> {
        &mut self.params
    }

    /// Nest scales `μ_k = softplus(θ_k)` of the nl preset, by nest position.
    pub fn nest_scales(&self) -> Option<Vec<T>> {
        if self.config.preset != Preset::Nl {
            return None;
        }
        Some(
            (0..self.graph.num_nests())
                .map(|k| match self.params.get(&format!("nest.theta{k}")) {
                    Some(theta) => crate::autodiff::tensor::softplus(theta.data()[0]),
                    None => T::one(),
                })
                .collect(),
        )
    }

    fn check_batch(&self, batch: &ChoiceBatch<T>) -> Result<()> {
        if batch.alternatives() != self.config.alternatives() {
            return Err(Error::shape(
                "forward",
                &[self.config.alternatives(), self.config.input_dim],
                &[batch.alternatives(), batch.input_dim()],
            ));
        }
        if batch.input_dim() != self.config.input_dim {
            return Err(Error::shape(
                "forward",
                &[self.config.input_dim],
                &[batch.input_dim()],
            ));
        }
        Ok(())
    }

    /// Records parameters, features, and the `[rows, alternatives]` utility matrix.
    pub fn record(&self, tape: &mut Tape<T>, batch: &ChoiceBatch<T>) -> Result<Recorded> {
        self.check_batch(batch)?;
        let params: Vec<Var> = self.params.values().iter().map(|v| tape.leaf(v.clone())).collect();
        let features: Vec<Var> = batch.features.iter().map(|f| tape.leaf(f.clone())).collect();
        let utilities = self.utilities_on(tape, &params, &features)?;
        Ok(Recorded { params, features, utilities })
    }

    fn p(&self, vars: &[Var], name: &str) -> Var {
        vars[self.params.position(name).unwrap_or_else(|| panic!("missing parameter {name}"))]
    }

    /// Utility matrix from already-recorded parameter and feature leaves.
    pub fn utilities_on(&self, tape: &mut Tape<T>, params: &[Var], x0: &[Var]) -> Result<Var> {
        let n = self.config.alternatives();
        let mut utilities = if self.config.preset == Preset::Nl {
            self.nl_utilities(tape, params, x0)?
        } else {
            let mut x = x0.to_vec();
            for t in 0..self.config.layers {
                x = self.message_passing_layer(tape, params, t, &x)?;
            }
            self.readout(tape, params, &x)?
        };
        if self.config.intercepts && self.config.preset != Preset::Nl {
            for (i, u) in utilities.iter_mut().enumerate().skip(1).take(n - 1) {
                let asc = self.p(params, &format!("asc{i}"));
                *u = tape.add_row(*u, asc)?;
            }
        }
        tape.concat(&utilities)
    }

    fn aggregate(&self, tape: &mut Tape<T>, set: &[Var]) -> Result<Var> {
        match self.config.aggregation {
            Aggregation::Mean => tape.mean_set(set),
            Aggregation::Lse => tape.lse_set(set),
            Aggregation::Max => tape.max_set(set),
        }
    }

    fn message_passing_layer(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        t: usize,
        x: &[Var],
    ) -> Result<Vec<Var>> {
        let w = self.p(params, &format!("layer{t}.message"));
        let messages = x
            .iter()
            .map(|&xj| tape.matmul(xj, w))
            .collect::<Result<Vec<_>>>()?;
        // closed neighborhoods of a clique are the nest itself, so one
        // aggregate per nest serves every member
        let mut per_nest: BTreeMap<usize, Var> = BTreeMap::new();
        let mut out = Vec::with_capacity(x.len());
        for (i, &self_msg) in messages.iter().enumerate() {
            let k = self.graph.nest_of(i);
            let a = match per_nest.get(&k) {
                Some(&a) => a,
                None => {
                    let hood = self.graph.closed_neighborhood(i)?;
                    let set: Vec<Var> = hood.iter().map(|&j| messages[j]).collect();
                    let a = self.aggregate(tape, &set)?;
                    per_nest.insert(k, a);
                    a
                }
            };
            out.push(match self.config.update {
                Update::Plus => tape.add(self_msg, a)?,
                Update::Concat => tape.concat(&[self_msg, a])?,
            });
        }
        Ok(out)
    }

    fn readout(&self, tape: &mut Tape<T>, params: &[Var], x: &[Var]) -> Result<Vec<Var>> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| match self.config.readout {
                Readout::Linear => tape.matmul(xi, self.p(params, &format!("readout.w{i}"))),
                Readout::Mlp => {
                    let h = tape.matmul(xi, self.p(params, &format!("readout.hidden{i}")))?;
                    let h = tape.add_row(h, self.p(params, &format!("readout.bias{i}")))?;
                    let h = tape.relu(h);
                    tape.matmul(h, self.p(params, &format!("readout.out{i}")))
                }
                Readout::Identity => {
                    if tape.value(xi).cols() != 1 {
                        return Err(Error::shape("identity-readout", &[1], tape.shape(xi)));
                    }
                    Ok(xi)
                }
            })
            .collect()
    }

    /// `V_i = u_i/μ_k + (μ_k - 1)·LSE_{j∈N*(i)}(u_j/μ_k)` with `u_j = w_jᵀx_j (+ asc_j)`.
    fn nl_utilities(&self, tape: &mut Tape<T>, params: &[Var], x: &[Var]) -> Result<Vec<Var>> {
        // (1/μ_k, μ_k - 1) per nest position; singleton nests have μ = 1
        let mut scale: Vec<Option<(Var, Var)>> = Vec::with_capacity(self.graph.num_nests());
        for k in 0..self.graph.num_nests() {
            scale.push(match self.params.position(&format!("nest.theta{k}")) {
                Some(idx) => {
                    let mu = tape.softplus(params[idx]);
                    Some((tape.reciprocal(mu), tape.add_const(mu, -T::one())))
                }
                None => None,
            });
        }
        let nest_pos = |i: usize| self.graph.nest_position(self.graph.nest_of(i)).expect("graph label");

        let mut scaled = Vec::with_capacity(x.len());
        for (j, &xj) in x.iter().enumerate() {
            let mut u = tape.matmul(xj, self.p(params, &format!("message.w{j}")))?;
            if self.config.intercepts && j > 0 {
                u = tape.add_row(u, self.p(params, &format!("asc{j}")))?;
            }
            scaled.push(match scale[nest_pos(j)] {
                Some((inv_mu, _)) => tape.scale_by(u, inv_mu)?,
                None => u,
            });
        }
        let mut per_nest: BTreeMap<usize, Var> = BTreeMap::new();
        let mut out = Vec::with_capacity(x.len());
        for (i, &self_msg) in scaled.iter().enumerate() {
            let k = nest_pos(i);
            let Some((_, mu_minus_one)) = scale[k] else {
                out.push(self_msg);
                continue;
            };
            let a = match per_nest.get(&k) {
                Some(&a) => a,
                None => {
                    let hood = self.graph.closed_neighborhood(i)?;
                    let set: Vec<Var> = hood.iter().map(|&j| scaled[j]).collect();
                    let lse = tape.lse_set(&set)?;
                    let a = tape.scale_by(lse, mu_minus_one)?;
                    per_nest.insert(k, a);
                    a
                }
            };
            out.push(tape.add(self_msg, a)?);
        }
        Ok(out)
    }

    /// `[rows, alternatives]` utilities.
    pub fn utilities(&self, batch: &ChoiceBatch<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let rec = self.record(&mut tape, batch)?;
        Ok(tape.value(rec.utilities).clone())
    }

    /// `[rows, alternatives]` choice probabilities.
    pub fn probabilities(&self, batch: &ChoiceBatch<T>) -> Result<Tensor<T>> {
        Ok(crate::autodiff::tensor::softmax(&self.utilities(batch)?))
    }

    /// `[rows, alternatives]` log-probabilities.
    pub fn log_probabilities(&self, batch: &ChoiceBatch<T>) -> Result<Tensor<T>> {
        Ok(crate::autodiff::tensor::log_softmax(&self.utilities(batch)?))
    }

    /// Utilities and probabilities of one observation.
    pub fn forward(&self, x: &[Vec<T>]) -> Result<(UtilityVector<T>, ProbabilityVector<T>)> {
        let u = self.utilities(&ChoiceBatch::single(x)?)?;
        let lp = crate::autodiff::tensor::log_softmax(&u);
        Ok((
            UtilityVector::new(u.into_data())?,
            ProbabilityVector::from_log(lp.data()),
        ))
    }

    /// Records the mean negative log-likelihood of the batch labels.
    pub fn record_loss(&self, tape: &mut Tape<T>, batch: &ChoiceBatch<T>) -> Result<(Recorded, Var)> {
        let rec = self.record(tape, batch)?;
        let loss = crate::training::record_nll(tape, rec.utilities, &batch.labels)?;
        Ok((rec, loss))
    }

    /// Mean negative log-likelihood and its gradient for every parameter.
    pub fn loss_and_gradients(&self, batch: &ChoiceBatch<T>) -> Result<(T, Vec<Tensor<T>>)> {
        let mut tape = Tape::new();
        let (rec, loss) = self.record_loss(&mut tape, batch)?;
        let value = tape.value(loss).data()[0];
        let grads: Gradients<T> = tape.backward(loss)?;
        let per_param = rec
            .params
            .iter()
            .zip(self.params.values())
            .map(|(&v, p)| grads.get_or_zero(v, p.shape()))
            .collect();
        Ok((value, per_param))
    }
}
