use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::tensor::softplus_inverse;
use crate::autodiff::Tensor;
use crate::engine::config::{ModelConfig, Preset, Readout};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
    Fan { fan_in: usize, fan_out: usize },
    Zero,
    /// `softplus(θ) = 1`.
    UnitScale,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn slot(name: String, shape: Vec<usize>, init: Init) -> Slot {
    Slot { name, shape, init }
}

/// Ordered parameter slots for a configuration. Pure function of the config.
pub(crate) fn layout(config: &ModelConfig) -> Vec<Slot> {
    let n = config.alternatives();
    let d = config.input_dim;
    let mut slots = Vec::new();
    if config.preset == Preset::Nl {
        for j in 0..n {
            slots.push(slot(format!("message.w{j}"), vec![d, 1], Init::Fan { fan_in: d, fan_out: 1 }));
        }
        // a singleton nest's scale cancels out of its utility, so only
        // nests with two or more members carry one
        if let Ok(graph) = config.graph() {
            for (k, label) in graph.nest_labels().into_iter().enumerate() {
                if graph.nest_members(label).map_or(0, <[usize]>::len) > 1 {
                    slots.push(slot(format!("nest.theta{k}"), vec![1], Init::UnitScale));
                }
            }
        }
    } else {
        let dims = config.feature_dims();
        let h = config.hidden_width;
        for t in 0..config.layers {
            slots.push(slot(
                format!("layer{t}.message"),
                vec![dims[t], h],
                Init::Fan { fan_in: dims[t], fan_out: h },
            ));
        }
        let last = *dims.last().expect("d_0 present");
        let r = config.readout_hidden_width;
        for i in 0..n {
            match config.readout {
                Readout::Linear => slots.push(slot(
                    format!("readout.w{i}"),
                    vec![last, 1],
                    Init::Fan { fan_in: last, fan_out: 1 },
                )),
                Readout::Mlp => {
                    slots.push(slot(
                        format!("readout.hidden{i}"),
                        vec![last, r],
                        Init::Fan { fan_in: last, fan_out: r },
                    ));
                    slots.push(slot(format!("readout.bias{i}"), vec![r], Init::Zero));
                    slots.push(slot(
                        format!("readout.out{i}"),
                        vec![r, 1],
                        Init::Fan { fan_in: r, fan_out: 1 },
                    ));
                }
                Readout::Identity => {}
            }
        }
    }
    if config.intercepts {
        for i in 1..n {
            slots.push(slot(format!("asc{i}"), vec![1], Init::Zero));
        }
    }
    slots
}

/// Number of trainable scalars for `config`.
pub fn parameter_count(config: &ModelConfig) -> usize {
    layout(config)
        .iter()
        .map(|s| s.shape.iter().product::<usize>())
        .sum()
}

/// Named trainable tensors in layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParameterSet<T> {
    pub(crate) fn from_parts(names: Vec<String>, values: Vec<Tensor<T>>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, values, index }
    }

    /// Fan-based uniform initialization, deterministic per seed.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut values = Vec::new();
        for s in layout(config) {
            let n: usize = s.shape.iter().product();
            let data: Vec<T> = match s.init {
                Init::Fan { fan_in, fan_out } => {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect()
                }
                Init::Zero => vec![T::zero(); n],
                Init::UnitScale => vec![softplus_inverse(T::one()); n],
            };
            names.push(s.name);
            values.push(Tensor::new(s.shape, data)?);
        }
        Ok(Self::from_parts(names, values))
    }

    /// Checks names and shapes against the layout of `config`.
    pub fn check_layout(&self, config: &ModelConfig) -> Result<()> {
        let expected = layout(config);
        if expected.len() != self.names.len() {
            return Err(Error::config(format!(
                "config expects {} parameter tensors, found {}",
                expected.len(),
                self.names.len()
            )));
        }
        for (s, (name, value)) in expected.iter().zip(self.names.iter().zip(&self.values)) {
            if &s.name != name || s.shape != value.shape() {
                return Err(Error::config(format!(
                    "parameter `{name}` {:?} does not match expected `{}` {:?}",
                    value.shape(),
                    s.name,
                    s.shape
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.values.iter().map(|v| v.shape().to_vec()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.values[i])
    }

    /// Replaces the value of `name`; the shape must match.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::usage(format!("no parameter named `{name}`")))?;
        if self.values[i].shape() != value.shape() {
            return Err(Error::shape("parameter-set", self.values[i].shape(), value.shape()));
        }
        self.values[i] = value;
        Ok(())
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet::from_parts(
            self.names.clone(),
            self.values.iter().map(Tensor::cast).collect(),
        )
    }
}

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Manifest plus flat parameter values, stored as JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    /// Free-form training metadata: data fingerprint, train settings, metrics.
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub parameters: Vec<ParameterRecord>,
}

impl ModelArtifact {
    pub fn new<T: Scalar>(
        config: &ModelConfig,
        params: &ParameterSet<T>,
        seed: u64,
        metadata: serde_json::Value,
    ) -> Self {
        let parameters = params
            .names
            .iter()
            .zip(&params.values)
            .map(|(name, v)| ParameterRecord {
                name: name.clone(),
                shape: v.shape().to_vec(),
                values: v.data().iter().map(|x| x.to_f64_lossy()).collect(),
            })
            .collect();
        Self {
            format_version: ARTIFACT_FORMAT_VERSION,
            config: config.clone(),
            seed,
            metadata,
            parameters,
        }
    }

    pub fn parameters<T: Scalar>(&self) -> Result<ParameterSet<T>> {
        if self.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported artifact format version {} (expected {ARTIFACT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut names = Vec::new();
        let mut values = Vec::new();
        for r in &self.parameters {
            names.push(r.name.clone());
            values.push(Tensor::new(
                r.shape.clone(),
                r.values.iter().map(|&x| T::of(x)).collect(),
            )?);
        }
        let set = ParameterSet::from_parts(names, values);
        set.check_layout(&self.config)?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}
