use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::tensor::softplus_inverse;
use crate::autodiff::Adam;
use crate::engine::{ChoiceBatch, ModelConfig, NestGnn, ParameterSet, Preset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

fn default_epochs() -> usize {
    100
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_batch_size() -> Option<usize> {
    Some(64)
}

/// Fixed-epoch Adam schedule. There is no early stopping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Rows per mini-batch; `None` trains on the full batch.
    #[serde(default = "default_batch_size")]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Clamp nest scales to `μ ≤ 1` after every step.
    #[serde(default)]
    pub constrain_scales: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            seed: 0,
            constrain_scales: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch size must be at least 1"));
        }
        Ok(())
    }

    /// Rows per step for `preset`; multinomial and nested logit always use the full batch.
    pub fn effective_batch_size(&self, preset: Preset, rows: usize) -> usize {
        match self.batch_size {
            Some(b) if !preset.full_batch_only() => b.min(rows),
            _ => rows,
        }
    }
}

/// A completed training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: NestGnn<T>,
    /// Mean training loss before the first step, then after each epoch.
    pub loss_trace: Vec<f64>,
    pub steps: u64,
    /// Smallest mini-batch used, in rows.
    pub smallest_batch: usize,
}

/// Training stopped on a non-finite loss or gradient.
#[derive(Clone, Debug)]
pub struct TrainAbort<T> {
    /// Parameters before the failing step.
    pub checkpoint: ParameterSet<T>,
    pub epoch: usize,
    pub step: u64,
    pub reason: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError<T: std::fmt::Debug> {
    #[error("training aborted at epoch {}, step {}: {}", .0.epoch, .0.step, .0.reason)]
    Aborted(Box<TrainAbort<T>>),
    #[error(transparent)]
    Failed(#[from] Error),
}

impl<T: std::fmt::Debug> TrainError<T> {
    /// Collapses into a plain error, keeping the diagnostic.
    pub fn into_error(self) -> Error {
        match self {
            TrainError::Aborted(a) => Error::Numeric(format!(
                "training aborted at epoch {}, step {}: {}",
                a.epoch, a.step, a.reason
            )),
            TrainError::Failed(e) => e,
        }
    }
}

/// Initializes `config` from the `init` stream of `cfg.seed` and trains it.
pub fn train<T: Scalar>(
    config: &ModelConfig,
    data: &ChoiceBatch<T>,
    cfg: &TrainConfig,
) -> std::result::Result<TrainOutcome<T>, TrainError<T>> {
    let model = NestGnn::init(config.clone(), derive_seed(cfg.seed, "init"))?;
    train_model(model, data, cfg)
}

/// Trains an already-initialized model in place of its parameters.
pub fn train_model<T: Scalar>(
    mut model: NestGnn<T>,
    data: &ChoiceBatch<T>,
    cfg: &TrainConfig,
) -> std::result::Result<TrainOutcome<T>, TrainError<T>> {
    cfg.validate()?;
    let n = data.rows();
    if n == 0 {
        return Err(Error::usage("training data is empty").into());
    }
    let batch_size = cfg.effective_batch_size(model.config().preset, n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut adam = Adam::new(T::of(cfg.learning_rate), &model.params().shapes());
    let names = model.params().names().to_vec();
    let theta_cap = softplus_inverse(T::one());

    let full_loss = |m: &NestGnn<T>| -> Result<f64> {
        let mut tape = crate::autodiff::Tape::new();
        let (_, loss) = m.record_loss(&mut tape, data)?;
        Ok(tape.value(loss).data()[0].to_f64_lossy())
    };
    let initial = full_loss(&model)?;
    if !initial.is_finite() {
        return Err(TrainError::Aborted(Box::new(TrainAbort {
            checkpoint: model.params().clone(),
            epoch: 0,
            step: 0,
            reason: format!("initial loss is {initial}"),
        })));
    }
    let mut trace = vec![initial];
    let mut order: Vec<usize> = (0..n).collect();
    let mut smallest = n;

    for epoch in 1..=cfg.epochs {
        let batches: Vec<ChoiceBatch<T>> = if batch_size >= n {
            vec![data.clone()]
        } else {
            order.shuffle(&mut rng);
            order.chunks(batch_size).map(|idx| data.select(idx)).collect()
        };
        for batch in &batches {
            smallest = smallest.min(batch.rows());
            let checkpoint = model.params().clone();
            let abort = |reason: String| {
                TrainError::Aborted(Box::new(TrainAbort {
                    checkpoint: checkpoint.clone(),
                    epoch,
                    step: adam.steps_taken() + 1,
                    reason,
                }))
            };
            let (loss, grads) = model.loss_and_gradients(batch)?;
            if !loss.is_finite() {
                return Err(abort(format!("mini-batch loss is {loss}")));
            }
            let step = adam.steps_taken() + 1;
            match adam.step(model.params_mut().values_mut(), &grads, &names) {
                Ok(()) => {}
                Err(Error::Numeric(msg)) => {
                    return Err(TrainError::Aborted(Box::new(TrainAbort {
                        checkpoint,
                        epoch,
                        step,
                        reason: msg,
                    })))
                }
                Err(e) => return Err(e.into()),
            }
            if cfg.constrain_scales {
                clamp_scales(&mut model, theta_cap);
            }
        }
        let loss = full_loss(&model)?;
        if !loss.is_finite() {
            let checkpoint = model.params().clone();
            return Err(TrainError::Aborted(Box::new(TrainAbort {
                checkpoint,
                epoch,
                step: adam.steps_taken(),
                reason: format!("training loss after epoch is {loss}"),
            })));
        }
        trace.push(loss);
    }

    if let Some(mu) = model.nest_scales() {
        if mu.iter().any(|&m| m > T::one()) {
            log::warn!(
                "nest scales {:?} exceed 1; the fitted model is not consistent with random utility maximization",
                mu
            );
        }
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
        steps: adam.steps_taken(),
        smallest_batch: smallest,
    })
}

fn clamp_scales<T: Scalar>(model: &mut NestGnn<T>, cap: T) {
    let params = model.params_mut();
    let idx: Vec<usize> = params
        .names()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("nest.theta"))
        .map(|(i, _)| i)
        .collect();
    for i in idx {
        let v = &mut params.values_mut()[i].data_mut()[0];
        if *v > cap {
            *v = cap;
        }
    }
}
