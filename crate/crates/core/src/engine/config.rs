use std::fmt;

use serde::{Deserialize, Serialize};

use crate::altgraph::AlternativeGraph;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Lse,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Update {
    Plus,
    Concat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Linear,
    Mlp,
    Identity,
}

/// Named points of the design space. `Custom` is the general message-passing model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Mnl,
    AsuDnn,
    Nl,
    HighdimLse,
    Custom,
}

impl Preset {
    /// Presets trained on the full batch regardless of the configured batch size.
    pub fn full_batch_only(self) -> bool {
        matches!(self, Preset::Mnl | Preset::Nl)
    }
}

macro_rules! display_as_serde {
    ($($ty:ty),*) => {$(
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).expect("unit enum serializes");
                f.write_str(s.as_str().expect("unit enum is a string"))
            }
        }
    )*};
}
display_as_serde!(Aggregation, Update, Readout, Preset);

fn default_true() -> bool {
    true
}

/// Layers, message width, aggregation, update, readout, and graph of one model.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Preset,
    pub layers: usize,
    pub aggregation: Aggregation,
    pub update: Update,
    pub readout: Readout,
    /// Message width `h` of every message-passing layer.
    pub hidden_width: usize,
    /// Hidden units of the MLP readout.
    pub readout_hidden_width: usize,
    pub nest_ids: Vec<usize>,
    /// Per-alternative input feature dimension.
    pub input_dim: usize,
    /// Alternative-specific constants, alternative 0 fixed at zero.
    #[serde(default = "default_true")]
    pub intercepts: bool,
}

impl ModelConfig {
    pub fn mnl(alternatives: usize, input_dim: usize) -> Self {
        Self {
            preset: Preset::Mnl,
            layers: 0,
            aggregation: Aggregation::Lse,
            update: Update::Plus,
            readout: Readout::Linear,
            hidden_width: 1,
            readout_hidden_width: 1,
            nest_ids: (0..alternatives).collect(),
            input_dim,
            intercepts: true,
        }
    }

    pub fn asu_dnn(alternatives: usize, input_dim: usize, hidden: usize) -> Self {
        Self {
            preset: Preset::AsuDnn,
            readout: Readout::Mlp,
            hidden_width: hidden,
            readout_hidden_width: hidden,
            ..Self::mnl(alternatives, input_dim)
        }
    }

    pub fn nl(nest_ids: &[usize], input_dim: usize) -> Self {
        Self {
            preset: Preset::Nl,
            layers: 1,
            aggregation: Aggregation::Lse,
            update: Update::Plus,
            readout: Readout::Identity,
            hidden_width: 1,
            readout_hidden_width: 1,
            nest_ids: nest_ids.to_vec(),
            input_dim,
            intercepts: true,
        }
    }

    pub fn highdim_lse(nest_ids: &[usize], input_dim: usize, hidden: usize) -> Self {
        Self {
            preset: Preset::HighdimLse,
            layers: 1,
            aggregation: Aggregation::Lse,
            update: Update::Concat,
            readout: Readout::Linear,
            hidden_width: hidden,
            readout_hidden_width: hidden,
            nest_ids: nest_ids.to_vec(),
            input_dim,
            intercepts: true,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        nest_ids: &[usize],
        input_dim: usize,
        layers: usize,
        aggregation: Aggregation,
        update: Update,
        readout: Readout,
        hidden: usize,
    ) -> Self {
        Self {
            preset: Preset::Custom,
            layers,
            aggregation,
            update,
            readout,
            hidden_width: hidden,
            readout_hidden_width: hidden,
            nest_ids: nest_ids.to_vec(),
            input_dim,
            intercepts: true,
        }
    }

    pub fn with_intercepts(mut self, on: bool) -> Self {
        self.intercepts = on;
        self
    }

    pub fn alternatives(&self) -> usize {
        self.nest_ids.len()
    }

    pub fn graph(&self) -> Result<AlternativeGraph> {
        AlternativeGraph::from_nest_ids(&self.nest_ids)
    }

    /// Node feature dimension after each layer, `d_0 ..= d_L`.
    pub fn feature_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        if self.preset == Preset::Nl {
            dims.push(1);
            return dims;
        }
        for _ in 0..self.layers {
            dims.push(match self.update {
                Update::Plus => self.hidden_width,
                Update::Concat => 2 * self.hidden_width,
            });
        }
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.nest_ids.is_empty() {
            return Err(Error::config("model needs at least one alternative"));
        }
        if self.input_dim == 0 || self.hidden_width == 0 || self.readout_hidden_width == 0 {
            return Err(Error::config(
                "input dimension and hidden widths must be positive",
            ));
        }
        let expect = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("preset {} requires {what}", self.preset)))
            }
        };
        match self.preset {
            Preset::Mnl => {
                expect(self.layers == 0, "zero layers")?;
                expect(self.readout == Readout::Linear, "a linear readout")?;
            }
            Preset::AsuDnn => {
                expect(self.layers == 0, "zero layers")?;
                expect(self.readout == Readout::Mlp, "an mlp readout")?;
            }
            Preset::Nl => {
                expect(self.layers == 1, "exactly one layer")?;
                expect(self.aggregation == Aggregation::Lse, "lse aggregation")?;
                expect(self.update == Update::Plus, "the plus update")?;
                expect(self.readout == Readout::Identity, "an identity readout")?;
                expect(self.hidden_width == 1, "scalar messages (hidden width 1)")?;
            }
            Preset::HighdimLse => {
                expect(self.layers == 1, "exactly one layer")?;
                expect(self.aggregation == Aggregation::Lse, "lse aggregation")?;
                expect(self.update == Update::Concat, "the concat update")?;
                expect(self.readout == Readout::Linear, "a linear readout")?;
            }
            Preset::Custom => {}
        }
        let last = *self.feature_dims().last().expect("d_0 present");
        if self.readout == Readout::Identity && last != 1 {
            return Err(Error::config(format!(
                "identity readout needs a final feature dimension of 1, but layers produce {last} \
                 ({} update, hidden width {})",
                self.update, self.hidden_width
            )));
        }
        Ok(())
    }

    /// Short stable identifier, e.g. `custom-L2-mean-plus-mlp-h64-n0011`.
    pub fn label(&self) -> String {
        let nests: String = self.nest_ids.iter().map(|k| k.to_string()).collect();
        match self.preset {
            Preset::Mnl => format!("mnl-n{nests}"),
            Preset::AsuDnn => format!("asu_dnn-h{}-n{nests}", self.readout_hidden_width),
            Preset::Nl => format!("nl-n{nests}"),
            _ => format!(
                "{}-L{}-{}-{}-{}-h{}-n{nests}",
                self.preset, self.layers, self.aggregation, self.update, self.readout, self.hidden_width
            ),
        }
    }
}
