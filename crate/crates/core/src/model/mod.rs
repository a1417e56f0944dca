//! The multi-task network: CNN encoder, shared decoder, and structure,
//! cell-box and cell-content heads trained with a weighted sum of their
//! losses.

mod checkpoint;
mod config;
mod loss;
mod network;
mod params;

pub use checkpoint::Checkpoint;
pub use config::{BackboneConfig, LossWeights, ModelConfig};
pub use loss::{batch_gradients, sample_targets, train_step, LossBreakdown, LossVars, Targets};
pub use network::{positional_encoding, Forward, KvCache, Memory};
pub use params::{ParamStore, INIT_STD};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Real, TensorError};
use network::Layout;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Configuration, parameter layout and parameter values.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub config: ModelConfig,
    layout: Layout,
    pub params: ParamStore<T>,
}

impl<T: Real> Model<T> {
    /// Freshly initialized parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, builder) = Layout::build(&config);
        let params = ParamStore::init(&builder, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// Wraps existing parameters, checking names and shapes against the
    /// layout implied by `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, builder) = Layout::build(&config);
        if params.names != builder.names {
            return Err(ModelError::Checkpoint(
                "parameter names do not match the config".into(),
            ));
        }
        for ((name, shape), t) in builder
            .names
            .iter()
            .zip(&builder.shapes)
            .zip(&params.tensors)
        {
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// A tape with every parameter bound as a trainable leaf.
    pub fn forward(&self) -> Forward<'_, T> {
        Forward::new(self, true)
    }

    /// A tape for inference; parameters are constants.
    pub fn inference(&self) -> Forward<'_, T> {
        Forward::new(self, false)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    /// Indices into `params` of the shared encoder.
    pub fn encoder_params(&self) -> Vec<usize> {
        self.layout.encoder_params()
    }
}
