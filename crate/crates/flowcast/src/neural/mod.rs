//! The forecaster: graph convolution over the weighted adjacency, an LSTM
//! over the look-back window, temporal attention, and a dense head, trained
//! with RMSprop, MSE loss, early stopping and a per-epoch conformal residual
//! callback.
//!
//! Gradients are exact reverse-mode derivatives hand-derived for this fixed
//! architecture (no general-purpose autodiff). Every layer keeps the forward
//! intermediates it needs in an explicit cache; `model::backward` chains the
//! layer backward passes in reverse. The finite-difference oracle in the test
//! suite checks every parameter of every layer.
//!
//! All computation is `f64`, single-threaded and deterministic: a fixed seed,
//! dataset and configuration reproduce bit-identical trained parameters.

pub mod attention;
pub mod dense;
pub mod gcn;
pub mod lstm;
pub mod model;
pub mod rmsprop;
#[cfg(test)]
pub(crate) mod testutil;
pub mod train;

pub use attention::AttentionParams;
pub use dense::DenseParams;
pub use gcn::{gcn_forward, GcnLayerParams};
pub use lstm::LstmParams;
pub use model::{predict, ModelParams};
pub use rmsprop::{rmsprop_step, OptimizerState, RmspropConfig};
pub use train::{train, TrainConfig, TrainReport};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch} (validation loss is not finite)")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Conformal(#[from] crate::conformal::ConformalError),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// Activation for the graph-convolution update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }

    /// Derivative as a function of the pre-activation value.
    #[inline]
    pub(crate) fn derivative(&self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Architecture hyperparameters. One GCN layer and one LSTM layer by
/// default; both stacks are configurable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub stations: usize,
    pub look_back: usize,
    pub horizon: usize,
    /// Output width of each graph-convolution layer.
    pub gcn_dims: Vec<usize>,
    pub gcn_activation: Activation,
    /// Hidden width of each LSTM layer.
    pub lstm_hidden: Vec<usize>,
}

impl ModelConfig {
    pub fn new(stations: usize, look_back: usize, horizon: usize) -> Self {
        ModelConfig {
            stations,
            look_back,
            horizon,
            gcn_dims: vec![8],
            gcn_activation: Activation::Relu,
            lstm_hidden: vec![32],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stations == 0 || self.look_back == 0 || self.horizon == 0 {
            return Err(NeuralError::Config(
                "stations, look_back and horizon must all be >= 1".into(),
            ));
        }
        if self.gcn_dims.is_empty() || self.lstm_hidden.is_empty() {
            return Err(NeuralError::Config("need at least one GCN and one LSTM layer".into()));
        }
        if self.gcn_dims.iter().chain(self.lstm_hidden.iter()).any(|&d| d == 0) {
            return Err(NeuralError::Config("layer widths must be >= 1".into()));
        }
        Ok(())
    }

    /// LSTM input width: all station embeddings of one time step, flattened.
    pub fn lstm_input_dim(&self) -> usize {
        self.stations * *self.gcn_dims.last().expect("validated")
    }

    pub fn output_dim(&self) -> usize {
        self.stations * self.horizon
    }
}

/// Uniform init scaled by 1/sqrt(fan_in).
pub(crate) fn init_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

pub(crate) fn zeros_vec(n: usize) -> Array1<f64> {
    Array1::zeros(n)
}
