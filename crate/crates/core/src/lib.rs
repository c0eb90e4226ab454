//! Convolution with per-region learned boundary kernels, classical padding
//! rules, and the blur-learning experiment harness built on top of them.

pub mod conv;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod tensor;

pub use conv::{
    conv2d_backward, conv2d_forward, BoundaryMode, ConvGrads, KernelSet, RegionPartition,
    RegionRect, Strategy,
};
pub use dataio::{BlurTaskSample, Dataset, DatasetSpec};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, TrainReport};
pub use metrics::{BandStats, ErrorMap, TTest};
pub use net::{mse_loss_and_grad, Activation, Gradients, LayerSpec, Network, NetworkConfig};
pub use optim::{AdamConfig, AdamState};
pub use tensor::{Shape, Tensor};
