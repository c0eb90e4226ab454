//! Flat stride-1 convolutional networks: `n_l` conv layers, ReLU between them,
//! a linear final layer, MSE loss and backpropagation.

use std::io::{Cursor, Read};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::conv::{
    backward_impl, conv2d_forward, BoundaryMode, KernelSet, RegionPartition, Strategy,
};
use crate::error::{Error, Result};
use crate::tensor::{ensure_same_shape, Tensor};

const CHECKPOINT_MAGIC: &[u8; 9] = b"EDGECONV1";
const CHECKPOINT_FAMILY: &[u8; 8] = b"EDGECONV";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub out_features: usize,
    pub radius: usize,
    pub mode: BoundaryMode,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
    #[serde(default)]
    pub strategy: Strategy,
}

impl NetworkConfig {
    /// `layers` convolutions of `features` channels each with ReLU, except the
    /// last, which maps linearly to `output_channels`.
    pub fn flat(
        input_channels: usize,
        output_channels: usize,
        layers: usize,
        features: usize,
        radius: usize,
        mode: BoundaryMode,
        seed: u64,
    ) -> Self {
        let specs = (0..layers)
            .map(|i| {
                let last = i + 1 == layers;
                LayerSpec {
                    out_features: if last { output_channels } else { features },
                    radius,
                    mode,
                    activation: if last {
                        Activation::None
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        NetworkConfig {
            input_channels,
            layers: specs,
            seed,
            strategy: Strategy::Decompose,
        }
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_features)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.layers.last() else {
            return Err(Error::Config("network needs at least one layer".into()));
        };
        if self.input_channels == 0 {
            return Err(Error::Config("input_channels must be positive".into()));
        }
        if last.activation != Activation::None {
            return Err(Error::Config(
                "final layer must not have an activation".into(),
            ));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.radius == 0 {
                return Err(Error::Config(format!(
                    "layer {i} radius must be at least 1"
                )));
            }
            if l.out_features == 0 {
                return Err(Error::Config(format!("layer {i} has no output features")));
            }
        }
        Ok(())
    }

    fn layer_inputs(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.input_channels).chain(self.layers.iter().map(|l| l.out_features))
    }
}

/// Per-layer parameter gradients, shaped like the network's kernel sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<KernelSet>,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.layers.iter_mut().for_each(|l| l.scale(factor));
    }

    /// All values in parameter order (see [`Network::flat_params`]).
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[KernelSet]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layers.iter().map(KernelSet::param_count).sum());
    for l in layers {
        out.extend_from_slice(l.weights());
        out.extend_from_slice(l.bias());
    }
    out
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input of every layer; `inputs[0]` is the network input.
    inputs: Vec<Tensor>,
    /// Pre-activation output of every layer.
    pre: Vec<Tensor>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.pre.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<KernelSet>,
    cache: Option<Trace>,
}

impl Network {
    /// Glorot-uniform kernels and zero biases drawn from `config.seed`. In
    /// explicit mode every region kernel starts as a copy of the interior one,
    /// so the untrained network computes exactly the zero-padding convolution.
    pub fn build(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Pcg64::seed_from_u64(config.seed);
        let mut layers = Vec::with_capacity(config.layers.len());
        for (spec, cin) in config.layers.iter().zip(config.layer_inputs()) {
            let mut k = KernelSet::for_mode(spec.mode, cin, spec.out_features, spec.radius)?;
            let taps = k.side() * k.side();
            let bound = glorot_bound(taps * cin, taps * spec.out_features);
            let interior = if spec.mode.is_explicit() {
                spec.radius * k.side() + spec.radius
            } else {
                0
            };
            for f in 0..spec.out_features {
                for w in k.kernel_mut(interior, f) {
                    *w = rng.random_range(-bound..bound);
                }
            }
            k.broadcast_region(interior);
            layers.push(k);
        }
        Ok(Network {
            config,
            layers,
            cache: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[KernelSet] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [KernelSet] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(KernelSet::param_count).sum()
    }

    /// Parameters as one vector: per layer, weights then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ContractViolation(format!(
                "{} parameters supplied, network has {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights().len();
            l.weights_mut()
                .copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias().len();
            l.bias_mut().copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(KernelSet::zeros_like).collect(),
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape().channels() != self.config.input_channels {
            return Err(Error::ContractViolation(format!(
                "network expects {} input channels, got {}",
                self.config.input_channels,
                input.shape().channels()
            )));
        }
        Ok(())
    }

    /// Forward pass recording every layer's input and pre-activation.
    pub fn trace(&self, input: &Tensor) -> Result<Trace> {
        self.check_input(input)?;
        let shape = input.shape();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for (spec, kernels) in self.config.layers.iter().zip(&self.layers) {
            let partition = RegionPartition::build(shape.height(), shape.width(), spec.radius)?;
            let z = conv2d_forward(
                &current,
                kernels,
                spec.mode,
                &partition,
                self.config.strategy,
            )?;
            let next = activate(&z, spec.activation);
            inputs.push(current);
            pre.push(z);
            current = next;
        }
        Ok(Trace { inputs, pre })
    }

    /// Forward pass without recording activations.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let shape = input.shape();
        let mut current = input.clone();
        for (spec, kernels) in self.config.layers.iter().zip(&self.layers) {
            let partition = RegionPartition::build(shape.height(), shape.width(), spec.radius)?;
            let z = conv2d_forward(
                &current,
                kernels,
                spec.mode,
                &partition,
                self.config.strategy,
            )?;
            current = activate(&z, spec.activation);
        }
        Ok(current)
    }

    /// Forward pass that keeps the activations for a following [`Network::backward`].
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let trace = self.trace(input)?;
        let out = activate(
            trace.output(),
            self.config.layers.last().unwrap().activation,
        );
        self.cache = Some(trace);
        Ok(out)
    }

    /// Backpropagates through the activations of the last [`Network::forward`],
    /// consuming them.
    pub fn backward(&mut self, loss_grad: &Tensor) -> Result<Gradients> {
        let trace = self.cache.take().ok_or_else(|| {
            Error::InvalidState("backward called without a preceding forward".into())
        })?;
        self.backward_trace(&trace, loss_grad)
    }

    /// Backpropagation through a recorded [`Trace`]. ReLU's derivative at
    /// exactly zero is taken as zero.
    pub fn backward_trace(&self, trace: &Trace, loss_grad: &Tensor) -> Result<Gradients> {
        if trace.pre.len() != self.layers.len() {
            return Err(Error::InvalidState(
                "trace does not belong to this network".into(),
            ));
        }
        ensure_same_shape(trace.output(), loss_grad)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = loss_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let spec = &self.config.layers[i];
            if spec.activation == Activation::Relu {
                for (g, z) in upstream.data_mut().iter_mut().zip(trace.pre[i].data()) {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let input = &trace.inputs[i];
            let shape = input.shape();
            let partition = RegionPartition::build(shape.height(), shape.width(), spec.radius)?;
            let (grad_in, params) = backward_impl(
                input,
                &self.layers[i],
                spec.mode,
                &partition,
                &upstream,
                i > 0,
            )?;
            grads.push(params);
            if let Some(g) = grad_in {
                upstream = g;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Serialized parameters: magic `EDGECONV1`, a little-endian `u32` length
    /// followed by the JSON config, then every layer's weights (region-major,
    /// row-major taps) and biases as little-endian `f64`.
    pub fn checkpoint_save(&self) -> Vec<u8> {
        let config = serde_json::to_vec(&self.config).expect("config serializes");
        let mut out =
            Vec::with_capacity(CHECKPOINT_MAGIC.len() + 4 + config.len() + 8 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        for v in self.flat_params() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn checkpoint_load(bytes: &[u8]) -> Result<Network> {
        let mut cursor = Cursor::new(bytes);
        let mut magic = [0u8; 9];
        read_exact(&mut cursor, &mut magic, "magic")?;
        if &magic != CHECKPOINT_MAGIC {
            let message = if magic.starts_with(CHECKPOINT_FAMILY) {
                format!("unsupported checkpoint version `{}`", magic[8] as char)
            } else {
                "not an edgeconv checkpoint".to_string()
            };
            return Err(Error::decode(0, message));
        }
        let mut len = [0u8; 4];
        read_exact(&mut cursor, &mut len, "config length")?;
        let len = u32::from_le_bytes(len) as usize;
        let start = cursor.position() as usize;
        if bytes.len() < start + len {
            return Err(Error::decode(bytes.len(), "truncated config"));
        }
        let config: NetworkConfig = serde_json::from_slice(&bytes[start..start + len])
            .map_err(|e| Error::decode(start, format!("bad config: {e}")))?;
        cursor.set_position((start + len) as u64);
        let mut net =
            Network::build(config).map_err(|e| Error::decode(start, format!("bad config: {e}")))?;
        let count = net.param_count();
        let mut params = Vec::with_capacity(count);
        let mut word = [0u8; 8];
        for _ in 0..count {
            read_exact(&mut cursor, &mut word, "parameters")?;
            params.push(f64::from_le_bytes(word));
        }
        let end = cursor.position() as usize;
        if end != bytes.len() {
            return Err(Error::decode(end, "trailing bytes after parameters"));
        }
        net.set_flat_params(&params)?;
        Ok(net)
    }
}

fn read_exact(cursor: &mut Cursor<&[u8]>, buf: &mut [u8], what: &str) -> Result<()> {
    let offset = cursor.position() as usize;
    cursor
        .read_exact(buf)
        .map_err(|_| Error::decode(offset, format!("truncated {what}")))
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn activate(z: &Tensor, activation: Activation) -> Tensor {
    match activation {
        Activation::Relu => z.map(|v| v.max(0.0)),
        Activation::None => z.clone(),
    }
}

/// Mean squared error and its gradient `2 (pred - target) / n`.
pub fn mse_loss_and_grad(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    ensure_same_shape(pred, target)?;
    let n = pred.data().len() as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, Tensor::from_vec(pred.shape(), grad)?))
}
