//! Reproducible blur-learning experiments: configuration, the training loop,
//! sweeps, evaluation, error maps and the strategy benchmark.

mod bench;
mod eval;
mod report;
mod sweep;

pub use bench::{bench_csv, bench_strategies, BenchTiming};
pub use eval::{
    error_map_for, evaluate, evaluate_oracle, evaluations_csv, pairwise, pairwise_csv,
    per_image_csv, write_errmap, Evaluation, PairwiseRow,
};
pub use report::{
    convergence_svg, epochs_csv, test_losses_csv, test_metrics_csv, timing_csv, write_run,
};
pub use sweep::{run_sweep, sweep_csv, sweep_points, SweepAxis, SweepPoint, SweepRow, SWEEP_MODES};

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::conv::{BoundaryMode, RegionPartition, Strategy};
use crate::dataio::{BlurTaskSample, Dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::metrics::SSIM_WINDOW;
use crate::net::{mse_loss_and_grad, Network, NetworkConfig};
use crate::optim::{AdamConfig, AdamState};

/// Everything needed to reproduce one run. Missing keys take the desk-scale
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub blur_size: usize,
    pub blur_sigma: f64,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Convolution layers `n_l`.
    pub layers: usize,
    /// Hidden feature channels `n_f`.
    pub features: usize,
    pub radius: usize,
    pub mode: BoundaryMode,
    pub strategy: Strategy,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            height: 48,
            width: 48,
            channels: 1,
            blur_size: 5,
            blur_sigma: 1.0,
            train_count: 1000,
            val_count: 200,
            test_count: 500,
            layers: 2,
            features: 3,
            radius: 1,
            mode: BoundaryMode::Explicit,
            strategy: Strategy::Decompose,
            adam: AdamConfig::default(),
            epochs: 30,
            batch_size: 8,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            source_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Larger geometry and blur: 128×128 images, 13×13 Gaussian with σ = 2.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            height: 128,
            width: 128,
            blur_size: 13,
            blur_sigma: 2.0,
            ..Self::default()
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_slice(bytes).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("config serializes");
        out.push(b'\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset_spec().validate()?;
        if self.height < SSIM_WINDOW || self.width < SSIM_WINDOW {
            return Err(Error::Config(format!(
                "images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for DSSIM, got {}x{}",
                self.height, self.width
            )));
        }
        if self.layers == 0 || self.features == 0 || self.radius == 0 {
            return Err(Error::Config(
                "layers, features and radius must be at least 1".into(),
            ));
        }
        RegionPartition::build(self.height, self.width, self.radius)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        self.adam.validate()
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            height: self.height,
            width: self.width,
            channels: self.channels,
            blur_size: self.blur_size,
            blur_sigma: self.blur_sigma,
            train_count: self.train_count,
            val_count: self.val_count,
            test_count: self.test_count,
            seed: self.seed,
            source_dir: self.source_dir.clone(),
        }
    }

    pub fn network_config(&self) -> NetworkConfig {
        let mut net = NetworkConfig::flat(
            self.channels,
            self.channels,
            self.layers,
            self.features,
            self.radius,
            self.mode,
            self.seed,
        );
        net.strategy = self.strategy;
        net
    }

    pub fn with_mode(&self, mode: BoundaryMode) -> Self {
        ExperimentConfig {
            mode,
            ..self.clone()
        }
    }

    /// Fails unless `data` was generated from this config's dataset fields.
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.spec() != &self.dataset_spec() {
            return Err(Error::Config(format!(
                "dataset was generated from a different spec ({}x{}x{}, seed {}); regenerate it with gen-data",
                data.spec().height,
                data.spec().width,
                data.spec().channels,
                data.spec().seed
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained network.
    pub epoch: usize,
    /// Mean per-sample loss. Epoch 0 evaluates the whole training split;
    /// later epochs average the losses seen during the epoch's updates.
    pub train_mse: f64,
    pub val_mse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub mse: f64,
    /// PSNR of the mean test MSE with peak 1.
    pub psnr: f64,
    /// Mean per-image DSSIM.
    pub dssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the lowest validation loss; its parameters are the result.
    pub selected_epoch: usize,
    pub test: TestMetrics,
    /// Per-image test MSE of the selected network, in test-split order.
    pub test_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_val_mse(&self) -> f64 {
        self.epochs
            .last()
            .expect("epoch 0 is always recorded")
            .val_mse
    }

    /// First epoch whose validation loss is at or below `target`.
    pub fn epochs_to_reach(&self, target: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|r| r.val_mse <= target)
            .map(|r| r.epoch)
    }
}

/// Shuffling seed of `epoch`; independent of the boundary mode so runs that
/// differ only in mode see the same sample order.
pub fn epoch_shuffle_seed(seed: u64, epoch: usize) -> u64 {
    crate::dataio::sample_seed(seed ^ 0x5348_5546_464c_4521, epoch)
}

pub fn mean_loss(net: &Network, samples: &[BlurTaskSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += mse_loss_and_grad(&net.predict(&s.input)?, &s.target)?.0;
    }
    Ok(total / samples.len() as f64)
}

pub fn train(config: &ExperimentConfig, data: &Dataset) -> Result<(TrainReport, Network)> {
    train_with_progress(config, data, |_| {})
}

/// Trains with Adam on mean-of-batch gradients and keeps the parameters of the
/// epoch with the lowest validation loss. `progress` sees each epoch record.
pub fn train_with_progress(
    config: &ExperimentConfig,
    data: &Dataset,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(TrainReport, Network)> {
    config.validate()?;
    if data.train.is_empty() || data.validation.is_empty() || data.test.is_empty() {
        return Err(Error::MissingDataset(
            "every split needs at least one sample".into(),
        ));
    }
    let mut net = Network::build(config.network_config())?;
    let mut adam = AdamState::new(config.adam, net.param_count())?;
    let mut params = net.flat_params();

    let start = Instant::now();
    let initial = EpochRecord {
        epoch: 0,
        train_mse: mean_loss(&net, &data.train)?,
        val_mse: mean_loss(&net, &data.validation)?,
        seconds: start.elapsed().as_secs_f64(),
    };
    if !initial.train_mse.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0 });
    }
    progress(&initial);
    let mut best = (initial.val_mse, 0, params.clone());
    let mut epochs = vec![initial];

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut Pcg64::seed_from_u64(epoch_shuffle_seed(
            config.seed,
            epoch,
        )));
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut grads = net.zero_gradients();
            for &i in chunk {
                let sample = &data.train[i];
                let trace = net.trace(&sample.input)?;
                let (loss, loss_grad) = mse_loss_and_grad(trace.output(), &sample.target)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch });
                }
                loss_sum += loss;
                grads.add_assign(&net.backward_trace(&trace, &loss_grad)?);
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.step(&mut params, &grads.flatten())?;
            net.set_flat_params(&params)?;
        }
        let val_mse = mean_loss(&net, &data.validation)?;
        if !val_mse.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        let record = EpochRecord {
            epoch,
            train_mse: loss_sum / order.len() as f64,
            val_mse,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&record);
        if val_mse < best.0 {
            best = (val_mse, epoch, params.clone());
        }
        epochs.push(record);
    }

    net.set_flat_params(&best.2)?;
    let eval = evaluate(&net, &data.test)?;
    let report = TrainReport {
        config: config.clone(),
        seed: config.seed,
        epochs,
        selected_epoch: best.1,
        test: eval.metrics,
        test_losses: eval.per_image,
    };
    Ok((report, net))
}
