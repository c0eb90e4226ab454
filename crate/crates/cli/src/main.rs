use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgeconv::experiment::{
    bench_csv, bench_strategies, error_map_for, evaluate, evaluate_oracle, evaluations_csv,
    pairwise, pairwise_csv, per_image_csv, run_sweep, sweep_csv, train_with_progress, write_errmap,
    write_run, Evaluation, SweepAxis,
};
use edgeconv::metrics::required_crop;
use edgeconv::{BoundaryMode, Dataset, Error, ExperimentConfig, Network, Result};

#[derive(Parser)]
#[command(
    name = "edgeconv",
    version,
    about = "Boundary-aware convolution experiments"
)]
struct Cli {
    /// JSON experiment config; missing keys take the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArg {
    /// Dataset directory [default: <out>/data].
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the blur-task corpus into <out>/data.
    GenData,
    /// Train one network and write its run directory.
    Train {
        #[command(flatten)]
        data: DataArg,
        /// Overrides the config boundary mode.
        #[arg(long)]
        mode: Option<BoundaryMode>,
    },
    /// Train zero, reflect and explicit at every point of an axis.
    Sweep {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        axis: SweepAxis,
    },
    /// Test metrics, loss ratios and Welch tests for one or more checkpoints.
    Eval {
        #[command(flatten)]
        data: DataArg,
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Add a run that predicts the targets exactly.
        #[arg(long)]
        oracle: bool,
    },
    /// Per-pixel test error map and its boundary band statistics.
    Errmap {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Use the targets as predictions.
        #[arg(long)]
        oracle: bool,
        /// Band width in pixels [default: blur radius].
        #[arg(long)]
        band_width: Option<usize>,
    },
    /// Time zero padding against explicit compose and decompose.
    Bench {
        #[arg(long, default_value_t = 512)]
        height: usize,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        #[arg(long, default_value_t = 21)]
        repeats: usize,
    },
    /// Print the crop that removes every boundary-affected pixel.
    CropCalc {
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        radius: u64,
        /// Each layer halves the resolution.
        #[arg(long)]
        multi_resolution: bool,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let bytes = fs::read(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&bytes)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn data_dir(config: &ExperimentConfig, arg: &DataArg) -> PathBuf {
    arg.data
        .clone()
        .unwrap_or_else(|| config.output_dir.join("data"))
}

fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| {
        Error::MissingDataset(format!("cannot read checkpoint {}: {e}", path.display()))
    })?;
    Network::checkpoint_load(&bytes)
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, contents)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let out = config.output_dir.clone();
    match cli.command {
        Command::GenData => {
            let dir = out.join("data");
            let data = Dataset::generate(&config.dataset_spec())?;
            data.write(&dir)?;
            println!(
                "{} train / {} validation / {} test samples in {}",
                data.train.len(),
                data.validation.len(),
                data.test.len(),
                dir.display()
            );
        }
        Command::Train { data, mode } => {
            let config = mode.map_or(config.clone(), |m| config.with_mode(m));
            let dataset = Dataset::load(data_dir(&config, &data))?;
            config.check_dataset(&dataset)?;
            let (report, net) = train_with_progress(&config, &dataset, |r| {
                eprintln!(
                    "epoch {:>3}  train {:.6e}  val {:.6e}  {:.2}s",
                    r.epoch, r.train_mse, r.val_mse, r.seconds
                )
            })?;
            let dir = out.join(format!("train-{}", config.mode));
            write_run(&dir, &report, &net)?;
            println!(
                "{} selected epoch {}: test mse {} psnr {} dssim {} -> {}",
                config.mode,
                report.selected_epoch,
                report.test.mse,
                report.test.psnr,
                report.test.dssim,
                dir.display()
            );
        }
        Command::Sweep { data, axis } => {
            let dataset = Dataset::load(data_dir(&config, &data))?;
            config.check_dataset(&dataset)?;
            let rows = run_sweep(&config, &dataset, axis, |r| {
                eprintln!(
                    "{axis} step {} (n_l={}, n_f={}) {}: test mse {}",
                    r.point.step, r.point.layers, r.point.features, r.mode, r.test_mse
                )
            })?;
            write(
                out.join(format!("sweep-{axis}-config.json")),
                config.to_json(),
            )?;
            write(out.join(format!("sweep-{axis}.csv")), sweep_csv(&rows))?;
        }
        Command::Eval {
            data,
            checkpoints,
            oracle,
        } => {
            if checkpoints.is_empty() && !oracle {
                return Err(Error::Config("eval needs --checkpoint or --oracle".into()));
            }
            let dataset = Dataset::load(data_dir(&config, &data))?;
            let mut runs: Vec<(String, Evaluation)> = Vec::new();
            for (i, path) in checkpoints.iter().enumerate() {
                let net = load_checkpoint(path)?;
                let mode = net.config().layers[0].mode;
                runs.push((format!("{i}-{mode}"), evaluate(&net, &dataset.test)?));
            }
            if oracle {
                runs.push(("oracle".into(), evaluate_oracle(&dataset.test)?));
            }
            let dir = out.join("eval");
            write(dir.join("metrics.csv"), evaluations_csv(&runs))?;
            write(dir.join("per_image_losses.csv"), per_image_csv(&runs))?;
            write(dir.join("pairwise.csv"), pairwise_csv(&pairwise(&runs)?))?;
            print!("{}", evaluations_csv(&runs));
        }
        Command::Errmap {
            data,
            checkpoint,
            oracle,
            band_width,
        } => {
            let dataset = Dataset::load(data_dir(&config, &data))?;
            let band = band_width.unwrap_or_else(|| dataset.spec().blur_radius().max(1));
            let (net, label) = match (&checkpoint, oracle) {
                (Some(path), false) => {
                    let net = load_checkpoint(path)?;
                    let label = net.config().layers[0].mode.to_string();
                    (Some(net), label)
                }
                _ => (None, "oracle".to_string()),
            };
            let map = error_map_for(net.as_ref(), &dataset.test)?;
            let dir = out.join(format!("errmap-{label}"));
            let stats = write_errmap(&dir, &map, band)?;
            eprintln!("wrote {}", dir.display());
            println!(
                "band {}: corner {} edge {} interior {}",
                stats.band_width, stats.corner_mean, stats.edge_mean, stats.interior_mean
            );
        }
        Command::Bench {
            height,
            width,
            channels,
            radius,
            repeats,
        } => {
            let rows = bench_strategies(height, width, channels, radius, repeats, config.seed)?;
            let csv = bench_csv(&rows);
            write(out.join("bench.csv"), &csv)?;
            print!("{csv}");
        }
        Command::CropCalc {
            depth,
            radius,
            multi_resolution,
        } => println!("{}", required_crop(depth, radius, multi_resolution)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.class());
            ExitCode::FAILURE
        }
    }
}
