use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{train, ExperimentConfig};
use crate::conv::BoundaryMode;
use crate::dataio::Dataset;
use crate::error::{Error, Result};

/// Modes trained at every operational point, all with the same seed.
pub const SWEEP_MODES: [BoundaryMode; 3] = [
    BoundaryMode::Zero,
    BoundaryMode::Reflect,
    BoundaryMode::Explicit,
];

const SWEEP_STEPS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// `n_l = 1..=7` at `n_f = 3`.
    Depth,
    /// `n_f = 3, 6, ..., 21` at `n_l = 2`.
    Features,
    /// Step `k` uses `n_l = k`, `n_f = 3k`.
    Joint,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Depth => "depth",
            SweepAxis::Features => "features",
            SweepAxis::Joint => "joint",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(SweepAxis::Depth),
            "features" => Ok(SweepAxis::Features),
            "joint" => Ok(SweepAxis::Joint),
            _ => Err(Error::Config(format!(
                "unknown sweep axis `{s}` (depth, features, joint)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub step: usize,
    pub layers: usize,
    pub features: usize,
}

pub fn sweep_points(axis: SweepAxis) -> Vec<SweepPoint> {
    (1..=SWEEP_STEPS)
        .map(|k| {
            let (layers, features) = match axis {
                SweepAxis::Depth => (k, 3),
                SweepAxis::Features => (2, 3 * k),
                SweepAxis::Joint => (k, 3 * k),
            };
            SweepPoint {
                step: k,
                layers,
                features,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub point: SweepPoint,
    pub mode: BoundaryMode,
    pub selected_epoch: usize,
    pub test_mse: f64,
    pub test_psnr: f64,
    pub test_dssim: f64,
}

/// Trains every point of `axis` in each of [`SWEEP_MODES`]; `progress` sees
/// each row as it completes.
pub fn run_sweep(
    config: &ExperimentConfig,
    data: &Dataset,
    axis: SweepAxis,
    mut progress: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for point in sweep_points(axis) {
        for mode in SWEEP_MODES {
            let run = ExperimentConfig {
                layers: point.layers,
                features: point.features,
                mode,
                ..config.clone()
            };
            let (report, _) = train(&run, data)?;
            let row = SweepRow {
                axis,
                point,
                mode,
                selected_epoch: report.selected_epoch,
                test_mse: report.test.mse,
                test_psnr: report.test.psnr,
                test_dssim: report.test.dssim,
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "axis,step,n_l[layers],n_f[features],mode,selected_epoch[epoch],test_mse[intensity^2],test_psnr[dB],test_dssim[1]\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.axis,
            r.point.step,
            r.point.layers,
            r.point.features,
            r.mode,
            r.selected_epoch,
            r.test_mse,
            r.test_psnr,
            r.test_dssim
        )
        .unwrap();
    }
    out
}
