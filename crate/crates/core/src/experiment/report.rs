//! Run outputs. Metric CSVs contain no timing so reruns are byte-identical;
//! wall-clock times go to `timing.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EpochRecord, TrainReport};
use crate::error::Result;
use crate::net::Network;

pub fn epochs_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_mse[intensity^2],val_mse[intensity^2]\n");
    for r in &report.epochs {
        writeln!(out, "{},{},{}", r.epoch, r.train_mse, r.val_mse).unwrap();
    }
    out
}

pub fn timing_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,wall_clock[s]\n");
    for r in &report.epochs {
        writeln!(out, "{},{}", r.epoch, r.seconds).unwrap();
    }
    out
}

pub fn test_metrics_csv(report: &TrainReport) -> String {
    format!(
        "mode,seed,selected_epoch[epoch],test_mse[intensity^2],test_psnr[dB],test_dssim[1]\n{},{},{},{},{},{}\n",
        report.config.mode,
        report.seed,
        report.selected_epoch,
        report.test.mse,
        report.test.psnr,
        report.test.dssim
    )
}

pub fn test_losses_csv(report: &TrainReport) -> String {
    let mut out = String::from("test_index,mse[intensity^2]\n");
    for (i, l) in report.test_losses.iter().enumerate() {
        writeln!(out, "{i},{l}").unwrap();
    }
    out
}

/// Line chart of train and validation loss (log scale) per epoch.
pub fn convergence_svg(epochs: &[EpochRecord]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let values: Vec<f64> = epochs
        .iter()
        .flat_map(|r| [r.train_mse, r.val_mse])
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(f64::log10)
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (-1.0, 0.0)
    };
    let last = epochs.last().map_or(1, |r| r.epoch.max(1)) as f64;
    let px = |epoch: usize| M + (W - 2.0 * M) * epoch as f64 / last;
    let py = |v: f64| {
        let l = if v > 0.0 { v.log10().clamp(lo, hi) } else { lo };
        H - M - (H - 2.0 * M) * (l - lo) / (hi - lo)
    };
    let line = |pick: fn(&EpochRecord) -> f64| {
        epochs
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.epoch), py(pick(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<path d="M{M},{M} V{} H{}" fill="none" stroke="black"/>"#,
        H - M,
        W - M
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        W / 2.0,
        H - 15.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{M}" y="{}">1e{lo:.2}</text>"#,
        H - M + 15.0
    )
    .unwrap();
    writeln!(svg, r#"<text x="{M}" y="{}">1e{hi:.2}</text>"#, M - 5.0).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{last}</text>"#,
        W - M,
        H - M + 15.0
    )
    .unwrap();
    writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        line(|r| r.train_mse)
    )
    .unwrap();
    writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
        line(|r| r.val_mse)
    )
    .unwrap();
    writeln!(
        svg,
        r##"<text x="{}" y="{}" fill="#1f77b4">train MSE</text>"##,
        W - M - 90.0,
        M + 5.0
    )
    .unwrap();
    writeln!(
        svg,
        r##"<text x="{}" y="{}" fill="#d62728">validation MSE</text>"##,
        W - M - 90.0,
        M + 20.0
    )
    .unwrap();
    svg.push_str("</svg>\n");
    svg
}

/// Writes the config echo, metric CSVs, timing, chart and the selected
/// checkpoint into `dir`.
pub fn write_run(dir: impl AsRef<Path>, report: &TrainReport, net: &Network) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), report.config.to_json())?;
    fs::write(dir.join("epochs.csv"), epochs_csv(report))?;
    fs::write(dir.join("test_metrics.csv"), test_metrics_csv(report))?;
    fs::write(dir.join("test_losses.csv"), test_losses_csv(report))?;
    fs::write(dir.join("timing.csv"), timing_csv(report))?;
    fs::write(dir.join("convergence.svg"), convergence_svg(&report.epochs))?;
    fs::write(dir.join("checkpoint.bin"), net.checkpoint_save())?;
    Ok(())
}
