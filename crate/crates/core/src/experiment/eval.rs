use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TestMetrics;
use crate::dataio::{decode_netpbm, BlurTaskSample};
use crate::error::{Error, Result};
use crate::metrics::{
    boundary_band_stats, dssim, loss_ratio, mse, psnr_from_mse, welch_t_test, BandStats, ErrorMap,
    ErrorMapAccumulator,
};
use crate::net::Network;

/// Test-split metrics plus the per-image losses kept for significance tests.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: TestMetrics,
    pub per_image: Vec<f64>,
}

fn summarize(pairs: impl Iterator<Item = Result<(f64, f64)>>) -> Result<Evaluation> {
    let mut per_image = Vec::new();
    let mut dssim_sum = 0.0;
    for pair in pairs {
        let (loss, d) = pair?;
        per_image.push(loss);
        dssim_sum += d;
    }
    if per_image.is_empty() {
        return Err(Error::MissingDataset("no samples to evaluate".into()));
    }
    let n = per_image.len() as f64;
    let mean = per_image.iter().sum::<f64>() / n;
    Ok(Evaluation {
        metrics: TestMetrics {
            mse: mean,
            psnr: psnr_from_mse(mean, 1.0),
            dssim: dssim_sum / n,
        },
        per_image,
    })
}

fn check_channels(net: &Network, samples: &[BlurTaskSample]) -> Result<()> {
    if let Some(s) = samples.first() {
        let c = s.input.shape().channels();
        if c != net.config().input_channels {
            return Err(Error::InvalidShape(format!(
                "checkpoint expects {} channels but the dataset has {c}",
                net.config().input_channels
            )));
        }
    }
    Ok(())
}

pub fn evaluate(net: &Network, samples: &[BlurTaskSample]) -> Result<Evaluation> {
    check_channels(net, samples)?;
    summarize(samples.iter().map(|s| {
        let pred = net.predict(&s.input)?;
        Ok((mse(&pred, &s.target)?, dssim(&pred, &s.target, 1.0)?))
    }))
}

/// Scores the targets against themselves, as a perfect predictor would.
pub fn evaluate_oracle(samples: &[BlurTaskSample]) -> Result<Evaluation> {
    summarize(samples.iter().map(|s| {
        Ok((
            mse(&s.target, &s.target)?,
            dssim(&s.target, &s.target, 1.0)?,
        ))
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseRow {
    pub a: String,
    pub b: String,
    /// `100 * mse_a / mse_b`; `None` when either loss is zero.
    pub loss_ratio: Option<f64>,
    /// Welch test on the per-image losses; `None` for degenerate samples.
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p_two_sided: Option<f64>,
}

/// Every ordered pair of runs, including each run against itself.
pub fn pairwise(runs: &[(String, Evaluation)]) -> Result<Vec<PairwiseRow>> {
    let mut rows = Vec::new();
    for (a, ea) in runs {
        for (b, eb) in runs {
            if ea.per_image.len() != eb.per_image.len() {
                return Err(Error::InvalidShape(format!(
                    "runs {a} and {b} were evaluated on different test sets"
                )));
            }
            let ratio = loss_ratio(ea.metrics.mse, eb.metrics.mse).ok();
            let test = welch_t_test(&ea.per_image, &eb.per_image).ok();
            rows.push(PairwiseRow {
                a: a.clone(),
                b: b.clone(),
                loss_ratio: ratio,
                t: test.map(|t| t.t),
                df: test.map(|t| t.df),
                p_two_sided: test.map(|t| t.p_two_sided),
            });
        }
    }
    Ok(rows)
}

/// One row of test metrics per labelled run.
pub fn evaluations_csv(runs: &[(String, Evaluation)]) -> String {
    let mut out = String::from("run,test_mse[intensity^2],test_psnr[dB],test_dssim[1]\n");
    for (label, e) in runs {
        writeln!(
            out,
            "{label},{},{},{}",
            e.metrics.mse, e.metrics.psnr, e.metrics.dssim
        )
        .unwrap();
    }
    out
}

/// Per-image test MSE, one column per run.
pub fn per_image_csv(runs: &[(String, Evaluation)]) -> String {
    let mut out = String::from("test_index");
    for (label, _) in runs {
        write!(out, ",{label}[intensity^2]").unwrap();
    }
    out.push('\n');
    let n = runs.first().map_or(0, |(_, e)| e.per_image.len());
    for i in 0..n {
        write!(out, "{i}").unwrap();
        for (_, e) in runs {
            write!(out, ",{}", e.per_image[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn pairwise_csv(rows: &[PairwiseRow]) -> String {
    let mut out = String::from("run_a,run_b,loss_ratio[%],welch_t[1],welch_df[1],p_two_sided[1]\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.a,
            r.b,
            opt(r.loss_ratio),
            opt(r.t),
            opt(r.df),
            opt(r.p_two_sided)
        )
        .unwrap();
    }
    out
}

/// Per-pixel MAE over `samples`; `net = None` uses the targets as predictions.
pub fn error_map_for(net: Option<&Network>, samples: &[BlurTaskSample]) -> Result<ErrorMap> {
    let mut acc = ErrorMapAccumulator::new();
    if let Some(net) = net {
        check_channels(net, samples)?;
    }
    for s in samples {
        match net {
            Some(net) => acc.add(&net.predict(&s.input)?, &s.target)?,
            None => acc.add(&s.target, &s.target)?,
        }
    }
    acc.finish()
}

/// Writes `errmap.pgm` (map × scale, 16-bit), `errmap.csv`, `errmap_scale.csv`
/// and `band_stats.csv` into `dir`.
pub fn write_errmap(dir: impl AsRef<Path>, map: &ErrorMap, band_width: usize) -> Result<BandStats> {
    let dir = dir.as_ref();
    let stats = boundary_band_stats(map, band_width)?;
    let pgm = map.to_pgm()?;
    // The PGM must decode, so a bad encoding fails here rather than downstream.
    decode_netpbm(&pgm)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("errmap.pgm"), pgm)?;
    fs::write(dir.join("errmap.csv"), map.to_csv())?;
    fs::write(
        dir.join("errmap_scale.csv"),
        format!(
            "pgm_scale[1/intensity],map_peak[intensity],corpus_size[images]\n{},{},{}\n",
            map.pgm_scale(),
            map.peak(),
            map.corpus_size
        ),
    )?;
    fs::write(
        dir.join("band_stats.csv"),
        format!("{}\n{}\n", BandStats::CSV_HEADER, stats.csv_row()),
    )?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny_config;
    use super::super::train;
    use super::*;
    use crate::dataio::{read_netpbm, Dataset};

    #[test]
    fn oracle_evaluation_is_perfect() {
        let data = Dataset::generate(&tiny_config().dataset_spec()).unwrap();
        let e = evaluate_oracle(&data.test).unwrap();
        assert_eq!(e.metrics.mse, 0.0);
        assert_eq!(e.metrics.psnr, f64::INFINITY);
        assert_eq!(e.metrics.dssim, 0.0);
        let map = error_map_for(None, &data.test).unwrap();
        assert!(map.map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pairwise_self_comparison() {
        let config = tiny_config();
        let data = Dataset::generate(&config.dataset_spec()).unwrap();
        let (_, net) = train(&config, &data).unwrap();
        let e = evaluate(&net, &data.test).unwrap();
        let runs = [("a".to_string(), e.clone()), ("b".to_string(), e)];
        let rows = pairwise(&runs).unwrap();
        assert_eq!(evaluations_csv(&runs).lines().count(), 3);
        let per_image = per_image_csv(&runs);
        assert!(per_image.starts_with("test_index,a[intensity^2],b[intensity^2]\n"));
        assert_eq!(per_image.lines().count(), runs[0].1.per_image.len() + 1);
        assert_eq!(rows.len(), 4);
        for r in rows {
            assert_eq!(r.loss_ratio, Some(100.0));
            assert_eq!(r.p_two_sided, Some(1.0));
        }
    }

    #[test]
    fn errmap_files_round_trip() {
        let config = tiny_config();
        let data = Dataset::generate(&config.dataset_spec()).unwrap();
        let (_, net) = train(&config, &data).unwrap();
        let map = error_map_for(Some(&net), &data.test).unwrap();
        assert_eq!(map.map.shape().height(), config.height);
        assert_eq!(map.map.shape().width(), config.width);
        let dir = tempfile::tempdir().unwrap();
        let stats = write_errmap(dir.path(), &map, 2).unwrap();

        let decoded = read_netpbm(dir.path().join("errmap.pgm")).unwrap();
        let restored = ErrorMap {
            map: decoded.map(|v| v / map.pgm_scale()),
            corpus_size: map.corpus_size,
        };
        let again = boundary_band_stats(&restored, 2).unwrap();
        let tol = 1.0 / 65535.0 / map.pgm_scale();
        assert!((again.corner_mean - stats.corner_mean).abs() <= tol);
        assert!((again.edge_mean - stats.edge_mean).abs() <= tol);
        assert!((again.interior_mean - stats.interior_mean).abs() <= tol);
        assert_eq!(
            fs::read_to_string(dir.path().join("errmap.csv"))
                .unwrap()
                .lines()
                .count(),
            config.height * config.width + 1
        );
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let config = tiny_config();
        let data = Dataset::generate(&config.dataset_spec()).unwrap();
        let rgb =
            crate::net::NetworkConfig::flat(3, 3, 2, 3, 1, crate::conv::BoundaryMode::Zero, 0);
        let net = Network::build(rgb).unwrap();
        assert!(matches!(
            evaluate(&net, &data.test),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(
            error_map_for(Some(&net), &data.test),
            Err(Error::InvalidShape(_))
        ));
    }
}
