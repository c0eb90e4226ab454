use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::netpbm::{self, quantized_value, NetpbmFormat};
use super::{gaussian_kernel, make_blur_sample, synth_image, BlurTaskSample};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

const MANIFEST_FORMAT: &str = "edgeconv-dataset/1";
const MANIFEST_FILE: &str = "manifest.json";
/// Stored samples are 16-bit; generation applies the same quantization so an
/// in-memory corpus equals one read back from disk.
const SAMPLE_MAXVAL: u16 = 65535;

/// Geometry, blur, split sizes and seed of a blur-task corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub blur_size: usize,
    pub blur_sigma: f64,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub seed: u64,
    /// Folder of PGM/PPM images to crop sources from instead of synthesizing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_dir: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn blur_radius(&self) -> usize {
        self.blur_size / 2
    }

    pub fn total(&self) -> usize {
        self.train_count + self.val_count + self.test_count
    }

    pub fn validate(&self) -> Result<()> {
        Shape::new(self.height, self.width, self.channels)?;
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!(
                "samples are stored as PGM/PPM, so channels must be 1 or 3 (got {})",
                self.channels
            )));
        }
        gaussian_kernel(self.blur_size, self.blur_sigma)?;
        if self.train_count == 0 || self.val_count == 0 || self.test_count == 0 {
            return Err(Error::Config(
                "every split needs at least one sample".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub index: usize,
    pub seed: u64,
    pub split: Split,
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub spec: DatasetSpec,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train: Vec<BlurTaskSample>,
    pub validation: Vec<BlurTaskSample>,
    pub test: Vec<BlurTaskSample>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Source seed of sample `index` in a corpus generated from `base`.
pub fn sample_seed(base: u64, index: usize) -> u64 {
    splitmix64(base ^ splitmix64(index as u64))
}

fn convert_channels(t: Tensor, channels: usize) -> Result<Tensor> {
    let shape = t.shape();
    match (shape.channels(), channels) {
        (a, b) if a == b => Ok(t),
        (1, 3) => {
            let data = t.data().iter().flat_map(|&v| [v, v, v]).collect();
            Tensor::from_vec(shape.with_channels(3)?, data)
        }
        (3, 1) => {
            let data = t
                .data()
                .chunks_exact(3)
                .map(|p| (p[0] + p[1] + p[2]) / 3.0)
                .collect();
            Tensor::from_vec(shape.with_channels(1)?, data)
        }
        (a, b) => Err(Error::ContractViolation(format!(
            "cannot convert {a} channels to {b}"
        ))),
    }
}

fn load_sources(dir: &Path, spec: &DatasetSpec) -> Result<Vec<Tensor>> {
    let m = spec.blur_radius();
    let (need_h, need_w) = (spec.height + 2 * m, spec.width + 2 * m);
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm"))
        })
        .collect();
    paths.sort();
    let mut sources = Vec::new();
    for p in paths {
        let t = netpbm::read_netpbm(&p)?;
        if t.shape().height() >= need_h && t.shape().width() >= need_w {
            sources.push(convert_channels(t, spec.channels)?);
        }
    }
    if sources.is_empty() {
        return Err(Error::MissingDataset(format!(
            "no PGM/PPM image in {} is at least {need_h}x{need_w}",
            dir.display()
        )));
    }
    Ok(sources)
}

fn quantize(t: &Tensor) -> Tensor {
    t.map(|v| quantized_value(v, SAMPLE_MAXVAL))
}

/// Builds one quantized sample from its seed, either synthesized or cropped
/// from one of `sources`.
fn render_sample(
    spec: &DatasetSpec,
    kernel: &Tensor,
    seed: u64,
    sources: Option<&[Tensor]>,
) -> Result<BlurTaskSample> {
    let m = spec.blur_radius();
    let (h, w) = (spec.height + 2 * m, spec.width + 2 * m);
    let source = match sources {
        None => synth_image(h, w, spec.channels, seed),
        Some(images) => {
            let mut rng = Pcg64::seed_from_u64(seed);
            let image = &images[rng.random_range(0..images.len())];
            let top = rng.random_range(0..=image.shape().height() - h);
            let left = rng.random_range(0..=image.shape().width() - w);
            image.crop(top, left, h, w)?
        }
    };
    let sample = make_blur_sample(&source, kernel)?;
    Ok(BlurTaskSample {
        input: quantize(&sample.input),
        target: quantize(&sample.target),
    })
}

impl Dataset {
    /// Generates the corpus in memory. Samples are assigned to train,
    /// validation and test in index order.
    pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
        spec.validate()?;
        let kernel = gaussian_kernel(spec.blur_size, spec.blur_sigma)?;
        let sources = spec
            .source_dir
            .as_deref()
            .map(|d| load_sources(d, spec))
            .transpose()?;
        let ext = if spec.channels == 1 { "pgm" } else { "ppm" };

        let mut seen = HashSet::new();
        let mut manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            spec: spec.clone(),
            samples: Vec::with_capacity(spec.total()),
        };
        let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for index in 0..spec.total() {
            let seed = sample_seed(spec.seed, index);
            if !seen.insert(seed) {
                return Err(Error::InvalidState(format!(
                    "sample seed collision at index {index}"
                )));
            }
            let split = if index < spec.train_count {
                Split::Train
            } else if index < spec.train_count + spec.val_count {
                Split::Validation
            } else {
                Split::Test
            };
            let sample = render_sample(spec, &kernel, seed, sources.as_deref())?;
            match split {
                Split::Train => train.push(sample),
                Split::Validation => validation.push(sample),
                Split::Test => test.push(sample),
            }
            let stem = format!("samples/{}/{index:05}", split.dir());
            manifest.samples.push(SampleRecord {
                index,
                seed,
                split,
                input: format!("{stem}_input.{ext}"),
                target: format!("{stem}_target.{ext}"),
            });
        }
        Ok(Dataset {
            manifest,
            train,
            validation,
            test,
        })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.manifest.spec
    }

    pub fn manifest_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        bytes.push(b'\n');
        bytes
    }

    fn split_samples(&self, split: Split) -> &[BlurTaskSample] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Writes `manifest.json` and every sample as 16-bit PGM/PPM under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let format = NetpbmFormat::binary_for(self.spec().channels)?;
        for split in [Split::Train, Split::Validation, Split::Test] {
            fs::create_dir_all(dir.join("samples").join(split.dir()))?;
        }
        let mut counters = [0usize; 3];
        for record in &self.manifest.samples {
            let slot = record.split as usize;
            let sample = &self.split_samples(record.split)[counters[slot]];
            counters[slot] += 1;
            netpbm::write_netpbm(
                dir.join(&record.input),
                &sample.input,
                format,
                SAMPLE_MAXVAL,
            )?;
            netpbm::write_netpbm(
                dir.join(&record.target),
                &sample.target,
                format,
                SAMPLE_MAXVAL,
            )?;
        }
        fs::write(dir.join(MANIFEST_FILE), self.manifest_json())?;
        Ok(())
    }

    /// Reads a corpus written by [`Dataset::write`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.is_file() {
            return Err(Error::MissingDataset(format!(
                "{} not found",
                manifest_path.display()
            )));
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!(
                "unsupported dataset format `{}`",
                manifest.format
            )));
        }
        let spec = &manifest.spec;
        let expected = Shape::new(spec.height, spec.width, spec.channels)?;
        let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for record in &manifest.samples {
            let read = |rel: &str| -> Result<Tensor> {
                let t = netpbm::read_netpbm(dir.join(rel))?;
                if t.shape() != expected {
                    return Err(Error::ContractViolation(format!(
                        "{rel} is {} but the manifest declares {expected}",
                        t.shape()
                    )));
                }
                Ok(t)
            };
            let sample = BlurTaskSample {
                input: read(&record.input)?,
                target: read(&record.target)?,
            };
            match record.split {
                Split::Train => train.push(sample),
                Split::Validation => validation.push(sample),
                Split::Test => test.push(sample),
            }
        }
        if (train.len(), validation.len(), test.len())
            != (spec.train_count, spec.val_count, spec.test_count)
        {
            return Err(Error::ContractViolation(
                "manifest split counts disagree with its spec".into(),
            ));
        }
        Ok(Dataset {
            manifest,
            train,
            validation,
            test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> DatasetSpec {
        DatasetSpec {
            height: 10,
            width: 12,
            channels: 1,
            blur_size: 5,
            blur_sigma: 1.0,
            train_count: 6,
            val_count: 2,
            test_count: 3,
            seed,
            source_dir: None,
        }
    }

    #[test]
    fn split_counts_and_disjoint_seeds() {
        let mut spec = small_spec(1);
        spec.train_count = 100;
        spec.val_count = 20;
        spec.test_count = 50;
        let ds = Dataset::generate(&spec).unwrap();
        assert_eq!(
            (ds.train.len(), ds.validation.len(), ds.test.len()),
            (100, 20, 50)
        );
        let count = |s: Split| ds.manifest.samples.iter().filter(|r| r.split == s).count();
        assert_eq!(
            (
                count(Split::Train),
                count(Split::Validation),
                count(Split::Test)
            ),
            (100, 20, 50)
        );
        let seeds: HashSet<u64> = ds.manifest.samples.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 170);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = Dataset::generate(&small_spec(3)).unwrap();
        let b = Dataset::generate(&small_spec(3)).unwrap();
        assert_eq!(a.manifest_json(), b.manifest_json());
        assert_eq!(a.train, b.train);
        let c = Dataset::generate(&small_spec(4)).unwrap();
        assert_ne!(a.train[0], c.train[0]);
    }

    #[test]
    fn write_then_load_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::generate(&small_spec(5)).unwrap();
        ds.write(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.manifest, ds.manifest);
        assert_eq!(back.train, ds.train);
        assert_eq!(back.validation, ds.validation);
        assert_eq!(back.test, ds.test);
    }

    #[test]
    fn missing_dataset() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Dataset::load(dir.path()),
            Err(Error::MissingDataset(_))
        ));
    }

    #[test]
    fn folder_sources_are_cropped() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..2 {
            let img = synth_image(30, 40, 3, i);
            netpbm::write_netpbm(
                dir.path().join(format!("img{i}.ppm")),
                &img,
                NetpbmFormat::P6,
                255,
            )
            .unwrap();
        }
        let mut spec = small_spec(2);
        spec.source_dir = Some(dir.path().to_path_buf());
        let ds = Dataset::generate(&spec).unwrap();
        assert_eq!(ds.train[0].input.shape(), Shape::new(10, 12, 1).unwrap());
        assert_eq!(Dataset::generate(&spec).unwrap().test, ds.test);

        spec.height = 40;
        assert!(matches!(
            Dataset::generate(&spec),
            Err(Error::MissingDataset(_))
        ));
    }

    #[test]
    fn invalid_specs() {
        let mut spec = small_spec(0);
        spec.channels = 2;
        assert!(Dataset::generate(&spec).is_err());
        let mut spec = small_spec(0);
        spec.blur_size = 4;
        assert!(Dataset::generate(&spec).is_err());
        let mut spec = small_spec(0);
        spec.test_count = 0;
        assert!(Dataset::generate(&spec).is_err());
    }
}
