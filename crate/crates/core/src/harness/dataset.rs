//! Labeled sample container with train/val/test tags, the `.nds` file
//! format, a directory-of-CSV loader and the synthetic image benchmark.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

pub const DATASET_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sample_shape: Vec<usize>,
    samples: Vec<Tensor>,
    labels: Vec<usize>,
    splits: Vec<Split>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        sample_shape: Vec<usize>,
        samples: Vec<Tensor>,
        labels: Vec<usize>,
        splits: Vec<Split>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if samples.len() != labels.len() || samples.len() != splits.len() {
            return Err(Error::format(
                "dataset",
                format!(
                    "{} samples, {} labels, {} split tags",
                    samples.len(),
                    labels.len(),
                    splits.len()
                ),
            ));
        }
        if class_names.is_empty() {
            return Err(Error::format("dataset", "no classes"));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::LabelOutOfRange {
                label,
                class_count: class_names.len(),
            });
        }
        if let Some(s) = samples.iter().find(|s| s.shape() != sample_shape.as_slice()) {
            return Err(Error::format(
                "dataset",
                format!("sample shape {:?} differs from {sample_shape:?}", s.shape()),
            ));
        }
        Ok(Self {
            sample_shape,
            samples,
            labels,
            splits,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn sample(&self, id: usize) -> &Tensor {
        &self.samples[id]
    }

    pub fn label(&self, id: usize) -> usize {
        self.labels[id]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self, id: usize) -> Split {
        self.splits[id]
    }

    /// Sample ids in `split`, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Ids of `split` samples labeled `class`, ascending.
    pub fn class_indices(&self, split: Split, class: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split && self.labels[i] == class)
            .collect()
    }

    /// Replaces every split tag with a seeded, class-stratified 80/10/10
    /// assignment: per class of `n` samples, `n / 10` go to val, `n / 10`
    /// to test and the rest to train.
    pub fn assign_splits(&mut self, seed: u64) {
        for class in 0..self.class_count() {
            let mut ids: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == class).collect();
            ids.shuffle(&mut rng::stream(seed, &[tag::SPLIT, class as u64]));
            let tenth = ids.len() / 10;
            for (rank, id) in ids.into_iter().enumerate() {
                self.splits[id] = if rank < tenth {
                    Split::Val
                } else if rank < 2 * tenth {
                    Split::Test
                } else {
                    Split::Train
                };
            }
        }
    }

    /// Standardization statistics from the training split: per channel for
    /// `(c, h, w)` samples, per feature for flat vectors.
    pub fn train_stats(&self) -> Result<NormStats> {
        let train = self.indices(Split::Train);
        if train.is_empty() {
            return Err(Error::EmptySplit("train".into()));
        }
        let groups = self.sample_shape[0];
        let per_group = self.sample_shape[1..].iter().product::<usize>();
        let mut sum = vec![0.0; groups];
        let mut sum_sq = vec![0.0; groups];
        for &id in &train {
            for (k, &v) in self.samples[id].data().iter().enumerate() {
                sum[k / per_group] += v;
                sum_sq[k / per_group] += v * v;
            }
        }
        let count = (train.len() * per_group) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / count - m * m).max(0.0);
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn standardize(&mut self, stats: &NormStats) {
        let per_group = self.sample_shape[1..].iter().product::<usize>();
        for s in &mut self.samples {
            for (k, v) in s.data_mut().iter_mut().enumerate() {
                let g = k / per_group;
                *v = (*v - stats.mean[g]) / stats.std[g];
            }
        }
    }

    /// Element-wise mean of the samples in `split`.
    pub fn mean_sample(&self, split: Split) -> Result<Tensor> {
        let ids = self.indices(split);
        if ids.is_empty() {
            return Err(Error::EmptySplit(split.name().into()));
        }
        let mut acc = Tensor::zeros(&self.sample_shape);
        for &id in &ids {
            for (a, v) in acc.data_mut().iter_mut().zip(self.samples[id].data()) {
                *a += v;
            }
        }
        let n = ids.len() as f64;
        Ok(acc.map(|v| v / n))
    }

    pub fn to_nds_bytes(&self) -> Vec<u8> {
        let (channels, height, width, flat) = match self.sample_shape.as_slice() {
            [c, h, w] => (*c, *h, *w, false),
            [d] => (1, 1, *d, true),
            other => unreachable!("dataset sample shape {other:?}"),
        };
        let header = NdsHeader {
            format_version: DATASET_VERSION,
            n: self.len(),
            channels,
            height,
            width,
            flat,
            class_names: self.class_names.clone(),
            splits: self.splits.clone(),
            labels: self.labels.clone(),
        };
        let mut bytes = serde_json::to_vec(&header).expect("header serializes");
        bytes.push(b'\n');
        for s in &self.samples {
            for &v in s.data() {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_nds_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("dataset", "missing header line"))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| Error::format("dataset", format!("header: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::format("dataset", "header lacks format_version"))?;
        if version != DATASET_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: DATASET_VERSION,
            });
        }
        let h: NdsHeader = serde_json::from_value(value)
            .map_err(|e| Error::format("dataset", format!("header: {e}")))?;
        if h.channels == 0 || h.height == 0 || h.width == 0 {
            return Err(Error::format("dataset", "zero dimension"));
        }
        if h.flat && (h.channels != 1 || h.height != 1) {
            return Err(Error::format("dataset", "flat samples need channels = height = 1"));
        }
        let shape = if h.flat {
            vec![h.width]
        } else {
            vec![h.channels, h.height, h.width]
        };
        let numel = h.channels * h.height * h.width;
        let payload = &bytes[newline + 1..];
        if payload.len() != h.n * numel * 4 {
            return Err(Error::format(
                "dataset",
                format!("payload has {} bytes, header implies {}", payload.len(), h.n * numel * 4),
            ));
        }
        if h.labels.len() != h.n || h.splits.len() != h.n {
            return Err(Error::format("dataset", "label or split count differs from n"));
        }
        let samples = payload
            .chunks_exact(numel * 4)
            .map(|chunk| {
                let data = chunk
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect();
                Tensor::from_parts(shape.clone(), data)
            })
            .collect();
        Self::new(shape, samples, h.labels, h.splits, h.class_names)
    }

    pub fn save_nds(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_nds_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_nds(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_nds_bytes(&bytes)
    }

    /// Loads tabular data from a directory holding `train.csv`, `val.csv`
    /// and/or `test.csv`, or a single `data.csv` that is split 80/10/10
    /// with `split_seed`. Each file has a header row; the first column is
    /// the integer label, the rest are features. An optional `classes.txt`
    /// names the classes one per line.
    pub fn load_csv_dir(dir: impl AsRef<Path>, split_seed: u64) -> Result<Self> {
        let dir = dir.as_ref();
        let mut rows: Vec<(Vec<f64>, usize, Split)> = Vec::new();
        let mut found_split_file = false;
        for split in [Split::Train, Split::Val, Split::Test] {
            let path = dir.join(format!("{}.csv", split.name()));
            if path.exists() {
                found_split_file = true;
                read_csv_rows(&path, split, &mut rows)?;
            }
        }
        let single = dir.join("data.csv");
        if !found_split_file {
            if !single.exists() {
                return Err(Error::format(
                    "dataset",
                    format!("{} holds no train/val/test/data csv", dir.display()),
                ));
            }
            read_csv_rows(&single, Split::Train, &mut rows)?;
        }
        let width = rows.first().map(|r| r.0.len()).unwrap_or(0);
        if width == 0 {
            return Err(Error::format("dataset", "csv has no feature columns or rows"));
        }
        let names_path = dir.join("classes.txt");
        let class_names: Vec<String> = if names_path.exists() {
            fs::read_to_string(&names_path)
                .map_err(|e| Error::io(&names_path, e))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect()
        } else {
            let max = rows.iter().map(|r| r.1).max().unwrap_or(0);
            (0..=max).map(|c| format!("class_{c}")).collect()
        };
        let mut samples = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        let mut splits = Vec::with_capacity(rows.len());
        for (features, label, split) in rows {
            if features.len() != width {
                return Err(Error::format("dataset", "ragged csv rows"));
            }
            samples.push(Tensor::vector(features));
            labels.push(label);
            splits.push(split);
        }
        let mut ds = Self::new(vec![width], samples, labels, splits, class_names)?;
        if !found_split_file {
            ds.assign_splits(split_seed);
        }
        Ok(ds)
    }
}

fn read_csv_rows(path: &Path, split: Split, rows: &mut Vec<(Vec<f64>, usize, Split)>) -> Result<()> {
    let mut reader = csv::Reader::from_path(path)?;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut fields = record.iter();
        let bad = |what: &str| Error::format("dataset", format!("{} row {}: bad {what}", path.display(), line + 1));
        let label = fields
            .next()
            .and_then(|f| f.trim().parse::<usize>().ok())
            .ok_or_else(|| bad("label"))?;
        let features = fields
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad("feature"))?;
        rows.push((features, label, split));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NdsHeader {
    format_version: u64,
    n: usize,
    channels: usize,
    height: usize,
    width: usize,
    #[serde(default)]
    flat: bool,
    class_names: Vec<String>,
    splits: Vec<Split>,
    labels: Vec<usize>,
}

/// Per-channel (or per-feature) standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Parameters of the synthetic image benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub class_count: usize,
    pub per_class: usize,
    pub image_size: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    pub noise: f64,
    pub seed: u64,
}

fn default_channels() -> usize {
    1
}

/// Names of the synthetic pattern classes, in label order.
pub const SYNTHETIC_PATTERNS: [&str; 8] = [
    "horizontal-bar",
    "vertical-bar",
    "disk",
    "ring",
    "cross",
    "diagonal",
    "anti-diagonal",
    "corners",
];

/// Renders one geometric pattern per class (bars, disk, ring, cross,
/// diagonals, corner blocks) with ±1 pixel position jitter and a random
/// amplitude in `[0.6, 1.0]`, then adds Gaussian noise of standard
/// deviation `noise`. Samples are interleaved by class and split 80/10/10
/// per class. Values are rounded to `f32` so the dataset survives an `.nds`
/// round trip unchanged.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    let SyntheticConfig {
        class_count,
        per_class,
        image_size: size,
        channels,
        noise,
        seed,
    } = *config;
    if class_count == 0 || class_count > SYNTHETIC_PATTERNS.len() {
        return Err(Error::InvalidConfig(format!(
            "synthetic class_count must be in 1..={}",
            SYNTHETIC_PATTERNS.len()
        )));
    }
    if per_class == 0 || channels == 0 {
        return Err(Error::InvalidConfig("synthetic counts must be positive".into()));
    }
    if size < 6 {
        return Err(Error::InvalidConfig("synthetic image_size must be at least 6".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidConfig("synthetic noise must be finite and >= 0".into()));
    }
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut rng = rng::stream(seed, &[tag::SYNTH]);
    let mut samples = Vec::with_capacity(class_count * per_class);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for _ in 0..per_class {
        for class in 0..class_count {
            let dy = rng.random_range(-1i64..=1);
            let dx = rng.random_range(-1i64..=1);
            let amp = rng.random_range(0.6..=1.0);
            let plane = render_pattern(class, size, dy, dx);
            let mut data = Vec::with_capacity(channels * size * size);
            for _ in 0..channels {
                for &on in &plane {
                    let mut v = if on { amp } else { 0.0 };
                    if noise > 0.0 {
                        v += normal.sample(&mut rng);
                    }
                    data.push(v as f32 as f64);
                }
            }
            samples.push(Tensor::from_parts(vec![channels, size, size], data));
            labels.push(class);
        }
    }
    let n = samples.len();
    let names = SYNTHETIC_PATTERNS[..class_count].iter().map(|s| s.to_string()).collect();
    let mut ds = Dataset::new(vec![channels, size, size], samples, labels, vec![Split::Train; n], names)?;
    ds.assign_splits(seed);
    Ok(ds)
}

fn render_pattern(class: usize, size: usize, dy: i64, dx: i64) -> Vec<bool> {
    let n = size as i64;
    let c = n / 2;
    let (cy, cx) = (c + dy, c + dx);
    let mut plane = vec![false; size * size];
    for y in 0..n {
        for x in 0..n {
            let (ry, rx) = ((y - cy) as f64, (x - cx) as f64);
            let dist = (ry * ry + rx * rx).sqrt();
            let on = match class {
                0 => (y - cy).abs() <= 1,
                1 => (x - cx).abs() <= 1,
                2 => dist <= (n / 4) as f64 + 0.5,
                3 => (dist - (n / 3) as f64).abs() <= 0.75,
                4 => ((y - cy).abs() == 0 || (x - cx).abs() == 0) && (y - cy).abs().max((x - cx).abs()) <= n / 4,
                5 => ((y - x) - (dy - dx)).abs() <= 1,
                6 => ((y + x) - (n - 1 + dy + dx)).abs() <= 1,
                _ => {
                    let q = n / 4;
                    let near = |v: i64| v < q || v >= n - q;
                    near(y) && near(x)
                }
            };
            plane[(y * n + x) as usize] = on;
        }
    }
    plane
}
