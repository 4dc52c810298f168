//! UEA `.ts` ingestion, per-channel normalisation and the binary dataset cache.

mod archive;
mod cache;
mod parse;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use archive::{archive_info, sampling_frequency, ArchiveEntry, UEA_ARCHIVE};
pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use parse::{parse_ts_file, parse_ts_str, ParsedTs, TsHeader};

use crate::error::{Error, Result};

/// One labelled sample: `M` channels of `N` time steps each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateSeries {
    pub channels: Vec<Vec<f64>>,
    pub label: usize,
}

impl MultivariateSeries {
    pub fn new(channels: Vec<Vec<f64>>, label: usize) -> Self {
        Self { channels, label }
    }

    pub fn dims(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub dimensions: usize,
    pub length: usize,
    pub num_classes: usize,
    pub sampling_frequency: Option<f64>,
    /// Raw class labels; position is the dense class index.
    pub labels: Vec<String>,
}

impl DatasetMeta {
    pub fn label_index(&self, raw: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub train: Vec<MultivariateSeries>,
    pub test: Vec<MultivariateSeries>,
}

impl Dataset {
    /// First `n` training samples with the test split replaced by the same
    /// subset. Used for smoke runs.
    pub fn train_subset(&self, n: usize) -> Dataset {
        let train: Vec<_> = self.train.iter().take(n).cloned().collect();
        Dataset {
            meta: self.meta.clone(),
            test: train.clone(),
            train,
        }
    }
}

/// `<root>/<name>/<name>_TRAIN.ts` and `_TEST.ts`.
pub fn dataset_paths(root: &Path, name: &str) -> (PathBuf, PathBuf) {
    let dir = root.join(name);
    (
        dir.join(format!("{name}_TRAIN.ts")),
        dir.join(format!("{name}_TEST.ts")),
    )
}

/// Loads both splits and builds the label map from the training file's
/// class declaration.
pub fn load_dataset(
    train_path: &Path,
    test_path: &Path,
    fs_override: Option<f64>,
) -> Result<Dataset> {
    for p in [train_path, test_path] {
        if !p.exists() {
            return Err(Error::DatasetNotFound(p.to_path_buf()));
        }
    }
    let train = parse_ts_file(train_path)?;
    let test = parse_ts_file(test_path)?;
    assemble(train, test, fs_override, train_path)
}

pub(crate) fn assemble(
    train: ParsedTs,
    test: ParsedTs,
    fs_override: Option<f64>,
    train_path: &Path,
) -> Result<Dataset> {
    let (m, n) = (train.dimensions(), train.series_length());
    if (m, n) != (test.dimensions(), test.series_length()) {
        return Err(Error::SplitMismatch(format!(
            "train is {m}x{n}, test is {}x{}",
            test.dimensions(),
            test.series_length()
        )));
    }
    let train_set: BTreeSet<&String> = train.header.class_labels.iter().collect();
    let test_set: BTreeSet<&String> = test.header.class_labels.iter().collect();
    if train_set != test_set {
        return Err(Error::SplitMismatch(format!(
            "class declarations differ: {:?} vs {:?}",
            train.header.class_labels, test.header.class_labels
        )));
    }
    let labels = train.header.class_labels.clone();
    if labels.len() < 2 {
        return Err(Error::MalformedHeader(format!(
            "need at least two classes, found {}",
            labels.len()
        )));
    }
    if let Some(fs) = fs_override {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Config(format!(
                "sampling frequency must be positive, got {fs}"
            )));
        }
    }
    let remap: Vec<usize> = test
        .header
        .class_labels
        .iter()
        .map(|l| labels.iter().position(|x| x == l).expect("same label set"))
        .collect();
    let test_samples = test
        .samples
        .into_iter()
        .map(|s| MultivariateSeries::new(s.channels, remap[s.label]))
        .collect();
    let name = train.header.problem_name.clone().unwrap_or_else(|| {
        train_path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.trim_end_matches("_TRAIN").to_string())
            .unwrap_or_default()
    });
    Ok(Dataset {
        meta: DatasetMeta {
            name,
            dimensions: m,
            length: n,
            num_classes: labels.len(),
            sampling_frequency: fs_override,
            labels,
        },
        train: train.samples,
        test: test_samples,
    })
}

/// Per-channel z-normalisation with the population standard deviation.
/// Channels with σ < 1e-8 are only centred.
pub fn znormalize(series: &MultivariateSeries) -> MultivariateSeries {
    let channels = series
        .channels
        .iter()
        .map(|c| {
            let (mean, sd) = mean_std(c);
            if sd < 1e-8 {
                c.iter().map(|x| x - mean).collect()
            } else {
                c.iter().map(|x| (x - mean) / sd).collect()
            }
        })
        .collect();
    MultivariateSeries::new(channels, series.label)
}

/// Mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
