use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::edges::EdgeKind;
use crate::error::{Error, Result};
use crate::features::NodeKind;
use crate::models::Architecture;
use crate::training::{RunConfig, DEFAULT_SEEDS};
use crate::ts_io::{dataset_paths, load_dataset, sampling_frequency, Dataset};

/// Environment variable overriding the dataset root.
pub const DATA_ROOT_ENV: &str = "MTSG_DATA_ROOT";

/// Which (dataset, node, edge, architecture, seed) combinations to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub datasets: Vec<String>,
    pub node_kinds: Vec<NodeKind>,
    pub edge_kinds: Vec<EdgeKind>,
    pub architectures: Vec<Architecture>,
    pub seeds: Vec<u64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            node_kinds: NodeKind::ALL.to_vec(),
            edge_kinds: EdgeKind::ALL.to_vec(),
            architectures: Architecture::ALL.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
        }
    }
}

/// Benchmark configuration file.
///
/// ```json
/// {
///   "data_root": "/data/Multivariate_ts",
///   "run_dir": "runs",
///   "workers": 8,
///   "fs": { "Epilepsy": 16.0 },
///   "grid": { "datasets": ["Epilepsy"], "node_kinds": ["Raw", "DE"],
///             "edge_kinds": ["CG"], "architectures": ["ChebNet"],
///             "seeds": [42, 152, 310] },
///   "training": { "epochs": 200, "batch_size": 64, "lr0": 0.001,
///                 "features": { "normalize": true } }
/// }
/// ```
///
/// `training` accepts any run setting; its dataset, feature kinds,
/// architecture and seed are replaced per grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub data_root: Option<PathBuf>,
    /// Command-line root; takes precedence over the environment and file.
    #[serde(skip)]
    pub data_root_override: Option<PathBuf>,
    pub run_dir: PathBuf,
    /// Concurrent runs; defaults to the number of cores.
    pub workers: Option<usize>,
    /// Sampling frequencies in Hz, overriding the bundled table.
    pub fs: BTreeMap<String, f64>,
    pub grid: GridSpec,
    pub training: RunConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            data_root: None,
            data_root_override: None,
            run_dir: PathBuf::from("runs"),
            workers: None,
            fs: BTreeMap::new(),
            grid: GridSpec::default(),
            training: RunConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Dataset root from the command line, the environment, the file, then `.`.
    pub fn resolved_data_root(&self) -> PathBuf {
        self.data_root_override
            .clone()
            .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
            .or_else(|| self.data_root.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn sampling_frequency(&self, dataset: &str) -> Option<f64> {
        self.fs
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(dataset))
            .map(|(_, v)| *v)
            .or_else(|| sampling_frequency(dataset))
    }

    pub fn load(&self, dataset: &str) -> Result<Dataset> {
        let (train, test) = dataset_paths(&self.resolved_data_root(), dataset);
        let mut ds = load_dataset(&train, &test, self.sampling_frequency(dataset))?;
        ds.meta.name = dataset.to_string();
        Ok(ds)
    }
}
