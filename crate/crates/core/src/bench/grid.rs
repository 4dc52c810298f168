use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::BenchConfig;
use crate::edges::EdgeKind;
use crate::error::{Error, Result};
use crate::features::NodeKind;
use crate::models::Architecture;
use crate::training::{best_of_seeds, seed_spread, train_run, RunConfig, RunResult};
use crate::ts_io::Dataset;

/// One executed (or failed) run as stored in the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub config: RunConfig,
    pub result: Option<RunResult>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.result.is_some()
    }
}

/// Key of one table cell before seed aggregation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub dataset: String,
    pub node_kind: NodeKind,
    pub edge_kind: EdgeKind,
    pub architecture: Architecture,
}

impl CellKey {
    fn of(c: &RunConfig) -> Self {
        Self {
            dataset: c.dataset.clone(),
            node_kind: c.node_kind,
            edge_kind: c.edge_kind,
            architecture: c.architecture,
        }
    }
}

/// Best-of-seeds outcome of one (dataset, node, edge, architecture) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(flatten)]
    pub key: CellKey,
    pub best_accuracy: f64,
    pub best_seed: u64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub runs: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GridOutcome {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<CellSummary>,
    /// Cells left out because the dataset has no sampling frequency.
    pub skipped: Vec<CellKey>,
    /// Runs reloaded from the log instead of executed.
    pub reused: usize,
}

pub fn record_path(run_dir: &Path, id: &str) -> PathBuf {
    run_dir.join(format!("{id}.json"))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_record(path: &Path) -> Option<RunRecord> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Every run record in `run_dir`, sorted by id.
pub fn load_records(run_dir: &Path) -> Result<Vec<RunRecord>> {
    let entries = std::fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(run_dir, e))?.path();
        let is_record = path.extension().is_some_and(|e| e == "json")
            && path.file_stem().is_some_and(|s| s.len() == 64);
        if is_record {
            match read_record(&path) {
                Some(r) => out.push(r),
                None => tracing::warn!(path = %path.display(), "skipping unreadable run record"),
            }
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Groups successful runs by cell and applies best-of-seeds.
pub fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<CellKey, (Vec<RunResult>, usize)> = BTreeMap::new();
    for r in records {
        let e = cells.entry(CellKey::of(&r.config)).or_default();
        match &r.result {
            Some(res) => e.0.push(res.clone()),
            None => e.1 += 1,
        }
    }
    cells
        .into_iter()
        .filter_map(|(key, (results, failed))| {
            let best = best_of_seeds(&results)?;
            let (mean, std) = seed_spread(&results);
            Some(CellSummary {
                key,
                best_accuracy: best.test_accuracy,
                best_seed: best.config.seed,
                mean_accuracy: mean,
                std_accuracy: std,
                runs: results.len(),
                failed,
            })
        })
        .collect()
}

fn execute(config: &RunConfig, dataset: &Dataset) -> RunRecord {
    let id = config.run_id();
    match train_run(config, dataset) {
        Ok(result) => {
            tracing::info!(
                run = %&id[..12],
                dataset = %config.dataset,
                node = %config.node_kind,
                edge = %config.edge_kind,
                arch = %config.architecture,
                seed = config.seed,
                acc = result.test_accuracy,
                "run finished"
            );
            RunRecord {
                id,
                config: config.clone(),
                result: Some(result),
                error: None,
            }
        }
        Err(e) => {
            tracing::warn!(run = %&id[..12], error = %e, "run failed");
            RunRecord {
                id,
                config: config.clone(),
                result: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Runs every grid combination, reusing logged runs when `resume` is set.
/// Individual run failures are recorded, not returned.
pub fn run_grid(cfg: &BenchConfig, resume: bool) -> Result<GridOutcome> {
    let grid = &cfg.grid;
    let mut datasets = BTreeMap::new();
    for name in &grid.datasets {
        datasets.insert(name.clone(), cfg.load(name)?);
    }
    std::fs::create_dir_all(&cfg.run_dir).map_err(|e| Error::io(&cfg.run_dir, e))?;

    let mut outcome = GridOutcome::default();
    let mut configs = Vec::new();
    for name in &grid.datasets {
        let has_fs = datasets[name].meta.sampling_frequency.is_some();
        for &node_kind in &grid.node_kinds {
            for &edge_kind in &grid.edge_kinds {
                for &architecture in &grid.architectures {
                    if node_kind.needs_sampling_frequency() && !has_fs {
                        tracing::info!(dataset = %name, node = %node_kind, "no sampling frequency; skipping");
                        outcome.skipped.push(CellKey {
                            dataset: name.clone(),
                            node_kind,
                            edge_kind,
                            architecture,
                        });
                        continue;
                    }
                    for &seed in &grid.seeds {
                        configs.push(RunConfig {
                            dataset: name.clone(),
                            node_kind,
                            edge_kind,
                            architecture,
                            seed,
                            ..cfg.training.clone()
                        });
                    }
                }
            }
        }
    }

    let mut pending = Vec::new();
    let mut slots: Vec<Option<RunRecord>> = Vec::with_capacity(configs.len());
    for (i, c) in configs.iter().enumerate() {
        let reused = if resume {
            read_record(&record_path(&cfg.run_dir, &c.run_id())).filter(|r| r.config == *c)
        } else {
            None
        };
        if reused.is_none() {
            pending.push(i);
        } else {
            outcome.reused += 1;
        }
        slots.push(reused);
    }
    tracing::info!(
        total = configs.len(),
        pending = pending.len(),
        "grid scheduled"
    );

    let workers = cfg
        .workers
        .unwrap_or_else(rayon::current_num_threads)
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let run_dir = cfg.run_dir.clone();
    let fresh: Vec<(usize, Result<RunRecord>)> = pool.install(|| {
        pending
            .par_iter()
            .map(|&i| {
                let c = &configs[i];
                let record = execute(c, &datasets[&c.dataset]);
                let written = serde_json::to_vec_pretty(&record)
                    .map_err(Error::from)
                    .and_then(|bytes| write_atomic(&record_path(&run_dir, &record.id), &bytes))
                    .map(|()| record);
                (i, written)
            })
            .collect()
    });
    for (i, r) in fresh {
        slots[i] = Some(r?);
    }

    outcome.records = slots
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect();
    outcome.summaries = summarize(&outcome.records);
    let summary = serde_json::to_vec_pretty(&outcome.summaries)?;
    write_atomic(&cfg.run_dir.join("summary.json"), &summary)?;
    Ok(outcome)
}
