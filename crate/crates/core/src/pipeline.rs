//! Turns dataset samples into graph inputs.

use mtsg_tensor::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edges::{build_adjacency, AdjacencyMatrix, EdgeKind};
use crate::error::{Error, Result};
use crate::features::{extract_features, BandScheme, NodeKind};
use crate::ts_io::{znormalize, Dataset, MultivariateSeries};

/// One graph: `M × F` node features, `M × M` edge weights and a class.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub nodes: Tensor,
    pub adjacency: AdjacencyMatrix,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Per-channel z-normalisation of raw node features and edge inputs.
    pub normalize: bool,
    pub bands: BandScheme,
    /// Histogram bins for MI; `None` uses the square-root rule.
    pub mi_bins: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            normalize: true,
            bands: BandScheme::default(),
            mi_bins: None,
        }
    }
}

pub fn build_sample(
    series: &MultivariateSeries,
    node_kind: NodeKind,
    edge_kind: EdgeKind,
    fs: Option<f64>,
    cfg: &FeatureConfig,
) -> Result<GraphSample> {
    let normalized = if cfg.normalize {
        znormalize(series)
    } else {
        series.clone()
    };
    // Spectral features see the recorded signal; only the raw series is rescaled.
    let source = if node_kind == NodeKind::Raw {
        &normalized
    } else {
        series
    };
    let nodes = extract_features(source, node_kind, fs, &cfg.bands)?.values;
    let adjacency = build_adjacency(&normalized, edge_kind, cfg.mi_bins)?;
    Ok(GraphSample {
        nodes,
        adjacency,
        label: series.label,
    })
}

pub fn build_samples(
    split: &[MultivariateSeries],
    node_kind: NodeKind,
    edge_kind: EdgeKind,
    fs: Option<f64>,
    cfg: &FeatureConfig,
) -> Result<Vec<GraphSample>> {
    split
        .par_iter()
        .map(|s| build_sample(s, node_kind, edge_kind, fs, cfg))
        .collect()
}

/// Graph inputs for both splits of `dataset`.
pub fn build_dataset(
    dataset: &Dataset,
    node_kind: NodeKind,
    edge_kind: EdgeKind,
    cfg: &FeatureConfig,
) -> Result<(Vec<GraphSample>, Vec<GraphSample>)> {
    let fs = dataset.meta.sampling_frequency;
    if node_kind.needs_sampling_frequency() && fs.is_none() {
        return Err(Error::MissingSamplingFrequency(dataset.meta.name.clone()));
    }
    Ok((
        build_samples(&dataset.train, node_kind, edge_kind, fs, cfg)?,
        build_samples(&dataset.test, node_kind, edge_kind, fs, cfg)?,
    ))
}
