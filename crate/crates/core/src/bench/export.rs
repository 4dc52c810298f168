//! CSV and PGM exports for external plotting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mtsg_tensor::Tensor;

use crate::edges::{ael_weights, build_adjacency, EdgeKind};
use crate::error::{Error, Result};
use crate::features::{extract_features, NodeKind};
use crate::models::Model;
use crate::pipeline::{build_sample, FeatureConfig};
use crate::ts_io::{Dataset, MultivariateSeries};

/// Edge weights of one sample. AEL weights come from the learned projection
/// of a trained checkpoint.
pub fn edge_weights(
    dataset: &Dataset,
    sample: &MultivariateSeries,
    edge_kind: EdgeKind,
    node_kind: NodeKind,
    checkpoint: Option<&Model>,
    cfg: &FeatureConfig,
) -> Result<Tensor> {
    if edge_kind != EdgeKind::Ael {
        let input = if cfg.normalize {
            crate::ts_io::znormalize(sample)
        } else {
            sample.clone()
        };
        return Ok(build_adjacency(&input, edge_kind, cfg.mi_bins)?.weights);
    }
    let model = checkpoint.ok_or(Error::CheckpointRequired)?;
    let w = model.ael_weight_id().ok_or(Error::CheckpointRequired)?;
    let g = build_sample(
        sample,
        node_kind,
        EdgeKind::Cg,
        dataset.meta.sampling_frequency,
        cfg,
    )?;
    if g.nodes.shape() != [model.spec.num_nodes, model.spec.feature_dim] {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint expects {}x{} node features, sample has {:?}",
            model.spec.num_nodes,
            model.spec.feature_dim,
            g.nodes.shape()
        )));
    }
    ael_weights(&g.nodes, model.params.get(w))
}

pub fn zero_diagonal(w: &mut Tensor) {
    for i in 0..w.rows() {
        w.set(i, i, 0.0);
    }
}

pub fn matrix_csv(w: &Tensor) -> String {
    let mut s = String::new();
    for i in 0..w.rows() {
        let row: Vec<String> = w.row(i).iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Binary greyscale image mapping `[0, max]` linearly onto `[0, 255]`.
pub fn matrix_pgm(w: &Tensor) -> Vec<u8> {
    let (rows, cols) = (w.rows(), w.cols());
    let max = w.data().iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(w.data().iter().map(|&v| {
        if max > 0.0 {
            (v.max(0.0) / max * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

/// Writes `<prefix>.csv` and `<prefix>.pgm` and returns the exported matrix.
#[allow(clippy::too_many_arguments)]
pub fn export_edge_viz(
    dataset: &Dataset,
    sample_index: usize,
    edge_kind: EdgeKind,
    node_kind: NodeKind,
    zero_diag: bool,
    checkpoint: Option<&Model>,
    cfg: &FeatureConfig,
    prefix: &Path,
) -> Result<Tensor> {
    let sample = dataset.test.get(sample_index).ok_or_else(|| {
        Error::Config(format!(
            "sample {sample_index} out of range ({} test samples)",
            dataset.test.len()
        ))
    })?;
    let mut w = edge_weights(dataset, sample, edge_kind, node_kind, checkpoint, cfg)?;
    if zero_diag {
        zero_diagonal(&mut w);
    }
    let csv = with_extension(prefix, "csv");
    std::fs::write(&csv, matrix_csv(&w)).map_err(|e| Error::io(&csv, e))?;
    let pgm = with_extension(prefix, "pgm");
    std::fs::write(&pgm, matrix_pgm(&w)).map_err(|e| Error::io(&pgm, e))?;
    Ok(w)
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Long-format node features of a split:
/// `sample_id,label,node_id,feature_index,value`.
pub fn features_csv(
    dataset: &Dataset,
    split: &[MultivariateSeries],
    kind: NodeKind,
    cfg: &FeatureConfig,
) -> Result<String> {
    let mut s = String::from("sample_id,label,node_id,feature_index,value\n");
    for (i, series) in split.iter().enumerate() {
        let input = if kind == NodeKind::Raw && cfg.normalize {
            crate::ts_io::znormalize(series)
        } else {
            series.clone()
        };
        let f = extract_features(&input, kind, dataset.meta.sampling_frequency, &cfg.bands)?;
        let label = &dataset.meta.labels[series.label];
        for m in 0..f.values.rows() {
            for (k, v) in f.values.row(m).iter().enumerate() {
                let _ = writeln!(s, "{i},{label},{m},{k},{v}");
            }
        }
    }
    Ok(s)
}
