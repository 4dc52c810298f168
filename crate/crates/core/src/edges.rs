//! Dense single-value edge weights between channels.

use std::fmt;
use std::str::FromStr;

use mtsg_tensor::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ts_io::{mean_std, MultivariateSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "CG")]
    Cg,
    #[serde(rename = "PCC")]
    Pcc,
    #[serde(rename = "MI")]
    Mi,
    #[serde(rename = "AEL")]
    Ael,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [EdgeKind::Cg, EdgeKind::Pcc, EdgeKind::Mi, EdgeKind::Ael];
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Cg => "CG",
            EdgeKind::Pcc => "PCC",
            EdgeKind::Mi => "MI",
            EdgeKind::Ael => "AEL",
        })
    }
}

impl FromStr for EdgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cg" => Ok(EdgeKind::Cg),
            "pcc" => Ok(EdgeKind::Pcc),
            "mi" => Ok(EdgeKind::Mi),
            "ael" => Ok(EdgeKind::Ael),
            _ => Err(Error::Config(format!("unknown edge kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    /// `M × M`, non-negative.
    pub weights: Tensor,
    pub kind: EdgeKind,
    /// Set only for the AEL placeholder: real weights come from
    /// [`ael_forward`] inside the model graph.
    pub learnable: bool,
}

impl AdjacencyMatrix {
    pub fn num_nodes(&self) -> usize {
        self.weights.rows()
    }
}

pub fn complete_graph(m: usize) -> AdjacencyMatrix {
    AdjacencyMatrix {
        weights: Tensor::ones(&[m, m]),
        kind: EdgeKind::Cg,
        learnable: false,
    }
}

pub fn ael_placeholder(m: usize) -> AdjacencyMatrix {
    AdjacencyMatrix {
        weights: Tensor::identity(m),
        kind: EdgeKind::Ael,
        learnable: true,
    }
}

/// Absolute Pearson correlation between every pair of channels.
pub fn pcc(sample: &MultivariateSeries) -> AdjacencyMatrix {
    let m = sample.dims();
    let stats: Vec<(f64, f64)> = sample.channels.iter().map(|c| mean_std(c)).collect();
    let n = sample.len() as f64;
    let mut w = Tensor::identity(m);
    for i in 0..m {
        for j in i + 1..m {
            let (mi, si) = stats[i];
            let (mj, sj) = stats[j];
            let r = if si < 1e-8 || sj < 1e-8 {
                0.0
            } else {
                let cov = sample.channels[i]
                    .iter()
                    .zip(&sample.channels[j])
                    .map(|(a, b)| (a - mi) * (b - mj))
                    .sum::<f64>()
                    / n;
                (cov / (si * sj)).abs().min(1.0)
            };
            w.set(i, j, r);
            w.set(j, i, r);
        }
    }
    AdjacencyMatrix {
        weights: w,
        kind: EdgeKind::Pcc,
        learnable: false,
    }
}

/// Square-root histogram rule clamped to `[2, 16]`.
pub fn default_mi_bins(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).clamp(2, 16)
}

/// Equal-width bin index of every value over the channel's own range.
pub fn discretize(x: &[f64], bins: usize) -> Vec<usize> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![0; x.len()];
    }
    x.iter()
        .map(|&v| (((v - lo) / span * bins as f64).floor() as usize).min(bins - 1))
        .collect()
}

/// Histogram mutual information in bits between two binned sequences.
pub fn binned_mutual_information(a: &[usize], b: &[usize], bins: usize) -> f64 {
    let n = a.len() as f64;
    let mut joint = vec![0usize; bins * bins];
    let mut pa = vec![0usize; bins];
    let mut pb = vec![0usize; bins];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * bins + y] += 1;
        pa[x] += 1;
        pb[y] += 1;
    }
    let mut mi = 0.0;
    for x in 0..bins {
        for y in 0..bins {
            let c = joint[x * bins + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            let px = pa[x] as f64 / n;
            let py = pb[y] as f64 / n;
            mi += pxy * (pxy / (px * py)).log2();
        }
    }
    mi.max(0.0)
}

pub fn mutual_information(sample: &MultivariateSeries, bins: usize) -> Result<AdjacencyMatrix> {
    if bins < 2 {
        return Err(Error::Config(format!(
            "MI needs at least 2 bins, got {bins}"
        )));
    }
    let m = sample.dims();
    let binned: Vec<Vec<usize>> = sample
        .channels
        .iter()
        .map(|c| discretize(c, bins))
        .collect();
    let mut w = Tensor::zeros(&[m, m]);
    for i in 0..m {
        for j in i..m {
            let v = binned_mutual_information(&binned[i], &binned[j], bins);
            w.set(i, j, v);
            w.set(j, i, v);
        }
    }
    Ok(AdjacencyMatrix {
        weights: w,
        kind: EdgeKind::Mi,
        learnable: false,
    })
}

/// Static adjacency for `kind`; AEL yields the identity placeholder.
pub fn build_adjacency(
    sample: &MultivariateSeries,
    kind: EdgeKind,
    mi_bins: Option<usize>,
) -> Result<AdjacencyMatrix> {
    Ok(match kind {
        EdgeKind::Cg => complete_graph(sample.dims()),
        EdgeKind::Pcc => pcc(sample),
        EdgeKind::Mi => mutual_information(
            sample,
            mi_bins.unwrap_or_else(|| default_mi_bins(sample.len())),
        )?,
        EdgeKind::Ael => ael_placeholder(sample.dims()),
    })
}

/// Learned adjacency: row `i` is the softmax over `n` of
/// `relu(w · |f_i − f_n|)`. `nodes` is `M × F`, `w` has `F` entries.
pub fn ael_forward(g: &mut Graph<'_>, nodes: Var, w: Var) -> Result<Var> {
    let shape = g.shape(nodes).to_vec();
    if shape.len() != 2 || g.shape(w).iter().product::<usize>() != shape[1] {
        return Err(Error::DimensionMismatch(format!(
            "AEL weight {:?} does not match node features {shape:?}",
            g.shape(w)
        )));
    }
    let (m, f) = (shape[0], shape[1]);
    let rows = g.reshape(nodes, &[m, 1, f])?;
    let cols = g.reshape(nodes, &[1, m, f])?;
    let diff = g.sub(rows, cols)?;
    let dist = g.abs(diff)?;
    let w = g.reshape(w, &[f])?;
    let weighted = g.mul(dist, w)?;
    let logits = g.sum_axis(weighted, 2)?;
    let logits = g.reshape(logits, &[m, m])?;
    let logits = g.relu(logits)?;
    Ok(g.softmax(logits)?)
}

/// Evaluates [`ael_forward`] outside of training.
pub fn ael_weights(nodes: &Tensor, w: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant_ref(nodes);
    let wv = g.constant_ref(w);
    let out = ael_forward(&mut g, x, wv)?;
    Ok(g.value(out).clone())
}
