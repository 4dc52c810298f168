//! The five benchmarked classifiers and their shared readout.

mod checkpoint;
pub mod layers;
pub mod spectral;

use std::fmt;
use std::str::FromStr;

use mtsg_tensor::init::{glorot_bound, kaiming_uniform};
use mtsg_tensor::rng::{substream, SeededRng};
use mtsg_tensor::{BoundParams, Graph, ParamId, ParamStore, Tensor, Var};
use rand::RngExt;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::edges::{ael_forward, EdgeKind};
use crate::error::{Error, Result};
use crate::pipeline::GraphSample;
use layers::{MegatEdgeVars, StBlockVars, TemporalConvVars};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    ChebNet,
    #[serde(rename = "GCN")]
    Gcn,
    #[serde(rename = "GAT")]
    Gat,
    #[serde(rename = "STGCN")]
    Stgcn,
    #[serde(rename = "MEGAT")]
    Megat,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::ChebNet,
        Architecture::Gcn,
        Architecture::Gat,
        Architecture::Stgcn,
        Architecture::Megat,
    ];
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::ChebNet => "ChebNet",
            Architecture::Gcn => "GCN",
            Architecture::Gat => "GAT",
            Architecture::Stgcn => "STGCN",
            Architecture::Megat => "MEGAT",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chebnet" | "cheb" => Ok(Architecture::ChebNet),
            "gcn" => Ok(Architecture::Gcn),
            "gat" => Ok(Architecture::Gat),
            "stgcn" => Ok(Architecture::Stgcn),
            "megat" => Ok(Architecture::Megat),
            _ => Err(Error::Config(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub layers: usize,
    pub hidden: usize,
    pub cheb_k: usize,
    pub temporal_kernel: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub num_nodes: usize,
    /// Adjacency is learned from node features in every forward pass.
    pub learned_edges: bool,
}

impl ModelSpec {
    pub fn new(
        architecture: Architecture,
        num_nodes: usize,
        feature_dim: usize,
        num_classes: usize,
    ) -> Self {
        Self {
            architecture,
            layers: 3,
            hidden: 128,
            cheb_k: 3,
            temporal_kernel: 3,
            num_classes,
            feature_dim,
            num_nodes,
            learned_edges: false,
        }
    }

    pub fn for_edges(mut self, kind: EdgeKind) -> Self {
        self.learned_edges = kind == EdgeKind::Ael;
        self
    }

    /// Spatio-temporal blocks switch to length-preserving causal padding
    /// when the series is too short for valid convolutions.
    pub fn stgcn_padded(&self) -> bool {
        self.feature_dim <= 2 * (self.temporal_kernel - 1) * self.layers
    }

    /// Width of the edge-feature attention space.
    pub fn megat_dim(&self) -> usize {
        self.feature_dim.min(self.hidden)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.layers == 0 || self.hidden == 0 {
            return bad("layers and hidden width must be positive");
        }
        if self.num_classes < 2 {
            return bad("need at least two classes");
        }
        if self.num_nodes == 0 || self.feature_dim == 0 {
            return bad("empty node feature matrix");
        }
        if self.cheb_k == 0 {
            return bad("Chebyshev order must be at least 1");
        }
        if self.temporal_kernel == 0 {
            return bad("temporal kernel must be at least 1");
        }
        if self.architecture == Architecture::Megat && self.feature_dim < 3 {
            return Err(Error::SeriesTooShort {
                length: self.feature_dim,
                required: 3,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Cheb {
        thetas: Vec<ParamId>,
        bias: ParamId,
    },
    Gcn {
        weight: ParamId,
        bias: ParamId,
    },
    Gat {
        weight: ParamId,
        att: ParamId,
        bias: ParamId,
        edge: Option<(ParamId, ParamId)>,
    },
    St(StBlockIds),
}

#[derive(Debug, Clone, PartialEq)]
struct TemporalIds {
    weight: ParamId,
    bias: ParamId,
    residual: Option<ParamId>,
}

#[derive(Debug, Clone, PartialEq)]
struct StBlockIds {
    head: TemporalIds,
    spatial_weight: ParamId,
    spatial_bias: ParamId,
    tail: TemporalIds,
}

#[derive(Debug, Clone, PartialEq)]
struct MegatIds {
    conv: ParamId,
    conv_bias: ParamId,
    query: ParamId,
    key: ParamId,
    value: ParamId,
    pair_query: ParamId,
    pair_key: ParamId,
    pair_value: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct HeadIds {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// A classifier: spec, trainable parameters and their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamStore,
    layers: Vec<Layer>,
    ael: Option<ParamId>,
    megat: Option<MegatIds>,
    head: HeadIds,
}

fn uniform(shape: &[usize], bound: f64, rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive shape")
}

fn glorot(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    // Leading kernel dimensions multiply both fans, as for convolutions.
    let nd = shape.len();
    let receptive: usize = shape[..nd - 2].iter().product();
    let bound = glorot_bound(receptive * shape[nd - 2], receptive * shape[nd - 1]);
    uniform(shape, bound, rng)
}

struct Builder {
    store: ParamStore,
    seed: u64,
}

impl Builder {
    fn kaiming(&mut self, tag: &str, rows: usize, cols: usize) -> ParamId {
        let t = kaiming_uniform(rows, cols, &mut substream(self.seed, tag));
        self.store.add(tag, t)
    }

    fn glorot(&mut self, tag: &str, shape: &[usize]) -> ParamId {
        let t = glorot(shape, &mut substream(self.seed, tag));
        self.store.add(tag, t)
    }

    fn zeros(&mut self, tag: &str, shape: &[usize]) -> ParamId {
        self.store.add(tag, Tensor::zeros(shape))
    }

    fn temporal(&mut self, tag: &str, k: usize, cin: usize, c: usize) -> TemporalIds {
        TemporalIds {
            weight: self.glorot(&format!("{tag}.weight"), &[k, cin, 2 * c]),
            bias: self.zeros(&format!("{tag}.bias"), &[2 * c]),
            residual: (cin != c).then(|| self.glorot(&format!("{tag}.residual"), &[1, cin, c])),
        }
    }
}

impl Model {
    /// Fresh model whose parameters are drawn from per-tensor sub-streams of
    /// `seed`, so GAT and MEGAT share every common parameter.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut b = Builder {
            store: ParamStore::new(),
            seed,
        };
        let (f, h) = (spec.feature_dim, spec.hidden);
        let ael = spec.learned_edges.then(|| b.glorot("ael.weight", &[f, 1]));
        let megat = (spec.architecture == Architecture::Megat).then(|| {
            let d = spec.megat_dim();
            MegatIds {
                conv: b.glorot("megat.context", &[3, 1, d]),
                conv_bias: b.zeros("megat.context_bias", &[d]),
                query: b.glorot("megat.query", &[f, d]),
                key: b.glorot("megat.key", &[d, d]),
                value: b.glorot("megat.value", &[d, d]),
                pair_query: b.glorot("megat.pair_query", &[d, d]),
                pair_key: b.glorot("megat.pair_key", &[d, d]),
                pair_value: b.glorot("megat.pair_value", &[d, f]),
            }
        });
        let mut layers = Vec::with_capacity(spec.layers);
        for l in 0..spec.layers {
            let fin = if l == 0 { f } else { h };
            let tag = format!("gnn{l}");
            let layer = match spec.architecture {
                Architecture::ChebNet => Layer::Cheb {
                    thetas: (0..spec.cheb_k)
                        .map(|k| b.kaiming(&format!("{tag}.theta{k}"), fin, h))
                        .collect(),
                    bias: b.zeros(&format!("{tag}.bias"), &[h]),
                },
                Architecture::Gcn => Layer::Gcn {
                    weight: b.kaiming(&format!("{tag}.weight"), fin, h),
                    bias: b.zeros(&format!("{tag}.bias"), &[h]),
                },
                Architecture::Gat | Architecture::Megat => Layer::Gat {
                    weight: b.kaiming(&format!("{tag}.weight"), fin, h),
                    att: b.glorot(&format!("{tag}.att"), &[2 * h, 1]),
                    bias: b.zeros(&format!("{tag}.bias"), &[h]),
                    edge: (spec.architecture == Architecture::Megat).then(|| {
                        (
                            b.glorot(&format!("{tag}.edge_weight"), &[f, h]),
                            b.glorot(&format!("{tag}.edge_att"), &[h, 1]),
                        )
                    }),
                },
                Architecture::Stgcn => {
                    let cin = if l == 0 { 1 } else { h };
                    let k = spec.temporal_kernel;
                    Layer::St(StBlockIds {
                        head: b.temporal(&format!("{tag}.tconv0"), k, cin, h),
                        spatial_weight: b.kaiming(&format!("{tag}.sconv.weight"), h, h),
                        spatial_bias: b.zeros(&format!("{tag}.sconv.bias"), &[h]),
                        tail: b.temporal(&format!("{tag}.tconv1"), k, h, h),
                    })
                }
            };
            layers.push(layer);
        }
        let c = spec.num_classes;
        let head = HeadIds {
            w1: b.glorot("head.fc1.weight", &[h, c]),
            b1: b.zeros("head.fc1.bias", &[c]),
            w2: b.glorot("head.fc2.weight", &[c, c]),
            b2: b.zeros("head.fc2.bias", &[c]),
        };
        Ok(Model {
            spec,
            params: b.store,
            layers,
            ael,
            megat,
            head,
        })
    }

    /// Id of the `W_e` matrix of every MEGAT layer.
    pub fn edge_weight_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Gat {
                    edge: Some((w, _)), ..
                } => Some(*w),
                _ => None,
            })
            .collect()
    }

    pub fn ael_weight_id(&self) -> Option<ParamId> {
        self.ael
    }

    /// Final linear layer of the classifier head.
    pub fn output_layer_ids(&self) -> (ParamId, ParamId) {
        (self.head.w2, self.head.b2)
    }

    /// Precomputes the static graph operator the architecture consumes.
    pub fn prepare(&self, sample: &GraphSample) -> Result<PreparedSample> {
        let shape = sample.nodes.shape();
        if shape != [self.spec.num_nodes, self.spec.feature_dim] {
            return Err(Error::DimensionMismatch(format!(
                "model expects {}x{} node features, sample has {shape:?}",
                self.spec.num_nodes, self.spec.feature_dim
            )));
        }
        if sample.adjacency.weights.shape() != [self.spec.num_nodes, self.spec.num_nodes] {
            return Err(Error::DimensionMismatch(format!(
                "adjacency {:?} for {} nodes",
                sample.adjacency.weights.shape(),
                self.spec.num_nodes
            )));
        }
        if sample.label >= self.spec.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "label {} outside {} classes",
                sample.label, self.spec.num_classes
            )));
        }
        let support = if self.spec.learned_edges {
            None
        } else {
            let a = &sample.adjacency.weights;
            Some(match self.spec.architecture {
                Architecture::ChebNet => spectral::chebyshev_operator(a),
                Architecture::Gcn | Architecture::Stgcn => spectral::gcn_propagation(a),
                Architecture::Gat | Architecture::Megat => spectral::attention_support(a)?,
            })
        };
        Ok(PreparedSample {
            nodes: sample.nodes.clone(),
            support,
            label: sample.label,
        })
    }

    /// Graph operator for this pass: the precomputed one, or one derived
    /// from the learned adjacency.
    fn support(
        &self,
        g: &mut Graph<'_>,
        bound: &BoundParams,
        x: Var,
        fixed: Option<Var>,
    ) -> Result<Var> {
        if let Some(s) = fixed {
            return Ok(s);
        }
        let w = self
            .ael
            .ok_or_else(|| Error::Config("sample has no static graph operator".into()))?;
        let a = ael_forward(g, x, bound.var(w))?;
        match self.spec.architecture {
            Architecture::ChebNet => spectral::chebyshev_operator_var(g, a),
            Architecture::Gcn | Architecture::Stgcn => spectral::gcn_propagation_var(g, a),
            Architecture::Gat | Architecture::Megat => Ok(a),
        }
    }

    /// Class logits (`1 × C`) for one sample, plus the attention matrices of
    /// attention layers.
    pub fn forward<'a>(
        &self,
        g: &mut Graph<'a>,
        bound: &BoundParams,
        sample: &'a PreparedSample,
    ) -> Result<Forward> {
        let p = |id: ParamId| bound.var(id);
        let x = g.constant_ref(&sample.nodes);
        let fixed = sample.support.as_ref().map(|t| g.constant_ref(t));
        let support = self.support(g, bound, x, fixed)?;
        let edges = match &self.megat {
            Some(m) => Some(layers::megat_edge_features(
                g,
                x,
                &MegatEdgeVars {
                    conv: p(m.conv),
                    conv_bias: p(m.conv_bias),
                    query: p(m.query),
                    key: p(m.key),
                    value: p(m.value),
                    pair_query: p(m.pair_query),
                    pair_key: p(m.pair_key),
                    pair_value: p(m.pair_value),
                },
            )?),
            None => None,
        };

        let (m, f) = (self.spec.num_nodes, self.spec.feature_dim);
        let mut h = if self.spec.architecture == Architecture::Stgcn {
            g.reshape(x, &[m, f, 1])?
        } else {
            x
        };
        let pad = self.spec.stgcn_padded();
        let mut attention = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            h = match layer {
                Layer::Cheb { thetas, bias } => {
                    let th: Vec<Var> = thetas.iter().map(|&t| p(t)).collect();
                    layers::cheb_conv(g, h, support, &th, Some(p(*bias)))?
                }
                Layer::Gcn { weight, bias } => {
                    layers::gcn_conv(g, h, support, p(*weight), Some(p(*bias)))?
                }
                Layer::Gat {
                    weight,
                    att,
                    bias,
                    edge,
                } => {
                    let el = match (edge, edges) {
                        (Some((we, ae)), Some(e)) => {
                            Some(layers::edge_logits(g, e, p(*we), p(*ae))?)
                        }
                        _ => None,
                    };
                    let out =
                        layers::gat_conv(g, h, support, p(*weight), p(*att), el, Some(p(*bias)))?;
                    attention.push(out.alpha);
                    out.out
                }
                Layer::St(ids) => {
                    let t = |ti: &TemporalIds| TemporalConvVars {
                        weight: p(ti.weight),
                        bias: p(ti.bias),
                        residual: ti.residual.map(p),
                    };
                    let vars = StBlockVars {
                        head: t(&ids.head),
                        spatial_weight: p(ids.spatial_weight),
                        spatial_bias: p(ids.spatial_bias),
                        tail: t(&ids.tail),
                    };
                    let shape = g.shape(h).to_vec();
                    if !pad && shape[1] <= 2 * (self.spec.temporal_kernel - 1) {
                        return Err(Error::SeriesTooShort {
                            length: shape[1],
                            required: 2 * (self.spec.temporal_kernel - 1) + 1,
                        });
                    }
                    layers::stgcn_block(g, h, support, &vars, pad)?
                }
            };
            if l < last {
                h = g.relu(h)?;
            }
        }

        // Mean readout over nodes, and over time for spatio-temporal output.
        let hidden = self.spec.hidden;
        let pooled = if g.shape(h).len() == 3 {
            let t = g.shape(h)[1];
            let flat = g.reshape(h, &[m * t, hidden])?;
            g.mean_axis(flat, 0)?
        } else {
            g.mean_axis(h, 0)?
        };
        let pooled = g.reshape(pooled, &[1, hidden])?;
        let hd = &self.head;
        let logits = layers::mlp_head(g, pooled, p(hd.w1), p(hd.b1), p(hd.w2), p(hd.b2))?;
        Ok(Forward {
            logits,
            attention,
            edges,
        })
    }

    /// Logits of one sample outside of training.
    pub fn classify(&self, sample: &PreparedSample) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let bound = g.bind(&self.params);
        let out = self.forward(&mut g, &bound, sample)?;
        Ok(g.value(out.logits).data().to_vec())
    }

    pub fn predict(&self, sample: &PreparedSample) -> Result<usize> {
        Ok(argmax(&self.classify(sample)?))
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// A sample with its static graph operator resolved for one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub nodes: Tensor,
    /// `None` when the operator is derived from learned edges.
    pub support: Option<Tensor>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    /// Attention coefficients of every GAT/MEGAT layer.
    pub attention: Vec<Var>,
    /// MEGAT edge vectors, `M × M × F`.
    pub edges: Option<Var>,
}
