//! Graph layers expressed on the autodiff tape.
//!
//! Node features are `M × F` (`M × T × C` for the spatio-temporal blocks);
//! biases broadcast over the leading axes.

use mtsg_tensor::{Graph, Tensor, Var};

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn affine(g: &mut Graph<'_>, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
    let y = g.matmul(x, weight)?;
    Ok(match bias {
        Some(b) => g.add(y, b)?,
        None => y,
    })
}

/// `Σ_k T_k(op)·X·Θ_k` with the Chebyshev recurrence on the rescaled
/// Laplacian `op`.
pub fn cheb_conv(
    g: &mut Graph<'_>,
    x: Var,
    op: Var,
    thetas: &[Var],
    bias: Option<Var>,
) -> Result<Var> {
    let (first, rest) = thetas
        .split_first()
        .ok_or_else(|| Error::Config("Chebyshev order must be at least 1".into()))?;
    let mut acc = g.matmul(x, *first)?;
    let mut prev = x;
    let mut cur = x;
    for (k, theta) in rest.iter().enumerate() {
        let next = if k == 0 {
            g.matmul(op, x)?
        } else {
            let lx = g.matmul(op, cur)?;
            let two = g.scale(lx, 2.0)?;
            g.sub(two, prev)?
        };
        prev = cur;
        cur = next;
        let term = g.matmul(cur, *theta)?;
        acc = g.add(acc, term)?;
    }
    Ok(match bias {
        Some(b) => g.add(acc, b)?,
        None => acc,
    })
}

/// `P·X·W` with a precomputed propagation matrix `P`.
pub fn gcn_conv(
    g: &mut Graph<'_>,
    x: Var,
    prop: Var,
    weight: Var,
    bias: Option<Var>,
) -> Result<Var> {
    let px = g.matmul(prop, x)?;
    affine(g, px, weight, bias)
}

#[derive(Debug, Clone, Copy)]
pub struct Attended {
    pub out: Var,
    /// Row-stochastic attention coefficients, `M × M`.
    pub alpha: Var,
}

/// Single-head attention over the positive entries of `support`, with
/// logits `LeakyReLU(a_srcᵀWh_i + a_dstᵀWh_j [+ edge_ij])` and coefficients
/// proportional to `support_ij·exp(logit_ij)`. `att` is `2F_out × 1`.
pub fn gat_conv(
    g: &mut Graph<'_>,
    x: Var,
    support: Var,
    weight: Var,
    att: Var,
    edge_logits: Option<Var>,
    bias: Option<Var>,
) -> Result<Attended> {
    let hw = g.matmul(x, weight)?;
    let f_out = g.shape(hw)[1];
    let a_src = g.slice(att, 0, 0, f_out)?;
    let a_dst = g.slice(att, 0, f_out, f_out)?;
    let src = g.matmul(hw, a_src)?;
    let dst = g.matmul(hw, a_dst)?;
    let dst = g.transpose(dst)?;
    let mut logits = g.add(src, dst)?;
    if let Some(e) = edge_logits {
        logits = g.add(logits, e)?;
    }
    let logits = g.leaky_relu(logits, LEAKY_SLOPE)?;
    let alpha = g.weighted_softmax(logits, support)?;
    let agg = g.matmul(alpha, hw)?;
    let out = match bias {
        Some(b) => g.add(agg, b)?,
        None => agg,
    };
    Ok(Attended { out, alpha })
}

/// Scalar attention contribution of every edge vector: `e_ij · (W_e a_e)`,
/// with `edges` `M × M × F_e`, `w_edge` `F_e × D` and `a_edge` `D × 1`.
pub fn edge_logits(g: &mut Graph<'_>, edges: Var, w_edge: Var, a_edge: Var) -> Result<Var> {
    let shape = g.shape(edges).to_vec();
    let (m, fe) = (shape[0], shape[2]);
    let proj = g.matmul(w_edge, a_edge)?;
    let flat = g.reshape(edges, &[m * m, fe])?;
    let l = g.matmul(flat, proj)?;
    Ok(g.reshape(l, &[m, m])?)
}

#[derive(Debug, Clone, Copy)]
pub struct MegatEdgeVars {
    /// `3 × 1 × C_g` causal kernel building the global context.
    pub conv: Var,
    pub conv_bias: Var,
    pub query: Var,
    pub key: Var,
    pub value: Var,
    pub pair_query: Var,
    pub pair_key: Var,
    pub pair_value: Var,
}

/// `M × M × F` edge vectors from node features `x` (`M × F`).
///
/// Every node series is convolved and the result averaged over nodes into a
/// context `G` (`(F−2) × C_g`). Nodes cross-attend to `G`, then each pair
/// cross-attends in both directions and the two results are averaged.
pub fn megat_edge_features(g: &mut Graph<'_>, x: Var, v: &MegatEdgeVars) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let (m, f) = (shape[0], shape[1]);
    let series = g.reshape(x, &[m, f, 1])?;
    let conv = g.causal_conv1d(series, v.conv)?;
    let conv = g.add(conv, v.conv_bias)?;
    let ctx = g.mean_axis(conv, 0)?;

    let q = g.matmul(x, v.query)?;
    let d = g.shape(q)[1] as f64;
    let k = g.matmul(ctx, v.key)?;
    let val = g.matmul(ctx, v.value)?;
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / d.sqrt())?;
    let att = g.softmax(scores)?;
    let u = g.matmul(att, val)?;

    let q2 = g.matmul(u, v.pair_query)?;
    let k2 = g.matmul(u, v.pair_key)?;
    let v2 = g.matmul(u, v.pair_value)?;
    let k2t = g.transpose(k2)?;
    let s = g.matmul(q2, k2t)?;
    let s = g.scale(s, 1.0 / d.sqrt())?;
    let st = g.transpose(s)?;

    let fv = g.shape(v2)[1];
    let s3 = g.reshape(s, &[m, m, 1])?;
    let st3 = g.reshape(st, &[m, m, 1])?;
    let v_cols = g.reshape(v2, &[1, m, fv])?;
    let v_rows = g.reshape(v2, &[m, 1, fv])?;
    let forward = g.mul(s3, v_cols)?;
    let backward = g.mul(st3, v_rows)?;
    let sum = g.add(forward, backward)?;
    Ok(g.scale(sum, 0.5)?)
}

#[derive(Debug, Clone, Copy)]
pub struct TemporalConvVars {
    /// `K_t × C_in × 2C`.
    pub weight: Var,
    pub bias: Var,
    /// `1 × C_in × C`, present when `C_in ≠ C`.
    pub residual: Option<Var>,
}

/// Gated causal convolution `(P + H) ⊙ σ(Q)` over the time axis of
/// `h` (`M × T × C_in`). With `pad` the input is left-padded so the length
/// is preserved; otherwise it shrinks by `K_t − 1`.
pub fn temporal_gated_conv(
    g: &mut Graph<'_>,
    h: Var,
    v: &TemporalConvVars,
    pad: bool,
) -> Result<Var> {
    let shape = g.shape(h).to_vec();
    let (m, t, cin) = (shape[0], shape[1], shape[2]);
    let wshape = g.shape(v.weight).to_vec();
    let (k, c2) = (wshape[0], wshape[2]);
    let c = c2 / 2;
    let (input, residual_src) = if pad && k > 1 {
        let flat = g.reshape(h, &[m, t * cin])?;
        let zeros = g.constant(Tensor::zeros(&[m, (k - 1) * cin]));
        let padded = g.concat(&[zeros, flat])?;
        (g.reshape(padded, &[m, t + k - 1, cin])?, h)
    } else {
        if t < k {
            return Err(Error::SeriesTooShort {
                length: t,
                required: k,
            });
        }
        (h, g.slice(h, 1, k - 1, t - k + 1)?)
    };
    let conv = g.causal_conv1d(input, v.weight)?;
    let conv = g.add(conv, v.bias)?;
    let p = g.slice(conv, 2, 0, c)?;
    let q = g.slice(conv, 2, c, c)?;
    let residual = match v.residual {
        Some(w) => g.causal_conv1d(residual_src, w)?,
        None => residual_src,
    };
    let lin = g.add(p, residual)?;
    let gate = g.sigmoid(q)?;
    Ok(g.mul(lin, gate)?)
}

/// Graph convolution applied independently at every time step, then ReLU.
pub fn spatial_conv(g: &mut Graph<'_>, h: Var, prop: Var, weight: Var, bias: Var) -> Result<Var> {
    let shape = g.shape(h).to_vec();
    let (m, t, c) = (shape[0], shape[1], shape[2]);
    let flat = g.reshape(h, &[m, t * c])?;
    let mixed = g.matmul(prop, flat)?;
    let rows = g.reshape(mixed, &[m * t, c])?;
    let y = affine(g, rows, weight, Some(bias))?;
    let c_out = g.shape(y)[1];
    let y = g.reshape(y, &[m, t, c_out])?;
    Ok(g.relu(y)?)
}

#[derive(Debug, Clone, Copy)]
pub struct StBlockVars {
    pub head: TemporalConvVars,
    pub spatial_weight: Var,
    pub spatial_bias: Var,
    pub tail: TemporalConvVars,
}

pub fn stgcn_block(
    g: &mut Graph<'_>,
    h: Var,
    prop: Var,
    v: &StBlockVars,
    pad: bool,
) -> Result<Var> {
    let a = temporal_gated_conv(g, h, &v.head, pad)?;
    let b = spatial_conv(g, a, prop, v.spatial_weight, v.spatial_bias)?;
    temporal_gated_conv(g, b, &v.tail, pad)
}

/// Readout MLP: hidden layer of width `C` with ReLU, then `C` logits.
pub fn mlp_head(g: &mut Graph<'_>, pooled: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let h = affine(g, pooled, w1, Some(b1))?;
    let h = g.relu(h)?;
    affine(g, h, w2, Some(b2))
}
