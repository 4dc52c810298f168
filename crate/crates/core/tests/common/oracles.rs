//! Dense hand-written forward passes for the graph layers.

use std::collections::HashMap;
use std::f64::consts::PI;

use mtsg_core::models::layers::LEAKY_SLOPE;
use mtsg_tensor::Tensor;
use nalgebra::DMatrix;

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `I − D^{−½}AD^{−½}` with zero-degree rows left as identity rows.
pub fn laplacian_oracle(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    let d: Vec<f64> = (0..m).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(m, m, |i, j| {
        let s = |k: usize| if d[k] > 0.0 { d[k].powf(-0.5) } else { 0.0 };
        let eye = if i == j { 1.0 } else { 0.0 };
        eye - s(i) * a[(i, j)] * s(j)
    })
}

pub fn gcn_oracle(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    let looped = (a + a.transpose()) * 0.5 + DMatrix::identity(m, m);
    let d: Vec<f64> = (0..m).map(|i| looped.row(i).sum()).collect();
    DMatrix::from_fn(m, m, |i, j| looped[(i, j)] / (d[i] * d[j]).sqrt())
}

/// Dense single-head attention: logits `leaky(a_src·Wh_i + a_dst·Wh_j + e_ij)`
/// weighted by the support.
pub fn gat_oracle(
    h: &DMatrix<f64>,
    support: &DMatrix<f64>,
    w: &DMatrix<f64>,
    att: &[f64],
    edges: Option<&DMatrix<f64>>,
    bias: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = h.nrows();
    let hw = h * w;
    let f = hw.ncols();
    let score = |i: usize, j: usize| {
        let mut s = 0.0;
        for k in 0..f {
            s += att[k] * hw[(i, k)] + att[f + k] * hw[(j, k)];
        }
        leaky(s + edges.map_or(0.0, |e| e[(i, j)]))
    };
    let mut alpha = DMatrix::zeros(m, m);
    for i in 0..m {
        let total: f64 = (0..m).map(|j| support[(i, j)] * score(i, j).exp()).sum();
        for j in 0..m {
            alpha[(i, j)] = support[(i, j)] * score(i, j).exp() / total;
        }
    }
    let out = &alpha * hw + DMatrix::from_fn(m, f, |_, j| bias[j]);
    (out, alpha)
}

/// Hand evaluation of the edge-feature construction.
#[allow(clippy::too_many_arguments)]
pub fn megat_edges_oracle(
    x: &DMatrix<f64>,
    conv: &Tensor,
    conv_bias: &[f64],
    wq: &DMatrix<f64>,
    wk: &DMatrix<f64>,
    wv: &DMatrix<f64>,
    pq: &DMatrix<f64>,
    pk: &DMatrix<f64>,
    pv: &DMatrix<f64>,
) -> Vec<DMatrix<f64>> {
    let (m, f) = (x.nrows(), x.ncols());
    let d = wq.ncols();
    // conv: [3, 1, d]; context row t averages the kernel response over nodes.
    let ctx = DMatrix::from_fn(f - 2, d, |t, c| {
        let mut s = 0.0;
        for i in 0..m {
            for k in 0..3 {
                s += x[(i, t + k)] * conv.data()[k * d + c];
            }
        }
        s / m as f64 + conv_bias[c]
    });
    let scale = 1.0 / (d as f64).sqrt();
    let scores = x * wq * (&ctx * wk).transpose() * scale;
    let mut att = scores.clone();
    for i in 0..m {
        let mx = scores.row(i).max();
        let total: f64 = scores.row(i).iter().map(|v| (v - mx).exp()).sum();
        for j in 0..scores.ncols() {
            att[(i, j)] = (scores[(i, j)] - mx).exp() / total;
        }
    }
    let u = att * (&ctx * wv);
    let s = &u * pq * (&u * pk).transpose() * scale;
    let v2 = &u * pv;
    (0..m)
        .map(|i| {
            DMatrix::from_fn(m, v2.ncols(), |j, k| {
                0.5 * (s[(i, j)] * v2[(j, k)] + s[(j, i)] * v2[(i, k)])
            })
        })
        .collect()
}

/// Dense gated temporal convolution on `[m][t][c]` nested data.
pub fn temporal_oracle(
    h: &[Vec<Vec<f64>>],
    w: &Tensor,
    b: &[f64],
    res: Option<&Tensor>,
    pad: bool,
) -> Vec<Vec<Vec<f64>>> {
    let (k, cin, c2) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let c = c2 / 2;
    let t = h[0].len();
    let at = |node: &Vec<Vec<f64>>, ti: isize, ch: usize| {
        if ti < 0 {
            0.0
        } else {
            node[ti as usize][ch]
        }
    };
    let (offset, tout) = if pad {
        (-(k as isize - 1), t)
    } else {
        (0, t - k + 1)
    };
    h.iter()
        .map(|node| {
            (0..tout)
                .map(|to| {
                    let start = to as isize + offset;
                    let conv = |o: usize| {
                        let mut s = b[o];
                        for kk in 0..k {
                            for ci in 0..cin {
                                s += at(node, start + kk as isize, ci)
                                    * w.data()[(kk * cin + ci) * c2 + o];
                            }
                        }
                        s
                    };
                    // The residual is the input at the output's last tap.
                    let last = (start + k as isize - 1) as usize;
                    (0..c)
                        .map(|o| {
                            let r = match res {
                                Some(rw) => (0..cin)
                                    .map(|ci| node[last][ci] * rw.data()[ci * c + o])
                                    .sum(),
                                None => node[last][o],
                            };
                            (conv(o) + r) * sigmoid(conv(c + o))
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn nested(t: &Tensor) -> Vec<Vec<Vec<f64>>> {
    let s = t.shape();
    (0..s[0])
        .map(|i| {
            (0..s[1])
                .map(|j| {
                    (0..s[2])
                        .map(|k| t.data()[(i * s[1] + j) * s[2] + k])
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `Σ x[n]·e^{−j2πkn/N}` evaluated term by term.
pub fn direct_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let phase = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                (re + v * phase.cos(), im + v * phase.sin())
            })
        })
        .collect()
}

pub fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// `−∫ p log₂ p` of a zero-mean Gaussian by composite Simpson over ±12σ.
pub fn integrated_entropy_bits(var: f64) -> f64 {
    let sd = var.sqrt();
    let (lo, hi, steps) = (-12.0 * sd, 12.0 * sd, 20_000);
    let h = (hi - lo) / steps as f64;
    let integrand = |x: f64| {
        let p = (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        if p > 0.0 {
            -p * p.log2()
        } else {
            0.0
        }
    };
    let mut s = integrand(lo) + integrand(hi);
    for i in 1..steps {
        s += integrand(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn pcc_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
    let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n).sqrt();
    (cov / (sa * sb)).abs()
}

/// Mutual information from a hashed joint histogram of bin pairs.
pub fn mi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    joint
        .iter()
        .map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).log2())
        .sum()
}
