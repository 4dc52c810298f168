//! Graph operators derived from a fixed adjacency matrix.

use mtsg_tensor::{Graph, Tensor, Var};

use crate::error::{Error, Result};

pub const POWER_ITERATIONS: usize = 100;
pub const POWER_TOLERANCE: f64 = 1e-6;
/// Upper bound of the normalised Laplacian spectrum, used when the power
/// iteration does not settle.
pub const LAMBDA_FALLBACK: f64 = 2.0;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &Tensor) -> Tensor {
    let t = a.transpose().expect("square matrix");
    let data = a
        .data()
        .iter()
        .zip(t.data())
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn inv_sqrt_degrees(a: &Tensor) -> Vec<f64> {
    let m = a.rows();
    (0..m)
        .map(|i| {
            let d: f64 = a.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// `I − D^{−½} A D^{−½}`; zero-degree nodes get a zero scaling entry.
pub fn normalized_laplacian(a: &Tensor) -> Tensor {
    let m = a.rows();
    let s = inv_sqrt_degrees(a);
    let mut l = Tensor::identity(m);
    for i in 0..m {
        for j in 0..m {
            let v = l.at(i, j) - s[i] * a.at(i, j) * s[j];
            l.set(i, j, v);
        }
    }
    l
}

fn matvec(a: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|i| a.row(i).iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Unit start vector for the power iteration. Entries grow with the rank of
/// each node under an order-free key (diagonal entry, then the sorted rest of
/// its row), so relabelling the nodes permutes the vector the same way and
/// the estimate does not depend on node order. Nodes with equal keys share a
/// value.
fn start_vector(a: &Tensor) -> Vec<f64> {
    let m = a.rows();
    let keys: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut rest: Vec<f64> = (0..m).filter(|&j| j != i).map(|j| a.at(i, j)).collect();
            rest.sort_by(f64::total_cmp);
            std::iter::once(a.at(i, i)).chain(rest).collect()
        })
        .collect();
    let cmp = |x: &Vec<f64>, y: &Vec<f64>| {
        x.iter()
            .zip(y)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| cmp(&keys[x], &keys[y]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rank = vec![0usize; m];
    for w in 1..m {
        let same = cmp(&keys[order[w - 1]], &keys[order[w]]).is_none();
        rank[order[w]] = rank[order[w - 1]] + usize::from(!same);
    }
    let ordered = unit_ramp(&rank);
    // On vertex-transitive graphs every node ties and the vector is constant,
    // which can sit in the kernel; those graphs get the positional ramp.
    let scale = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm(&matvec(a, &ordered)) > 1e-10 * scale {
        ordered
    } else {
        unit_ramp(&(0..m).collect::<Vec<_>>())
    }
}

fn unit_ramp(rank: &[usize]) -> Vec<f64> {
    let m = rank.len() as f64;
    let v: Vec<f64> = rank.iter().map(|&r| 1.0 + (r as f64 + 1.0) / m).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power
/// iteration on the Rayleigh quotient. Returns `None` without convergence.
pub fn power_iteration(a: &Tensor) -> Option<f64> {
    let mut v = start_vector(a);
    let mut lambda = f64::NAN;
    for _ in 0..POWER_ITERATIONS {
        let w = matvec(a, &v);
        let next: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        let nw = norm(&w);
        if nw == 0.0 {
            return Some(0.0);
        }
        if (next - lambda).abs() < POWER_TOLERANCE {
            return Some(next);
        }
        lambda = next;
        v = w.into_iter().map(|x| x / nw).collect();
    }
    None
}

/// Top eigenvalue of a normalised Laplacian, falling back to 2 when the
/// iteration fails or the spectrum is degenerate.
pub fn lambda_max(laplacian: &Tensor) -> f64 {
    match power_iteration(laplacian) {
        Some(l) if l >= 1e-8 => l,
        _ => LAMBDA_FALLBACK,
    }
}

/// `2L/λ − I`.
pub fn rescale_laplacian(laplacian: &Tensor, lambda: f64) -> Tensor {
    let m = laplacian.rows();
    let mut out = laplacian.map(|x| 2.0 * x / lambda);
    for i in 0..m {
        let v = out.at(i, i) - 1.0;
        out.set(i, i, v);
    }
    out
}

/// Chebyshev operator of a (possibly asymmetric) adjacency.
pub fn chebyshev_operator(a: &Tensor) -> Tensor {
    let l = normalized_laplacian(&symmetrize(a));
    let lambda = lambda_max(&l);
    rescale_laplacian(&l, lambda)
}

/// `D̃^{−½}(A + I)D̃^{−½}` on the symmetrised adjacency.
pub fn gcn_propagation(a: &Tensor) -> Tensor {
    let m = a.rows();
    let mut t = symmetrize(a);
    for i in 0..m {
        let v = t.at(i, i) + 1.0;
        t.set(i, i, v);
    }
    let s = inv_sqrt_degrees(&t);
    for i in 0..m {
        for j in 0..m {
            let v = s[i] * t.at(i, j) * s[j];
            t.set(i, j, v);
        }
    }
    t
}

/// Attention support for static edges: rows without any positive weight get
/// a unit self-loop so every node attends to something.
pub fn attention_support(a: &Tensor) -> Result<Tensor> {
    let m = a.rows();
    let mut t = a.clone();
    for i in 0..m {
        let row = t.row(i);
        if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::IsolatedNode(i));
        }
        if row.iter().all(|&v| v == 0.0) {
            t.set(i, i, 1.0);
        }
    }
    Ok(t)
}

fn degree_scaled(g: &mut Graph<'_>, a: Var) -> Result<Var> {
    let m = g.shape(a)[0];
    let d = g.sum_axis(a, 1)?;
    let s = g.powf(d, -0.5)?;
    let col = g.reshape(s, &[m, 1])?;
    let row = g.reshape(s, &[1, m])?;
    let left = g.mul(a, col)?;
    Ok(g.mul(left, row)?)
}

fn symmetrize_var(g: &mut Graph<'_>, a: Var) -> Result<Var> {
    let t = g.transpose(a)?;
    let s = g.add(a, t)?;
    Ok(g.scale(s, 0.5)?)
}

/// [`power_iteration`] unrolled on the tape, so the eigenvalue carries the
/// gradient of the iteration that produced it. Falls back to the constant
/// [`LAMBDA_FALLBACK`] exactly where [`lambda_max`] does.
fn lambda_max_var(g: &mut Graph<'_>, lap: Var) -> Result<Var> {
    let m = g.shape(lap)[0];
    let start = start_vector(g.value(lap));
    let mut v = g.constant(Tensor::new(vec![m, 1], start)?);
    let mut lambda = f64::NAN;
    for _ in 0..POWER_ITERATIONS {
        let w = g.matmul(lap, v)?;
        let wv = g.mul(w, v)?;
        let next = g.sum(wv)?;
        let sq = g.mul(w, w)?;
        let sq = g.sum(sq)?;
        let value = g.value(next).item();
        if g.value(sq).item() == 0.0 || (value - lambda).abs() < POWER_TOLERANCE {
            return Ok(if value >= 1e-8 && g.value(sq).item() > 0.0 {
                next
            } else {
                g.constant(Tensor::scalar(LAMBDA_FALLBACK))
            });
        }
        lambda = value;
        let nw = g.powf(sq, 0.5)?;
        v = g.div(w, nw)?;
    }
    Ok(g.constant(Tensor::scalar(LAMBDA_FALLBACK)))
}

/// In-graph [`chebyshev_operator`] for a learned, strictly positive
/// adjacency.
pub fn chebyshev_operator_var(g: &mut Graph<'_>, a: Var) -> Result<Var> {
    let m = g.shape(a)[0];
    let sym = symmetrize_var(g, a)?;
    let norm = degree_scaled(g, sym)?;
    let eye = g.constant(Tensor::identity(m));
    let lap = g.sub(eye, norm)?;
    let lambda = lambda_max_var(g, lap)?;
    let scaled = g.div(lap, lambda)?;
    let scaled = g.scale(scaled, 2.0)?;
    Ok(g.sub(scaled, eye)?)
}

/// In-graph [`gcn_propagation`] for a learned adjacency.
pub fn gcn_propagation_var(g: &mut Graph<'_>, a: Var) -> Result<Var> {
    let m = g.shape(a)[0];
    let sym = symmetrize_var(g, a)?;
    let eye = g.constant(Tensor::identity(m));
    let looped = g.add(sym, eye)?;
    degree_scaled(g, looped)
}
