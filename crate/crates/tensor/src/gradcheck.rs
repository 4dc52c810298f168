//! Central finite differences against reverse mode.

use rand::RngExt;

use crate::rng::substream;
use crate::{Graph, Tensor, TensorError, Var};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or the absolute norm when both are tiny.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Loss `sum(out ⊙ r)` for a fixed random `r`, and its gradients.
fn objective<E: From<TensorError>>(
    inputs: &[Tensor],
    build: &impl Fn(&mut Graph, &[Var]) -> Result<Var, E>,
    seed: u64,
    with_grads: bool,
) -> Result<(f64, Vec<Vec<f64>>), E> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let shape = g.shape(out).to_vec();
    let mut rng = substream(seed, "gradcheck");
    let n = shape.iter().product();
    let r = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let r = g.constant(r);
    let p = g.mul(out, r)?;
    let loss = g.sum(p)?;
    let value = g.value(loss).item();
    if !with_grads {
        return Ok((value, Vec::new()));
    }
    let grads = g.backward(loss)?;
    let analytic = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            grads
                .get(*v)
                .map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec)
        })
        .collect();
    Ok((value, analytic))
}

/// Worst relative error over the inputs between reverse-mode gradients and
/// central differences of a random projection of `build`'s output.
pub fn max_gradient_error<E: From<TensorError>>(
    inputs: &[Tensor],
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var, E>,
    seed: u64,
) -> Result<f64, E> {
    let (_, analytic) = objective(inputs, &build, seed, true)?;
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = Vec::with_capacity(input.numel());
        for i in 0..input.numel() {
            let mut shifted = inputs.to_vec();
            shifted[k].data_mut()[i] += STEP;
            let plus = objective(&shifted, &build, seed, false)?.0;
            shifted[k].data_mut()[i] -= 2.0 * STEP;
            let minus = objective(&shifted, &build, seed, false)?.0;
            numeric.push((plus - minus) / (2.0 * STEP));
        }
        worst = worst.max(relative_error(&analytic[k], &numeric));
    }
    Ok(worst)
}
