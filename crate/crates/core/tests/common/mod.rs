//! Dense reference helpers shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;

use std::path::{Path, PathBuf};

use mtsg_core::ts_io::{load_dataset, sampling_frequency, Dataset};
use mtsg_tensor::rng::seeded;
use mtsg_tensor::Tensor;
use nalgebra::DMatrix;
use rand::RngExt;

pub fn random(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

pub fn dense(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

pub fn tensor(m: &DMatrix<f64>) -> Tensor {
    let rows: Vec<f64> = m.transpose().iter().copied().collect();
    Tensor::new(vec![m.nrows(), m.ncols()], rows).unwrap()
}

pub fn assert_close(actual: &Tensor, expected: &DMatrix<f64>, tol: f64, what: &str) {
    assert_eq!(
        actual.shape(),
        [expected.nrows(), expected.ncols()],
        "{what}: shape"
    );
    let diff = (dense(actual) - expected).abs().max();
    assert!(diff < tol, "{what}: max abs difference {diff:e}");
}

/// Symmetric, non-negative random adjacency with a zero diagonal.
pub fn random_adjacency(m: usize, seed: u64) -> Tensor {
    let r = dense(&random(&[m, m], 0.0, 1.0, seed));
    let mut a = (&r + r.transpose()) * 0.5;
    a.fill_diagonal(0.0);
    tensor(&a)
}

pub fn basic_motions_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/BasicMotions")
}

pub fn basic_motions() -> Dataset {
    let dir = basic_motions_dir();
    load_dataset(
        &dir.join("BasicMotions_TRAIN.ts"),
        &dir.join("BasicMotions_TEST.ts"),
        sampling_frequency("BasicMotions"),
    )
    .unwrap()
}

pub fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn permutation(m: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..m).collect();
    let mut rng = seeded(seed);
    for i in (1..m).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

pub fn permute_rows(t: &Tensor, p: &[usize]) -> Tensor {
    let rows: Vec<Vec<f64>> = p.iter().map(|&i| t.row(i).to_vec()).collect();
    Tensor::from_rows(&rows).unwrap()
}

pub fn permute_both(t: &Tensor, p: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(&[p.len(), p.len()]);
    for (i, &pi) in p.iter().enumerate() {
        for (j, &pj) in p.iter().enumerate() {
            out.set(i, j, t.at(pi, pj));
        }
    }
    out
}
