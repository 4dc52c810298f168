//! Per-channel node features: the raw series, band differential entropy and
//! the one-sided power spectral density.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use mtsg_tensor::Tensor;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ts_io::MultivariateSeries;

/// Floor on band variance before taking the logarithm.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Raw,
    #[serde(rename = "DE")]
    De,
    #[serde(rename = "PSD")]
    Psd,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Raw, NodeKind::De, NodeKind::Psd];

    pub fn needs_sampling_frequency(self) -> bool {
        self != NodeKind::Raw
    }

    /// Feature dimension for series of length `n`.
    pub fn feature_dim(self, n: usize, scheme: &BandScheme) -> usize {
        match self {
            NodeKind::Raw => n,
            NodeKind::De => scheme.num_bands(),
            NodeKind::Psd => n / 2 + 1,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Raw => "Raw",
            NodeKind::De => "DE",
            NodeKind::Psd => "PSD",
        })
    }
}

impl FromStr for NodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(NodeKind::Raw),
            "de" => Ok(NodeKind::De),
            "psd" => Ok(NodeKind::Psd),
            _ => Err(Error::Config(format!("unknown node feature kind {s:?}"))),
        }
    }
}

/// How the positive half-spectrum is split into bands for DE. The DC bin
/// never belongs to a band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BandScheme {
    /// `n` equal-width bands over (0, fs/2].
    EqualWidth(usize),
    /// Ascending upper band edges in Hz; band `b` covers (edge[b-1], edge[b]].
    /// Bins above the last edge are discarded.
    EdgesHz(Vec<f64>),
}

impl Default for BandScheme {
    fn default() -> Self {
        BandScheme::EqualWidth(5)
    }
}

impl BandScheme {
    pub fn num_bands(&self) -> usize {
        match self {
            BandScheme::EqualWidth(n) => *n,
            BandScheme::EdgesHz(e) => e.len(),
        }
    }

    /// Band of positive-frequency bin `k` (1 ≤ k ≤ n/2) of an `n`-point DFT.
    pub fn band_of(&self, k: usize, n: usize, fs: f64) -> Option<usize> {
        if k == 0 || 2 * k > n {
            return None;
        }
        match self {
            // Frequency k·fs/n falls in band ⌈bands·2k/n⌉ − 1, done in integers.
            BandScheme::EqualWidth(bands) => Some((2 * bands * k).div_ceil(n) - 1),
            BandScheme::EdgesHz(edges) => {
                let f = k as f64 * fs / n as f64;
                edges.iter().position(|&e| f <= e)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BandScheme::EqualWidth(0) => Err(Error::Config("band count must be positive".into())),
            BandScheme::EdgesHz(e)
                if e.is_empty() || e.windows(2).any(|w| w[0] >= w[1]) || e[0] <= 0.0 =>
            {
                Err(Error::Config(format!(
                    "band edges must be positive and ascending: {e:?}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureMatrix {
    /// `M × F`.
    pub values: Tensor,
    pub kind: NodeKind,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let plan = if inverse {
            p.plan_fft_inverse(buf.len())
        } else {
            p.plan_fft_forward(buf.len())
        };
        plan.process(buf);
    });
}

/// Forward DFT `X[k] = Σ x[n]·e^{−j2πkn/N}`.
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if !buf.is_empty() {
        fft_in_place(&mut buf, false);
    }
    buf
}

/// Real part of the inverse DFT, scaled by `1/N`.
pub fn idft(spectrum: &[Complex64]) -> Vec<f64> {
    let mut buf = spectrum.to_vec();
    if buf.is_empty() {
        return Vec::new();
    }
    fft_in_place(&mut buf, true);
    let n = buf.len() as f64;
    buf.into_iter().map(|c| c.re / n).collect()
}

/// `|X[k]|² / (N·fs)` for `k = 0..=N/2`.
pub fn psd(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let spec = dft(x);
    spec.iter()
        .take(n / 2 + 1)
        .map(|c| c.norm_sqr() / (n as f64 * fs))
        .collect()
}

/// Band-limited copies of `x`, one per band, obtained by zeroing every DFT
/// bin outside the band (together with its conjugate partner).
pub fn band_signals(x: &[f64], fs: f64, scheme: &BandScheme) -> Vec<Vec<f64>> {
    let n = x.len();
    let spec = dft(x);
    let mut owner = vec![None; n];
    for k in 1..=n / 2 {
        let b = scheme.band_of(k, n, fs);
        owner[k] = b;
        owner[n - k] = b;
    }
    (0..scheme.num_bands())
        .map(|b| {
            let masked: Vec<Complex64> = spec
                .iter()
                .zip(&owner)
                .map(|(c, o)| {
                    if *o == Some(b) {
                        *c
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            idft(&masked)
        })
        .collect()
}

/// Entropy in bits of a Gaussian with variance `var` (floored).
pub fn gaussian_entropy_bits(var: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var.max(VARIANCE_FLOOR)).log2()
}

fn population_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn differential_entropy_with(x: &[f64], fs: f64, scheme: &BandScheme) -> Vec<f64> {
    band_signals(x, fs, scheme)
        .iter()
        .map(|s| gaussian_entropy_bits(population_variance(s)))
        .collect()
}

/// Differential entropy of each of the five default bands, ascending.
pub fn differential_entropy(x: &[f64], fs: f64) -> Vec<f64> {
    differential_entropy_with(x, fs, &BandScheme::default())
}

pub fn extract_raw(sample: &MultivariateSeries) -> NodeFeatureMatrix {
    let values = Tensor::from_rows(&sample.channels).expect("equal-length channels");
    NodeFeatureMatrix {
        values,
        kind: NodeKind::Raw,
    }
}

pub fn extract_features(
    sample: &MultivariateSeries,
    kind: NodeKind,
    fs: Option<f64>,
    scheme: &BandScheme,
) -> Result<NodeFeatureMatrix> {
    if kind == NodeKind::Raw {
        return Ok(extract_raw(sample));
    }
    let fs = fs.ok_or_else(|| Error::MissingSamplingFrequency(format!("{kind} features")))?;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::Config(format!(
            "sampling frequency must be positive, got {fs}"
        )));
    }
    scheme.validate()?;
    let rows: Vec<Vec<f64>> = sample
        .channels
        .iter()
        .map(|c| match kind {
            NodeKind::De => differential_entropy_with(c, fs, scheme),
            _ => psd(c, fs),
        })
        .collect();
    let values = Tensor::from_rows(&rows)?;
    if !values.all_finite() {
        return Err(Error::Tensor(mtsg_tensor::TensorError::NonFiniteDetected {
            op: "extract_features",
            index: values
                .data()
                .iter()
                .position(|v| !v.is_finite())
                .unwrap_or(0),
        }));
    }
    Ok(NodeFeatureMatrix { values, kind })
}
