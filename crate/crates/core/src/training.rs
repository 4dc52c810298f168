//! Plain SGD with a reduce-on-plateau schedule, minimum-training-loss model
//! selection and test accuracy.

use std::ops::ControlFlow;
use std::time::Instant;

use mtsg_tensor::rng::substream;
use mtsg_tensor::{Graph, ParamStore, Tensor, TensorError};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edges::EdgeKind;
use crate::error::{Error, Result};
use crate::features::NodeKind;
use crate::models::{Architecture, Model, ModelSpec, PreparedSample};
use crate::pipeline::{build_dataset, FeatureConfig, GraphSample};
use crate::ts_io::Dataset;

pub const DEFAULT_SEEDS: [u64; 3] = [42, 152, 310];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: String,
    pub node_kind: NodeKind,
    pub edge_kind: EdgeKind,
    pub architecture: Architecture,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_floor: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    /// Soft limit on the estimated per-batch graph size; the batch is halved
    /// until the estimate fits.
    pub memory_budget_bytes: u64,
    pub layers: usize,
    pub hidden: usize,
    pub cheb_k: usize,
    pub temporal_kernel: usize,
    pub features: FeatureConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            node_kind: NodeKind::Raw,
            edge_kind: EdgeKind::Cg,
            architecture: Architecture::Gcn,
            seed: 42,
            epochs: 200,
            batch_size: 64,
            lr0: 1e-3,
            lr_floor: 1e-6,
            plateau_patience: 10,
            plateau_factor: 0.5,
            memory_budget_bytes: 4 << 30,
            layers: 3,
            hidden: 128,
            cheb_k: 3,
            temporal_kernel: 3,
            features: FeatureConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn new(
        dataset: &str,
        node_kind: NodeKind,
        edge_kind: EdgeKind,
        architecture: Architecture,
        seed: u64,
    ) -> Self {
        Self {
            dataset: dataset.to_string(),
            node_kind,
            edge_kind,
            architecture,
            seed,
            ..Self::default()
        }
    }

    /// SHA-256 over the canonical JSON encoding (struct fields in declaration
    /// order, no whitespace).
    pub fn run_id(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn model_spec(
        &self,
        num_nodes: usize,
        feature_dim: usize,
        num_classes: usize,
    ) -> ModelSpec {
        let mut spec = ModelSpec::new(self.architecture, num_nodes, feature_dim, num_classes)
            .for_edges(self.edge_kind);
        spec.layers = self.layers;
        spec.hidden = self.hidden;
        spec.cheb_k = self.cheb_k;
        spec.temporal_kernel = self.temporal_kernel;
        spec
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr_floor > 0.0 && self.lr_floor <= self.lr0) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive and above the floor {}",
                self.lr0, self.lr_floor
            )));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config(format!(
                "plateau factor {} outside (0, 1)",
                self.plateau_factor
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub test_accuracy: f64,
    /// Accuracy of the selected checkpoint on the training split.
    pub train_accuracy: f64,
    pub best_train_loss: f64,
    /// Mean per-sample training loss of every epoch.
    pub loss_curve: Vec<f64>,
    /// Learning rate used in every epoch.
    pub lr_curve: Vec<f64>,
    pub wall_seconds: f64,
    /// Zero-based index of the minimum of `loss_curve`.
    pub selected_epoch: usize,
    pub batch_size: usize,
}

/// `p ← p − lr·g` for every parameter.
pub fn sgd_step(params: &mut ParamStore, grads: &[Tensor], lr: f64) {
    for (id, g) in params.ids().collect::<Vec<_>>().into_iter().zip(grads) {
        for (p, &d) in params.get_mut(id).data_mut().iter_mut().zip(g.data()) {
            *p -= lr * d;
        }
    }
}

/// Halves the learning rate after `patience` consecutive epochs without a
/// strictly lower loss, never going below the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    best: f64,
    stale: usize,
    patience: usize,
    factor: f64,
    floor: f64,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, patience: usize, factor: f64, floor: f64) -> Self {
        Self {
            lr: lr0,
            best: f64::INFINITY,
            stale: 0,
            patience,
            factor,
            floor,
        }
    }

    pub fn from_config(c: &RunConfig) -> Self {
        Self::new(c.lr0, c.plateau_patience, c.plateau_factor, c.lr_floor)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's loss and returns the rate for the next epoch.
    pub fn step(&mut self, loss: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr = (self.lr * self.factor).max(self.floor);
                self.stale = 0;
            }
        }
        self.lr
    }
}

/// Keeps the parameters of the epoch with the strictly lowest loss.
#[derive(Debug, Clone, Default)]
pub struct CheckpointTracker {
    best: Option<(usize, f64)>,
    snapshot: Option<ParamStore>,
}

impl CheckpointTracker {
    pub fn observe(&mut self, epoch: usize, loss: f64, params: &ParamStore) -> bool {
        let better = self.best.is_none_or(|(_, b)| loss < b);
        if better {
            self.best = Some((epoch, loss));
            self.snapshot = Some(params.clone());
        }
        better
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn into_snapshot(self) -> Option<ParamStore> {
        self.snapshot
    }
}

/// Fraction of positions where prediction and label agree.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Highest test accuracy; ties go to the lower training loss, then the lower
/// seed.
pub fn best_of_seeds(results: &[RunResult]) -> Option<&RunResult> {
    results.iter().min_by(|a, b| {
        b.test_accuracy
            .total_cmp(&a.test_accuracy)
            .then(a.best_train_loss.total_cmp(&b.best_train_loss))
            .then(a.config.seed.cmp(&b.config.seed))
    })
}

/// Mean and population standard deviation of test accuracy across seeds.
pub fn seed_spread(results: &[RunResult]) -> (f64, f64) {
    let acc: Vec<f64> = results.iter().map(|r| r.test_accuracy).collect();
    crate::ts_io::mean_std(&acc)
}

pub fn evaluate(model: &Model, samples: &[PreparedSample]) -> Result<f64> {
    let preds = samples
        .iter()
        .map(|s| model.predict(s))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    accuracy(&preds, &labels)
}

fn non_finite(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Tensor(TensorError::NonFiniteDetected { .. }) => Error::NonFiniteLoss { epoch },
        other => other,
    }
}

/// Largest batch (halving from `requested`) whose estimated graph fits the
/// memory budget.
fn fit_batch(
    model: &Model,
    sample: &PreparedSample,
    requested: usize,
    budget: u64,
) -> Result<usize> {
    let mut g = Graph::new();
    let bound = g.bind(&model.params);
    let out = model.forward(&mut g, &bound, sample)?;
    g.cross_entropy_with_logits(out.logits, sample.label)?;
    let scalars = g.footprint().saturating_sub(model.params.num_scalars());
    // Values plus gradients, eight bytes each.
    let per_sample = (scalars as u64) * 16;
    let mut batch = requested;
    while batch > 1 && per_sample * batch as u64 > budget {
        batch /= 2;
    }
    if batch != requested {
        tracing::info!(
            requested,
            batch,
            per_sample,
            "batch size halved to fit the memory budget"
        );
    }
    Ok(batch)
}

/// State handed to an epoch observer after each epoch's parameter updates.
pub struct EpochReport<'a> {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    /// Current, not checkpointed, parameters.
    pub model: &'a Model,
    pub train: &'a [PreparedSample],
}

/// Trains on prepared graphs and returns the result together with the
/// selected checkpoint.
pub fn train_model(
    config: &RunConfig,
    spec: ModelSpec,
    train: &[GraphSample],
    test: &[GraphSample],
) -> Result<(RunResult, Model)> {
    train_model_observed(config, spec, train, test, |_| ControlFlow::Continue(()))
}

/// [`train_model`] with a callback after every epoch; returning
/// `ControlFlow::Break` ends training early. The checkpoint is still the
/// lowest-loss epoch seen so far.
pub fn train_model_observed(
    config: &RunConfig,
    spec: ModelSpec,
    train: &[GraphSample],
    test: &[GraphSample],
    mut observer: impl FnMut(EpochReport<'_>) -> ControlFlow<()>,
) -> Result<(RunResult, Model)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let start = Instant::now();
    let mut model = Model::new(spec, config.seed)?;
    let train: Vec<PreparedSample> = train
        .iter()
        .map(|s| model.prepare(s))
        .collect::<Result<_>>()?;
    let test: Vec<PreparedSample> = test
        .iter()
        .map(|s| model.prepare(s))
        .collect::<Result<_>>()?;
    let batch = fit_batch(
        &model,
        &train[0],
        config.batch_size,
        config.memory_budget_bytes,
    )?;

    let mut rng = substream(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut scheduler = PlateauScheduler::from_config(config);
    let mut tracker = CheckpointTracker::default();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut lr_curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = scheduler.lr();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let grads = {
                let mut g = Graph::new();
                let bound = g.bind(&model.params);
                let mut sum = None;
                for &i in chunk {
                    let out = model
                        .forward(&mut g, &bound, &train[i])
                        .map_err(non_finite(epoch))?;
                    let l = g.cross_entropy_with_logits(out.logits, train[i].label)?;
                    total += g.value(l).item();
                    sum = Some(match sum {
                        Some(s) => g.add(s, l)?,
                        None => l,
                    });
                }
                let mean = g.scale(sum.expect("non-empty chunk"), 1.0 / chunk.len() as f64)?;
                let grads = g.backward(mean)?;
                let mut acc = model.params.zeros_like();
                bound.accumulate(&grads, &mut acc, 1.0);
                acc
            };
            if grads.iter().any(|t| !t.all_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            sgd_step(&mut model.params, &grads, lr);
        }
        let epoch_loss = total / train.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        tracing::debug!(epoch, loss = epoch_loss, lr, "epoch finished");
        loss_curve.push(epoch_loss);
        lr_curve.push(lr);
        tracker.observe(epoch, epoch_loss, &model.params);
        scheduler.step(epoch_loss);
        let report = EpochReport {
            epoch,
            loss: epoch_loss,
            lr,
            model: &model,
            train: &train,
        };
        if observer(report).is_break() {
            break;
        }
    }

    let (selected_epoch, best_train_loss) = tracker.best().expect("at least one epoch");
    model.params = tracker.into_snapshot().expect("snapshot of best epoch");
    let train_accuracy = evaluate(&model, &train)?;
    let test_accuracy = evaluate(&model, &test)?;
    let result = RunResult {
        config: config.clone(),
        test_accuracy,
        train_accuracy,
        best_train_loss,
        loss_curve,
        lr_curve,
        wall_seconds: start.elapsed().as_secs_f64(),
        selected_epoch,
        batch_size: batch,
    };
    Ok((result, model))
}

/// Builds graphs for `dataset` and trains one run.
pub fn train_run_with_model(config: &RunConfig, dataset: &Dataset) -> Result<(RunResult, Model)> {
    let (train, test) = build_dataset(
        dataset,
        config.node_kind,
        config.edge_kind,
        &config.features,
    )?;
    let first = train.first().ok_or(Error::EmptyEvaluationSet)?;
    let spec = config.model_spec(
        first.nodes.rows(),
        first.nodes.cols(),
        dataset.meta.num_classes,
    );
    train_model(config, spec, &train, &test)
}

pub fn train_run(config: &RunConfig, dataset: &Dataset) -> Result<RunResult> {
    train_run_with_model(config, dataset).map(|(r, _)| r)
}
