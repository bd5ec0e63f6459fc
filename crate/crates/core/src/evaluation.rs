//! Training loop, per-cell metrics and the ablation driver.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FeatureProvider, Grid, Sample, Task, TaskKey, N_KEYS};
use crate::graph_builder::{build_graph, CrossModalGraph, GraphError, Variant, DEFAULT_CAP_PER_ANCHOR};
use crate::kg_store::KnowledgeGraph;
use crate::model::{
    backward, forward, loss_and_upstream, Gradients, ModelConfig, ModelError,
    ModelParams, Prediction, Upstream, DEFAULT_LAYERS,
};
use crate::numerics::{AdamW, NumericsError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("non-finite loss {loss} on sample {sample_id} in epoch {epoch}")]
    NonFinite {
        sample_id: String,
        epoch: usize,
        loss: f64,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("sample id {0} is listed in more than one split")]
    Overlap(String),
    #[error("split lists unknown sample id {0}")]
    Unknown(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("predictions ({preds}) and labels ({labels}) differ in length")]
    Length { preds: usize, labels: usize },
    #[error("metrics need at least one element")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub lr_gcn: f64,
    pub lr_task: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub variant: Variant,
    pub cap_per_anchor: usize,
    pub layers: usize,
    pub dim: usize,
}

impl TrainConfig {
    /// Defaults: 10 epochs, GCN rate 1e-3, head rate 1e-4 (movement) or 1e-3
    /// (volatility), batch size 1, two layers.
    pub fn new(task: Task, dim: usize) -> Self {
        Self {
            task,
            epochs: 10,
            lr_gcn: 1e-3,
            lr_task: match task {
                Task::Movement => 1e-4,
                Task::Volatility => 1e-3,
            },
            batch_size: 1,
            weight_decay: 0.01,
            seed: 0,
            variant: Variant::Full,
            cap_per_anchor: DEFAULT_CAP_PER_ANCHOR,
            layers: DEFAULT_LAYERS,
            dim,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            dim: self.dim,
            seed: self.seed,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr_gcn > 0.0 && self.lr_gcn.is_finite()) || !(self.lr_task > 0.0 && self.lr_task.is_finite()) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.layers == 0 || self.dim == 0 {
            return bad("layers and dim must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        Ok(())
    }
}

/// Builds one graph per sample, each against its own call-date view.
pub fn build_graphs(
    samples: &[Sample],
    kg: &KnowledgeGraph,
    provider: &dyn FeatureProvider,
    variant: Variant,
    cap_per_anchor: usize,
) -> Result<Vec<CrossModalGraph>, GraphError> {
    samples
        .iter()
        .map(|s| build_graph(s, &kg.view(s.call_date), provider, variant, cap_per_anchor))
        .collect()
}

/// Task loss and its upstream gradient.
pub fn task_loss(task: Task, pred: &Prediction, sample: &Sample) -> (f64, Upstream) {
    loss_and_upstream(task, pred, &sample.labels)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    /// Mean validation loss per epoch, when a validation set was given.
    pub validation_history: Vec<f64>,
    /// Epoch (1-based) whose parameters were returned; 0 means the
    /// initialization.
    pub selected_epoch: usize,
}

fn add_into(acc: &mut Option<Gradients>, g: Gradients) {
    match acc {
        None => *acc = Some(g),
        Some(a) => {
            for (x, y) in a.gcn_weights.iter_mut().zip(&g.gcn_weights) {
                x.data_mut().iter_mut().zip(y.data()).for_each(|(p, q)| *p += q);
            }
            let pairs = [
                (a.movement_head.data_mut(), g.movement_head.data()),
                (a.volatility_head.data_mut(), g.volatility_head.data()),
                (a.movement_bias.as_mut_slice(), g.movement_bias.as_slice()),
                (a.volatility_bias.as_mut_slice(), g.volatility_bias.as_slice()),
            ];
            for (x, y) in pairs {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
            }
        }
    }
}

struct Optimizers {
    gcn: AdamW,
    heads: AdamW,
}

impl Optimizers {
    fn new(config: &TrainConfig) -> Self {
        Self {
            gcn: AdamW::with_hyper(config.lr_gcn, 0.9, 0.999, 1e-8, config.weight_decay),
            heads: AdamW::with_hyper(config.lr_task, 0.9, 0.999, 1e-8, config.weight_decay),
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &Gradients, count: usize) -> Result<(), NumericsError> {
        let layers = params.gcn_weights.len();
        let scale = 1.0 / count as f64;
        let scaled: Vec<Vec<f64>> = grads
            .tensors()
            .iter()
            .map(|t| t.iter().map(|v| v * scale).collect())
            .collect();
        let refs: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
        let mut tensors = params.tensors_mut();
        let (gcn, heads) = tensors.split_at_mut(layers);
        self.gcn.step(gcn, &refs[..layers])?;
        self.heads.step(heads, &refs[layers..])
    }
}

fn mean_loss(task: Task, graphs: &[CrossModalGraph], samples: &[Sample], params: &ModelParams) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for (g, s) in graphs.iter().zip(samples) {
        let out = forward(g, params)?;
        total += task_loss(task, &out.prediction, s).0;
    }
    Ok(total / samples.len() as f64)
}

/// Trains one task's parameters with per-sample AdamW updates.
pub fn train(
    samples: &[Sample],
    kg: &KnowledgeGraph,
    provider: &dyn FeatureProvider,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with_validation(samples, None, kg, provider, config)
}

/// Like [`train`]; with a validation set, the returned parameters are those
/// of the epoch with the lowest validation loss.
pub fn train_with_validation(
    samples: &[Sample],
    validation: Option<&[Sample]>,
    kg: &KnowledgeGraph,
    provider: &dyn FeatureProvider,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    config.validate()?;
    if provider.dim() != config.dim {
        return Err(TrainError::Config(format!(
            "feature provider width {} differs from model width {}",
            provider.dim(),
            config.dim
        )));
    }
    let graphs = build_graphs(samples, kg, provider, config.variant, config.cap_per_anchor)?;
    let val = match validation {
        Some(v) if !v.is_empty() => Some((v, build_graphs(v, kg, provider, config.variant, config.cap_per_anchor)?)),
        _ => None,
    };

    let mut params = ModelParams::init(config.model_config());
    let mut opt = Optimizers::new(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut validation_history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc: Option<Gradients> = None;
            for &i in batch {
                let (graph, sample) = (&graphs[i], &samples[i]);
                let out = forward(graph, &params)?;
                let (loss, upstream) = task_loss(config.task, &out.prediction, sample);
                if !loss.is_finite() {
                    return Err(TrainError::NonFinite {
                        sample_id: sample.id.clone(),
                        epoch,
                        loss,
                    });
                }
                epoch_loss += loss;
                add_into(&mut acc, backward(graph, &params, &out.cache, &upstream)?);
            }
            opt.step(&mut params, &acc.expect("non-empty batch"), batch.len())?;
        }
        let epoch_loss = epoch_loss / samples.len() as f64;
        loss_history.push(epoch_loss);
        debug!("epoch {epoch}: mean {} loss {epoch_loss:.6}", config.task);

        if let Some((vs, vg)) = &val {
            let vl = mean_loss(config.task, vg, vs, &params)?;
            validation_history.push(vl);
            if best.as_ref().map_or(true, |(b, _, _)| vl < *b) {
                best = Some((vl, epoch, params.clone()));
            }
        }
    }
    info!(
        "trained {} ({}) for {} epochs, final loss {:?}",
        config.task,
        config.variant,
        config.epochs,
        loss_history.last()
    );
    let (params, selected_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, config.epochs),
    };
    Ok(TrainOutcome {
        params,
        loss_history,
        validation_history,
        selected_epoch,
    })
}

/// `2TP / (2TP + FP + FN)` with `true` as the positive class; 0 when the
/// denominator is 0.
pub fn f1_score(preds: &[bool], labels: &[bool]) -> Result<f64, MetricError> {
    if preds.len() != labels.len() {
        return Err(MetricError::Length {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if denom == 0 { 0.0 } else { (2 * tp) as f64 / denom as f64 })
}

pub fn mse(preds: &[f64], targets: &[f64]) -> Result<f64, MetricError> {
    if preds.len() != targets.len() {
        return Err(MetricError::Length {
            preds: preds.len(),
            labels: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let sum: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / preds.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub task: Task,
    pub variant: Variant,
    pub cap_per_anchor: usize,
    /// Worker threads for prediction; results are gathered in sample order.
    pub jobs: usize,
}

impl From<&TrainConfig> for EvalConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            task: c.task,
            variant: c.variant,
            cap_per_anchor: c.cap_per_anchor,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub variant: Variant,
    pub task: Task,
    /// F1 per cell for movement, MSE per cell for volatility.
    pub values: Grid<f64>,
    pub mean_loss: f64,
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub key: String,
    pub variant: String,
    pub task: String,
    pub asset: String,
    pub tau: u32,
    pub metric: String,
    pub value: f64,
}

impl MetricsReport {
    pub fn metric_name(&self) -> &'static str {
        match self.task {
            Task::Movement => "f1",
            Task::Volatility => "mse",
        }
    }

    pub fn f1(&self) -> Option<&Grid<f64>> {
        (self.task == Task::Movement).then_some(&self.values)
    }

    pub fn mse(&self) -> Option<&Grid<f64>> {
        (self.task == Task::Volatility).then_some(&self.values)
    }

    pub fn mean_value(&self) -> f64 {
        self.values.values().iter().sum::<f64>() / N_KEYS as f64
    }

    pub fn records(&self) -> Vec<MetricRecord> {
        self.values
            .iter()
            .map(|(k, &v)| MetricRecord {
                key: format!("{}/{}/{}/{}", self.variant, self.task, k.asset, k.horizon),
                variant: self.variant.to_string(),
                task: self.task.to_string(),
                asset: k.asset.to_string(),
                tau: k.horizon.days(),
                metric: self.metric_name().to_string(),
                value: v,
            })
            .collect()
    }

    /// One JSON object per line, keyed `<variant>/<task>/<asset>/<τ>`.
    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "variant: {}  task: {}  metric: {}  mean loss: {:.6}",
            self.variant,
            self.task,
            self.metric_name(),
            self.mean_loss
        );
        let _ = writeln!(out, "{:<22}{:>10}{:>10}{:>10}{:>10}", "asset", "τ=1", "τ=3", "τ=7", "τ=15");
        for asset in crate::corpus::Asset::ALL {
            let _ = write!(out, "{:<22}", asset.code());
            for horizon in crate::corpus::Horizon::ALL {
                let _ = write!(out, "{:>10.4}", self.values.get(TaskKey { asset, horizon }));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "mean {}: {:.4}", self.metric_name(), self.mean_value());
        out
    }
}

/// Predictions for every graph, in input order.
pub fn predict_all(
    graphs: &[CrossModalGraph],
    params: &ModelParams,
    jobs: usize,
) -> Result<Vec<Prediction>, ModelError> {
    let jobs = jobs.max(1).min(graphs.len().max(1));
    if jobs == 1 {
        return graphs.iter().map(|g| forward(g, params).map(|o| o.prediction)).collect();
    }
    let chunk = graphs.len().div_ceil(jobs);
    let results: Vec<Result<Vec<Prediction>, ModelError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = graphs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|g| forward(g, params).map(|o| o.prediction))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(graphs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Metrics over `samples` computed from predictions alone; training labels
/// never enter unless the caller passes the training set.
pub fn evaluate(
    params: &ModelParams,
    samples: &[Sample],
    kg: &KnowledgeGraph,
    provider: &dyn FeatureProvider,
    config: &EvalConfig,
) -> Result<MetricsReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let graphs = build_graphs(samples, kg, provider, config.variant, config.cap_per_anchor)?;
    let preds = predict_all(&graphs, params, config.jobs)?;
    Ok(report_from_predictions(config.task, config.variant, samples, &preds))
}

pub fn report_from_predictions(
    task: Task,
    variant: Variant,
    samples: &[Sample],
    preds: &[Prediction],
) -> MetricsReport {
    let mean_loss = samples
        .iter()
        .zip(preds)
        .map(|(s, p)| task_loss(task, p, s).0)
        .sum::<f64>()
        / samples.len() as f64;
    let values = Grid::from_fn(|k| match task {
        Task::Movement => {
            let p: Vec<bool> = preds.iter().map(|p| *p.movement_prob.get(k) > 0.5).collect();
            let l: Vec<bool> = samples.iter().map(|s| *s.labels.movement.get(k)).collect();
            f1_score(&p, &l).expect("equal non-empty lengths")
        }
        Task::Volatility => {
            let p: Vec<f64> = preds.iter().map(|p| *p.volatility.get(k)).collect();
            let l: Vec<f64> = samples.iter().map(|s| *s.labels.volatility.get(k)).collect();
            mse(&p, &l).expect("equal non-empty lengths")
        }
    });
    MetricsReport {
        variant,
        task,
        values,
        mean_loss,
        loss_history: Vec::new(),
    }
}

/// One trained-and-evaluated report per variant, in [`Variant::ALL`] order.
#[derive(Clone, Debug)]
pub struct AblationTable {
    pub rows: Vec<MetricsReport>,
}

impl AblationTable {
    pub fn get(&self, variant: Variant) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn records_jsonl(&self) -> String {
        self.rows.iter().map(MetricsReport::records_jsonl).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(first) = self.rows.first() {
            let _ = writeln!(out, "ablation: task {} metric {}", first.task, first.metric_name());
        }
        let _ = write!(out, "{:<20}", "variant");
        for asset in crate::corpus::Asset::ALL {
            let _ = write!(out, "{:>22}", asset.code());
        }
        let _ = writeln!(out, "{:>10}", "mean");
        for r in &self.rows {
            let _ = write!(out, "{:<20}", r.variant.name());
            for asset in crate::corpus::Asset::ALL {
                let avg = crate::corpus::Horizon::ALL
                    .iter()
                    .map(|&horizon| r.values.get(TaskKey { asset, horizon }))
                    .sum::<f64>()
                    / 4.0;
                let _ = write!(out, "{avg:>22.4}");
            }
            let _ = writeln!(out, "{:>10.4}", r.mean_value());
        }
        out
    }
}

/// Trains on `train` and evaluates on `test` for every variant with the same
/// seed and budget as `base`.
pub fn ablation_run(
    train_set: &[Sample],
    test_set: &[Sample],
    kg: &KnowledgeGraph,
    provider: &dyn FeatureProvider,
    base: &TrainConfig,
) -> Result<AblationTable, TrainError> {
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for variant in Variant::ALL {
        let config = TrainConfig { variant, ..*base };
        let outcome = train(train_set, kg, provider, &config)?;
        let mut report = evaluate(&outcome.params, test_set, kg, provider, &EvalConfig::from(&config))?;
        report.loss_history = outcome.loss_history;
        rows.push(report);
    }
    Ok(AblationTable { rows })
}

/// Sample ids from a split file: one per line, blank lines and `#` comments
/// ignored.
pub fn parse_split(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// The samples named by `ids`, in `ids` order.
pub fn select_split(samples: &[Sample], ids: &[String]) -> Result<Vec<Sample>, SplitError> {
    let by_id: std::collections::HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    ids.iter()
        .map(|id| by_id.get(id.as_str()).map(|s| (*s).clone()).ok_or_else(|| SplitError::Unknown(id.clone())))
        .collect()
}

/// Fails on the first sample id shared by two splits.
pub fn check_disjoint(splits: &[&[Sample]]) -> Result<(), SplitError> {
    let mut seen = std::collections::HashMap::new();
    for (i, split) in splits.iter().enumerate() {
        for s in split.iter() {
            if let Some(&j) = seen.get(s.id.as_str()) {
                if j != i {
                    return Err(SplitError::Overlap(s.id.clone()));
                }
            }
            seen.insert(s.id.as_str(), i);
        }
    }
    Ok(())
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<(), TrainError> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_generate, HashEmbed, SynthConfig};

    #[test]
    fn f1_hand_cases() {
        assert_eq!(f1_score(&[true, false, true], &[true, false, true]).unwrap(), 1.0);
        // TP=2, FP=1, FN=1
        let preds = [true, true, true, false, false];
        let labels = [true, true, false, true, false];
        assert!((f1_score(&preds, &labels).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(f1_score(&[false, false], &[false, false]).unwrap(), 0.0);
        assert!(matches!(f1_score(&[true], &[true, false]), Err(MetricError::Length { .. })));
        assert_eq!(f1_score(&[], &[]), Err(MetricError::Empty));
    }

    #[test]
    fn mse_hand_case() {
        assert_eq!(mse(&[0.0; 5], &[2.0; 5]).unwrap(), 4.0);
        assert!(mse(&[0.0], &[]).is_err());
    }

    fn tiny() -> (Vec<Sample>, KnowledgeGraph) {
        let out = synth_generate(
            &SynthConfig {
                n_samples: 6,
                dim: 8,
                kg_size: 10,
                ..SynthConfig::default()
            },
            3,
        );
        (out.samples, out.kg)
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (samples, kg) = tiny();
        let mut cfg = TrainConfig::new(Task::Movement, 8);
        cfg.epochs = 0;
        let out = train(&samples[..1], &kg, &HashEmbed::new(8, 0), &cfg).unwrap();
        assert_eq!(out.params, ModelParams::init(cfg.model_config()));
        assert!(out.loss_history.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let (samples, kg) = tiny();
        let p = HashEmbed::new(8, 0);
        let mut cfg = TrainConfig::new(Task::Volatility, 8);
        cfg.epochs = 3;
        let a = train(&samples, &kg, &p, &cfg).unwrap();
        let b = train(&samples, &kg, &p, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(
            a.loss_history.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.loss_history.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn empty_dataset_and_bad_config_rejected() {
        let (samples, kg) = tiny();
        let p = HashEmbed::new(8, 0);
        let cfg = TrainConfig::new(Task::Movement, 8);
        assert!(matches!(train(&[], &kg, &p, &cfg), Err(TrainError::EmptyDataset)));
        let bad = TrainConfig { lr_gcn: 0.0, ..cfg };
        assert!(matches!(train(&samples, &kg, &p, &bad), Err(TrainError::Config(_))));
        let wrong_dim = TrainConfig { dim: 4, ..cfg };
        assert!(matches!(train(&samples, &kg, &p, &wrong_dim), Err(TrainError::Config(_))));
    }

    #[test]
    fn report_schema() {
        let (samples, kg) = tiny();
        let p = HashEmbed::new(8, 0);
        let cfg = TrainConfig::new(Task::Volatility, 8);
        let params = ModelParams::init(cfg.model_config());
        let report = evaluate(&params, &samples, &kg, &p, &EvalConfig::from(&cfg)).unwrap();
        let records = report.records();
        assert_eq!(records.len(), 24);
        assert_eq!(records[9].key, "full/volatility/Gold/3");
        assert!(report.mse().is_some() && report.f1().is_none());
        let parallel = evaluate(&params, &samples, &kg, &p, &EvalConfig { jobs: 4, ..EvalConfig::from(&cfg) }).unwrap();
        assert_eq!(parallel, report);
    }

    #[test]
    fn oracle_predictions() {
        let (mut samples, _) = tiny();
        for s in &mut samples {
            s.labels.movement = Grid::filled(true);
            s.labels.volatility = Grid::filled(2.0);
        }
        let preds: Vec<Prediction> = samples
            .iter()
            .map(|_| Prediction {
                movement_logit: Grid::filled(50.0),
                movement_prob: Grid::filled(1.0),
                volatility: Grid::filled(0.0),
            })
            .collect();
        let f1 = report_from_predictions(Task::Movement, Variant::Full, &samples, &preds);
        assert!(f1.values.values().iter().all(|&v| v == 1.0));
        let m = report_from_predictions(Task::Volatility, Variant::Full, &samples, &preds);
        assert!(m.values.values().iter().all(|&v| v == 4.0));
        assert_eq!(m.values.values().len(), 24);
    }

    #[test]
    fn splits() {
        let (samples, _) = tiny();
        let ids = parse_split(&format!("# train\n{}\n\n{}\n", samples[2].id, samples[0].id));
        let train = select_split(&samples, &ids).unwrap();
        assert_eq!(train[0].id, samples[2].id);
        let test = select_split(&samples, &[samples[1].id.clone()]).unwrap();
        assert!(check_disjoint(&[&train, &test]).is_ok());
        assert_eq!(
            check_disjoint(&[&train, &samples[..1]]),
            Err(SplitError::Overlap(samples[0].id.clone()))
        );
        assert!(matches!(select_split(&samples, &["nope".into()]), Err(SplitError::Unknown(_))));
    }

    #[test]
    fn validation_selection_picks_lowest() {
        let (samples, kg) = tiny();
        let p = HashEmbed::new(8, 0);
        let mut cfg = TrainConfig::new(Task::Volatility, 8);
        cfg.epochs = 4;
        let out = train_with_validation(&samples[..4], Some(&samples[4..]), &kg, &p, &cfg).unwrap();
        assert_eq!(out.validation_history.len(), 4);
        let best = out
            .validation_history
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(out.selected_epoch, best + 1);
    }
}
