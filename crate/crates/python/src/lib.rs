//! Python bindings: knowledge graph queries, datasets, training, evaluation,
//! instruction export and the gradient check.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use manager_core::corpus::{
    load_dataset, synth_generate, write_dataset, CorpusError, FeatureArchive, HashEmbed, LoadOptions, Sample,
    SynthConfig, Task, DEFAULT_MAX_TOKENS,
};
use manager_core::evaluation::{build_graphs, evaluate, predict_all, train, EvalConfig, TrainConfig, TrainError};
use manager_core::graph_builder::{build_graph, Variant, DEFAULT_CAP_PER_ANCHOR};
use manager_core::instruct_export::export_jsonl;
use manager_core::kg_store::{KgError, KnowledgeGraph as CoreKg};
use manager_core::model::{gradient_check as core_gradcheck, ModelConfig, ModelError, ModelParams, DEFAULT_LAYERS};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn corpus_err(e: CorpusError) -> PyErr {
    match e {
        CorpusError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn kg_err(e: KgError) -> PyErr {
    match e {
        KgError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn model_err(e: ModelError) -> PyErr {
    match e {
        ModelError::Io { .. } => PyOSError::new_err(e.to_string()),
        ModelError::Numerics(_) => PyRuntimeError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn train_err(e: TrainError) -> PyErr {
    match e {
        TrainError::Io { .. } => PyOSError::new_err(e.to_string()),
        TrainError::NonFinite { .. } | TrainError::Numerics(_) => PyRuntimeError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| value_err(format!("bad date {s:?}: {e}")))
}

fn parse_task(s: &str) -> PyResult<Task> {
    s.parse().map_err(value_err)
}

fn parse_variant(s: &str) -> PyResult<Variant> {
    s.parse().map_err(value_err)
}

/// Temporal knowledge graph of dated (head, relation, tail) facts.
#[pyclass(module = "manager", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct KnowledgeGraph {
    inner: CoreKg,
}

#[pymethods]
impl KnowledgeGraph {
    #[new]
    fn new() -> Self {
        Self { inner: CoreKg::new() }
    }

    /// Reads a TSV file of `head, relation, tail, YYYY-MM-DD` rows.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        CoreKg::load(path).map(|inner| Self { inner }).map_err(kg_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        CoreKg::parse(text).map(|inner| Self { inner }).map_err(kg_err)
    }

    fn to_tsv(&self) -> String {
        self.inner.to_tsv()
    }

    #[getter]
    fn n_entities(&self) -> usize {
        self.inner.n_entities()
    }

    #[getter]
    fn n_relations(&self) -> usize {
        self.inner.n_relations()
    }

    #[getter]
    fn n_triples(&self) -> usize {
        self.inner.n_triples()
    }

    /// Entities linkable before `cutoff`, as `(name, start, end)` token spans.
    fn link_entities(&self, tokens: Vec<String>, cutoff: &str) -> PyResult<Vec<(String, usize, usize)>> {
        let view = self.inner.view(parse_date(cutoff)?);
        Ok(view
            .link_entities(&tokens)
            .into_iter()
            .map(|m| (self.inner.entity_name(m.entity).to_string(), m.token_span.start, m.token_span.end))
            .collect())
    }

    /// One-hop facts dated before `cutoff` around the entities in `tokens`.
    #[pyo3(signature = (tokens, cutoff, cap_per_anchor = DEFAULT_CAP_PER_ANCHOR))]
    fn retrieve(
        &self,
        tokens: Vec<String>,
        cutoff: &str,
        cap_per_anchor: usize,
    ) -> PyResult<Vec<(String, String, String, String)>> {
        let view = self.inner.view(parse_date(cutoff)?);
        let anchors = view.link_entities(&tokens);
        Ok(view
            .retrieve_knowledge(&anchors, cap_per_anchor)
            .into_iter()
            .map(|p| {
                let t = self.inner.triples()[p.triple_index];
                (
                    self.inner.entity_name(t.head).to_string(),
                    self.inner.relation_name(t.relation).to_string(),
                    self.inner.entity_name(t.tail).to_string(),
                    t.timestamp.format("%Y-%m-%d").to_string(),
                )
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "KnowledgeGraph(entities={}, relations={}, triples={})",
            self.inner.n_entities(),
            self.inner.n_relations(),
            self.inner.n_triples()
        )
    }
}

/// Earnings-call samples with their features and labels.
#[pyclass(module = "manager", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    embed_seed: u64,
}

impl Dataset {
    fn provider(&self) -> HashEmbed {
        HashEmbed::new(self.dim, self.embed_seed)
    }
}

#[pymethods]
impl Dataset {
    /// Loads JSON-lines transcripts, with video/audio rows from an optional
    /// feature archive whose width sets `d`.
    #[staticmethod]
    #[pyo3(signature = (path, d = None, features = None, max_tokens = DEFAULT_MAX_TOKENS, embed_seed = 0))]
    fn load(
        path: &str,
        d: Option<usize>,
        features: Option<&str>,
        max_tokens: usize,
        embed_seed: u64,
    ) -> PyResult<Self> {
        let archive = features.map(FeatureArchive::load).transpose().map_err(corpus_err)?;
        let dim = d
            .or(archive.as_ref().map(FeatureArchive::dim))
            .ok_or_else(|| value_err("give d or a feature archive"))?;
        let opts = LoadOptions {
            dim,
            max_tokens,
            embed_seed,
        };
        let samples = load_dataset(path, archive.as_ref(), &opts).map_err(corpus_err)?;
        Ok(Self {
            samples,
            dim,
            embed_seed,
        })
    }

    /// Synthetic benchmark; returns `(dataset, knowledge_graph)`.
    #[staticmethod]
    #[pyo3(signature = (n = 200, d = 16, seed = 0, plant_knowledge = true, kg_size = 60))]
    fn synth(n: usize, d: usize, seed: u64, plant_knowledge: bool, kg_size: usize) -> PyResult<(Self, KnowledgeGraph)> {
        if n == 0 || d == 0 || kg_size == 0 {
            return Err(value_err("n, d and kg_size must be positive"));
        }
        let cfg = SynthConfig {
            n_samples: n,
            dim: d,
            kg_size,
            plant_knowledge_signal: plant_knowledge,
            ..SynthConfig::default()
        };
        let out = synth_generate(&cfg, seed);
        Ok((
            Self {
                samples: out.samples,
                dim: d,
                embed_seed: cfg.embed_seed,
            },
            KnowledgeGraph { inner: out.kg },
        ))
    }

    /// Writes the transcripts and labels as JSON lines.
    fn write(&self, path: &str) -> PyResult<()> {
        write_dataset(&self.samples, path).map_err(corpus_err)
    }

    /// Samples `[start, end)` as a new dataset.
    fn slice(&self, start: usize, end: usize) -> PyResult<Self> {
        if start > end || end > self.samples.len() {
            return Err(value_err(format!("bad range {start}..{end} for {} samples", self.samples.len())));
        }
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            ..self.clone()
        })
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.dim
    }

    /// Utterance token lists of sample `index`.
    fn utterances(&self, index: usize) -> PyResult<Vec<Vec<String>>> {
        self.samples
            .get(index)
            .map(|s| s.utterances.clone())
            .ok_or_else(|| value_err(format!("no sample {index}")))
    }

    /// Text dump of the cross-modal graph of sample `index`.
    #[pyo3(signature = (kg, index, variant = "full", cap_per_anchor = DEFAULT_CAP_PER_ANCHOR))]
    fn graph_dump(&self, kg: &KnowledgeGraph, index: usize, variant: &str, cap_per_anchor: usize) -> PyResult<String> {
        let s = self.samples.get(index).ok_or_else(|| value_err(format!("no sample {index}")))?;
        let g = build_graph(
            s,
            &kg.inner.view(s.call_date),
            &self.provider(),
            parse_variant(variant)?,
            cap_per_anchor,
        )
        .map_err(value_err)?;
        Ok(g.dump(s, &kg.inner))
    }

    /// Writes instruction-tuning records and returns how many.
    #[pyo3(signature = (kg, path, task = "movement", cap_per_anchor = DEFAULT_CAP_PER_ANCHOR))]
    fn export_instructions(&self, kg: &KnowledgeGraph, path: &str, task: &str, cap_per_anchor: usize) -> PyResult<usize> {
        export_jsonl(&self.samples, &kg.inner, parse_task(task)?, cap_per_anchor, None, path).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.samples.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(samples={}, d={})", self.samples.len(), self.dim)
    }
}

/// Graph convolution encoder with movement and volatility heads.
#[pyclass(module = "manager", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Model {
    params: ModelParams,
    loss_history: Vec<f64>,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (d, layers = DEFAULT_LAYERS, seed = 0))]
    fn new(d: usize, layers: usize, seed: u64) -> PyResult<Self> {
        if d == 0 || layers == 0 {
            return Err(value_err("d and layers must be positive"));
        }
        Ok(Self {
            params: ModelParams::init(ModelConfig { layers, dim: d, seed }),
            loss_history: Vec::new(),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        ModelParams::load(path)
            .map(|params| Self {
                params,
                loss_history: Vec::new(),
            })
            .map_err(model_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.params.save(path).map_err(model_err)
    }

    /// Trains a fresh model; `lr_task` defaults to the task's usual rate.
    #[staticmethod]
    #[pyo3(signature = (
        data, kg, task = "movement", epochs = 10, seed = 0, layers = DEFAULT_LAYERS,
        lr_gcn = 1e-3, lr_task = None, weight_decay = 0.01, variant = "full",
        cap_per_anchor = DEFAULT_CAP_PER_ANCHOR
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        data: &Dataset,
        kg: &KnowledgeGraph,
        task: &str,
        epochs: usize,
        seed: u64,
        layers: usize,
        lr_gcn: f64,
        lr_task: Option<f64>,
        weight_decay: f64,
        variant: &str,
        cap_per_anchor: usize,
    ) -> PyResult<Self> {
        let mut cfg = TrainConfig::new(parse_task(task)?, data.dim);
        cfg.epochs = epochs;
        cfg.seed = seed;
        cfg.layers = layers;
        cfg.lr_gcn = lr_gcn;
        if let Some(lr) = lr_task {
            cfg.lr_task = lr;
        }
        cfg.weight_decay = weight_decay;
        cfg.variant = parse_variant(variant)?;
        cfg.cap_per_anchor = cap_per_anchor;
        let outcome = train(&data.samples, &kg.inner, &data.provider(), &cfg).map_err(train_err)?;
        Ok(Self {
            params: outcome.params,
            loss_history: outcome.loss_history,
        })
    }

    /// Per-cell metric (F1 or MSE) keyed `<asset>:<days>`, plus `"mean"`.
    #[pyo3(signature = (data, kg, task = "movement", variant = "full", cap_per_anchor = DEFAULT_CAP_PER_ANCHOR, jobs = 1))]
    fn evaluate(
        &self,
        data: &Dataset,
        kg: &KnowledgeGraph,
        task: &str,
        variant: &str,
        cap_per_anchor: usize,
        jobs: usize,
    ) -> PyResult<BTreeMap<String, f64>> {
        let ec = EvalConfig {
            task: parse_task(task)?,
            variant: parse_variant(variant)?,
            cap_per_anchor,
            jobs,
        };
        let report = evaluate(&self.params, &data.samples, &kg.inner, &data.provider(), &ec).map_err(train_err)?;
        let mut out: BTreeMap<String, f64> = report.values.iter().map(|(k, &v)| (k.to_string(), v)).collect();
        out.insert("mean".into(), report.mean_value());
        Ok(out)
    }

    /// Per sample, `(movement_logits, volatility)` in asset-major key order.
    #[pyo3(signature = (data, kg, variant = "full", cap_per_anchor = DEFAULT_CAP_PER_ANCHOR))]
    fn predict(
        &self,
        data: &Dataset,
        kg: &KnowledgeGraph,
        variant: &str,
        cap_per_anchor: usize,
    ) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
        let graphs = build_graphs(&data.samples, &kg.inner, &data.provider(), parse_variant(variant)?, cap_per_anchor)
            .map_err(value_err)?;
        let preds = predict_all(&graphs, &self.params, 1).map_err(model_err)?;
        Ok(preds
            .into_iter()
            .map(|p| (p.movement_logit.values().to_vec(), p.volatility.values().to_vec()))
            .collect())
    }

    #[getter]
    fn loss_history(&self) -> Vec<f64> {
        self.loss_history.clone()
    }

    #[getter]
    fn d(&self) -> usize {
        self.params.config.dim
    }

    #[getter]
    fn layers(&self) -> usize {
        self.params.config.layers
    }

    fn __repr__(&self) -> String {
        format!("Model(d={}, layers={})", self.params.config.dim, self.params.config.layers)
    }
}

/// Worst relative error between analytic and central-difference gradients
/// over both task losses on a small synthetic instance. Instances whose
/// difference window crosses a ReLU kink are redrawn.
#[pyfunction]
#[pyo3(signature = (seed = 0, d = 8, layers = DEFAULT_LAYERS, h = 1e-5))]
fn gradient_check(seed: u64, d: usize, layers: usize, h: f64) -> PyResult<f64> {
    if d == 0 || layers == 0 || !(h > 0.0) {
        return Err(value_err("d, layers and h must be positive"));
    }
    let cfg = SynthConfig {
        n_samples: 1,
        dim: d,
        kg_size: 8,
        ..SynthConfig::default()
    };
    for redraw in 0..100u64 {
        let s = seed.wrapping_add(redraw);
        let out = synth_generate(&cfg, s);
        let sample = &out.samples[0];
        let graph = build_graph(
            sample,
            &out.kg.view(sample.call_date),
            &HashEmbed::new(d, 0),
            Variant::Full,
            DEFAULT_CAP_PER_ANCHOR,
        )
        .map_err(value_err)?;
        let params = ModelParams::init(ModelConfig { layers, dim: d, seed: s });
        let mut worst = 0.0f64;
        let mut kinked = false;
        for task in [Task::Movement, Task::Volatility] {
            let r = core_gradcheck(&graph, &params, &sample.labels, task, h).map_err(model_err)?;
            kinked |= r.kink_coordinates > 0;
            worst = worst.max(r.worst());
        }
        if !kinked {
            return Ok(worst);
        }
    }
    Err(PyRuntimeError::new_err("every instance straddled a ReLU kink"))
}

#[pymodule]
fn manager(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<KnowledgeGraph>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    Ok(())
}
