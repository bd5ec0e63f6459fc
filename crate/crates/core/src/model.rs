//! GCN stack over the cross-modal graph with pooled multi-asset heads.
//!
//! Each layer computes `G_l = ReLU(Ã · G_{l-1} · W_l)` starting from the node
//! features. The readout averages the token rows of `G_L` (all rows when a
//! variant has no tokens) and two linear heads map the pooled vector to 24
//! movement logits and 24 volatility values, one per (asset, horizon).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Grid, Labels, Task, TaskKey, N_KEYS};
use crate::graph_builder::CrossModalGraph;
use crate::numerics::{
    bce_loss, finite_diff_check_by, mse_loss, relu, relu_backward, sigmoid, Coordinates, Dd, Matrix, NumericsError,
};

pub const DEFAULT_LAYERS: usize = 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0}")]
    Dimension(String),
    #[error("forward cache does not belong to these parameters and graph")]
    StaleCache,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub layers: usize,
    pub dim: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub gcn_weights: Vec<Matrix>,
    pub movement_head: Matrix,
    pub movement_bias: Vec<f64>,
    pub volatility_head: Matrix,
    pub volatility_bias: Vec<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

impl ModelParams {
    /// Glorot-uniform weights from a seeded generator, zero biases.
    ///
    /// Panics if `layers` or `dim` is zero.
    pub fn init(config: ModelConfig) -> Self {
        assert!(config.layers >= 1 && config.dim >= 1, "layers and dim must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gcn_weights = (0..config.layers)
            .map(|_| glorot(&mut rng, config.dim, config.dim))
            .collect();
        let movement_head = glorot(&mut rng, config.dim, N_KEYS);
        let volatility_head = glorot(&mut rng, config.dim, N_KEYS);
        Self {
            config,
            gcn_weights,
            movement_head,
            movement_bias: vec![0.0; N_KEYS],
            volatility_head,
            volatility_bias: vec![0.0; N_KEYS],
        }
    }

    /// Parameter tensors in declaration order: GCN weights, movement head,
    /// movement bias, volatility head, volatility bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.gcn_weights.iter().map(Matrix::data).collect();
        out.push(self.movement_head.data());
        out.push(&self.movement_bias);
        out.push(self.volatility_head.data());
        out.push(&self.volatility_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.gcn_weights.iter_mut().map(Matrix::data_mut).collect();
        out.push(self.movement_head.data_mut());
        out.push(&mut self.movement_bias);
        out.push(self.volatility_head.data_mut());
        out.push(&mut self.volatility_bias);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.config.layers as u32).to_le_bytes());
        out.extend_from_slice(&(self.config.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        let shapes = self.shapes();
        for (t, (r, c)) in self.tensors().into_iter().zip(shapes) {
            out.extend_from_slice(&(r as u32).to_le_bytes());
            out.extend_from_slice(&(c as u32).to_le_bytes());
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], ModelError> {
            let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated"))?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic, expected MGRP"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
        let layers = u32_at(take(4)?);
        let dim = u32_at(take(4)?);
        let seed = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        if layers == 0 || dim == 0 {
            return Err(bad("layers and dim must be positive"));
        }
        let expected = (|| {
            let square = dim.checked_mul(dim)?.checked_mul(8)?.checked_add(8)?;
            let head = dim.checked_mul(N_KEYS * 8)?.checked_add(8 + 8 + N_KEYS * 8)?;
            square.checked_mul(layers)?.checked_add(2 * head)?.checked_add(20)
        })();
        if expected != Some(bytes.len()) {
            return Err(bad("size does not match the declared layers and dim"));
        }
        let config = ModelConfig { layers, dim, seed };
        let mut params = ModelParams::init(config);
        let shapes = params.shapes();
        for (t, (r, c)) in params.tensors_mut().into_iter().zip(shapes) {
            let (fr, fc) = (u32_at(take(4)?), u32_at(take(4)?));
            if (fr, fc) != (r, c) {
                return Err(ModelError::Checkpoint(format!(
                    "tensor shape {fr}x{fc}, expected {r}x{c}"
                )));
            }
            for (v, chunk) in t.iter_mut().zip(take(r * c * 8)?.chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        let d = self.config.dim;
        let mut s = vec![(d, d); self.config.layers];
        s.extend([(d, N_KEYS), (1, N_KEYS), (d, N_KEYS), (1, N_KEYS)]);
        s
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"MGRP";

/// Gradients laid out like [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub gcn_weights: Vec<Matrix>,
    pub movement_head: Matrix,
    pub movement_bias: Vec<f64>,
    pub volatility_head: Matrix,
    pub volatility_bias: Vec<f64>,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.gcn_weights.iter().map(Matrix::data).collect();
        out.push(self.movement_head.data());
        out.push(&self.movement_bias);
        out.push(self.volatility_head.data());
        out.push(&self.volatility_bias);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub movement_logit: Grid<f64>,
    pub movement_prob: Grid<f64>,
    pub volatility: Grid<f64>,
}

impl Prediction {
    /// Movement decisions at the 0.5 threshold.
    pub fn movement_up(&self) -> Grid<bool> {
        Grid::from_fn(|k| *self.movement_prob.get(k) > 0.5)
    }
}

/// Intermediates retained for [`backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `Ã · G_{l-1}`.
    propagated: Vec<Matrix>,
    /// `Ã · G_{l-1} · W_l`, before the ReLU.
    preactivations: Vec<Matrix>,
    readout_rows: Vec<usize>,
    pooled: Vec<f64>,
    params_fingerprint: u64,
    graph_key: (String, usize, usize),
}

impl ForwardCache {
    /// Per-layer inputs to the ReLU.
    pub fn preactivations(&self) -> &[Matrix] {
        &self.preactivations
    }

    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Final node representations `G_L`.
    pub nodes: Matrix,
    pub prediction: Prediction,
    pub cache: ForwardCache,
}

fn graph_key(graph: &CrossModalGraph) -> (String, usize, usize) {
    (graph.sample_id.clone(), graph.n_nodes(), graph.norm_adjacency.nnz())
}

pub fn forward(graph: &CrossModalGraph, params: &ModelParams) -> Result<ForwardOutput, ModelError> {
    let dim = params.config.dim;
    if graph.features.cols() != dim {
        return Err(ModelError::Dimension(format!(
            "graph features have width {}, model width is {dim}",
            graph.features.cols()
        )));
    }
    let layers = params.gcn_weights.len();
    let mut propagated = Vec::with_capacity(layers);
    let mut preactivations = Vec::with_capacity(layers);
    let mut g = graph.features.clone();
    for w in &params.gcn_weights {
        let p = graph.norm_adjacency.mul_dense(&g)?;
        let z = p.matmul(w)?;
        let next = relu(&z);
        propagated.push(p);
        preactivations.push(z);
        g = next;
    }

    let readout_rows = graph.readout_nodes();
    let scale = 1.0 / readout_rows.len() as f64;
    let mut pooled = vec![0.0; dim];
    for &r in &readout_rows {
        for (acc, v) in pooled.iter_mut().zip(g.row(r)) {
            *acc += v;
        }
    }
    pooled.iter_mut().for_each(|v| *v *= scale);

    let head = |w: &Matrix, b: &[f64]| -> Vec<f64> {
        (0..N_KEYS)
            .map(|k| b[k] + (0..dim).map(|i| pooled[i] * w.get(i, k)).sum::<f64>())
            .collect()
    };
    let logits = head(&params.movement_head, &params.movement_bias);
    let vol = head(&params.volatility_head, &params.volatility_bias);
    let prediction = Prediction {
        movement_prob: Grid::from_fn(|k| sigmoid(logits[k.index()])),
        movement_logit: Grid::from_fn(|k| logits[k.index()]),
        volatility: Grid::from_fn(|k| vol[k.index()]),
    };
    Ok(ForwardOutput {
        nodes: g,
        prediction,
        cache: ForwardCache {
            propagated,
            preactivations,
            readout_rows,
            pooled,
            params_fingerprint: params.fingerprint(),
            graph_key: graph_key(graph),
        },
    })
}

/// Loss gradients with respect to the 24 movement logits and the 24
/// volatility outputs. A task that is not being trained passes zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Upstream {
    pub movement: Vec<f64>,
    pub volatility: Vec<f64>,
}

impl Upstream {
    pub fn zeros() -> Self {
        Self {
            movement: vec![0.0; N_KEYS],
            volatility: vec![0.0; N_KEYS],
        }
    }

    pub fn movement(grad: Vec<f64>) -> Self {
        Self {
            movement: grad,
            ..Self::zeros()
        }
    }

    pub fn volatility(grad: Vec<f64>) -> Self {
        Self {
            volatility: grad,
            ..Self::zeros()
        }
    }
}

/// Reverse pass through the heads, the readout and every GCN layer.
pub fn backward(
    graph: &CrossModalGraph,
    params: &ModelParams,
    cache: &ForwardCache,
    upstream: &Upstream,
) -> Result<Gradients, ModelError> {
    if cache.params_fingerprint != params.fingerprint() || cache.graph_key != graph_key(graph) {
        return Err(ModelError::StaleCache);
    }
    if upstream.movement.len() != N_KEYS || upstream.volatility.len() != N_KEYS {
        return Err(ModelError::Dimension("upstream gradients must have 24 entries".into()));
    }
    let dim = params.config.dim;
    let pooled = Matrix::from_vec(1, dim, cache.pooled.clone())?;
    let d_logits = Matrix::from_vec(1, N_KEYS, upstream.movement.clone())?;
    let d_vol = Matrix::from_vec(1, N_KEYS, upstream.volatility.clone())?;

    let movement_head = pooled.t_matmul(&d_logits)?;
    let volatility_head = pooled.t_matmul(&d_vol)?;
    let d_pooled = d_logits
        .matmul_t(&params.movement_head)?
        .add(&d_vol.matmul_t(&params.volatility_head)?)?;

    let n = graph.n_nodes();
    let mut d_g = Matrix::zeros(n, dim);
    let scale = 1.0 / cache.readout_rows.len() as f64;
    for &r in &cache.readout_rows {
        for (o, v) in d_g.row_mut(r).iter_mut().zip(d_pooled.data()) {
            *o = v * scale;
        }
    }

    let layers = params.gcn_weights.len();
    let mut gcn = vec![Matrix::zeros(dim, dim); layers];
    for l in (0..layers).rev() {
        let d_z = relu_backward(&cache.preactivations[l], &d_g)?;
        gcn[l] = cache.propagated[l].t_matmul(&d_z)?;
        if l > 0 {
            let d_p = d_z.matmul_t(&params.gcn_weights[l])?;
            d_g = graph.norm_adjacency.transpose_mul_dense(&d_p)?;
        }
    }

    Ok(Gradients {
        gcn_weights: gcn,
        movement_head,
        movement_bias: upstream.movement.clone(),
        volatility_head,
        volatility_bias: upstream.volatility.clone(),
    })
}

/// Mean BCE over the 24 movement logits, with its gradient.
pub fn movement_loss(pred: &Prediction, labels: &Labels) -> (f64, Vec<f64>) {
    let targets: Vec<f64> = TaskKey::all()
        .map(|k| if *labels.movement.get(k) { 1.0 } else { 0.0 })
        .collect();
    bce_loss(pred.movement_logit.values(), &targets)
}

/// Mean squared error over the 24 volatility outputs, with its gradient.
pub fn volatility_loss(pred: &Prediction, labels: &Labels) -> (f64, Vec<f64>) {
    mse_loss(pred.volatility.values(), labels.volatility.values())
}

/// Loss of one task and its gradient with respect to that task's outputs.
pub fn loss_and_upstream(task: Task, pred: &Prediction, labels: &Labels) -> (f64, Upstream) {
    match task {
        Task::Movement => {
            let (l, g) = movement_loss(pred, labels);
            (l, Upstream::movement(g))
        }
        Task::Volatility => {
            let (l, g) = volatility_loss(pred, labels);
            (l, Upstream::volatility(g))
        }
    }
}

/// Head outputs and ReLU activation pattern from a double-double forward
/// pass; only used to difference nearby parameter vectors.
struct PreciseOutputs {
    logits: Vec<Dd>,
    volatility: Vec<Dd>,
    active: Vec<bool>,
}

fn forward_precise(graph: &CrossModalGraph, params: &ModelParams) -> PreciseOutputs {
    let n = graph.n_nodes();
    let dim = params.config.dim;
    let mut g: Vec<Dd> = graph.features.data().iter().map(|&v| Dd::from(v)).collect();
    let mut active = Vec::new();
    for w in &params.gcn_weights {
        let mut p = vec![Dd::ZERO; n * dim];
        for r in 0..n {
            for (c, a) in graph.norm_adjacency.row(r) {
                for k in 0..dim {
                    p[r * dim + k] = p[r * dim + k] + g[c * dim + k].mul_f64(a);
                }
            }
        }
        let mut next = vec![Dd::ZERO; n * dim];
        for r in 0..n {
            for k in 0..dim {
                let mut z = Dd::ZERO;
                for m in 0..dim {
                    z = z + p[r * dim + m].mul_f64(w.get(m, k));
                }
                let on = z.is_positive();
                active.push(on);
                if on {
                    next[r * dim + k] = z;
                }
            }
        }
        g = next;
    }
    let rows = graph.readout_nodes();
    let pooled: Vec<Dd> = (0..dim)
        .map(|k| {
            rows.iter()
                .fold(Dd::ZERO, |acc, &r| acc + g[r * dim + k])
                .div_f64(rows.len() as f64)
        })
        .collect();
    let head = |w: &Matrix, b: &[f64]| -> Vec<Dd> {
        (0..N_KEYS)
            .map(|c| (0..dim).fold(Dd::from(b[c]), |acc, i| acc + pooled[i].mul_f64(w.get(i, c))))
            .collect()
    };
    PreciseOutputs {
        logits: head(&params.movement_head, &params.movement_bias),
        volatility: head(&params.volatility_head, &params.volatility_bias),
        active,
    }
}

/// `loss(up) − loss(down)` without cancellation: BCE differences use
/// `log1p(σ(b)·expm1(a − b))`, squared errors factor as `δ·(a + b − 2t)`.
fn loss_difference(task: Task, up: &PreciseOutputs, down: &PreciseOutputs, labels: &Labels) -> f64 {
    let total: f64 = match task {
        Task::Movement => TaskKey::all()
            .map(|k| {
                let (a, b) = (up.logits[k.index()], down.logits[k.index()]);
                let delta = (a - b).to_f64();
                let y = if *labels.movement.get(k) { 1.0 } else { 0.0 };
                (sigmoid(b.to_f64()) * delta.exp_m1()).ln_1p() - y * delta
            })
            .sum(),
        Task::Volatility => TaskKey::all()
            .map(|k| {
                let (a, b) = (up.volatility[k.index()], down.volatility[k.index()]);
                let t = Dd::from(*labels.volatility.get(k));
                ((a - b) * (a + b - t - t)).to_f64()
            })
            .sum(),
    };
    total / N_KEYS as f64
}

/// Outcome of [`gradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    /// Worst relative error per tensor, in [`ModelParams::tensors`] order.
    pub max_rel_error: Vec<f64>,
    /// Probed coordinates whose ±h window flips some ReLU. Central
    /// differences are meaningless there, so a usable instance has none.
    pub kink_coordinates: usize,
}

impl GradientCheck {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares the analytic gradient of one task loss with central differences
/// over every parameter coordinate.
///
/// The two perturbed losses are differenced in double-double precision so
/// that tiny gradient coordinates are not lost to rounding of the loss.
pub fn gradient_check(
    graph: &CrossModalGraph,
    params: &ModelParams,
    labels: &Labels,
    task: Task,
    h: f64,
) -> Result<GradientCheck, ModelError> {
    let out = forward(graph, params)?;
    let (_, upstream) = loss_and_upstream(task, &out.prediction, labels);
    let grads = backward(graph, params, &out.cache, &upstream)?;
    let base_active = forward_precise(graph, params).active;
    let analytic = grads.tensors();
    let originals: Vec<Vec<f64>> = params.tensors().iter().map(|t| t.to_vec()).collect();
    let mut max_rel_error = Vec::with_capacity(originals.len());
    let mut kink_coordinates = 0;
    for (t, original) in originals.iter().enumerate() {
        let mut p_up = params.clone();
        let mut p_down = params.clone();
        let diff = |up: &[f64], down: &[f64]| {
            p_up.tensors_mut()[t].copy_from_slice(up);
            p_down.tensors_mut()[t].copy_from_slice(down);
            let (u, d) = (forward_precise(graph, &p_up), forward_precise(graph, &p_down));
            if u.active != base_active || d.active != base_active {
                kink_coordinates += 1;
            }
            loss_difference(task, &u, &d, labels)
        };
        max_rel_error.push(finite_diff_check_by(diff, original, analytic[t], h, Coordinates::All));
    }
    Ok(GradientCheck {
        max_rel_error,
        kink_coordinates,
    })
}
