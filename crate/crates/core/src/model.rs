//! Runtime predictor: a GraphSAGE encoder with mean aggregation and global
//! mean pooling, whose circuit embedding is concatenated with the static
//! feature vector and the configuration bits and fed to an MLP head.
//!
//! Gradients are computed by hand-written reverse mode over the whole
//! network. The training objective is a weighted sum of log-runtime MSE and a
//! pairwise hinge ranking term over same-circuit pairs.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{FeatureNormalizer, NUM_FEATURES};
use crate::graphdata::{GraphData, NODE_FEATURES};
use crate::params::{PdrConfig, NUM_FLAGS};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("invalid configuration {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Layer widths of the encoder and the head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    /// `[input, hidden..., embedding]`
    pub sage_dims: Vec<usize>,
    /// `[embedding + 11 + 9, hidden..., 1]`
    pub head_dims: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::new(&[NODE_FEATURES, 64, 64, 64], &[64, 32])
    }
}

impl Architecture {
    /// Builds an architecture from encoder widths and the hidden widths of
    /// the head; the head input and scalar output are derived.
    pub fn new(sage_dims: &[usize], head_hidden: &[usize]) -> Architecture {
        let embed = *sage_dims.last().expect("at least one encoder width");
        let mut head_dims = vec![embed + NUM_FEATURES + NUM_FLAGS];
        head_dims.extend_from_slice(head_hidden);
        head_dims.push(1);
        Architecture { sage_dims: sage_dims.to_vec(), head_dims }
    }

    fn validate(&self) -> Result<()> {
        if self.sage_dims.len() < 2 || self.sage_dims[0] != NODE_FEATURES {
            return Err(ModelError::Dimension(format!("encoder widths {:?}", self.sage_dims)));
        }
        let embed = *self.sage_dims.last().unwrap();
        if self.head_dims.len() < 2 || self.head_dims[0] != embed + NUM_FEATURES + NUM_FLAGS || *self.head_dims.last().unwrap() != 1 {
            return Err(ModelError::Dimension(format!("head widths {:?}", self.head_dims)));
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        *self.sage_dims.last().unwrap()
    }
}

/// `relu(x W_self + mean_{j in N(i)} x_j W_neigh + b)`
#[derive(Debug, Clone, PartialEq)]
pub struct SageLayer {
    pub w_self: Array2<f64>,
    pub w_neigh: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit))
}

/// Node features plus in-neighbour lists, prepared once per circuit.
#[derive(Debug, Clone)]
pub struct GraphTensor {
    pub x: Array2<f64>,
    pub neighbors: Vec<Vec<u32>>,
}

impl GraphTensor {
    pub fn new(g: &GraphData) -> GraphTensor {
        let x = Array2::from_shape_vec((g.num_nodes, NODE_FEATURES), g.node_features.clone()).expect("feature matrix matches node count");
        GraphTensor { x, neighbors: g.in_neighbors() }
    }

    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }
}

impl From<&GraphData> for GraphTensor {
    fn from(g: &GraphData) -> Self {
        GraphTensor::new(g)
    }
}

/// Row `i` is the mean of the rows of `x` at the in-neighbours of `i`; zero
/// for nodes without in-neighbours.
fn mean_aggregate(neighbors: &[Vec<u32>], x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((neighbors.len(), x.ncols()));
    for (i, nbrs) in neighbors.iter().enumerate() {
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        let mut row = out.row_mut(i);
        for &j in nbrs {
            row.scaled_add(inv, &x.row(j as usize));
        }
    }
    out
}

/// Adjoint of [`mean_aggregate`].
fn mean_aggregate_adjoint(neighbors: &[Vec<u32>], g: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((neighbors.len(), g.ncols()));
    for (i, nbrs) in neighbors.iter().enumerate() {
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        for &j in nbrs {
            out.row_mut(j as usize).scaled_add(inv, &g.row(i));
        }
    }
    out
}

fn relu_in_place(z: &mut Array2<f64>) {
    z.mapv_inplace(|v| v.max(0.0));
}

impl SageLayer {
    pub fn forward(&self, graph: &GraphTensor, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != graph.num_nodes() || x.ncols() != self.w_self.nrows() {
            return Err(ModelError::Dimension(format!(
                "layer expects {} x {}, got {} x {}",
                graph.num_nodes(),
                self.w_self.nrows(),
                x.nrows(),
                x.ncols()
            )));
        }
        let agg = mean_aggregate(&graph.neighbors, x);
        let mut z = x.dot(&self.w_self) + agg.dot(&self.w_neigh) + &self.bias;
        relu_in_place(&mut z);
        Ok(z)
    }
}

/// One GraphSAGE layer applied to `x`.
pub fn sage_forward(layer: &SageLayer, graph: &GraphTensor, x: &Array2<f64>) -> Result<Array2<f64>> {
    layer.forward(graph, x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorNet {
    pub arch: Architecture,
    pub sage: Vec<SageLayer>,
    pub head: Vec<Dense>,
}

/// Forward intermediates of the encoder.
struct EncoderTrace {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    aggregates: Vec<Array2<f64>>,
    /// Post-activation output of each layer.
    outputs: Vec<Array2<f64>>,
    embedding: Array1<f64>,
}

/// Forward intermediates of the head for a block of rows.
struct HeadTrace {
    /// Input to each dense layer (post-activation of the previous one).
    inputs: Vec<Array2<f64>>,
    output: Array1<f64>,
}

impl PredictorNet {
    pub fn new(arch: Architecture, seed: u64) -> Result<PredictorNet> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sage = arch
            .sage_dims
            .windows(2)
            .map(|w| SageLayer { w_self: glorot(&mut rng, w[0], w[1]), w_neigh: glorot(&mut rng, w[0], w[1]), bias: Array1::zeros(w[1]) })
            .collect();
        let head = arch.head_dims.windows(2).map(|w| Dense { weight: glorot(&mut rng, w[0], w[1]), bias: Array1::zeros(w[1]) }).collect();
        Ok(PredictorNet { arch, sage, head })
    }

    pub fn with_default_arch(seed: u64) -> PredictorNet {
        PredictorNet::new(Architecture::default(), seed).expect("default architecture is valid")
    }

    /// Same shape, all parameters zero.
    pub fn zeros_like(&self) -> PredictorNet {
        let mut z = self.clone();
        z.for_each_param_mut(|p| *p = 0.0);
        z
    }

    fn tensors(&self) -> Vec<ndarray::ArrayView<'_, f64, ndarray::IxDyn>> {
        let mut out = Vec::new();
        for l in &self.sage {
            out.push(l.w_self.view().into_dyn());
            out.push(l.w_neigh.view().into_dyn());
            out.push(l.bias.view().into_dyn());
        }
        for d in &self.head {
            out.push(d.weight.view().into_dyn());
            out.push(d.bias.view().into_dyn());
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<ndarray::ArrayViewMut<'_, f64, ndarray::IxDyn>> {
        let mut out = Vec::new();
        for l in &mut self.sage {
            out.push(l.w_self.view_mut().into_dyn());
            out.push(l.w_neigh.view_mut().into_dyn());
            out.push(l.bias.view_mut().into_dyn());
        }
        for d in &mut self.head {
            out.push(d.weight.view_mut().into_dyn());
            out.push(d.bias.view_mut().into_dyn());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameters in a fixed order: per encoder layer `w_self, w_neigh,
    /// bias`, then per head layer `weight, bias`, each row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend(t.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(ModelError::Dimension(format!("expected {} parameters, got {}", self.num_params(), flat.len())));
        }
        let mut it = flat.iter();
        self.for_each_param_mut(|p| *p = *it.next().unwrap());
        Ok(())
    }

    fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for mut t in self.tensors_mut() {
            t.iter_mut().for_each(&mut f);
        }
    }

    /// Mutable access to the parameter at flat index `idx`.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if idx < t.len() {
                let slice = t.into_slice().expect("owned arrays are contiguous");
                return &mut slice[idx];
            }
            idx -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn add_assign(&mut self, other: &PredictorNet) {
        for (mut a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a += &b;
        }
    }

    fn encode_traced(&self, graph: &GraphTensor) -> Result<EncoderTrace> {
        if graph.num_nodes() == 0 {
            return Err(ModelError::EmptyGraph);
        }
        let mut inputs = Vec::with_capacity(self.sage.len());
        let mut aggregates = Vec::with_capacity(self.sage.len());
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.sage.len());
        let mut x = graph.x.clone();
        for layer in &self.sage {
            if x.ncols() != layer.w_self.nrows() {
                return Err(ModelError::Dimension("encoder input width".into()));
            }
            let agg = mean_aggregate(&graph.neighbors, &x);
            let mut z = x.dot(&layer.w_self) + agg.dot(&layer.w_neigh) + &layer.bias;
            relu_in_place(&mut z);
            inputs.push(x);
            aggregates.push(agg);
            x = z.clone();
            outputs.push(z);
        }
        let embedding = x.mean_axis(Axis(0)).expect("non-empty graph");
        Ok(EncoderTrace { inputs, aggregates, outputs, embedding })
    }

    /// Circuit embedding: mean over nodes of the last encoder layer.
    pub fn encode(&self, graph: &GraphTensor) -> Result<Array1<f64>> {
        Ok(self.encode_traced(graph)?.embedding)
    }

    /// Head input rows `[embedding, features, config bits]`.
    fn head_input(&self, embedding: ArrayView1<f64>, features: &[f64; NUM_FEATURES], configs: &[PdrConfig]) -> Array2<f64> {
        let e = embedding.len();
        let mut rows = Array2::zeros((configs.len(), e + NUM_FEATURES + NUM_FLAGS));
        for (r, c) in configs.iter().enumerate() {
            let mut row = rows.row_mut(r);
            row.slice_mut(s![..e]).assign(&embedding);
            for (k, v) in features.iter().enumerate() {
                row[e + k] = *v;
            }
            for (k, v) in c.as_vector().iter().enumerate() {
                row[e + NUM_FEATURES + k] = *v;
            }
        }
        rows
    }

    fn head_traced(&self, input: Array2<f64>) -> HeadTrace {
        let mut inputs = Vec::with_capacity(self.head.len());
        let mut x = input;
        let last = self.head.len() - 1;
        for (k, layer) in self.head.iter().enumerate() {
            let mut z = x.dot(&layer.weight) + &layer.bias;
            if k < last {
                relu_in_place(&mut z);
            }
            inputs.push(x);
            x = z;
        }
        HeadTrace { inputs, output: x.column(0).to_owned() }
    }

    /// Predicted log-runtime of every configuration from a precomputed
    /// embedding.
    pub fn predict_from_embedding(&self, embedding: ArrayView1<f64>, features: &[f64; NUM_FEATURES], configs: &[PdrConfig]) -> Vec<f64> {
        let input = self.head_input(embedding, features, configs);
        self.head_traced(input).output.to_vec()
    }

    pub fn predict_many(&self, graph: &GraphTensor, features: &[f64; NUM_FEATURES], configs: &[PdrConfig]) -> Result<Vec<f64>> {
        if let Some(bad) = configs.iter().find(|c| !c.is_valid()) {
            return Err(ModelError::InvalidConfig(bad.to_bit_string()));
        }
        let embedding = self.encode(graph)?;
        Ok(self.predict_from_embedding(embedding.view(), features, configs))
    }

    pub fn predict_log_runtime(&self, graph: &GraphTensor, features: &[f64; NUM_FEATURES], config: &PdrConfig) -> Result<f64> {
        Ok(self.predict_many(graph, features, std::slice::from_ref(config))?[0])
    }

    /// Hybrid loss of `batch` without gradients.
    pub fn loss(&self, batch: &[CircuitBatch<'_>], cfg: &LossConfig) -> Result<HybridLoss> {
        let (circuits, preds, targets) = self.batch_predictions(batch)?;
        hybrid_loss(&circuits, &preds, &targets, cfg)
    }

    fn batch_predictions(&self, batch: &[CircuitBatch<'_>]) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
        let mut circuits = Vec::new();
        let mut preds = Vec::new();
        let mut targets = Vec::new();
        for (k, item) in batch.iter().enumerate() {
            item.check()?;
            let p = self.predict_many(item.graph, item.features, item.configs)?;
            circuits.extend(std::iter::repeat_n(k, p.len()));
            preds.extend(p);
            targets.extend_from_slice(item.targets);
        }
        Ok((circuits, preds, targets))
    }

    /// Loss and exact parameter gradient over a batch of circuits. Circuits
    /// are processed in parallel and their gradients summed in batch order.
    pub fn loss_and_gradient(&self, batch: &[CircuitBatch<'_>], cfg: &LossConfig) -> Result<(HybridLoss, PredictorNet)> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        for item in batch {
            item.check()?;
            if let Some(bad) = item.configs.iter().find(|c| !c.is_valid()) {
                return Err(ModelError::InvalidConfig(bad.to_bit_string()));
            }
        }
        let traces: Vec<(EncoderTrace, HeadTrace)> = batch
            .par_iter()
            .map(|item| {
                let enc = self.encode_traced(item.graph)?;
                let input = self.head_input(enc.embedding.view(), item.features, item.configs);
                let head = self.head_traced(input);
                Ok((enc, head))
            })
            .collect::<Result<_>>()?;

        let mut circuits = Vec::new();
        let mut preds = Vec::new();
        let mut targets = Vec::new();
        for (k, (item, (_, head))) in batch.iter().zip(&traces).enumerate() {
            circuits.extend(std::iter::repeat_n(k, head.output.len()));
            preds.extend(head.output.iter());
            targets.extend_from_slice(item.targets);
        }
        let loss = hybrid_loss(&circuits, &preds, &targets, cfg)?;

        let mut offsets = Vec::with_capacity(batch.len());
        let mut acc = 0;
        for item in batch {
            offsets.push(acc);
            acc += item.configs.len();
        }
        let grads: Vec<PredictorNet> = traces
            .par_iter()
            .zip(batch.par_iter())
            .zip(offsets.par_iter())
            .map(|(((enc, head), item), &off)| {
                let d_pred = Array1::from(loss.grad[off..off + item.configs.len()].to_vec());
                self.backward_one(item.graph, enc, head, d_pred)
            })
            .collect();
        let mut total = self.zeros_like();
        for g in &grads {
            total.add_assign(g);
        }
        Ok((loss, total))
    }

    fn backward_one(&self, graph: &GraphTensor, enc: &EncoderTrace, head: &HeadTrace, d_pred: Array1<f64>) -> PredictorNet {
        let mut grad = self.zeros_like();
        let rows = d_pred.len();
        let mut delta = d_pred.into_shape_with_order((rows, 1)).expect("column vector");
        for k in (0..self.head.len()).rev() {
            let input = &head.inputs[k];
            grad.head[k].weight = input.t().dot(&delta);
            grad.head[k].bias = delta.sum_axis(Axis(0));
            let mut d_input = delta.dot(&self.head[k].weight.t());
            if k > 0 {
                // The input of layer k is relu output of layer k - 1.
                ndarray::Zip::from(&mut d_input).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = d_input;
        }
        let e = self.arch.embedding_dim();
        let d_embedding = delta.slice(s![.., ..e]).sum_axis(Axis(0));

        let n = graph.num_nodes();
        let mut d_out = Array2::from_shape_fn((n, e), |(_, c)| d_embedding[c] / n as f64);
        for l in (0..self.sage.len()).rev() {
            let mut d_z = d_out;
            ndarray::Zip::from(&mut d_z).and(&enc.outputs[l]).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            grad.sage[l].w_self = enc.inputs[l].t().dot(&d_z);
            grad.sage[l].w_neigh = enc.aggregates[l].t().dot(&d_z);
            grad.sage[l].bias = d_z.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let through_neigh = d_z.dot(&self.sage[l].w_neigh.t());
            d_out = d_z.dot(&self.sage[l].w_self.t()) + mean_aggregate_adjoint(&graph.neighbors, &through_neigh);
        }
        grad
    }

    /// Every ReLU on/off state plus every hinge active flag for `batch`.
    /// Two parameter vectors with equal patterns lie in the same linear piece
    /// of the loss surface.
    pub fn activation_pattern(&self, batch: &[CircuitBatch<'_>], cfg: &LossConfig) -> Result<Vec<bool>> {
        Ok(self.loss_with_pattern(batch, cfg)?.1)
    }

    /// [`loss`](Self::loss) together with the
    /// [`activation_pattern`](Self::activation_pattern), from one forward pass.
    pub fn loss_with_pattern(&self, batch: &[CircuitBatch<'_>], cfg: &LossConfig) -> Result<(HybridLoss, Vec<bool>)> {
        let mut pattern = Vec::new();
        let mut hinges = Vec::new();
        let (mut circuits, mut preds, mut targets) = (Vec::new(), Vec::new(), Vec::new());
        for (k, item) in batch.iter().enumerate() {
            item.check()?;
            if let Some(bad) = item.configs.iter().find(|c| !c.is_valid()) {
                return Err(ModelError::InvalidConfig(bad.to_bit_string()));
            }
            let enc = self.encode_traced(item.graph)?;
            for o in &enc.outputs {
                pattern.extend(o.iter().map(|&v| v > 0.0));
            }
            let head = self.head_traced(self.head_input(enc.embedding.view(), item.features, item.configs));
            for x in &head.inputs[1..] {
                pattern.extend(x.iter().map(|&v| v > 0.0));
            }
            let (p, t) = (&head.output, item.targets);
            for i in 0..t.len() {
                for j in 0..t.len() {
                    if t[i] < t[j] {
                        hinges.push(cfg.margin - (p[j] - p[i]) > 0.0);
                    }
                }
            }
            circuits.extend(std::iter::repeat_n(k, p.len()));
            preds.extend(p.iter().copied());
            targets.extend_from_slice(t);
        }
        pattern.extend(hinges);
        Ok((hybrid_loss(&circuits, &preds, &targets, cfg)?, pattern))
    }

    /// `m - (p_j - p_i)` for every ranking pair of `batch`, in a fixed order.
    pub fn hinge_margins(&self, batch: &[CircuitBatch<'_>], cfg: &LossConfig) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for item in batch {
            item.check()?;
            let p = self.predict_many(item.graph, item.features, item.configs)?;
            let t = item.targets;
            for i in 0..t.len() {
                for j in 0..t.len() {
                    if t[i] < t[j] {
                        out.push(cfg.margin - (p[j] - p[i]));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn save(&self, normalizer: Option<&FeatureNormalizer>, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.checkpoint_bytes(normalizer))?;
        Ok(f.flush()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(PredictorNet, Option<FeatureNormalizer>)> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        PredictorNet::from_checkpoint_bytes(&bytes)
    }

    /// Checkpoint layout, all integers and floats little-endian:
    ///
    /// ```text
    /// magic "PDRTCKPT" | u32 version | u32 n, n x u32 encoder widths
    /// | u32 m, m x u32 head widths | u64 p, p x f64 parameters
    /// | u8 has_normalizer [| 11 x f64 shift | 11 x f64 scale]
    /// ```
    pub fn checkpoint_bytes(&self, normalizer: Option<&FeatureNormalizer>) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for dims in [&self.arch.sage_dims, &self.arch.head_dims] {
            out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for &d in dims.iter() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        let flat = self.to_flat();
        out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for v in flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
        match normalizer {
            None => out.push(0),
            Some(n) => {
                out.push(1);
                for v in n.shift.iter().chain(n.scale.iter()) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<(PredictorNet, Option<FeatureNormalizer>)> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let read_dims = |r: &mut ByteReader| -> Result<Vec<usize>> {
            let n = r.u32()? as usize;
            if n > 64 {
                return Err(ModelError::Checkpoint("implausible layer count".into()));
            }
            (0..n).map(|_| Ok(r.u32()? as usize)).collect()
        };
        let sage_dims = read_dims(&mut r)?;
        let head_dims = read_dims(&mut r)?;
        let mut net = PredictorNet::new(Architecture { sage_dims, head_dims }, 0)?;
        let count = r.u64()? as usize;
        if count != net.num_params() {
            return Err(ModelError::Checkpoint(format!("expected {} parameters, found {count}", net.num_params())));
        }
        let flat = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        net.set_flat(&flat)?;
        let normalizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let mut n = FeatureNormalizer::identity();
                for v in n.shift.iter_mut() {
                    *v = r.f64()?;
                }
                for v in n.scale.iter_mut() {
                    *v = r.f64()?;
                }
                Some(n)
            }
            x => return Err(ModelError::Checkpoint(format!("bad normalizer flag {x}"))),
        };
        if r.pos != bytes.len() {
            return Err(ModelError::Checkpoint("trailing bytes".into()));
        }
        Ok((net, normalizer))
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PDRTCKPT";
const CHECKPOINT_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// All samples of one circuit in a batch.
#[derive(Debug, Clone, Copy)]
pub struct CircuitBatch<'a> {
    pub graph: &'a GraphTensor,
    pub features: &'a [f64; NUM_FEATURES],
    pub configs: &'a [PdrConfig],
    /// Log-runtime targets aligned with `configs`.
    pub targets: &'a [f64],
}

impl CircuitBatch<'_> {
    fn check(&self) -> Result<()> {
        if self.configs.len() != self.targets.len() {
            return Err(ModelError::Dimension(format!("{} configs but {} targets", self.configs.len(), self.targets.len())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the MSE term; the ranking term gets `1 - alpha`.
    pub alpha: f64,
    /// Hinge margin in log-seconds.
    pub margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.3, margin: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridLoss {
    pub total: f64,
    pub mse: f64,
    pub ranking: f64,
    pub num_pairs: usize,
    /// d total / d prediction, aligned with the inputs.
    pub grad: Vec<f64>,
}

/// `alpha * MSE + (1 - alpha) * mean_{(i,j) in P} max(0, m - (p_j - p_i))`
/// where `P` holds every same-circuit pair with `t_i < t_j`. The hinge is
/// treated as inactive at exactly zero.
pub fn hybrid_loss(circuits: &[usize], preds: &[f64], targets: &[f64], cfg: &LossConfig) -> Result<HybridLoss> {
    let n = preds.len();
    if n == 0 {
        return Err(ModelError::EmptyBatch);
    }
    if circuits.len() != n || targets.len() != n {
        return Err(ModelError::Dimension("circuits, predictions and targets must align".into()));
    }
    if preds.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("predictions"));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("targets"));
    }

    let mut grad = vec![0.0; n];
    let mut mse = 0.0;
    for i in 0..n {
        let d = preds[i] - targets[i];
        mse += d * d;
        grad[i] = cfg.alpha * 2.0 * d / n as f64;
    }
    mse /= n as f64;

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, &c) in circuits.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let mut pair_grad = vec![0.0; n];
    let mut hinge_sum = 0.0;
    let mut num_pairs = 0usize;
    for members in groups.values() {
        for &i in members {
            for &j in members {
                if targets[i] < targets[j] {
                    num_pairs += 1;
                    let h = cfg.margin - (preds[j] - preds[i]);
                    if h > 0.0 {
                        hinge_sum += h;
                        pair_grad[i] += 1.0;
                        pair_grad[j] -= 1.0;
                    }
                }
            }
        }
    }
    let ranking = if num_pairs == 0 { 0.0 } else { hinge_sum / num_pairs as f64 };
    if num_pairs > 0 {
        let w = (1.0 - cfg.alpha) / num_pairs as f64;
        for (g, p) in grad.iter_mut().zip(pair_grad) {
            *g += w * p;
        }
    }
    Ok(HybridLoss { total: cfg.alpha * mse + (1.0 - cfg.alpha) * ranking, mse, ranking, num_pairs, grad })
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One Adam update applied to a network.
pub fn adam_step(net: &mut PredictorNet, grads: &PredictorNet, state: &mut Adam) {
    let mut flat = net.to_flat();
    state.step(&mut flat, &grads.to_flat());
    net.set_flat(&flat).expect("same architecture");
}
