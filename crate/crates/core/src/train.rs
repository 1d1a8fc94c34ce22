//! Dataset ingestion, circuit-level splitting, the training loop, rank
//! metrics and permutation feature importance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aiger::{self, AigerError};
use crate::features::{self, CircuitFeatures, FeatureNormalizer, FEATURE_NAMES, NUM_FEATURES};
use crate::graphdata::GraphData;
use crate::model::{Adam, CircuitBatch, GraphTensor, LossConfig, ModelError, PredictorNet};
use crate::params::{ParamError, PdrConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Config { line: usize, source: ParamError },
    #[error("need at least {needed} distinct circuits, found {found}")]
    TooFewCircuits { needed: usize, found: usize },
    #[error("at least two items are required, got {0}")]
    TooFewItems(usize),
    #[error("rankings have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("training fold is empty")]
    EmptyTrainFold,
    #[error("loss diverged at epoch {epoch} (batch {batch}): {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("circuit `{circuit}`: {source}")]
    Circuit { circuit: String, source: AigerError },
    #[error("no AIGER file for circuit `{0}`")]
    MissingCircuit(String),
    #[error(transparent)]
    Normalizer(#[from] features::NormalizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Verdict recorded for one solver run in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Safe,
    Unsafe,
    Timeout,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Safe => "SAFE",
            Outcome::Unsafe => "UNSAFE",
            Outcome::Timeout => "TIMEOUT",
        })
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "SAFE" => Ok(Outcome::Safe),
            "UNSAFE" => Ok(Outcome::Unsafe),
            "TIMEOUT" => Ok(Outcome::Timeout),
            other => Err(format!("unknown outcome `{other}`")),
        }
    }
}

/// One (circuit, configuration) runtime measurement. For timeouts
/// `wall_seconds` is the wall limit of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRecord {
    pub circuit: String,
    pub config: PdrConfig,
    pub wall_seconds: f64,
    pub outcome: Outcome,
}

impl RuntimeRecord {
    /// `ln(1 + seconds)`, with timeouts charged twice the wall limit.
    pub fn log_target(&self) -> f64 {
        let secs = match self.outcome {
            Outcome::Timeout => 2.0 * self.wall_seconds,
            _ => self.wall_seconds,
        };
        secs.ln_1p()
    }
}

pub const DATASET_HEADER: [&str; 4] = ["circuit", "config_flags", "seconds", "outcome"];

#[derive(Debug, Deserialize)]
struct RawRecord {
    circuit: String,
    config_flags: String,
    seconds: f64,
    outcome: String,
}

pub fn read_dataset(reader: impl Read) -> Result<Vec<RuntimeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(TrainError::Record { line: 1, msg: format!("expected header {}", DATASET_HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for (k, row) in rdr.deserialize::<RawRecord>().enumerate() {
        let line = k + 2;
        let raw = row.map_err(|e| TrainError::Record { line, msg: e.to_string() })?;
        let config = PdrConfig::from_flag_string(&raw.config_flags)
            .and_then(PdrConfig::validate)
            .map_err(|source| TrainError::Config { line, source })?;
        let outcome = raw.outcome.parse().map_err(|msg| TrainError::Record { line, msg })?;
        if !(raw.seconds > 0.0 && raw.seconds.is_finite()) {
            return Err(TrainError::Record { line, msg: format!("non-positive time {}", raw.seconds) });
        }
        out.push(RuntimeRecord { circuit: raw.circuit, config, wall_seconds: raw.seconds, outcome });
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<RuntimeRecord>> {
    read_dataset(std::fs::File::open(path)?)
}

pub fn write_dataset(writer: impl Write, records: &[RuntimeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DATASET_HEADER)?;
    for r in records {
        let flags = r.config.to_flag_string().map_err(|source| TrainError::Config { line: 0, source })?;
        w.write_record([r.circuit.as_str(), &flags, &format!("{}", r.wall_seconds), &r.outcome.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Circuit identifiers of the three folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn records<'a>(&self, records: &'a [RuntimeRecord], fold: &[String]) -> Vec<&'a RuntimeRecord> {
        let set: BTreeSet<&str> = fold.iter().map(String::as_str).collect();
        records.iter().filter(|r| set.contains(r.circuit.as_str())).collect()
    }
}

pub const MIN_SPLIT_CIRCUITS: usize = 10;

/// Shuffles the distinct circuits under `seed` and cuts them into
/// train/val/test, where val and test each get `max(1, floor(n / 10))`
/// circuits.
pub fn split(records: &[RuntimeRecord], seed: u64) -> Result<Split> {
    let circuits: BTreeSet<&str> = records.iter().map(|r| r.circuit.as_str()).collect();
    let n = circuits.len();
    if n < MIN_SPLIT_CIRCUITS {
        return Err(TrainError::TooFewCircuits { needed: MIN_SPLIT_CIRCUITS, found: n });
    }
    let mut ids: Vec<String> = circuits.into_iter().map(str::to_owned).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = (n / 10).max(1);
    let test = ids.split_off(n - held);
    let val = ids.split_off(n - 2 * held);
    Ok(Split { train: ids, val, test })
}

/// Keeps the circuits whose default-configuration run took longer than
/// `threshold_seconds` or timed out. Circuits without a default run are
/// dropped.
pub fn filter_nontrivial(records: &[RuntimeRecord], threshold_seconds: f64) -> Vec<RuntimeRecord> {
    let default = PdrConfig::default();
    let keep: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.config == default && (r.outcome == Outcome::Timeout || r.wall_seconds > threshold_seconds))
        .map(|r| r.circuit.as_str())
        .collect();
    records.iter().filter(|r| keep.contains(r.circuit.as_str())).cloned().collect()
}

/// Kendall's tau-a between two score vectors over the same items:
/// `(N_c - N_d) / (n (n - 1) / 2)`, where a pair tied on either side counts
/// as neither concordant nor discordant. Runs in `O(n log n)`.
pub fn kendall_tau(truth: &[f64], pred: &[f64]) -> Result<f64> {
    let n = check_pair(truth, pred)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]).then(pred[a].total_cmp(&pred[b])));

    let tied_pairs = |key: &dyn Fn(usize) -> (u64, u64), order: &[usize]| -> u64 {
        let mut total = 0u64;
        let mut run = 1u64;
        for w in order.windows(2) {
            if key(w[0]) == key(w[1]) {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let bits = |v: f64| if v == 0.0 { 0 } else { v.to_bits() };
    let n1 = tied_pairs(&|i| (bits(truth[i]), 0), &idx);
    let n3 = tied_pairs(&|i| (bits(truth[i]), bits(pred[i])), &idx);

    let mut seq: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
    let swaps = merge_count(&mut seq);
    let sorted_ids: Vec<usize> = (0..n).collect();
    let n2 = tied_pairs(&|i| (bits(seq[i]), 0), &sorted_ids);

    let n0 = (n * (n - 1) / 2) as u64;
    let diff = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    Ok(diff as f64 / n0 as f64)
}

/// Sorts ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            count += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    count
}

/// Ranks starting at 1, ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: the Pearson correlation of mid-ranks. Without ties this
/// equals `1 - 6 sum d_i^2 / (n (n^2 - 1))`. A constant side gives 0.
pub fn spearman_rho(truth: &[f64], pred: &[f64]) -> Result<f64> {
    let n = check_pair(truth, pred)?;
    let a = midranks(truth);
    let b = midranks(pred);
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (x, y) = (a[k] - mean, b[k] - mean);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<usize> {
    if truth.len() != pred.len() {
        return Err(TrainError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.len() < 2 {
        return Err(TrainError::TooFewItems(truth.len()));
    }
    Ok(truth.len())
}

/// Per-circuit and aggregate rank correlations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankMetrics {
    pub kendall_tau: f64,
    pub spearman_rho: f64,
    pub per_circuit: BTreeMap<String, (f64, f64)>,
}

/// A circuit ready for the network: its graph, normalized features and the
/// measured configurations.
#[derive(Debug, Clone)]
pub struct CircuitSample {
    pub id: String,
    pub graph: GraphTensor,
    pub raw_features: CircuitFeatures,
    pub features: [f64; NUM_FEATURES],
    pub configs: Vec<PdrConfig>,
    pub targets: Vec<f64>,
}

impl CircuitSample {
    pub fn batch(&self) -> CircuitBatch<'_> {
        CircuitBatch { graph: &self.graph, features: &self.features, configs: &self.configs, targets: &self.targets }
    }
}

/// Looks for `<id>.aig` then `<id>.aag` in `dir`.
pub fn find_circuit(dir: &Path, id: &str) -> Option<PathBuf> {
    ["aig", "aag"].iter().map(|ext| dir.join(format!("{id}.{ext}"))).find(|p| p.is_file())
}

/// Raw features of the original circuit and the graph of its COI.
pub fn circuit_inputs(aig: &aiger::Aig) -> (CircuitFeatures, GraphData) {
    (features::extract(aig), GraphData::build(aig, true))
}

/// Groups records by circuit and loads each circuit from `aig_dir`.
/// Features stay unnormalized until [`normalize_samples`].
pub fn prepare_samples(records: &[RuntimeRecord], aig_dir: &Path) -> Result<Vec<CircuitSample>> {
    build_samples(records, |id| {
        let path = find_circuit(aig_dir, id).ok_or_else(|| TrainError::MissingCircuit(id.to_string()))?;
        aiger::read_file(&path).map_err(|source| TrainError::Circuit { circuit: id.to_string(), source })
    })
}

/// [`prepare_samples`] with circuits supplied by `load`. Samples come out
/// sorted by circuit id, configurations by bit-vector.
pub fn build_samples(records: &[RuntimeRecord], load: impl Fn(&str) -> Result<aiger::Aig> + Sync) -> Result<Vec<CircuitSample>> {
    let mut by_circuit: BTreeMap<&str, Vec<&RuntimeRecord>> = BTreeMap::new();
    for r in records {
        by_circuit.entry(r.circuit.as_str()).or_default().push(r);
    }
    let groups: Vec<(&str, Vec<&RuntimeRecord>)> = by_circuit.into_iter().collect();
    groups
        .par_iter()
        .map(|(id, recs)| {
            let aig = load(id)?;
            let (raw, graph) = circuit_inputs(&aig);
            let mut recs = recs.clone();
            recs.sort_by_key(|r| r.config.bits());
            Ok(CircuitSample {
                id: id.to_string(),
                graph: GraphTensor::new(&graph),
                features: raw.to_array(),
                raw_features: raw,
                configs: recs.iter().map(|r| r.config).collect(),
                targets: recs.iter().map(|r| r.log_target()).collect(),
            })
        })
        .collect()
}

/// Moves samples into the folds of `split`; samples outside every fold are
/// dropped.
pub fn partition_samples(samples: Vec<CircuitSample>, split: &Split) -> (Vec<CircuitSample>, Vec<CircuitSample>, Vec<CircuitSample>) {
    fn fold(ids: &[String]) -> BTreeSet<&str> {
        ids.iter().map(String::as_str).collect()
    }
    let (train_ids, val_ids, test_ids) = (fold(&split.train), fold(&split.val), fold(&split.test));
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for s in samples {
        if train_ids.contains(s.id.as_str()) {
            train.push(s);
        } else if val_ids.contains(s.id.as_str()) {
            val.push(s);
        } else if test_ids.contains(s.id.as_str()) {
            test.push(s);
        }
    }
    (train, val, test)
}

/// Fits the normalizer on the raw features of `samples`.
pub fn fit_normalizer(samples: &[CircuitSample]) -> std::result::Result<FeatureNormalizer, features::NormalizerError> {
    FeatureNormalizer::fit(&samples.iter().map(|s| s.raw_features).collect::<Vec<_>>())
}

pub fn normalize_samples(samples: &mut [CircuitSample], normalizer: &FeatureNormalizer) {
    for s in samples {
        s.features = normalizer.apply(&s.raw_features);
    }
}

/// Mean per-circuit tau and rho of `net` over `samples` with at least two
/// configurations.
pub fn evaluate(net: &PredictorNet, samples: &[CircuitSample]) -> Result<RankMetrics> {
    let per: Vec<Option<(String, (f64, f64))>> = samples
        .par_iter()
        .map(|s| {
            if s.configs.len() < 2 {
                return Ok(None);
            }
            let pred = net.predict_many(&s.graph, &s.features, &s.configs)?;
            Ok(Some((s.id.clone(), (kendall_tau(&s.targets, &pred)?, spearman_rho(&s.targets, &pred)?))))
        })
        .collect::<Result<_>>()?;
    let per_circuit: BTreeMap<String, (f64, f64)> = per.into_iter().flatten().collect();
    let n = per_circuit.len().max(1) as f64;
    Ok(RankMetrics {
        kendall_tau: per_circuit.values().map(|v| v.0).sum::<f64>() / n,
        spearman_rho: per_circuit.values().map(|v| v.1).sum::<f64>() / n,
        per_circuit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub lr: f64,
    pub patience: usize,
    /// Circuits per optimizer step.
    pub batch_circuits: usize,
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_epochs: 300, lr: 1e-3, patience: 20, batch_circuits: 4, seed: 0, loss: LossConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_tau: f64,
    pub val_rho: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,val_tau,val_rho";

pub fn write_metrics(mut out: impl Write, history: &[EpochMetrics]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in history {
        writeln!(out, "{},{},{},{}", m.epoch, m.train_loss, m.val_tau, m.val_rho)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation tau.
    pub net: PredictorNet,
    pub best_epoch: usize,
    pub best_val_tau: f64,
    /// Validation metrics before the first update.
    pub initial: RankMetrics,
    pub history: Vec<EpochMetrics>,
}

/// Adam over circuit-grouped batches with early stopping on the mean
/// validation tau. Epoch 0 in the history is the untrained network.
pub fn train_loop(net: PredictorNet, train: &[CircuitSample], val: &[CircuitSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainFold);
    }
    let score = |net: &PredictorNet| if val.is_empty() { evaluate(net, train) } else { evaluate(net, val) };
    let mut net = net;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net.num_params(), cfg.lr);
    let initial = score(&net)?;
    let mut history = vec![EpochMetrics { epoch: 0, train_loss: f64::NAN, val_tau: initial.kendall_tau, val_rho: initial.spearman_rho }];
    let mut best = (net.clone(), 0, initial.kendall_tau);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_circuits.max(1)).enumerate() {
            let batch: Vec<CircuitBatch<'_>> = chunk.iter().map(|&i| train[i].batch()).collect();
            let (loss, grad) = net.loss_and_gradient(&batch, &cfg.loss)?;
            if !loss.total.is_finite() {
                return Err(TrainError::Diverged { epoch, batch: b, loss: loss.total });
            }
            let mut flat = net.to_flat();
            adam.step(&mut flat, &grad.to_flat());
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::Diverged { epoch, batch: b, loss: loss.total });
            }
            net.set_flat(&flat)?;
            loss_sum += loss.total;
            batches += 1;
        }
        let m = score(&net)?;
        let train_loss = loss_sum / batches as f64;
        debug!("epoch {epoch}: loss {train_loss:.5} val tau {:.4} rho {:.4}", m.kendall_tau, m.spearman_rho);
        history.push(EpochMetrics { epoch, train_loss, val_tau: m.kendall_tau, val_rho: m.spearman_rho });
        if m.kendall_tau > best.2 {
            best = (net.clone(), epoch, m.kendall_tau);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                info!("early stop at epoch {epoch}; best epoch {} (val tau {:.4})", best.1, best.2);
                break;
            }
        }
    }
    Ok(TrainOutcome { net: best.0, best_epoch: best.1, best_val_tau: best.2, initial, history })
}

/// A trained model with everything needed to score new circuits and to
/// reproduce the evaluation.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub outcome: TrainOutcome,
    pub normalizer: FeatureNormalizer,
    pub split: Split,
    pub test: Vec<CircuitSample>,
    pub test_metrics: RankMetrics,
}

/// Splits by circuit under `cfg.seed`, fits the normalizer on the training
/// fold, trains a fresh default network and scores the test fold.
pub fn fit(records: &[RuntimeRecord], samples: Vec<CircuitSample>, cfg: &TrainConfig) -> Result<Fitted> {
    let split = split(records, cfg.seed)?;
    let (mut train, mut val, mut test) = partition_samples(samples, &split);
    let normalizer = fit_normalizer(&train)?;
    for fold in [&mut train, &mut val, &mut test] {
        normalize_samples(fold, &normalizer);
    }
    let outcome = train_loop(PredictorNet::with_default_arch(cfg.seed), &train, &val, cfg)?;
    let test_metrics = evaluate(&outcome.net, &test)?;
    Ok(Fitted { outcome, normalizer, split, test, test_metrics })
}

/// Mean tau drop for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub feature: &'static str,
    pub delta_tau: f64,
}

/// For each feature, permutes that column of the normalized feature vectors
/// across `samples`, re-evaluates mean tau, and averages the drop from the
/// unpermuted tau over `repeats` shuffles. Sorted by decreasing drop, ties
/// in feature order.
pub fn permutation_importance(net: &PredictorNet, samples: &[CircuitSample], seed: u64, repeats: usize) -> Result<Vec<FeatureImportance>> {
    permutation_importance_with(net, samples, seed, repeats, |rng, n| {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        p
    })
}

/// [`permutation_importance`] with a caller-supplied permutation source.
pub fn permutation_importance_with(
    net: &PredictorNet,
    samples: &[CircuitSample],
    seed: u64,
    repeats: usize,
    mut permutation: impl FnMut(&mut ChaCha8Rng, usize) -> Vec<usize>,
) -> Result<Vec<FeatureImportance>> {
    if samples.len() < 2 {
        return Err(TrainError::TooFewCircuits { needed: 2, found: samples.len() });
    }
    // Embeddings do not depend on the static features; compute them once.
    let embeddings: Vec<_> = samples.par_iter().map(|s| net.encode(&s.graph)).collect::<std::result::Result<_, _>>()?;
    let mean_tau = |feats: &[[f64; NUM_FEATURES]]| -> Result<f64> {
        let taus: Vec<f64> = samples
            .par_iter()
            .zip(embeddings.par_iter())
            .zip(feats.par_iter())
            .filter(|((s, _), _)| s.configs.len() >= 2)
            .map(|((s, e), f)| kendall_tau(&s.targets, &net.predict_from_embedding(e.view(), f, &s.configs)))
            .collect::<Result<_>>()?;
        Ok(taus.iter().sum::<f64>() / taus.len().max(1) as f64)
    };
    let base_feats: Vec<[f64; NUM_FEATURES]> = samples.iter().map(|s| s.features).collect();
    let baseline = mean_tau(&base_feats)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(NUM_FEATURES);
    for (k, name) in FEATURE_NAMES.iter().enumerate() {
        let mut drop = 0.0;
        for _ in 0..repeats {
            let perm = permutation(&mut rng, samples.len());
            let mut feats = base_feats.clone();
            for (i, &j) in perm.iter().enumerate() {
                feats[i][k] = base_feats[j][k];
            }
            drop += baseline - mean_tau(&feats)?;
        }
        out.push(FeatureImportance { feature: name, delta_tau: drop / repeats.max(1) as f64 });
    }
    out.sort_by(|a, b| b.delta_tau.total_cmp(&a.delta_tau));
    Ok(out)
}
