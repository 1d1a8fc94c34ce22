//! Scoring every valid configuration for a circuit and taking the top k.

use std::io::Write;

use thiserror::Error;

use crate::features::NUM_FEATURES;
use crate::model::{GraphTensor, ModelError, PredictorNet};
use crate::params::{ConfigSpace, PdrConfig, NUM_VALID_CONFIGS};

/// Normalized features beyond this magnitude are taken as a sign that the
/// normalizer was not applied.
pub const MAX_NORMALIZED_MAGNITUDE: f64 = 50.0;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("feature {index} = {value} looks unnormalized (|value| > {MAX_NORMALIZED_MAGNITUDE})")]
    Unnormalized { index: usize, value: f64 },
    #[error("k must be in 1..={NUM_VALID_CONFIGS}, got {0}")]
    BadK(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Configurations with predicted log-runtimes, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub entries: Vec<(PdrConfig, f64)>,
    pub k: usize,
}

impl TopK {
    pub fn configs(&self) -> Vec<PdrConfig> {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// `rank,flags,predicted_log_runtime` with 1-based ranks.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "rank,flags,predicted_log_runtime")?;
        for (i, (c, p)) in self.entries.iter().enumerate() {
            writeln!(out, "{},{},{}", i + 1, c, p)?;
        }
        Ok(())
    }
}

/// Predicts all valid configurations from one shared encoding and sorts
/// them by `(prediction, bit-vector)`.
pub fn rank_configs(net: &PredictorNet, graph: &GraphTensor, features: &[f64; NUM_FEATURES]) -> Result<TopK, PredictError> {
    if let Some((index, &value)) = features.iter().enumerate().find(|(_, v)| !v.is_finite() || v.abs() > MAX_NORMALIZED_MAGNITUDE) {
        return Err(PredictError::Unnormalized { index, value });
    }
    let space = ConfigSpace::enumerate_valid();
    let embedding = net.encode(graph)?;
    let preds = net.predict_from_embedding(embedding.view(), features, space.configs());
    let mut entries: Vec<(PdrConfig, f64)> = space.configs().iter().copied().zip(preds).collect();
    entries.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.bits().cmp(&b.0.bits())));
    Ok(TopK { k: entries.len(), entries })
}

/// The first `k` entries of a ranking.
pub fn top_k(ranking: &TopK, k: usize) -> Result<TopK, PredictError> {
    if k == 0 || k > NUM_VALID_CONFIGS {
        return Err(PredictError::BadK(k));
    }
    let k = k.min(ranking.entries.len());
    Ok(TopK { entries: ranking.entries[..k].to_vec(), k })
}
