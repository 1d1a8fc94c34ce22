//! Synthetic training runs shared by the learnability tests.

use std::collections::BTreeMap;
use std::time::Instant;

use pdrtune::synth::{self, SynthConfig, SynthData};
use pdrtune::train::{self, FeatureImportance, Fitted, TrainConfig};

pub struct LearnRun {
    pub seed: u64,
    pub data: SynthData,
    pub fitted: Fitted,
    pub importance: Vec<FeatureImportance>,
    pub seconds: f64,
}

/// Generates 60 synthetic circuits, trains with default hyperparameters and
/// measures permutation importance over the whole corpus.
pub fn synth_learn(seed: u64) -> LearnRun {
    let t0 = Instant::now();
    let data = synth::generate(&SynthConfig { n_circuits: 60, seed, wall_limit: 3600.0 }).unwrap();
    let aigs: BTreeMap<String, _> = data.circuits.iter().cloned().collect();
    let samples = train::build_samples(&data.records, |id| Ok(aigs[id].clone())).unwrap();
    let fitted = train::fit(&data.records, samples.clone(), &TrainConfig { seed, ..Default::default() }).unwrap();
    let mut all = samples;
    train::normalize_samples(&mut all, &fitted.normalizer);
    let importance = train::permutation_importance(&fitted.outcome.net, &all, seed, 10).unwrap();
    LearnRun { seed, data, fitted, importance, seconds: t0.elapsed().as_secs_f64() }
}
