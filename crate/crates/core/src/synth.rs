//! Synthetic corpus: random sequential AIGs with runtimes drawn from a
//! planted model whose configuration effects hinge on latch fanout spread.
//!
//! For circuit `c` with corpus z-scores `z` of its features and config `p`:
//!
//! ```text
//! ln t(c, p) = base_c + sum_f p_f (A_f z_flop_std + B_f z_avg_level + C_f)
//!              + ln 0.5 [p_i and max_level > median]
//!              + ln 2   [p_g and num_latches > median]
//! base_c     = ln(base_seconds) + a z_avg_level + b z_flop_std + N(0, noise_sd)
//! ```
//!
//! Runtimes at or beyond the wall limit become timeouts.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aiger::{Aig, AigBuilder, LatchInit, Lit};
use crate::features::{self, CircuitFeatures, FEATURE_NAMES, NUM_FEATURES};
use crate::params::{ConfigSpace, PdrConfig, FLAG_LETTERS, NUM_FLAGS};
use crate::train::{self, Outcome, RuntimeRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 10 circuits, asked for {0}")]
    TooFew(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Train(#[from] train::TrainError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_circuits: usize,
    pub seed: u64,
    pub wall_limit: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n_circuits: 60, seed: 0, wall_limit: 3600.0 }
    }
}

/// Per-flag coefficients of the planted runtime model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagEffect {
    pub flag: char,
    pub flop_std: f64,
    pub avg_level: f64,
    pub constant: f64,
}

const FLAG_EFFECTS: [(f64, f64, f64); NUM_FLAGS] = [
    (0.45, -0.10, 0.10),
    (-0.35, 0.10, -0.05),
    (0.30, -0.05, 0.05),
    (-0.40, 0.10, -0.10),
    (0.25, -0.10, 0.05),
    (-0.30, 0.05, -0.05),
    (0.40, -0.05, 0.00),
    (-0.45, 0.10, 0.05),
    (0.35, -0.05, -0.05),
];

/// Everything needed to recompute the planted runtimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub wall_limit: f64,
    pub dominant_feature: String,
    pub base_seconds: f64,
    pub base_avg_level: f64,
    pub base_flop_std: f64,
    pub noise_sd: f64,
    pub flag_effects: Vec<FlagEffect>,
    /// `ln 0.5` applied to `-i` when max_level exceeds `median_max_level`.
    pub eager_push_deep_factor: f64,
    pub median_max_level: f64,
    /// `ln 2` applied to `-g` when num_latches exceeds `median_latches`.
    pub skip_general_many_latches_factor: f64,
    pub median_latches: f64,
    /// Corpus mean and population std of each feature, by name.
    pub feature_mean: BTreeMap<String, f64>,
    pub feature_std: BTreeMap<String, f64>,
    /// Per-circuit `base_c` in log-seconds.
    pub base_log: BTreeMap<String, f64>,
}

impl Manifest {
    fn z(&self, f: &CircuitFeatures, name: &str) -> f64 {
        let k = FEATURE_NAMES.iter().position(|n| *n == name).expect("known feature");
        let sd = self.feature_std[name];
        (f.to_array()[k] - self.feature_mean[name]) / if sd > 0.0 { sd } else { 1.0 }
    }

    /// Planted log-runtime before clamping to the wall limit.
    pub fn log_runtime(&self, circuit: &str, f: &CircuitFeatures, config: &PdrConfig) -> f64 {
        let z_flop = self.z(f, "flop_fanout_std");
        let z_level = self.z(f, "avg_level");
        let mut t = self.base_log[circuit];
        for (on, e) in config.flags().iter().zip(&self.flag_effects) {
            if *on {
                t += e.flop_std * z_flop + e.avg_level * z_level + e.constant;
            }
        }
        if config.eager_push && f.max_level as f64 > self.median_max_level {
            t += self.eager_push_deep_factor;
        }
        if config.skip_general && f.num_latches as f64 > self.median_latches {
            t += self.skip_general_many_latches_factor;
        }
        t
    }
}

pub struct SynthData {
    pub circuits: Vec<(String, Aig)>,
    pub features: Vec<CircuitFeatures>,
    pub records: Vec<RuntimeRecord>,
    pub manifest: Manifest,
}

/// Random sequential AIG with 20..=500 ANDs and 2..=40 latches. Per-circuit
/// knobs skew the latch fanout (Zipf exponent) and the logic depth.
pub fn random_circuit(rng: &mut ChaCha8Rng) -> Aig {
    let num_inputs = rng.random_range(2..=30);
    let num_latches = rng.random_range(2..=40);
    let target_ands = rng.random_range(20..=500);
    let zipf_s: f64 = rng.random_range(0.0..2.5);
    let depth_bias: f64 = rng.random_range(0.0..0.8);
    let latch_share: f64 = rng.random_range(0.15..0.5);

    let mut ranks: Vec<usize> = (1..=num_latches).collect();
    for i in (1..ranks.len()).rev() {
        ranks.swap(i, rng.random_range(0..=i));
    }
    let weights: Vec<f64> = ranks.iter().map(|&r| (r as f64).powf(-zipf_s)).collect();
    let latch_pick = WeightedIndex::new(&weights).expect("positive weights");

    let mut b = AigBuilder::new(num_inputs, num_latches);
    let mut gates: Vec<Lit> = Vec::new();
    let pick = |rng: &mut ChaCha8Rng, b: &AigBuilder, gates: &[Lit]| -> Lit {
        let lit = if !gates.is_empty() && rng.random_bool(depth_bias) {
            let back = rng.random_range(1..=gates.len().min(6));
            gates[gates.len() - back]
        } else if rng.random_bool(latch_share) {
            b.latch(latch_pick.sample(rng))
        } else if gates.is_empty() || rng.random_bool(0.3) {
            b.input(rng.random_range(0..num_inputs))
        } else {
            gates[rng.random_range(0..gates.len())]
        };
        lit ^ rng.random_bool(0.5)
    };
    while b.num_ands() < target_ands {
        let x = pick(rng, &b, &gates);
        let y = pick(rng, &b, &gates);
        // XOR and MUX cost three gates each; stay within the target.
        let roll: f64 = if b.num_ands() + 3 <= target_ands { rng.random() } else { 1.0 };
        let g = if roll < 0.08 && x.var() != y.var() {
            b.xor(x, y)
        } else if roll < 0.16 {
            let s = pick(rng, &b, &gates);
            if s.var() == x.var() || s.var() == y.var() {
                b.and(x, y)
            } else {
                b.mux(s, x, y)
            }
        } else {
            b.and(x, y)
        };
        gates.push(g);
    }
    let half = gates.len() / 2;
    for i in 0..num_latches {
        let next = gates[rng.random_range(half..gates.len())] ^ rng.random_bool(0.5);
        b.set_latch(i, next, LatchInit::Zero);
    }
    let num_outputs = rng.random_range(1..=3);
    for k in 0..num_outputs {
        b.output(gates[gates.len() - 1 - k] ^ rng.random_bool(0.5));
    }
    b.build().expect("generator emits well-formed circuits")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Generates the corpus, every valid configuration per circuit.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    if cfg.n_circuits < 10 {
        return Err(SynthError::TooFew(cfg.n_circuits));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let circuits: Vec<(String, Aig)> = (0..cfg.n_circuits).map(|i| (format!("synth_{i:03}"), random_circuit(&mut rng))).collect();
    let feats: Vec<CircuitFeatures> = circuits.iter().map(|(_, a)| features::extract(a)).collect();

    let mut feature_mean = BTreeMap::new();
    let mut feature_std = BTreeMap::new();
    for (k, name) in FEATURE_NAMES.iter().enumerate() {
        let col: Vec<f64> = feats.iter().map(|f| f.to_array()[k]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        feature_mean.insert(name.to_string(), mean);
        feature_std.insert(name.to_string(), var.sqrt());
    }
    debug_assert_eq!(feature_mean.len(), NUM_FEATURES);

    let mut manifest = Manifest {
        seed: cfg.seed,
        wall_limit: cfg.wall_limit,
        dominant_feature: "flop_fanout_std".into(),
        base_seconds: 400.0,
        base_avg_level: 0.3,
        base_flop_std: 0.2,
        noise_sd: 0.3,
        flag_effects: FLAG_LETTERS
            .iter()
            .zip(FLAG_EFFECTS)
            .map(|(&flag, (a, b, c))| FlagEffect { flag, flop_std: a, avg_level: b, constant: c })
            .collect(),
        eager_push_deep_factor: 0.5f64.ln(),
        median_max_level: median(feats.iter().map(|f| f.max_level as f64).collect()),
        skip_general_many_latches_factor: 2f64.ln(),
        median_latches: median(feats.iter().map(|f| f.num_latches as f64).collect()),
        feature_mean,
        feature_std,
        base_log: BTreeMap::new(),
    };

    let noise = Normal::new(0.0, manifest.noise_sd).expect("valid sd");
    for ((id, _), f) in circuits.iter().zip(&feats) {
        let base = manifest.base_seconds.ln()
            + manifest.base_avg_level * manifest.z(f, "avg_level")
            + manifest.base_flop_std * manifest.z(f, "flop_fanout_std")
            + noise.sample(&mut rng);
        manifest.base_log.insert(id.clone(), base);
    }

    let space = ConfigSpace::enumerate_valid();
    let mut records = Vec::with_capacity(circuits.len() * space.len());
    for ((id, _), f) in circuits.iter().zip(&feats) {
        let verdict = if rng.random_bool(0.7) { Outcome::Safe } else { Outcome::Unsafe };
        for c in &space {
            let secs = manifest.log_runtime(id, f, c).exp();
            let (wall_seconds, outcome) = if secs >= cfg.wall_limit { (cfg.wall_limit, Outcome::Timeout) } else { (secs, verdict) };
            records.push(RuntimeRecord { circuit: id.clone(), config: *c, wall_seconds, outcome });
        }
    }
    Ok(SynthData { circuits, features: feats, records, manifest })
}

/// Writes `<id>.aig` files, `runtimes.csv` and `manifest.json` into `dir`.
pub fn write_to_dir(data: &SynthData, dir: &Path) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    for (id, aig) in &data.circuits {
        std::fs::write(dir.join(format!("{id}.aig")), aig.write_binary())?;
    }
    train::write_dataset(std::fs::File::create(dir.join("runtimes.csv"))?, &data.records)?;
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&data.manifest)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circuits_within_size_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_circuit(&mut rng);
            assert!((20..=500).contains(&a.num_ands()), "{} ANDs", a.num_ands());
            assert!((2..=40).contains(&a.num_latches()));
            assert!(a.num_outputs() >= 1);
        }
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let cfg = SynthConfig { n_circuits: 12, seed: 9, wall_limit: 3600.0 };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.records.len(), 12 * 114);
        assert!(a.records.iter().all(|r| r.config.is_valid() && r.wall_seconds > 0.0 && r.wall_seconds <= 3600.0));
        assert!(a.records.iter().filter(|r| r.outcome == Outcome::Timeout).all(|r| r.wall_seconds == 3600.0));
    }

    #[test]
    fn flop_std_varies_across_corpus() {
        let d = generate(&SynthConfig { n_circuits: 30, seed: 1, wall_limit: 3600.0 }).unwrap();
        assert!(d.manifest.feature_std["flop_fanout_std"] > 0.5);
    }

    #[test]
    fn too_few_rejected() {
        assert!(matches!(generate(&SynthConfig { n_circuits: 5, ..Default::default() }), Err(SynthError::TooFew(5))));
    }
}
