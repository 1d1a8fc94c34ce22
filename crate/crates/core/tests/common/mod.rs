//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod learn;
pub mod oracles;
pub mod sim;
pub mod stubs;

use pdrtune::aiger::{Aig, AigBuilder, LatchInit, Lit};
use pdrtune::features::NUM_FEATURES;
use pdrtune::graphdata::GraphData;
use pdrtune::model::{CircuitBatch, GraphTensor, LossConfig, PredictorNet};
use pdrtune::params::{ConfigSpace, PdrConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Random AIG with the given maximum sizes. Fanins are drawn from already
/// defined literals so the result is always well formed.
pub fn random_aig(rng: &mut impl Rng, max_inputs: usize, max_latches: usize, max_ands: usize) -> Aig {
    let ni = rng.random_range(0..=max_inputs);
    let nl = rng.random_range(0..=max_latches);
    let na = rng.random_range(0..=max_ands);
    let mut b = AigBuilder::new(ni, nl);
    let mut pool: Vec<Lit> = vec![Lit::FALSE];
    pool.extend((0..ni).map(|i| b.input(i)));
    pool.extend((0..nl).map(|i| b.latch(i)));
    for _ in 0..na {
        let x = pool[rng.random_range(0..pool.len())] ^ rng.random_bool(0.5);
        let y = pool[rng.random_range(0..pool.len())] ^ rng.random_bool(0.5);
        let g = b.and(x, y);
        pool.push(g);
    }
    let inits = [LatchInit::Zero, LatchInit::One, LatchInit::Undef];
    for i in 0..nl {
        let next = pool[rng.random_range(0..pool.len())] ^ rng.random_bool(0.5);
        b.set_latch(i, next, inits[rng.random_range(0..3)]);
    }
    let no = rng.random_range(1..=3);
    for _ in 0..no {
        let o = pool[rng.random_range(0..pool.len())] ^ rng.random_bool(0.5);
        b.output(o);
    }
    b.build().expect("random AIG is well formed")
}

/// Two inputs, two ANDs and one output: five graph nodes.
pub fn five_node_graph() -> GraphData {
    let mut b = AigBuilder::new(2, 0);
    let x = b.and(b.input(0), !b.input(1));
    let y = b.and(x, b.input(1));
    b.output(!y);
    let g = GraphData::build(&b.build().unwrap(), false);
    assert_eq!(g.num_nodes, 5);
    g
}

pub struct GradCheck {
    pub checked: usize,
    pub excluded: usize,
    /// Ranking pairs with `|m - (p_j - p_i)| < 1e-3` at the base point.
    pub near_kink_pairs: usize,
    pub worst_rel: f64,
    pub worst_index: usize,
}

/// Compares analytic gradients with central differences over every
/// parameter. A coordinate is skipped when its perturbation moves a ReLU or a
/// hinge term across its kink, which is the only way a pair within 1e-3 of the
/// hinge kink can disturb the difference quotient.
pub fn gradient_check(seed: u64) -> GradCheck {
    let g = five_node_graph();
    let graph = GraphTensor::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let features: [f64; NUM_FEATURES] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
    let space = ConfigSpace::enumerate_valid();
    let configs: Vec<PdrConfig> = (0..8).map(|_| space.configs()[rng.random_range(0..space.len())]).collect();
    let targets: Vec<f64> = (0..configs.len()).map(|_| rng.random_range(0.0..4.0)).collect();
    let net = PredictorNet::with_default_arch(seed);
    let cfg = LossConfig::default();
    let batch = [CircuitBatch { graph: &graph, features: &features, configs: &configs, targets: &targets }];

    let (_, grad) = net.loss_and_gradient(&batch, &cfg).unwrap();
    let analytic = grad.to_flat();
    let base_pattern = net.activation_pattern(&batch, &cfg).unwrap();
    let h = 1e-4;
    let results: Vec<Option<f64>> = (0..net.num_params())
        .into_par_iter()
        .map_init(
            || net.clone(),
            |local, i| {
                let orig = *local.param_mut(i);
                *local.param_mut(i) = orig + h;
                let (plus, plus_pattern) = local.loss_with_pattern(&batch, &cfg).unwrap();
                *local.param_mut(i) = orig - h;
                let (minus, minus_pattern) = local.loss_with_pattern(&batch, &cfg).unwrap();
                *local.param_mut(i) = orig;
                if plus_pattern != base_pattern || minus_pattern != base_pattern {
                    return None;
                }
                let numeric = (plus.total - minus.total) / (2.0 * h);
                let a = analytic[i];
                Some((a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR))
            },
        )
        .collect();
    let near_kink_pairs = net.hinge_margins(&batch, &cfg).unwrap().iter().filter(|d| d.abs() < 1e-3).count();
    let mut out = GradCheck { checked: 0, excluded: 0, near_kink_pairs, worst_rel: 0.0, worst_index: 0 };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            None => out.excluded += 1,
            Some(r) => {
                out.checked += 1;
                if r > out.worst_rel {
                    out.worst_rel = r;
                    out.worst_index = i;
                }
            }
        }
    }
    out
}

/// Denominator floor for the relative error; below it the comparison is
/// effectively absolute.
pub const REL_FLOOR: f64 = 1e-6;
