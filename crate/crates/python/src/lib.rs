//! Python bindings: circuits, features, the configuration space, rank
//! metrics, training and prediction.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use pdrtune::aiger::{self, Aig};
use pdrtune::coi;
use pdrtune::features::{self, FeatureNormalizer, FEATURE_NAMES};
use pdrtune::model::{GraphTensor, PredictorNet};
use pdrtune::params::{ConfigSpace, PdrConfig};
use pdrtune::predict;
use pdrtune::runner;
use pdrtune::synth::{self, SynthConfig};
use pdrtune::train::{self, TrainConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An and-inverter graph loaded from AIGER.
#[pyclass(frozen, module = "pdrtune_py")]
struct Circuit {
    aig: Aig,
}

#[pymethods]
impl Circuit {
    /// Reads an `.aag` or `.aig` file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Circuit> {
        match aiger::read_file(&path) {
            Ok(aig) => Ok(Circuit { aig }),
            Err(aiger::AigerError::Io(e)) => Err(PyIOError::new_err(format!("{}: {e}", path.display()))),
            Err(e) => Err(value_err(e)),
        }
    }

    /// Parses AIGER text or binary from bytes.
    #[staticmethod]
    fn parse(data: &[u8]) -> PyResult<Circuit> {
        aiger::parse(data).map(|aig| Circuit { aig }).map_err(value_err)
    }

    #[getter]
    fn num_inputs(&self) -> usize {
        self.aig.num_inputs()
    }

    #[getter]
    fn num_latches(&self) -> usize {
        self.aig.num_latches()
    }

    #[getter]
    fn num_ands(&self) -> usize {
        self.aig.num_ands()
    }

    #[getter]
    fn num_outputs(&self) -> usize {
        self.aig.num_outputs()
    }

    /// The 11 static features by name.
    fn features<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (name, v) in FEATURE_NAMES.iter().zip(features::extract(&self.aig).to_array()) {
            d.set_item(*name, v)?;
        }
        Ok(d)
    }

    /// Cone-of-influence reduction: `(reduced circuit, report dict)`.
    fn coi<'py>(&self, py: Python<'py>) -> PyResult<(Circuit, Bound<'py, PyDict>)> {
        let (aig, r) = coi::reduce(&self.aig).map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("ands_before", r.ands_before)?;
        d.set_item("ands_after", r.ands_after)?;
        d.set_item("latches_before", r.latches_before)?;
        d.set_item("latches_after", r.latches_after)?;
        d.set_item("reduction_percent", r.reduction_percent)?;
        Ok((Circuit { aig }, d))
    }

    /// One clock step: `(outputs, next_state)`.
    fn simulate(&self, inputs: Vec<bool>, state: Vec<bool>) -> PyResult<(Vec<bool>, Vec<bool>)> {
        self.aig.simulate(&inputs, &state).map_err(value_err)
    }

    fn to_ascii<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.aig.write_ascii())
    }

    fn to_binary<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.aig.write_binary())
    }

    fn __eq__(&self, other: &Circuit) -> bool {
        self.aig == other.aig
    }

    fn __repr__(&self) -> String {
        format!(
            "Circuit(inputs={}, latches={}, ands={}, outputs={})",
            self.aig.num_inputs(),
            self.aig.num_latches(),
            self.aig.num_ands(),
            self.aig.num_outputs()
        )
    }
}

/// A trained runtime predictor with its feature normalizer.
#[pyclass(frozen, module = "pdrtune_py")]
struct Predictor {
    net: PredictorNet,
    normalizer: FeatureNormalizer,
}

#[pymethods]
impl Predictor {
    /// Loads a checkpoint; `normalizer` overrides the stored statistics.
    #[staticmethod]
    #[pyo3(signature = (path, normalizer=None))]
    fn load(path: PathBuf, normalizer: Option<PathBuf>) -> PyResult<Predictor> {
        let (net, stored) = PredictorNet::load(&path).map_err(value_err)?;
        let normalizer = match (normalizer, stored) {
            (Some(p), _) => FeatureNormalizer::load(p).map_err(value_err)?,
            (None, Some(n)) => n,
            (None, None) => return Err(PyValueError::new_err("checkpoint has no normalizer")),
        };
        Ok(Predictor { net, normalizer })
    }

    /// The best `top` configurations as `(flags, predicted_log_runtime)`.
    #[pyo3(signature = (circuit, top=5))]
    fn rank(&self, py: Python<'_>, circuit: &Circuit, top: usize) -> PyResult<Vec<(String, f64)>> {
        let ranking = py.detach(|| {
            let (raw, graph) = train::circuit_inputs(&circuit.aig);
            predict::rank_configs(&self.net, &GraphTensor::new(&graph), &self.normalizer.apply(&raw))
        });
        let best = predict::top_k(&ranking.map_err(value_err)?, top).map_err(value_err)?;
        Ok(best.entries.iter().map(|(c, p)| (c.to_string(), *p)).collect())
    }
}

/// All valid configurations as flag strings, in bit-vector order.
#[pyfunction]
fn config_space() -> Vec<String> {
    ConfigSpace::enumerate_valid().iter().map(|c| c.to_string()).collect()
}

/// Ids of the rules a flag string violates.
#[pyfunction]
fn check_rules(flags: &str) -> PyResult<Vec<u32>> {
    let c = PdrConfig::from_flag_string(flags).map_err(value_err)?;
    Ok(c.violated_rules().into_iter().map(|r| u32::from(r.id())).collect())
}

#[pyfunction]
fn kendall_tau(truth: Vec<f64>, pred: Vec<f64>) -> PyResult<f64> {
    train::kendall_tau(&truth, &pred).map_err(value_err)
}

#[pyfunction]
fn spearman_rho(truth: Vec<f64>, pred: Vec<f64>) -> PyResult<f64> {
    train::spearman_rho(&truth, &pred).map_err(value_err)
}

#[pyfunction]
fn format_improvement(baseline_solved: usize, method_solved: usize) -> String {
    runner::format_improvement(baseline_solved, method_solved)
}

/// Writes a synthetic corpus into `out_dir`; returns the record count.
#[pyfunction]
#[pyo3(signature = (out_dir, n=60, seed=0, wall_limit=3600.0))]
fn synth_generate(py: Python<'_>, out_dir: PathBuf, n: usize, seed: u64, wall_limit: f64) -> PyResult<usize> {
    py.detach(|| {
        let data = synth::generate(&SynthConfig { n_circuits: n, seed, wall_limit })?;
        synth::write_to_dir(&data, &out_dir)?;
        Ok(data.records.len())
    })
    .map_err(|e: synth::SynthError| value_err(e))
}

/// Trains on a runtime CSV and writes `model.ckpt` into `out_dir`. Returns
/// the test-fold metrics and the best epoch.
#[pyfunction]
#[pyo3(signature = (data, aigs, out_dir, seed=0, epochs=300, lr=1e-3, patience=20))]
#[allow(clippy::too_many_arguments)]
fn train_model(
    py: Python<'_>,
    data: PathBuf,
    aigs: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    epochs: usize,
    lr: f64,
    patience: usize,
) -> PyResult<BTreeMap<String, f64>> {
    py.detach(|| -> Result<_, String> {
        let records = train::load_dataset(&data).map_err(|e| e.to_string())?;
        let samples = train::prepare_samples(&records, &aigs).map_err(|e| e.to_string())?;
        let cfg = TrainConfig { max_epochs: epochs, lr, patience, seed, ..Default::default() };
        let fitted = train::fit(&records, samples, &cfg).map_err(|e| e.to_string())?;
        std::fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
        fitted.outcome.net.save(Some(&fitted.normalizer), out_dir.join("model.ckpt")).map_err(|e| e.to_string())?;
        Ok(BTreeMap::from([
            ("kendall_tau".to_string(), fitted.test_metrics.kendall_tau),
            ("spearman_rho".to_string(), fitted.test_metrics.spearman_rho),
            ("best_epoch".to_string(), fitted.outcome.best_epoch as f64),
        ]))
    })
    .map_err(PyValueError::new_err)
}

#[pymodule]
fn pdrtune_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Circuit>()?;
    m.add_class::<Predictor>()?;
    m.add_function(wrap_pyfunction!(config_space, m)?)?;
    m.add_function(wrap_pyfunction!(check_rules, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_rho, m)?)?;
    m.add_function(wrap_pyfunction!(format_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add("FEATURE_NAMES", FEATURE_NAMES.to_vec())?;
    Ok(())
}
