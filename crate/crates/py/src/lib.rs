//! Python module `pcsub`: networks, ticking, snapshots, energy, checkpoints
//! and the bundled experiments.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pcsub_core::config_io::checkpoint::{load_checkpoint, save_checkpoint};
use pcsub_core::{ActivationKind, ClampMap, Error, Experiment, Network, NetworkConfig, Overrides};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn clamp_map(depth: usize, clamps: Option<BTreeMap<usize, Vec<f32>>>) -> PyResult<ClampMap> {
    let mut map = ClampMap::free(depth);
    for (p, values) in clamps.unwrap_or_default() {
        if p >= depth {
            return Err(PyValueError::new_err(format!("layer {p} out of range for depth {depth}")));
        }
        map.set_layer(p, &values);
    }
    Ok(map)
}

/// A layered network of neural cores. Layer 0 is the input (top) layer.
#[pyclass(name = "Network", module = "pcsub")]
struct PyNetwork {
    inner: Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (
        layer_sizes,
        activations = None,
        alpha = 0.01,
        gamma = 0.05,
        clamp_hard = true,
        alpha_bias_scale = 1.0,
        bias_frozen = false,
        seed = 0,
        init_scale = 0.5,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        layer_sizes: Vec<usize>,
        activations: Option<Vec<String>>,
        alpha: f32,
        gamma: f32,
        clamp_hard: bool,
        alpha_bias_scale: f32,
        bias_frozen: bool,
        seed: u64,
        init_scale: f32,
    ) -> PyResult<Self> {
        let activations = match activations {
            Some(names) => {
                names.iter().map(|n| n.parse::<ActivationKind>()).collect::<Result<Vec<_>, _>>().map_err(py_err)?
            }
            None => vec![ActivationKind::Identity; layer_sizes.len()],
        };
        let cfg = NetworkConfig {
            layer_sizes,
            activations,
            alpha,
            gamma,
            clamp_hard,
            alpha_bias_scale,
            bias_frozen,
            seed,
            init_scale,
        };
        Ok(Self { inner: Network::build(cfg).map_err(py_err)? })
    }

    /// Loads a `PCSUB1` checkpoint with identity activations and default rates.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_checkpoint(path, None).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.config().layer_sizes.clone()
    }

    #[getter]
    fn ticks(&self) -> u64 {
        self.inner.ticks()
    }

    /// One tick. `clamps` maps a layer index to its observed values.
    #[pyo3(signature = (clamps = None))]
    fn tick<'py>(
        &mut self,
        py: Python<'py>,
        clamps: Option<BTreeMap<usize, Vec<f32>>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let clamp = clamp_map(self.inner.depth(), clamps)?;
        let report = self.inner.tick(&clamp).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("network_cycles", report.network_cycles)?;
        d.set_item("per_core_cycles", report.per_core_cycles)?;
        d.set_item("diverged", report.diverged)?;
        d.set_item("states", report.states)?;
        d.set_item("errors", report.errors)?;
        Ok(d)
    }

    /// Runs `ticks` ticks under a fixed clamp; returns whether any diverged.
    #[pyo3(signature = (ticks, clamps = None))]
    fn run(&mut self, ticks: usize, clamps: Option<BTreeMap<usize, Vec<f32>>>) -> PyResult<bool> {
        let clamp = clamp_map(self.inner.depth(), clamps)?;
        let mut diverged = false;
        for _ in 0..ticks {
            diverged |= self.inner.tick(&clamp).map_err(py_err)?.diverged;
        }
        Ok(diverged)
    }

    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.snapshot();
        let d = PyDict::new(py);
        d.set_item("layer_sizes", s.layer_sizes)?;
        d.set_item("x", s.x)?;
        d.set_item("eps", s.eps)?;
        d.set_item("theta", s.theta)?;
        d.set_item("back_up", s.back_up)?;
        Ok(d)
    }

    fn energy(&self) -> f64 {
        self.inner.energy()
    }

    fn states(&self, layer: usize) -> PyResult<Vec<f32>> {
        self.inner
            .layers()
            .get(layer)
            .map(|l| l.states())
            .ok_or_else(|| PyValueError::new_err(format!("no layer {layer}")))
    }

    fn set_states(&mut self, layer: usize, values: Vec<f32>) -> PyResult<()> {
        self.check_layer(layer)?;
        self.inner.set_layer_states(layer, &values).map_err(py_err)
    }

    /// Row-major weights of `layer`, bias column last.
    fn set_weights(&mut self, layer: usize, values: Vec<f32>) -> PyResult<()> {
        self.check_layer(layer)?;
        self.inner.set_layer_weights(layer, &values).map_err(py_err)
    }

    fn reset_states(&mut self) {
        self.inner.reset_states();
    }

    fn set_alpha(&mut self, alpha: f32) {
        self.inner.set_alpha(alpha);
    }

    fn set_gamma(&mut self, gamma: f32) {
        self.inner.set_gamma(gamma);
    }

    fn cycle_table(&self) -> Vec<Vec<u64>> {
        self.inner.cycle_table()
    }

    fn tick_latency(&self) -> u64 {
        self.inner.tick_latency()
    }

    /// First tick at which the simulator and the dense binary32 oracle
    /// disagree under `clamps`, or `None`. Advances the network.
    #[pyo3(signature = (ticks, clamps = None))]
    fn first_divergence(&mut self, ticks: usize, clamps: Option<BTreeMap<usize, Vec<f32>>>) -> PyResult<Option<usize>> {
        let clamp = clamp_map(self.inner.depth(), clamps)?;
        pcsub_core::oracle::first_divergence(&mut self.inner, &clamp, ticks).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Network(layer_sizes={:?}, ticks={})", self.inner.config().layer_sizes, self.inner.ticks())
    }
}

impl PyNetwork {
    fn check_layer(&self, layer: usize) -> PyResult<()> {
        if layer < self.inner.depth() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("no layer {layer}")))
        }
    }
}

/// Runs a bundled experiment. `settings` are extra `key = value` lines.
#[pyfunction]
#[pyo3(signature = (name, seed = None, settings = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    name: &str,
    seed: Option<u64>,
    settings: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let overrides = Overrides { seed, settings: settings.unwrap_or_default() };
    let out = py.detach(|| pcsub_core::run_experiment(name, &overrides)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("name", &out.name)?;
    d.set_item("mse", &out.curve.mse)?;
    d.set_item("diverged", out.curve.any_diverged())?;
    d.set_item("csv", out.csv())?;
    d.set_item("network", Bound::new(py, PyNetwork { inner: out.network })?)?;
    Ok(d)
}

/// Names of the bundled experiments.
#[pyfunction]
fn experiments() -> Vec<&'static str> {
    Experiment::ALL.iter().map(|e| e.name()).collect()
}

/// Bundled config text of an experiment.
#[pyfunction]
fn experiment_config(name: &str) -> PyResult<&'static str> {
    name.parse::<Experiment>().map(Experiment::config_text).map_err(py_err)
}

/// Oracle equivalence on random networks: `(passed, summary)`.
#[pyfunction]
#[pyo3(signature = (nets = 100, ticks = 50, seed = 0))]
fn verify(py: Python<'_>, nets: usize, ticks: usize, seed: u64) -> PyResult<(bool, String)> {
    let report = py.detach(|| pcsub_core::verify_random_networks(nets, ticks, seed)).map_err(py_err)?;
    let summary = match &report.mismatch {
        None => format!("{} nets x {} ticks, {} values bit-identical", report.nets, report.ticks, report.values),
        Some(m) => m.clone(),
    };
    Ok((report.passed(), summary))
}

/// `a * b + acc` with two binary32 roundings.
#[pyfunction]
fn fp_mul_add(a: f32, b: f32, acc: f32) -> f32 {
    pcsub_core::fp_mul_add(a, b, acc)
}

#[pymodule]
pub fn pcsub(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    m.add_function(wrap_pyfunction!(experiment_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(fp_mul_add, m)?)?;
    Ok(())
}
