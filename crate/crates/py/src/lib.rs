use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use aigcert::certcheck::{self, CheckOptions};
use aigcert::cli::{self, FuzzCase, FuzzSummary, McConfig, McError};
use aigcert::engine::{Budget, EngineKind, Verdict};
use aigcert::oracle::GenParams;
use aigcert::periodic::SearchConfig;
use aigcert::{aiger_io, oracle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An and-inverter graph with latch resets.
#[pyclass(module = "aigcert_py", frozen)]
struct Circuit {
    inner: aigcert::Circuit,
}

#[pymethods]
impl Circuit {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Circuit> {
        aiger_io::parse(text)
            .map(|inner| Circuit { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Circuit> {
        let text = std::fs::read_to_string(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        Circuit::parse(&text)
    }

    fn to_aag(&self) -> String {
        aiger_io::write(&self.inner)
    }

    #[getter]
    fn num_inputs(&self) -> usize {
        self.inner.num_inputs()
    }

    #[getter]
    fn num_latches(&self) -> usize {
        self.inner.num_latches()
    }

    #[getter]
    fn num_ands(&self) -> usize {
        self.inner.num_ands()
    }

    #[getter]
    fn latch_names(&self) -> Vec<String> {
        (0..self.inner.num_latches())
            .map(|i| self.inner.display_latch(i))
            .collect()
    }

    /// Returns `(next_state, bad)` for one step.
    fn eval(&self, inputs: Vec<bool>, latches: Vec<bool>) -> PyResult<(Vec<bool>, bool)> {
        let ev = self
            .inner
            .eval(&inputs, &latches)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok((ev.next_state(&self.inner), ev.bad(&self.inner)))
    }

    #[pyo3(signature = (sim_steps = 1000))]
    fn info(&self, sim_steps: usize) -> String {
        cli::info(&self.inner, sim_steps)
    }

    fn __repr__(&self) -> String {
        format!(
            "Circuit(inputs={}, latches={}, ands={})",
            self.inner.num_inputs(),
            self.inner.num_latches(),
            self.inner.num_ands()
        )
    }

    fn __eq__(&self, other: &Circuit) -> bool {
        self.inner == other.inner
    }
}

fn engine_kind(name: &str) -> PyResult<EngineKind> {
    Ok(match name {
        "ic3" => EngineKind::Ic3,
        "kind" => EngineKind::KInduction,
        "bmc" => EngineKind::Bmc,
        "portfolio" => EngineKind::Portfolio,
        _ => return Err(PyValueError::new_err(format!("unknown engine {name:?}"))),
    })
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Runs the full flow and returns a dict with the verdict, the selected
/// candidate, and a certificate or trace when there is one.
#[pyfunction]
#[pyo3(signature = (circuit, engine = "ic3", max_phase = 8, max_duration = 8, forward = true,
                    max_bound = None, conflicts = None, timeout = None))]
#[allow(clippy::too_many_arguments)]
fn model_check<'py>(
    py: Python<'py>,
    circuit: &Circuit,
    engine: &str,
    max_phase: usize,
    max_duration: usize,
    forward: bool,
    max_bound: Option<usize>,
    conflicts: Option<u64>,
    timeout: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = McConfig {
        search: SearchConfig {
            max_d: max_duration,
            max_n: max_phase,
            ..SearchConfig::default()
        },
        allow_forwarding: forward,
        engine: engine_kind(engine)?,
        budget: Budget {
            max_bound,
            conflicts,
            deadline: timeout.map(|s| std::time::Instant::now() + std::time::Duration::from_secs_f64(s)),
            cancel: None,
        },
        certify: true,
    };
    let c = &circuit.inner;
    let out = py.detach(|| cli::model_check(c, &cfg)).map_err(|e| match e {
        McError::Netlist(e) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    })?;
    let d = PyDict::new(py);
    d.set_item("status", out.verdict.status())?;
    if let Verdict::Unknown(why) = &out.verdict {
        d.set_item("reason", why)?;
    }
    d.set_item("d", out.pipeline.d)?;
    d.set_item("n", out.pipeline.n)?;
    d.set_item("reduced_latches", out.pipeline.reduced.num_latches())?;
    d.set_item("candidates", out.candidates)?;
    d.set_item("proof_depth", out.proof().map(|p| p.depth))?;
    d.set_item("note", out.no_certificate.clone())?;
    d.set_item("witness", out.witness.map(|inner| Circuit { inner }))?;
    match &out.trace {
        Some(t) => {
            let td = PyDict::new(py);
            td.set_item("initial", t.initial.clone())?;
            td.set_item("inputs", t.inputs.clone())?;
            td.set_item("text", cli::format_trace(c, t))?;
            d.set_item("trace", td)?;
        }
        None => d.set_item("trace", py.None())?,
    }
    d.set_item("mc_seconds", out.mc_time.as_secs_f64())?;
    d.set_item("check_seconds", out.check_time.as_secs_f64())?;
    Ok(d)
}

/// Checks a witness against a model; the report as a dict.
#[pyfunction]
fn check<'py>(py: Python<'py>, model: &Circuit, witness: &Circuit) -> PyResult<Bound<'py, PyAny>> {
    let opts = CheckOptions::from_env();
    let report = py.detach(|| certcheck::check_with(&model.inner, &witness.inner, &opts));
    json_to_py(py, &report)
}

/// Seeded random circuit with stratified resets.
#[pyfunction]
#[pyo3(signature = (seed, max_inputs = 4, max_latches = 8, max_ands = 16))]
fn random_circuit(seed: u64, max_inputs: usize, max_latches: usize, max_ands: usize) -> Circuit {
    let p = GenParams {
        max_inputs,
        max_latches,
        max_ands,
    };
    Circuit {
        inner: oracle::random_circuit(&mut ChaCha8Rng::seed_from_u64(seed), &p),
    }
}

/// Differential fuzzing against explicit-state search; summary as a dict.
#[pyfunction]
#[pyo3(signature = (count, seed = 1, max_inputs = 4, max_latches = 8, max_ands = 16))]
fn fuzz<'py>(
    py: Python<'py>,
    count: u64,
    seed: u64,
    max_inputs: usize,
    max_latches: usize,
    max_ands: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = GenParams {
        max_inputs,
        max_latches,
        max_ands,
    };
    let summary = py.detach(|| {
        let cases: Vec<FuzzCase> = cli::fuzz(count, seed, &p, &cli::fuzz_config())
            .into_iter()
            .map(|r| r.1)
            .collect();
        FuzzSummary::from_cases(&cases)
    });
    json_to_py(py, &summary)
}

#[pymodule]
fn aigcert_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Circuit>()?;
    m.add_function(wrap_pyfunction!(model_check, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(random_circuit, m)?)?;
    m.add_function(wrap_pyfunction!(fuzz, m)?)?;
    Ok(())
}
