//! Python module `adhoc`: train models, run experiments, compare summaries
//! and ask questions about traces. Results come back as plain dicts.

use std::path::{Path, PathBuf};

use adhoc_core::explain::{Explainer, Templates, Trace};
use adhoc_core::harness::{self, ExperimentConfig, HarnessError, Summary, TrainConfig, DEFAULT_RESAMPLES};
use adhoc_core::kr::fort_attack_domain;
use adhoc_core::models::write_library;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn harness_err(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Config(_) | HarnessError::Mismatch(_) | HarnessError::TooFew(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn runtime(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Train one model per agent type; writes the model file when `out` is given.
/// Returns the per-type accuracy report.
#[pyfunction]
#[pyo3(signature = (examples = 10_000, seed = 0, out = None))]
fn train(py: Python<'_>, examples: usize, seed: u64, out: Option<PathBuf>) -> PyResult<Bound<'_, PyAny>> {
    let cfg = TrainConfig { examples_per_type: examples, seed, ..TrainConfig::default() };
    let (lib, report) = py.detach(|| harness::train_models(&cfg)).map_err(harness_err)?;
    if let Some(p) = out {
        let mut f = std::fs::File::create(&p).map_err(runtime)?;
        write_library(&mut f, &lib).map_err(runtime)?;
    }
    to_py(py, &report)
}

/// Run one experiment arm described by key = value `config` text.
#[pyfunction]
#[pyo3(signature = (config, models = None, out_dir = None))]
fn experiment<'py>(
    py: Python<'py>,
    config: &str,
    models: Option<PathBuf>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ExperimentConfig::parse(config, None).map_err(harness_err)?;
    cfg.models = models.or(cfg.models);
    cfg.out_dir = out_dir.or(cfg.out_dir);
    let r = py.detach(|| harness::run_experiment(&cfg, None)).map_err(harness_err)?;
    to_py(py, &r.summary)
}

/// Bootstrap comparison of two `summary.json` files.
#[pyfunction]
#[pyo3(signature = (a, b, force = false, resamples = DEFAULT_RESAMPLES, alpha = 0.05))]
fn compare(py: Python<'_>, a: PathBuf, b: PathBuf, force: bool, resamples: usize, alpha: f64) -> PyResult<Bound<'_, PyAny>> {
    let load = |p: &Path| Summary::load(p).map_err(harness_err);
    let c = harness::compare(&load(&a)?, &load(&b)?, force, resamples, alpha).map_err(harness_err)?;
    to_py(py, &c)
}

/// Answer each question about the trace at `trace`. Unanswerable questions
/// yield `{"question", "error"}` entries instead of raising.
#[pyfunction]
fn explain(py: Python<'_>, trace: PathBuf, questions: Vec<String>) -> PyResult<Bound<'_, PyAny>> {
    let trace = Trace::load(&trace).map_err(runtime)?;
    let desc = fort_attack_domain().map_err(runtime)?;
    let ex = Explainer::new(trace, &desc, Templates::bundled()).map_err(runtime)?;
    let rows: Vec<serde_json::Value> = questions
        .iter()
        .map(|q| match ex.ask(q) {
            Ok(a) => serde_json::json!({ "question": q, "answer": a }),
            Err(e) => serde_json::json!({ "question": q, "error": e.to_string() }),
        })
        .collect();
    to_py(py, &rows)
}

#[pymodule]
fn adhoc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    Ok(())
}
