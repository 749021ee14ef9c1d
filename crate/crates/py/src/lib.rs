//! Python bindings. Rich results come back as plain dicts and lists.

use appraise_rl::appraisal::{appraise_detailed, AppraisalOptions};
use appraise_rl::rl::{train as rl_train, Hyperparams, TrainedAgent};
use appraise_rl::scherer::{build_corpus as core_build_corpus, Emotion, LabeledSample};
use appraise_rl::study::experiment::RunOptions;
use appraise_rl::study::ExperimentConfig;
use appraise_rl::{assets, seed as seeds, AppraisalVector, MdpSpec, SvmModel};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn emotion(name: &str) -> PyResult<Emotion> {
    name.parse().map_err(err)
}

/// A parsed and validated MDP.
#[pyclass(name = "Mdp", module = "appraise_rl_py", frozen)]
struct PyMdp {
    spec: MdpSpec,
}

#[pymethods]
impl PyMdp {
    #[getter]
    fn states(&self) -> Vec<String> {
        self.spec.states.iter().map(|s| s.to_string()).collect()
    }

    #[getter]
    fn terminals(&self) -> Vec<String> {
        self.spec.terminals.iter().map(|s| s.to_string()).collect()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.spec.discount
    }

    /// Violations; empty for a valid spec.
    fn validate(&self) -> Vec<String> {
        self.spec.validate()
    }

    fn spec_hash(&self) -> String {
        self.spec.spec_hash()
    }

    /// Canonical text form.
    fn __str__(&self) -> String {
        self.spec.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Mdp(states={}, initial={})", self.spec.states.len(), self.spec.initial)
    }
}

#[pyclass(name = "Agent", module = "appraise_rl_py", frozen)]
struct PyAgent {
    agent: TrainedAgent,
}

#[pymethods]
impl PyAgent {
    fn q_value(&self, state: &str, action: &str) -> f64 {
        self.agent.q.get(&state.into(), &action.into())
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.agent).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { agent: serde_json::from_str(text).map_err(err)? })
    }
}

#[pyclass(name = "SvmModel", module = "appraise_rl_py", frozen)]
struct PySvm {
    model: SvmModel,
}

fn vector(v: [f64; 4]) -> AppraisalVector {
    AppraisalVector::from_array(v)
}

#[pymethods]
impl PySvm {
    #[getter]
    fn classes(&self) -> Vec<String> {
        self.model.classes.iter().map(|e| e.to_string()).collect()
    }

    #[getter]
    fn c(&self) -> f64 {
        self.model.c
    }

    /// Intensity per emotion for an appraisal vector
    /// (suddenness, goal_relevance, conduciveness, power).
    fn predict_intensities(&self, v: [f64; 4]) -> Vec<(String, f64)> {
        self.model.predict_intensities(&vector(v)).into_iter().map(|(e, p)| (e.to_string(), p)).collect()
    }

    fn predict(&self, v: [f64; 4]) -> String {
        self.model.predict(&vector(v)).to_string()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.model).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { model: serde_json::from_str(text).map_err(err)? })
    }
}

#[pyfunction]
fn parse_mdp(text: &str) -> PyResult<PyMdp> {
    Ok(PyMdp { spec: appraise_rl::parse_mdp(text).map_err(err)? })
}

/// One of the bundled story MDPs by emotion name.
#[pyfunction]
fn load_mdp(name: &str) -> PyResult<PyMdp> {
    Ok(PyMdp { spec: assets::load_mdp(name).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (mdp, *, episodes = 1000, alpha = 0.1, epsilon = 0.1, max_steps = 50, seed = 0))]
fn train(mdp: &PyMdp, episodes: usize, alpha: f64, epsilon: f64, max_steps: usize, seed: u64) -> PyResult<PyAgent> {
    let hyper = Hyperparams { alpha, epsilon, episodes, max_steps, seed };
    Ok(PyAgent { agent: rl_train(&mdp.spec, &hyper).map_err(err)? })
}

/// Appraisal of the designated event as a dict, plus `td_error`.
#[pyfunction]
#[pyo3(signature = (agent, mdp, *, td_scale = 1.0))]
fn appraise<'py>(py: Python<'py>, agent: &PyAgent, mdp: &PyMdp, td_scale: f64) -> PyResult<Bound<'py, PyAny>> {
    let a = appraise_detailed(&agent.agent, &mdp.spec, &AppraisalOptions { td_scale }).map_err(err)?;
    let out = to_py(py, &a.vector)?;
    out.set_item("td_error", a.td_error)?;
    Ok(out)
}

/// Labelled samples as a list of ((s, gr, c, p), emotion).
#[pyfunction]
#[pyo3(signature = (emotions, *, n_per = 500, seed = 0, medium_mean = 0.5))]
fn build_corpus(emotions: Vec<String>, n_per: usize, seed: u64, medium_mean: f64) -> PyResult<Vec<([f64; 4], String)>> {
    let emotions: Vec<Emotion> = emotions.iter().map(|e| emotion(e)).collect::<PyResult<_>>()?;
    let mapping = assets::level_mapping().map_err(err)?.with_medium_mean(medium_mean);
    let patterns = assets::patterns().map_err(err)?;
    let corpus = core_build_corpus(&patterns, &mapping, &emotions, n_per, seeds::derive(seed, "corpus")).map_err(err)?;
    Ok(corpus.into_iter().map(|s| (s.vector.to_array(), s.label.to_string())).collect())
}

#[pyfunction]
#[pyo3(signature = (corpus, c, *, gamma = None, seed = 0))]
fn train_svm(corpus: Vec<([f64; 4], String)>, c: f64, gamma: Option<f64>, seed: u64) -> PyResult<PySvm> {
    let samples: Vec<LabeledSample> = corpus
        .into_iter()
        .map(|(v, l)| Ok(LabeledSample { vector: vector(v), label: emotion(&l)? }))
        .collect::<PyResult<_>>()?;
    Ok(PySvm { model: appraise_rl::svm::train_svm(&samples, c, gamma, seed).map_err(err)? })
}

/// Runs an experiment config file and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (config_path, *, seed = None, out_dir = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_path: std::path::PathBuf,
    seed: Option<u64>,
    out_dir: Option<std::path::PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ExperimentConfig::load(&config_path).map_err(err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = py
        .detach(|| appraise_rl::study::run_experiment(&cfg, &RunOptions::default()))
        .map_err(err)?;
    if let Some(dir) = out_dir {
        report.write_outputs(&dir).map_err(err)?;
    }
    to_py(py, &report)
}

#[pymodule]
fn appraise_rl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_class::<PyAgent>()?;
    m.add_class::<PySvm>()?;
    m.add_function(wrap_pyfunction!(parse_mdp, m)?)?;
    m.add_function(wrap_pyfunction!(load_mdp, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(appraise, m)?)?;
    m.add_function(wrap_pyfunction!(build_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train_svm, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("EMOTIONS", Emotion::ALL.iter().map(|e| e.to_string()).collect::<Vec<_>>())?;
    Ok(())
}
