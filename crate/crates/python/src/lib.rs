//! Python bindings for the corpus compiler.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use kgcorpus::cache::{read_cache, write_cache};
use kgcorpus::config::BuildConfig;
use kgcorpus::corpus::build_corpus;
use kgcorpus::emit::{emit, validate, ManifestExtras};
use kgcorpus::freetext::ingest_freetext;
use kgcorpus::objective::{self, CorpusSizes, TaskLosses, TaskWeights};
use kgcorpus::render::{self, MaskingOptions, SpecialTokenSet, Task, TrainingRecord};
use kgcorpus::rrf::{ingest_release, IngestConfig, IngestReport, ReleaseFiles};
use kgcorpus::seed::SeedStream;
use kgcorpus::synth::{generate_synthetic_kg, SyntheticKgSpec};
use kgcorpus::{Error, FrozenGraph, RelationType, Triple};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Converts any serialisable value into plain Python objects via JSON.
fn to_object<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_object<T: serde::de::DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn relation(name: &str) -> PyResult<RelationType> {
    name.parse().map_err(to_py)
}

/// A frozen knowledge graph.
#[pyclass(name = "Graph", module = "pykgcorpus", frozen)]
struct PyGraph {
    inner: FrozenGraph,
    report: IngestReport,
}

#[pymethods]
impl PyGraph {
    /// Ingests a release directory, keeping only `languages` when given.
    #[staticmethod]
    #[pyo3(signature = (release_dir, languages=None, strict=false))]
    fn from_release(release_dir: PathBuf, languages: Option<Vec<String>>, strict: bool) -> PyResult<Self> {
        let mut cfg = IngestConfig::default().with_languages(languages.unwrap_or_default());
        cfg.strict = strict;
        let files = ReleaseFiles::in_dir(&release_dir).map_err(to_py)?;
        let (inner, report) = ingest_release(&files, &cfg).map_err(to_py)?;
        Ok(Self { inner, report })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, report) = read_cache(&path).map_err(to_py)?;
        Ok(Self { inner, report })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_cache(&path, &self.inner, &self.report).map_err(to_py)
    }

    /// `(terms, cuis, relations)` for one language.
    fn statistics(&self, language: &str) -> (u64, u64, u64) {
        let s = self.inner.statistics(language);
        (s.terms, s.cuis, s.relations)
    }

    fn contains(&self, head: &str, relation_name: &str, tail: &str) -> PyResult<bool> {
        Ok(self.inner.contains(&Triple::new(head, relation(relation_name)?, tail)))
    }

    fn languages(&self) -> Vec<String> {
        self.inner.languages()
    }

    fn groups(&self) -> Vec<String> {
        self.inner.group_codes().map(String::from).collect()
    }

    fn ingest_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_object(py, &self.report)
    }

    #[getter]
    fn concept_count(&self) -> usize {
        self.inner.concept_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(concepts={}, edges={})",
            self.inner.concept_count(),
            self.inner.edge_count()
        )
    }
}

/// `[(code, name, token, release_code)]` for the seven relation types.
#[pyfunction]
fn relation_types() -> Vec<(u8, &'static str, &'static str, &'static str)> {
    RelationType::ALL
        .iter()
        .map(|r| (r.code(), r.name(), r.default_token(), r.release_code()))
        .collect()
}

#[pyfunction]
fn special_tokens<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    to_object(py, &SpecialTokenSet::default())
}

/// Task weights; pass `None` for a disabled task.
#[pyfunction]
#[pyo3(signature = (n_ep=None, n_lp=None, n_tc=None))]
fn compute_weights<'py>(
    py: Python<'py>,
    n_ep: Option<u64>,
    n_lp: Option<u64>,
    n_tc: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let w = objective::compute_weights_for(n_ep, n_lp, n_tc).map_err(to_py)?;
    to_object(py, &w)
}

/// Mixed loss from per-task losses (`None` = absent) and a weights dict.
#[pyfunction]
#[pyo3(signature = (weights, mlm=None, ep=None, lp=None, tc=None))]
fn assemble_loss(
    py: Python<'_>,
    weights: &Bound<'_, PyAny>,
    mlm: Option<f64>,
    ep: Option<f64>,
    lp: Option<f64>,
    tc: Option<f64>,
) -> PyResult<f64> {
    let weights: TaskWeights = from_object(py, weights)?;
    objective::assemble_loss(&TaskLosses { mlm, ep, lp, tc }, &weights).map_err(to_py)
}

/// `(text, spans)` for `head <relation> tail`.
#[pyfunction]
fn render_triple<'py>(
    py: Python<'py>,
    head: &str,
    relation_name: &str,
    tail: &str,
) -> PyResult<(String, Bound<'py, PyAny>)> {
    let (text, spans) =
        render::render_triple(head, relation(relation_name)?, tail, &SpecialTokenSet::default()).map_err(to_py)?;
    Ok((text, to_object(py, &spans)?))
}

/// Epoch order as `[(task, index)]`.
#[pyfunction]
#[pyo3(signature = (mlm, ep, lp, tc, batch_size, seed, epoch=0))]
fn plan_interleave(
    mlm: u64,
    ep: u64,
    lp: u64,
    tc: u64,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> PyResult<Vec<(&'static str, u64)>> {
    let sizes = CorpusSizes { mlm, ep, lp, tc };
    let plan = objective::plan_interleave_epoch(&sizes, batch_size, seed, epoch).map_err(to_py)?;
    Ok(plan.order.iter().map(|r| (r.task.name(), r.index)).collect())
}

/// Masking directive for one record dict.
#[pyfunction]
#[pyo3(signature = (record, seed=0, mlm_probability=render::DEFAULT_MLM_PROBABILITY, mask_all_relations=true))]
fn masking_directive<'py>(
    py: Python<'py>,
    record: &Bound<'py, PyAny>,
    seed: u64,
    mlm_probability: f64,
    mask_all_relations: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let record: TrainingRecord = from_object(py, record)?;
    let opts = MaskingOptions {
        mlm_probability,
        mask_all_relations,
    };
    let mut rng = SeedStream::new(seed).scope(&record.id).rng();
    let d = render::make_masking_directive(&record, &SpecialTokenSet::default(), &opts, &mut rng).map_err(to_py)?;
    to_object(py, &d)
}

/// Writes a synthetic release into `out_dir` and returns its ground truth.
#[pyfunction]
#[pyo3(signature = (out_dir, concepts=1000, edges_per_relation=500, languages=None, seed=0))]
fn generate_synthetic<'py>(
    py: Python<'py>,
    out_dir: PathBuf,
    concepts: usize,
    edges_per_relation: usize,
    languages: Option<Vec<String>>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut spec = SyntheticKgSpec {
        concepts,
        edges_per_relation: RelationType::ALL.iter().map(|&r| (r, edges_per_relation)).collect(),
        seed,
        ..SyntheticKgSpec::default()
    };
    if let Some(l) = languages {
        spec.languages = l;
    }
    std::fs::create_dir_all(&out_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let (_, truth) = generate_synthetic_kg(&spec, &out_dir).map_err(to_py)?;
    to_object(py, &truth)
}

/// Builds and emits a corpus; settings use the command-line flag names
/// (`tc-size`, `seed`, `disable-task`, ...). Returns the manifest.
#[pyfunction]
#[pyo3(signature = (graph, out_dir, freetext=None, **settings))]
fn build<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    out_dir: PathBuf,
    freetext: Option<Vec<PathBuf>>,
    settings: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = BuildConfig::default();
    if let Some(settings) = settings {
        for (k, v) in settings.iter() {
            let key: String = k.extract::<String>()?.replace('_', "-");
            let value = if let Ok(list) = v.cast::<PyList>() {
                let items: Vec<String> = list
                    .iter()
                    .map(|i| i.str().map(|s| s.to_string()))
                    .collect::<PyResult<_>>()?;
                items.join(",")
            } else {
                v.str()?.to_string()
            };
            cfg.set(&key, &value).map_err(to_py)?;
        }
    }
    let inner = &graph.inner;
    let manifest = py
        .detach(|| -> Result<_, Error> {
            let (docs, _) = match &freetext {
                Some(paths) if cfg.enabled(Task::Mlm) => ingest_freetext(paths, &cfg.language, false)?,
                _ => Default::default(),
            };
            let corpus = build_corpus(inner, &docs, &cfg)?;
            let extras = ManifestExtras {
                ingest: graph.report.key_values().into_iter().collect(),
            };
            emit(&corpus, &cfg, &out_dir, &extras)
        })
        .map_err(to_py)?;
    to_object(py, &manifest)
}

/// `(passed, report_text)` for a corpus directory.
#[pyfunction]
#[pyo3(signature = (corpus_dir, graph=None))]
fn validate_corpus(corpus_dir: PathBuf, graph: Option<&PyGraph>) -> PyResult<(bool, String)> {
    let report = validate(&corpus_dir, graph.map(|g| &g.inner)).map_err(to_py)?;
    Ok((report.passed(), report.render()))
}

#[pymodule]
fn pykgcorpus(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(relation_types, m)?)?;
    m.add_function(wrap_pyfunction!(special_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(compute_weights, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_loss, m)?)?;
    m.add_function(wrap_pyfunction!(render_triple, m)?)?;
    m.add_function(wrap_pyfunction!(plan_interleave, m)?)?;
    m.add_function(wrap_pyfunction!(masking_directive, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(build, m)?)?;
    m.add_function(wrap_pyfunction!(validate_corpus, m)?)?;
    m.add("DEFAULT_MLM_PROBABILITY", render::DEFAULT_MLM_PROBABILITY)?;
    m.add("DEFAULT_SEQUENCE_LENGTH", render::DEFAULT_SEQUENCE_LENGTH)?;
    Ok(())
}
