//! Python bindings: signal synthesis and conditioning, dataset building,
//! training/evaluation, biometric metrics, the power model, and the packet
//! codec. See python/smoke_test.py for a tour.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use pulseauth_core::dataset as ds;
use pulseauth_core::metrics;
use pulseauth_core::nn::ModelConfig;
use pulseauth_core::signal;
use pulseauth_core::stream;
use pulseauth_core::study;
use pulseauth_core::train;

fn py_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A multi-channel recording (4 equal-length series).
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Record {
    inner: signal::SignalRecord,
}

#[pymethods]
impl Record {
    #[getter]
    fn subject_id(&self) -> String {
        self.inner.subject_id.clone()
    }

    #[getter]
    fn activity(&self) -> String {
        self.inner.activity.as_str().to_string()
    }

    #[getter]
    fn rate_hz(&self) -> f64 {
        self.inner.rate_hz
    }

    #[getter]
    fn channels(&self) -> Vec<Vec<f64>> {
        self.inner.channels.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Record(subject='{}', activity='{}', rate={} Hz, samples={})",
            self.inner.subject_id,
            self.inner.activity,
            self.inner.rate_hz,
            self.inner.len()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (seed, heart_rate_bpm, duration_s, rate_hz, subject_id=None,
                    hr_variability=0.0, inter_channel_lag_s=0.0, noise_std=0.05))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    seed: u64,
    heart_rate_bpm: f64,
    duration_s: f64,
    rate_hz: f64,
    subject_id: Option<String>,
    hr_variability: f64,
    inter_channel_lag_s: f64,
    noise_std: f64,
) -> PyResult<Record> {
    let mut profile = signal::SyntheticSubjectProfile::new(seed, heart_rate_bpm);
    if let Some(id) = subject_id {
        profile.subject_id = id;
    }
    profile.hr_variability_bpm = hr_variability;
    profile.inter_channel_lag_s = inter_channel_lag_s;
    for ch in profile.channels.iter_mut() {
        ch.noise_std = noise_std;
    }
    let inner = signal::generate_synthetic(&profile, duration_s, rate_hz).map_err(py_err)?;
    Ok(Record { inner })
}

#[pyfunction]
#[pyo3(signature = (n_subjects, minutes_each, rate_hz=25.0, seed=7))]
fn benchmark_cohort(
    n_subjects: usize,
    minutes_each: f64,
    rate_hz: f64,
    seed: u64,
) -> PyResult<Vec<Record>> {
    let records = study::benchmark_cohort(n_subjects, minutes_each, rate_hz, seed).map_err(py_err)?;
    Ok(records.into_iter().map(|inner| Record { inner }).collect())
}

#[pyfunction]
fn bandpass(record: &Record) -> PyResult<Record> {
    Ok(Record { inner: signal::bandpass(&record.inner).map_err(py_err)? })
}

#[pyfunction]
fn resample(record: &Record, target_hz: f64) -> PyResult<Record> {
    Ok(Record { inner: signal::resample(&record.inner, target_hz).map_err(py_err)? })
}

#[pyfunction]
fn load_csv(path: &str) -> PyResult<Vec<Record>> {
    let records = signal::load_csv(path).map_err(py_err)?;
    Ok(records.into_iter().map(|inner| Record { inner }).collect())
}

#[pyfunction]
fn write_csv(records: Vec<Record>, path: &str) -> PyResult<()> {
    let inner: Vec<signal::SignalRecord> = records.into_iter().map(|r| r.inner).collect();
    signal::write_csv(&inner, path).map_err(py_err)
}

/// A windowed, labeled dataset.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: ds::Dataset,
}

#[pymethods]
impl Dataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.label_names.clone()
    }

    #[getter]
    fn class_counts(&self) -> Vec<usize> {
        self.inner.class_counts()
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.windows.iter().map(|w| w.label).collect()
    }

    /// (values row-major T×C, label) of window `i`.
    fn window(&self, i: usize) -> PyResult<(Vec<f64>, usize)> {
        let w = self
            .inner
            .windows
            .get(i)
            .ok_or_else(|| py_err(format!("window {i} out of range")))?;
        Ok((w.values.clone(), w.label))
    }

    fn class_weights(&self) -> PyResult<Vec<f64>> {
        Ok(ds::class_weights(&self.inner).map_err(py_err)?.w)
    }

    fn save(&self, manifest_path: &str, tensor_path: &str) -> PyResult<()> {
        ds::save_manifest(&self.inner, manifest_path, tensor_path).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Dataset(windows={}, classes={})", self.inner.len(), self.inner.class_count)
    }
}

#[pyfunction]
#[pyo3(signature = (records, window_s=4.0, overlap=0.5))]
fn build_dataset(records: Vec<Record>, window_s: f64, overlap: f64) -> PyResult<Dataset> {
    let inner: Vec<signal::SignalRecord> = records.into_iter().map(|r| r.inner).collect();
    Ok(Dataset { inner: ds::build_dataset(&inner, window_s, overlap).map_err(py_err)? })
}

#[pyfunction]
fn load_dataset(manifest_path: &str, tensor_path: &str) -> PyResult<Dataset> {
    Ok(Dataset { inner: ds::load_manifest(manifest_path, tensor_path).map_err(py_err)? })
}

#[pyfunction]
#[pyo3(signature = (dataset, train=0.6, val=0.2, test=0.2, seed=0))]
fn stratified_split(
    dataset: &Dataset,
    train: f64,
    val: f64,
    test: f64,
    seed: u64,
) -> PyResult<(Dataset, Dataset, Dataset)> {
    let spec = ds::SplitSpec::new(train, val, test, seed);
    let (a, b, c) = ds::stratified_split(&dataset.inner, &spec).map_err(py_err)?;
    Ok((Dataset { inner: a }, Dataset { inner: b }, Dataset { inner: c }))
}

/// A trained classifier.
#[pyclass]
struct Model {
    params: Arc<pulseauth_core::nn::ModelParams>,
    label_names: Vec<String>,
}

#[pymethods]
impl Model {
    /// Class probabilities for one window (values row-major T×C).
    fn predict(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        pulseauth_core::nn::classifier_forward(
            &values,
            &self.params,
            pulseauth_core::nn::Mode::Eval,
        )
        .map_err(py_err)
    }

    /// Accuracy/loss plus biometric metrics on a dataset.
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        let eval = train::evaluate(&self.params, &dataset.inner).map_err(py_err)?;
        let report =
            metrics::compute_report(&eval.predictions, dataset.inner.class_count, 0.8)
                .map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("accuracy", eval.accuracy)?;
        out.set_item("loss", eval.loss)?;
        out.set_item("macro_f1", report.macro_f1)?;
        out.set_item("far", report.far)?;
        out.set_item("frr", report.frr)?;
        out.set_item("eer", report.eer)?;
        Ok(out)
    }

    #[getter]
    fn label_names(&self) -> Vec<String> {
        self.label_names.clone()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        train::save_checkpoint(&self.params, &self.label_names, serde_json::json!({}), path)
            .map_err(py_err)
    }
}

#[pyfunction]
#[pyo3(signature = (train_set, val_set, hidden=32, layers=1, dropout=0.2,
                    max_epochs=10, batch_size=32, lr0=9.23e-4, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train_model(
    train_set: &Dataset,
    val_set: &Dataset,
    hidden: usize,
    layers: usize,
    dropout: f64,
    max_epochs: usize,
    batch_size: usize,
    lr0: f64,
    seed: u64,
) -> PyResult<Model> {
    let w = train_set
        .inner
        .windows
        .first()
        .ok_or_else(|| py_err("training set is empty"))?;
    let cfg = ModelConfig::new(w.channels, w.t_steps, train_set.inner.class_count)
        .with_hidden(hidden)
        .with_layers(layers)
        .with_dropout(dropout);
    let tc = train::TrainConfig { max_epochs, batch_size, lr0, seed, ..Default::default() };
    let (params, _history) = train::train(&cfg, &tc, &train_set.inner, &val_set.inner).map_err(py_err)?;
    Ok(Model { params: Arc::new(params), label_names: train_set.inner.label_names.clone() })
}

#[pyfunction]
fn load_model(path: &str) -> PyResult<Model> {
    let ckpt = train::load_checkpoint(path).map_err(py_err)?;
    Ok(Model { params: Arc::new(ckpt.params), label_names: ckpt.label_names })
}

#[pyfunction]
fn eer(genuine: Vec<f64>, imposter: Vec<f64>) -> PyResult<(f64, f64)> {
    metrics::eer(&metrics::ScoreSet { genuine, imposter }).map_err(py_err)
}

#[pyfunction]
fn roc_auc(genuine: Vec<f64>, imposter: Vec<f64>) -> PyResult<f64> {
    metrics::roc_auc(&metrics::ScoreSet { genuine, imposter })
        .map(|(auc, _)| auc)
        .map_err(py_err)
}

#[pyfunction]
fn far_frr(genuine: Vec<f64>, imposter: Vec<f64>, threshold: f64) -> PyResult<(f64, f64)> {
    metrics::far_frr(&metrics::ScoreSet { genuine, imposter }, threshold).map_err(py_err)
}

#[pyfunction]
fn power_estimate(rate_hz: f64) -> PyResult<f64> {
    study::power_estimate(rate_hz).map_err(py_err)
}

#[pyfunction]
fn encode_packet<'py>(
    py: Python<'py>,
    session_id: u64,
    seq: u32,
    samples: Vec<[f32; 4]>,
) -> PyResult<Bound<'py, PyBytes>> {
    let packet = stream::FramedPacket { session_id, seq, samples };
    let bytes = stream::encode_packet(&packet).map_err(py_err)?;
    Ok(PyBytes::new(py, &bytes))
}

#[pyfunction]
fn decode_packet(bytes: &[u8]) -> PyResult<(u64, u32, Vec<[f32; 4]>)> {
    let p = stream::decode_packet(bytes).map_err(py_err)?;
    Ok((p.session_id, p.seq, p.samples))
}

#[pyfunction]
fn majority_filter(history: Vec<Option<usize>>) -> PyResult<Option<usize>> {
    let verdicts: Vec<stream::Verdict> = history
        .into_iter()
        .map(|v| v.map(stream::Verdict::Known).unwrap_or(stream::Verdict::Unknown))
        .collect();
    if verdicts.is_empty() {
        return Err(py_err("history must be nonempty"));
    }
    Ok(match stream::majority_filter(&verdicts) {
        stream::Verdict::Known(c) => Some(c),
        stream::Verdict::Unknown => None,
    })
}

#[pymodule]
fn pulseauth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Record>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(bandpass, m)?)?;
    m.add_function(wrap_pyfunction!(resample, m)?)?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(write_csv, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_split, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(load_model, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(far_frr, m)?)?;
    m.add_function(wrap_pyfunction!(power_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(encode_packet, m)?)?;
    m.add_function(wrap_pyfunction!(decode_packet, m)?)?;
    m.add_function(wrap_pyfunction!(majority_filter, m)?)?;
    Ok(())
}
