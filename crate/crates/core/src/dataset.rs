//! Model-ready datasets: windowing, normalization, splits, class weights.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{Activity, SignalRecord};

/// Paper-default segmentation: 4-second windows, 50% overlap.
pub const WINDOW_SECONDS: f64 = 4.0;
pub const WINDOW_OVERLAP: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("channel {channel} is near-constant (std < 1e-8) in this window")]
    DegenerateChannel { channel: usize },
    #[error("class {class} has only {count} windows; need at least 3 to split")]
    ClassTooSmall { class: usize, count: usize },
    #[error("class {class} has no windows")]
    EmptyClass { class: usize },
    #[error("filter matched no windows")]
    EmptyResult,
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("invalid windowing: {0}")]
    InvalidWindowing(String),
    #[error("inconsistent dataset: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Where a window came from, for traceability and temporal splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub record: String,
    pub start: usize,
}

/// A fixed-length segment of T time steps by C channels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub values: Vec<f64>,
    pub t_steps: usize,
    pub channels: usize,
    pub label: usize,
    pub activity: Activity,
    pub rate_hz: f64,
    pub origin: WindowOrigin,
}

impl Window {
    #[inline]
    pub fn at(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.channels + c]
    }
}

/// A labeled window collection with its class directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub windows: Vec<Window>,
    pub class_count: usize,
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for w in &self.windows {
            counts[w.label] += 1;
        }
        counts
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Cut a record into windows of `round(window_s · rate)` samples with stride
/// `round(T · (1 − overlap))`. Incomplete trailing windows are dropped.
pub fn segment(record: &SignalRecord, window_s: f64, overlap: f64, label: usize) -> Vec<Window> {
    assert!((0.0..1.0).contains(&overlap), "overlap must be in [0, 1)");
    let t_steps = (window_s * record.rate_hz).round() as usize;
    assert!(t_steps >= 2, "window too short: {t_steps} samples");
    let stride = ((t_steps as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let len = record.len();
    if len < t_steps {
        return Vec::new();
    }
    let count = (len - t_steps) / stride + 1;
    let channels = record.channels.len();
    let record_id = format!(
        "{}/{}@{}",
        record.subject_id,
        record.activity,
        record.t0.unwrap_or(0.0)
    );
    (0..count)
        .map(|w| {
            let start = w * stride;
            let mut values = Vec::with_capacity(t_steps * channels);
            for t in 0..t_steps {
                for series in &record.channels {
                    values.push(series[start + t]);
                }
            }
            Window {
                values,
                t_steps,
                channels,
                label,
                activity: record.activity.clone(),
                rate_hz: record.rate_hz,
                origin: WindowOrigin { record: record_id.clone(), start },
            }
        })
        .collect()
}

/// Z-score each channel within the window (population std, denominator T).
/// Near-constant channels reject the window: a flat optical channel means
/// the sensor lost skin contact.
pub fn normalize(window: &Window) -> Result<Window, DatasetError> {
    let t = window.t_steps as f64;
    let mut out = window.clone();
    for c in 0..window.channels {
        let mut mean = 0.0;
        for ti in 0..window.t_steps {
            mean += window.at(ti, c);
        }
        mean /= t;
        let mut var = 0.0;
        for ti in 0..window.t_steps {
            let d = window.at(ti, c) - mean;
            var += d * d;
        }
        let std = (var / t).sqrt();
        if std < 1e-8 {
            return Err(DatasetError::DegenerateChannel { channel: c });
        }
        for ti in 0..window.t_steps {
            out.values[ti * window.channels + c] = (window.at(ti, c) - mean) / std;
        }
    }
    Ok(out)
}

/// Segment, normalize, and label a set of records. Labels are indices into
/// the sorted list of distinct subject ids; degenerate windows are dropped.
pub fn build_dataset(
    records: &[SignalRecord],
    window_s: f64,
    overlap: f64,
) -> Result<Dataset, DatasetError> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(DatasetError::InvalidWindowing(format!("overlap {overlap} outside [0, 1)")));
    }
    if let Some(r) = records.iter().find(|r| (window_s * r.rate_hz).round() < 2.0) {
        return Err(DatasetError::InvalidWindowing(format!(
            "window of {window_s} s holds fewer than 2 samples at {} Hz",
            r.rate_hz
        )));
    }
    let mut label_names: Vec<String> = records
        .iter()
        .map(|r| r.subject_id.clone())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    label_names.sort();
    let mut windows = Vec::new();
    for record in records {
        let label = label_names.binary_search(&record.subject_id).unwrap();
        for window in segment(record, window_s, overlap, label) {
            match normalize(&window) {
                Ok(w) => windows.push(w),
                Err(DatasetError::DegenerateChannel { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if windows.is_empty() {
        return Err(DatasetError::EmptyResult);
    }
    Ok(Dataset { windows, class_count: label_names.len(), label_names })
}

/// Train/validation/test fractions plus the shuffle seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    /// Keep each class in temporal order instead of shuffling.
    #[serde(default)]
    pub contiguous: bool,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Self {
        Self { train, val, test, seed, contiguous: false }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        for f in [self.train, self.val, self.test] {
            if !(0.0..1.0).contains(&f) || f == 0.0 {
                return Err(DatasetError::InvalidSplit(format!("fraction {f} outside (0, 1)")));
            }
        }
        if (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidSplit("fractions must sum to 1".into()));
        }
        Ok(())
    }
}

/// Per-class stratified split. Validation and test receive
/// `round(fraction · N_c)` windows each; train absorbs the remainder.
pub fn stratified_split(
    dataset: &Dataset,
    spec: &SplitSpec,
) -> Result<(Dataset, Dataset, Dataset), DatasetError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<Window>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for class in 0..dataset.class_count {
        let mut indices: Vec<usize> = (0..dataset.windows.len())
            .filter(|&i| dataset.windows[i].label == class)
            .collect();
        if indices.len() < 3 {
            return Err(DatasetError::ClassTooSmall { class, count: indices.len() });
        }
        if !spec.contiguous {
            indices.shuffle(&mut rng);
        }
        let n = indices.len();
        let n_val = (spec.val * n as f64).round() as usize;
        let n_test = (spec.test * n as f64).round() as usize;
        if n_val + n_test > n {
            return Err(DatasetError::InvalidSplit(format!(
                "class {class}: val {n_val} + test {n_test} exceed {n} windows"
            )));
        }
        let n_train = n - n_val - n_test;
        for (part, range) in parts.iter_mut().zip([
            0..n_train,
            n_train..n_train + n_val,
            n_train + n_val..n,
        ]) {
            for &i in &indices[range] {
                part.push(dataset.windows[i].clone());
            }
        }
    }
    let [train, val, test] = parts;
    let wrap = |windows: Vec<Window>| Dataset {
        windows,
        class_count: dataset.class_count,
        label_names: dataset.label_names.clone(),
    };
    Ok((wrap(train), wrap(val), wrap(test)))
}

/// Inverse-frequency class weights: `w_c = N / (C · N_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(class_count: usize) -> Self {
        Self { w: vec![1.0; class_count] }
    }
}

pub fn class_weights(train: &Dataset) -> Result<ClassWeights, DatasetError> {
    let counts = train.class_counts();
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(DatasetError::EmptyClass { class });
    }
    let n = train.windows.len() as f64;
    let c = train.class_count as f64;
    Ok(ClassWeights { w: counts.iter().map(|&nc| n / (c * nc as f64)).collect() })
}

/// Restriction of a dataset by activity set and/or channel subset.
#[derive(Debug, Clone, Default)]
pub struct DatasetFilter {
    pub activities: Option<Vec<Activity>>,
    pub channels: Option<Vec<usize>>,
}

impl DatasetFilter {
    pub fn activities(activities: Vec<Activity>) -> Self {
        Self { activities: Some(activities), channels: None }
    }

    pub fn channels(channels: Vec<usize>) -> Self {
        Self { activities: None, channels: Some(channels) }
    }
}

pub fn filter_by(dataset: &Dataset, filter: &DatasetFilter) -> Result<Dataset, DatasetError> {
    let keep: Vec<&Window> = dataset
        .windows
        .iter()
        .filter(|w| match &filter.activities {
            Some(set) => set.contains(&w.activity),
            None => true,
        })
        .collect();
    if keep.is_empty() {
        return Err(DatasetError::EmptyResult);
    }
    let windows: Vec<Window> = match &filter.channels {
        None => keep.into_iter().cloned().collect(),
        Some(subset) => {
            if subset.is_empty() {
                return Err(DatasetError::EmptyResult);
            }
            for &c in subset {
                if c >= dataset.windows[0].channels {
                    return Err(DatasetError::ShapeMismatch(format!("channel index {c} out of range")));
                }
            }
            keep.into_iter()
                .map(|w| {
                    let mut values = Vec::with_capacity(w.t_steps * subset.len());
                    for t in 0..w.t_steps {
                        for &c in subset {
                            values.push(w.at(t, c));
                        }
                    }
                    Window { values, channels: subset.len(), ..w.clone() }
                })
                .collect()
        }
    };
    // a class that loses every window would silently poison training
    let mut counts = vec![0usize; dataset.class_count];
    for w in &windows {
        counts[w.label] += 1;
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(DatasetError::EmptyClass { class });
    }
    Ok(Dataset { windows, class_count: dataset.class_count, label_names: dataset.label_names.clone() })
}

// --- manifest + tensor sidecar -------------------------------------------

#[derive(Serialize, Deserialize)]
struct ManifestWindow {
    origin: WindowOrigin,
    label: usize,
    activity: Activity,
    rate_hz: f64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    classes: Vec<String>,
    t_steps: usize,
    channels: usize,
    windows: Vec<ManifestWindow>,
}

/// Write the JSON manifest and the flat little-endian f32 tensor sidecar
/// (row-major T×C per window, in manifest order).
pub fn save_manifest(
    dataset: &Dataset,
    manifest_path: impl AsRef<Path>,
    tensor_path: impl AsRef<Path>,
) -> Result<(), DatasetError> {
    let first = dataset.windows.first().ok_or(DatasetError::EmptyResult)?;
    let (t_steps, channels) = (first.t_steps, first.channels);
    if dataset.windows.iter().any(|w| w.t_steps != t_steps || w.channels != channels) {
        return Err(DatasetError::ShapeMismatch("windows differ in shape".into()));
    }
    let manifest = Manifest {
        classes: dataset.label_names.clone(),
        t_steps,
        channels,
        windows: dataset
            .windows
            .iter()
            .map(|w| ManifestWindow {
                origin: w.origin.clone(),
                label: w.label,
                activity: w.activity.clone(),
                rate_hz: w.rate_hz,
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(manifest_path, json)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(tensor_path)?);
    for w in &dataset.windows {
        for &v in &w.values {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_manifest(
    manifest_path: impl AsRef<Path>,
    tensor_path: impl AsRef<Path>,
) -> Result<Dataset, DatasetError> {
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
    let mut raw = Vec::new();
    std::fs::File::open(tensor_path)?.read_to_end(&mut raw)?;
    let per_window = manifest.t_steps * manifest.channels;
    let expected = manifest.windows.len() * per_window * 4;
    if raw.len() != expected {
        return Err(DatasetError::ShapeMismatch(format!(
            "tensor file has {} bytes, manifest implies {expected}",
            raw.len()
        )));
    }
    let windows = manifest
        .windows
        .into_iter()
        .enumerate()
        .map(|(i, mw)| {
            let base = i * per_window * 4;
            let values = (0..per_window)
                .map(|j| {
                    let o = base + j * 4;
                    f32::from_le_bytes([raw[o], raw[o + 1], raw[o + 2], raw[o + 3]]) as f64
                })
                .collect();
            Window {
                values,
                t_steps: manifest.t_steps,
                channels: manifest.channels,
                label: mw.label,
                activity: mw.activity,
                rate_hz: mw.rate_hz,
                origin: mw.origin,
            }
        })
        .collect();
    Ok(Dataset { windows, class_count: manifest.classes.len(), label_names: manifest.classes })
}
