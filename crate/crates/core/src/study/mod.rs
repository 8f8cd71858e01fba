//! Batch experiments: the sampling-rate sweep, condition comparisons
//! (channel ablation, activity diversity), and the sensor power model.

mod cohort;

pub use cohort::{activity_variant, benchmark_cohort, benchmark_profiles, lag_cohort, render_mixed};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    build_dataset, filter_by, stratified_split, Dataset, DatasetError, DatasetFilter, SplitSpec,
    WINDOW_OVERLAP, WINDOW_SECONDS,
};
use crate::metrics::{build_scores, eer, MetricsError};
use crate::nn::ModelConfig;
use crate::signal::{bandpass, resample, SignalError, SignalRecord};
use crate::train::{evaluate, train, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("rate {rate_hz} Hz outside the measured 8-512 Hz span")]
    OutOfMeasuredRange { rate_hz: f64 },
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

// --- power model -----------------------------------------------------------

/// Measured sensor power draw (rate Hz, milliwatts).
pub const POWER_ANCHORS: [(f64, f64); 3] = [(25.0, 41.9), (128.0, 51.5), (512.0, 90.0)];

/// Lowest rate the power rig measured.
pub const POWER_MIN_RATE_HZ: f64 = 8.0;
pub const POWER_MAX_RATE_HZ: f64 = 512.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub milliwatts: f64,
    /// True everywhere except the three measured anchors.
    pub estimated: bool,
}

/// Piecewise-linear interpolation over the measured anchors. The 8 Hz end
/// is not published as a number; it is pinned to a configurable floor and
/// always flagged as estimated.
#[derive(Debug, Clone, Copy)]
pub struct PowerModel {
    pub floor_8hz_mw: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self { floor_8hz_mw: 38.0 }
    }
}

impl PowerModel {
    pub fn estimate(&self, rate_hz: f64) -> Result<PowerEstimate, StudyError> {
        if !(POWER_MIN_RATE_HZ..=POWER_MAX_RATE_HZ).contains(&rate_hz) {
            return Err(StudyError::OutOfMeasuredRange { rate_hz });
        }
        if !(0.0..=POWER_ANCHORS[0].1).contains(&self.floor_8hz_mw) {
            return Err(StudyError::InvalidConfig(format!(
                "8 Hz floor {} must lie in (0, {}] to keep the curve monotone",
                self.floor_8hz_mw, POWER_ANCHORS[0].1
            )));
        }
        let mut knots = vec![(POWER_MIN_RATE_HZ, self.floor_8hz_mw)];
        knots.extend_from_slice(&POWER_ANCHORS);
        for (i, &(rate, mw)) in knots.iter().enumerate() {
            if (rate_hz - rate).abs() < 1e-12 {
                return Ok(PowerEstimate { milliwatts: mw, estimated: i == 0 });
            }
        }
        let seg = knots.windows(2).find(|w| rate_hz > w[0].0 && rate_hz < w[1].0).unwrap();
        let ((r1, p1), (r2, p2)) = (seg[0], seg[1]);
        let mw = p1 + (rate_hz - r1) / (r2 - r1) * (p2 - p1);
        Ok(PowerEstimate { milliwatts: mw, estimated: true })
    }
}

/// Sensor power at `rate_hz` under the default model, in milliwatts.
pub fn power_estimate(rate_hz: f64) -> Result<f64, StudyError> {
    PowerModel::default().estimate(rate_hz).map(|e| e.milliwatts)
}

// --- sampling-rate sweep -----------------------------------------------------

/// Window length in time steps at a given rate (4-second windows).
pub fn seq_len_for_rate(rate_hz: f64) -> usize {
    (WINDOW_SECONDS * rate_hz).round() as usize
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub sampling_rate_hz: f64,
    pub test_accuracy: f64,
    pub macro_f1: f64,
    pub eer: f64,
    pub train_minutes: f64,
    /// None when the rate falls outside the measured 8-512 Hz power span.
    pub estimated_power_mw: Option<f64>,
    pub power_estimated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub source_rate_hz: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "sampling_rate_hz,test_accuracy,macro_f1,eer,train_minutes,estimated_power_mw,power_estimated\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.sampling_rate_hz,
                r.test_accuracy,
                r.macro_f1,
                r.eer,
                r.train_minutes,
                r.estimated_power_mw.map(|v| v.to_string()).unwrap_or_default(),
                r.power_estimated
            ));
        }
        out
    }
}

fn prepared_dataset(records: &[SignalRecord], rate_hz: f64) -> Result<Dataset, StudyError> {
    let mut processed = Vec::with_capacity(records.len());
    for record in records {
        // band-pass at the source rate, then decimate: the 0.5-12 Hz filter
        // cannot run below 25 Hz, and this keeps one code path for all rates
        let filtered = bandpass(record)?;
        processed.push(resample(&filtered, rate_hz)?);
    }
    Ok(build_dataset(&processed, WINDOW_SECONDS, WINDOW_OVERLAP)?)
}

fn condition_metrics(
    cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    dataset_train: &Dataset,
    dataset_val: &Dataset,
    dataset_test: &Dataset,
) -> Result<(f64, f64, f64), StudyError> {
    let (params, _history) = train(cfg, train_cfg, dataset_train, dataset_val)?;
    let eval = evaluate(&params, dataset_test)?;
    let report =
        crate::metrics::compute_report(&eval.predictions, cfg.num_classes, 0.8)?;
    let scores = build_scores(&eval.predictions, cfg.num_classes);
    let (eer_value, _) = eer(&scores.pooled)?;
    Ok((eval.accuracy, report.macro_f1, eer_value))
}

/// For each rate: band-pass at the source rate, resample, re-window with
/// `T = round(4·rate)`, train with identical seeds/configs, and evaluate.
/// Rows come back sorted by rate, descending.
pub fn sweep_rates(
    records: &[SignalRecord],
    rates: &[f64],
    base_model: &ModelConfig,
    train_cfg: &TrainConfig,
    split: &SplitSpec,
) -> Result<SweepReport, StudyError> {
    if records.is_empty() || rates.is_empty() {
        return Err(StudyError::InvalidConfig("need records and at least one rate".into()));
    }
    let source = records[0].rate_hz;
    if records.iter().any(|r| (r.rate_hz - source).abs() > 1e-9) {
        return Err(StudyError::InvalidConfig("records must share one source rate".into()));
    }
    let mut sorted_rates = rates.to_vec();
    sorted_rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted_rates.dedup();

    let mut rows = Vec::with_capacity(sorted_rates.len());
    for &rate in &sorted_rates {
        let ds = prepared_dataset(records, rate)?;
        let mut cfg = base_model.clone();
        cfg.seq_len = seq_len_for_rate(rate);
        cfg.num_classes = ds.class_count;
        let (train_set, val_set, test_set) = stratified_split(&ds, split)?;
        let started = std::time::Instant::now();
        let (accuracy, macro_f1, eer_value) =
            condition_metrics(&cfg, train_cfg, &train_set, &val_set, &test_set)?;
        let train_minutes = started.elapsed().as_secs_f64() / 60.0;
        let power = PowerModel::default().estimate(rate).ok();
        rows.push(SweepRow {
            sampling_rate_hz: rate,
            test_accuracy: accuracy,
            macro_f1,
            eer: eer_value,
            train_minutes,
            estimated_power_mw: power.map(|p| p.milliwatts),
            power_estimated: power.map(|p| p.estimated).unwrap_or(true),
        });
    }
    Ok(SweepReport { source_rate_hz: source, rows })
}

// --- paired condition comparison -------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub eer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedReport {
    pub a: ConditionReport,
    pub b: ConditionReport,
    pub delta_accuracy: f64,
    pub delta_macro_f1: f64,
    pub delta_eer: f64,
}

/// One labeled training condition: restrict activities and/or channels.
#[derive(Debug, Clone, Default)]
pub struct Condition {
    pub name: String,
    pub filter: DatasetFilter,
}

/// Train one model per condition from one shared split and identical seeds.
/// Activity restrictions shape only the training diet; both models are
/// evaluated on the same held-out test windows (channel-sliced per
/// condition, optionally restricted by `eval_filter`).
pub fn compare_conditions(
    dataset: &Dataset,
    cond_a: &Condition,
    cond_b: &Condition,
    eval_filter: Option<&DatasetFilter>,
    base_model: &ModelConfig,
    train_cfg: &TrainConfig,
    split: &SplitSpec,
) -> Result<PairedReport, StudyError> {
    let (train_all, val_all, test_all) = stratified_split(dataset, split)?;
    let mut reports = Vec::with_capacity(2);
    for cond in [cond_a, cond_b] {
        let train_c = filter_by(&train_all, &cond.filter)?;
        let val_c = filter_by(&val_all, &cond.filter)?;
        let channel_slice =
            DatasetFilter { activities: None, channels: cond.filter.channels.clone() };
        let mut test_c = filter_by(&test_all, &channel_slice)?;
        if let Some(f) = eval_filter {
            let eval_slice =
                DatasetFilter { activities: f.activities.clone(), channels: None };
            test_c = filter_by(&test_c, &eval_slice)?;
        }
        let mut cfg = base_model.clone();
        cfg.seq_len = train_c.windows[0].t_steps;
        cfg.input_channels = train_c.windows[0].channels;
        cfg.num_classes = dataset.class_count;
        let (accuracy, macro_f1, eer_value) =
            condition_metrics(&cfg, train_cfg, &train_c, &val_c, &test_c)?;
        reports.push(ConditionReport { name: cond.name.clone(), accuracy, macro_f1, eer: eer_value });
    }
    let b = reports.pop().unwrap();
    let a = reports.pop().unwrap();
    Ok(PairedReport {
        delta_accuracy: a.accuracy - b.accuracy,
        delta_macro_f1: a.macro_f1 - b.macro_f1,
        delta_eer: a.eer - b.eer,
        a,
        b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_is_exact_at_anchors() {
        assert_eq!(power_estimate(25.0).unwrap(), 41.9);
        assert_eq!(power_estimate(128.0).unwrap(), 51.5);
        assert_eq!(power_estimate(512.0).unwrap(), 90.0);
        let model = PowerModel::default();
        assert!(!model.estimate(25.0).unwrap().estimated);
        assert!(model.estimate(26.0).unwrap().estimated);
        assert!(model.estimate(8.0).unwrap().estimated, "the 8 Hz floor is an extrapolation");
    }

    #[test]
    fn power_interpolates_linearly() {
        // halfway between 128 and 512: 51.5 + 0.5·38.5
        assert!((power_estimate(320.0).unwrap() - 70.75).abs() < 1e-12);
        assert!((power_estimate(8.0).unwrap() - 38.0).abs() < 1e-12);
    }

    #[test]
    fn power_is_monotone_over_measured_span() {
        let mut prev = 0.0;
        for i in 0..=1000 {
            let rate = 8.0 + (512.0 - 8.0) * i as f64 / 1000.0;
            let mw = power_estimate(rate).unwrap();
            assert!(mw >= prev, "power dips at {rate} Hz");
            prev = mw;
        }
    }

    #[test]
    fn power_rejects_out_of_range() {
        assert!(matches!(power_estimate(7.9), Err(StudyError::OutOfMeasuredRange { .. })));
        assert!(matches!(power_estimate(513.0), Err(StudyError::OutOfMeasuredRange { .. })));
    }

    #[test]
    fn seq_len_tracks_rate() {
        assert_eq!(seq_len_for_rate(25.0), 100);
        assert_eq!(seq_len_for_rate(5.0), 20);
        assert_eq!(seq_len_for_rate(100.0), 400);
    }

    fn tiny_train_cfg() -> TrainConfig {
        TrainConfig { max_epochs: 2, seed: 5, ..TrainConfig::default() }
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig::new(4, 100, 2).with_hidden(6).with_layers(1).with_dropout(0.1)
    }

    #[test]
    fn sweep_identity_rate_matches_direct_run() {
        let records = benchmark_cohort(2, 2.0, 25.0, 3).unwrap();
        let split = SplitSpec::new(0.6, 0.2, 0.2, 9);
        let report =
            sweep_rates(&records, &[25.0], &tiny_model(), &tiny_train_cfg(), &split).unwrap();
        assert_eq!(report.rows.len(), 1);

        let ds = prepared_dataset(&records, 25.0).unwrap();
        let (tr, va, te) = stratified_split(&ds, &split).unwrap();
        let (acc, ..) =
            condition_metrics(&tiny_model(), &tiny_train_cfg(), &tr, &va, &te).unwrap();
        assert_eq!(report.rows[0].test_accuracy, acc);
        assert_eq!(report.rows[0].estimated_power_mw, Some(41.9));
        assert!(!report.rows[0].power_estimated);
    }

    #[test]
    fn sweep_rows_sorted_descending_and_sub8hz_power_absent() {
        let records = benchmark_cohort(2, 1.5, 50.0, 4).unwrap();
        let cfg = tiny_model();
        let split = SplitSpec::new(0.6, 0.2, 0.2, 9);
        let tc = TrainConfig { max_epochs: 1, seed: 5, ..TrainConfig::default() };
        let report = sweep_rates(&records, &[5.0, 50.0, 25.0], &cfg, &tc, &split).unwrap();
        let rates: Vec<f64> = report.rows.iter().map(|r| r.sampling_rate_hz).collect();
        assert_eq!(rates, vec![50.0, 25.0, 5.0]);
        assert_eq!(report.rows[2].estimated_power_mw, None, "5 Hz is below the measured span");
    }

    #[test]
    fn identical_conditions_give_zero_deltas() {
        let records = benchmark_cohort(2, 2.0, 25.0, 6).unwrap();
        let ds = prepared_dataset(&records, 25.0).unwrap();
        let cond = Condition { name: "all".into(), filter: DatasetFilter::default() };
        let report = compare_conditions(
            &ds,
            &cond,
            &cond,
            None,
            &tiny_model(),
            &tiny_train_cfg(),
            &SplitSpec::new(0.6, 0.2, 0.2, 2),
        )
        .unwrap();
        assert_eq!(report.delta_accuracy, 0.0);
        assert_eq!(report.delta_macro_f1, 0.0);
        assert_eq!(report.delta_eer, 0.0);
    }
}
