//! Raw signal handling: recordings, synthesis, resampling, band-pass filtering.

mod biquad;
mod csv_io;
mod synth;

pub use biquad::{Biquad, BiquadCascade};
pub use csv_io::{load_csv, write_csv, CSV_HEADER};
pub use synth::{generate_synthetic, ChannelShape, SyntheticSubjectProfile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of optical channels on the device profile.
pub const CHANNEL_COUNT: usize = 4;

/// Band-pass edges applied to every channel before segmentation (Hz).
pub const BAND_LOW_HZ: f64 = 0.5;
pub const BAND_HIGH_HZ: f64 = 12.0;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),
    #[error("non-monotonic timestamp at line {line}")]
    NonMonotonicTimestamp { line: usize },
    #[error("expected {expected} channel columns, found {found}")]
    ChannelCountMismatch { expected: usize, found: usize },
    #[error("unparseable numeric value at line {line}")]
    NumericParse { line: usize },
    #[error("invalid synthetic profile: {0}")]
    InvalidProfile(String),
    #[error("upsampling unsupported: source {source_hz} Hz < target {target_hz} Hz")]
    UpsampleUnsupported { source_hz: f64, target_hz: f64 },
    #[error("sampling rate {rate_hz} Hz too low for the 0.5-12 Hz band (need > 24 Hz)")]
    RateTooLowForBand { rate_hz: f64 },
    #[error("record rejected: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One optical wavelength path of the sensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub index: usize,
    pub wavelength_nm: u32,
    pub label: &'static str,
}

/// The fixed 4-channel device profile: two green, one red, one infrared.
pub fn device_channels() -> [ChannelSpec; CHANNEL_COUNT] {
    [
        ChannelSpec { index: 0, wavelength_nm: 526, label: "green1" },
        ChannelSpec { index: 1, wavelength_nm: 526, label: "green2" },
        ChannelSpec { index: 2, wavelength_nm: 660, label: "red" },
        ChannelSpec { index: 3, wavelength_nm: 950, label: "infrared" },
    ]
}

/// Wearer activity during a recording session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Activity {
    Rest,
    Walk,
    Type,
    Talk,
    Other(String),
}

impl Activity {
    pub fn as_str(&self) -> &str {
        match self {
            Activity::Rest => "rest",
            Activity::Walk => "walk",
            Activity::Type => "type",
            Activity::Talk => "talk",
            Activity::Other(s) => s,
        }
    }
}

impl From<String> for Activity {
    fn from(s: String) -> Self {
        match s.as_str() {
            "rest" => Activity::Rest,
            "walk" => Activity::Walk,
            "type" => Activity::Type,
            "talk" => Activity::Talk,
            _ => Activity::Other(s),
        }
    }
}

impl From<Activity> for String {
    fn from(a: Activity) -> String {
        a.as_str().to_string()
    }
}

impl std::fmt::Display for Activity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A contiguous multi-channel recording from one subject and activity.
///
/// Channel order follows [`device_channels`]. All series have equal length
/// and contain only finite values; both are enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub subject_id: String,
    pub activity: Activity,
    pub rate_hz: f64,
    pub channels: Vec<Vec<f64>>,
    pub t0: Option<f64>,
}

impl SignalRecord {
    pub fn new(
        subject_id: impl Into<String>,
        activity: Activity,
        rate_hz: f64,
        channels: Vec<Vec<f64>>,
        t0: Option<f64>,
    ) -> Result<Self, SignalError> {
        if rate_hz <= 0.0 || !rate_hz.is_finite() {
            return Err(SignalError::InvalidRecord(format!("rate_hz {rate_hz} must be positive")));
        }
        if channels.len() != CHANNEL_COUNT {
            return Err(SignalError::ChannelCountMismatch {
                expected: CHANNEL_COUNT,
                found: channels.len(),
            });
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(SignalError::InvalidRecord("empty channel series".into()));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(SignalError::InvalidRecord("channel length mismatch".into()));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SignalError::InvalidRecord("non-finite sample value".into()));
        }
        Ok(Self { subject_id: subject_id.into(), activity, rate_hz, channels, t0 })
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.rate_hz
    }
}

/// Causal second-order Butterworth band-pass (0.5-12 Hz) on every channel.
///
/// Filter state starts at zero, so the first seconds carry a transient; the
/// streaming gateway absorbs it with its warm-up phase, and batch metrics are
/// unaffected because the transient is identical across subjects.
pub fn bandpass(record: &SignalRecord) -> Result<SignalRecord, SignalError> {
    if record.rate_hz <= 2.0 * BAND_HIGH_HZ {
        return Err(SignalError::RateTooLowForBand { rate_hz: record.rate_hz });
    }
    let channels = record
        .channels
        .iter()
        .map(|series| {
            let mut f = Biquad::bandpass(record.rate_hz, BAND_LOW_HZ, BAND_HIGH_HZ);
            f.process_buffer(series)
        })
        .collect();
    Ok(SignalRecord { channels, ..record.clone() })
}

/// Downsample to `target_hz` with a 4th-order anti-aliasing low-pass at
/// 0.45·target applied first. Output length is floor(len·target/source);
/// integer-ratio decimation picks exact samples after filtering, other
/// ratios interpolate linearly between filtered neighbors.
pub fn resample(record: &SignalRecord, target_hz: f64) -> Result<SignalRecord, SignalError> {
    if target_hz > record.rate_hz {
        return Err(SignalError::UpsampleUnsupported {
            source_hz: record.rate_hz,
            target_hz,
        });
    }
    if (target_hz - record.rate_hz).abs() < f64::EPSILON * record.rate_hz {
        return Ok(record.clone());
    }
    let ratio = record.rate_hz / target_hz;
    let out_len = (record.len() as f64 * target_hz / record.rate_hz).floor() as usize;
    let channels = record
        .channels
        .iter()
        .map(|series| {
            let mut lp = BiquadCascade::butterworth_lowpass4(record.rate_hz, 0.45 * target_hz);
            let filtered = lp.process_buffer(series);
            (0..out_len)
                .map(|k| {
                    let pos = k as f64 * ratio;
                    let i = pos.floor() as usize;
                    let frac = pos - i as f64;
                    if frac < 1e-9 || i + 1 >= filtered.len() {
                        filtered[i]
                    } else {
                        filtered[i] * (1.0 - frac) + filtered[i + 1] * frac
                    }
                })
                .collect()
        })
        .collect();
    Ok(SignalRecord { rate_hz: target_hz, channels, ..record.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_record(rate: f64, freq: f64, duration_s: f64) -> SignalRecord {
        let n = (rate * duration_s) as usize;
        let series: Vec<f64> =
            (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin()).collect();
        SignalRecord::new("s", Activity::Rest, rate, vec![series; 4], None).unwrap()
    }

    #[test]
    fn bandpass_rejects_low_rate() {
        let rec = sine_record(20.0, 1.0, 10.0);
        assert!(matches!(bandpass(&rec), Err(SignalError::RateTooLowForBand { .. })));
    }

    #[test]
    fn bandpass_kills_dc_input() {
        let rec = SignalRecord::new("s", Activity::Rest, 25.0, vec![vec![5.0; 2000]; 4], None).unwrap();
        let out = bandpass(&rec).unwrap();
        assert_eq!(out.len(), rec.len());
        for ch in &out.channels {
            assert!(ch[1500..].iter().all(|v| v.abs() < 0.05), "steady-state DC leak");
        }
    }

    #[test]
    fn bandpass_is_linear() {
        let rec = sine_record(25.0, 2.0, 20.0);
        let scaled = SignalRecord {
            channels: rec.channels.iter().map(|c| c.iter().map(|v| v * 3.5).collect()).collect(),
            ..rec.clone()
        };
        let a = bandpass(&rec).unwrap();
        let b = bandpass(&scaled).unwrap();
        for (ca, cb) in a.channels.iter().zip(&b.channels) {
            for (&va, &vb) in ca.iter().zip(cb) {
                let err = (vb - 3.5 * va).abs();
                assert!(err <= 1e-9 * vb.abs().max(1.0), "linearity violated: {err}");
            }
        }
    }

    #[test]
    fn resample_length_is_floor_rule() {
        let rec = sine_record(500.0, 2.0, 4.0); // 2000 samples
        let out = resample(&rec, 25.0).unwrap();
        assert_eq!(out.len(), 100); // factor 20
        assert_eq!(out.rate_hz, 25.0);
    }

    #[test]
    fn resample_identity_at_same_rate() {
        let rec = sine_record(100.0, 2.0, 3.0);
        let out = resample(&rec, 100.0).unwrap();
        assert_eq!(out, rec);
    }

    #[test]
    fn resample_rejects_upsampling() {
        let rec = sine_record(25.0, 2.0, 3.0);
        assert!(matches!(resample(&rec, 50.0), Err(SignalError::UpsampleUnsupported { .. })));
    }

    #[test]
    fn resample_suppresses_aliasing() {
        // 30 Hz tone is above the 12.5 Hz Nyquist of the 25 Hz target:
        // it must not fold back into the output.
        let rec = sine_record(500.0, 30.0, 10.0);
        let out = resample(&rec, 25.0).unwrap();
        let rms = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        let ratio = rms(&out.channels[0]) / rms(&rec.channels[0]);
        assert!(ratio < 0.05, "aliased energy ratio {ratio}");
    }

    #[test]
    fn resample_length_formula_across_rate_pairs() {
        for (src, dst, n) in [(500.0, 25.0, 777usize), (100.0, 25.0, 1000), (100.0, 40.0, 119), (250.0, 125.0, 33)] {
            let series: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
            let rec = SignalRecord::new("s", Activity::Rest, src, vec![series; 4], None).unwrap();
            let out = resample(&rec, dst).unwrap();
            assert_eq!(out.len(), (n as f64 * dst / src).floor() as usize, "{src}->{dst} n={n}");
        }
    }

    #[test]
    fn record_rejects_bad_shapes() {
        assert!(SignalRecord::new("s", Activity::Rest, 25.0, vec![vec![1.0]; 3], None).is_err());
        assert!(SignalRecord::new(
            "s",
            Activity::Rest,
            25.0,
            vec![vec![1.0], vec![1.0], vec![1.0], vec![1.0, 2.0]],
            None
        )
        .is_err());
        assert!(SignalRecord::new("s", Activity::Rest, 25.0, vec![vec![f64::NAN]; 4], None).is_err());
    }
}
