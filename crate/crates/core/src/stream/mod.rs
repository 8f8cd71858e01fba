//! Real-time open-set authentication: framed transport, sliding-buffer
//! sessions, threshold rejection, and majority-vote smoothing.

mod gateway;
mod packet;
mod simulator;

pub use gateway::{gateway_serve, DecisionLogLine, GatewayConfig, GatewayHandle};
pub use packet::{
    decode_packet, encode_packet, read_packet, write_packet, FramedPacket, PACKET_HEADER_LEN,
    PACKET_MAGIC, PACKET_VERSION,
};
pub use simulator::{simulate_device, FRAME_SAMPLES};

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{classifier_forward, Mode, ModelParams};
use crate::signal::{Biquad, BAND_HIGH_HZ, BAND_LOW_HZ, CHANNEL_COUNT};
use crate::train::argmax;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("bad packet magic")]
    BadMagic,
    #[error("unsupported packet version {found}")]
    BadVersion { found: u8 },
    #[error("packet length mismatch: expected {expected} bytes, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("truncated packet")]
    Truncated,
    #[error("sequence regression: packet {got} after {last}")]
    SequenceRegression { last: u32, got: u32 },
    #[error("bind failure: {0}")]
    BindFailure(std::io::Error),
    #[error("connect failure: {0}")]
    ConnectFailure(std::io::Error),
    #[error("stream session mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An authentication verdict: an enrolled class or open-set rejection.
/// Serializes as the class index for `Known`, the string "unknown" otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Known(usize),
    Unknown,
}

impl Serialize for Verdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Verdict::Known(c) => s.serialize_u64(*c as u64),
            Verdict::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for Verdict {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(|c| Verdict::Known(c as usize))
                .ok_or_else(|| serde::de::Error::custom("verdict index must be unsigned")),
            serde_json::Value::String(s) if s == "unknown" => Ok(Verdict::Unknown),
            other => Err(serde::de::Error::custom(format!("bad verdict {other}"))),
        }
    }
}

/// One thresholded classification of a full window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDecision {
    pub verdict: Verdict,
    /// Maximum softmax probability (0 for a degenerate window).
    pub confidence: f64,
    /// Sample-clock position (samples since session start).
    pub at_sample: u64,
}

/// Raw and majority-smoothed verdict for one emitted window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub raw: RawDecision,
    pub smoothed: Verdict,
    pub window_index: u64,
    pub sample_clock_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub rate_hz: f64,
    /// Open-set rejection threshold on the maximum softmax probability.
    pub threshold: f64,
    /// Decisions are suppressed until this much signal has streamed in.
    pub warmup_s: f64,
    /// Majority filter length.
    pub majority_k: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { rate_hz: 25.0, threshold: 0.8, warmup_s: 120.0, majority_k: 5 }
    }
}

/// Open-set classification of one causal-filtered window: z-score per
/// channel, Eval-mode forward, then the threshold rule. A flat channel
/// yields `Unknown` with confidence 0 rather than an error.
pub fn classify_window(
    window: &[[f64; CHANNEL_COUNT]],
    params: &ModelParams,
    threshold: f64,
) -> RawDecision {
    let t = window.len() as f64;
    let mut values = vec![0.0; window.len() * CHANNEL_COUNT];
    for c in 0..CHANNEL_COUNT {
        let mean = window.iter().map(|s| s[c]).sum::<f64>() / t;
        let var = window.iter().map(|s| (s[c] - mean) * (s[c] - mean)).sum::<f64>() / t;
        let std = var.sqrt();
        if std < 1e-8 {
            return RawDecision { verdict: Verdict::Unknown, confidence: 0.0, at_sample: 0 };
        }
        for (ti, s) in window.iter().enumerate() {
            values[ti * CHANNEL_COUNT + c] = (s[c] - mean) / std;
        }
    }
    let probs = classifier_forward(&values, params, Mode::Eval)
        .expect("session validated the model shape");
    let best = argmax(&probs);
    let confidence = probs[best];
    let verdict = if confidence >= threshold { Verdict::Known(best) } else { Verdict::Unknown };
    RawDecision { verdict, confidence, at_sample: 0 }
}

/// Clear-majority smoothing over the trailing verdicts: a value occurring
/// more than half the history wins; otherwise the newest raw verdict stands.
pub fn majority_filter(history: &[Verdict]) -> Verdict {
    assert!(!history.is_empty(), "majority filter needs at least one verdict");
    let need = history.len() / 2;
    let mut counted: Vec<(Verdict, usize)> = Vec::new();
    for v in history {
        match counted.iter_mut().find(|(c, _)| c == v) {
            Some((_, n)) => *n += 1,
            None => counted.push((*v, 1)),
        }
    }
    counted
        .into_iter()
        .find(|&(_, n)| n > need)
        .map(|(v, _)| v)
        .unwrap_or(*history.last().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    WarmUp,
    Active,
}

/// Per-connection streaming state: causal filters, the sliding sample
/// buffer, warm-up suppression, and the majority history.
pub struct SessionState {
    config: SessionConfig,
    params: Arc<ModelParams>,
    filters: Vec<Biquad>,
    buffer: VecDeque<[f64; CHANNEL_COUNT]>,
    history: VecDeque<Verdict>,
    phase: Phase,
    samples_seen: u64,
    warmup_samples: u64,
    next_decision_at: u64,
    window_index: u64,
    last_seq: Option<u32>,
    pub session_id: Option<u64>,
    pub gap_count: u64,
}

impl SessionState {
    pub fn new(params: Arc<ModelParams>, config: SessionConfig) -> Result<Self, StreamError> {
        if params.config.input_channels != CHANNEL_COUNT {
            return Err(StreamError::ShapeMismatch(format!(
                "streaming requires a {CHANNEL_COUNT}-channel model, checkpoint has {}",
                params.config.input_channels
            )));
        }
        if config.rate_hz <= 2.0 * BAND_HIGH_HZ {
            return Err(StreamError::ShapeMismatch(format!(
                "rate {} Hz too low for the {BAND_LOW_HZ}-{BAND_HIGH_HZ} Hz band",
                config.rate_hz
            )));
        }
        let warmup_samples = (config.warmup_s * config.rate_hz).round() as u64;
        let t = params.config.seq_len as u64;
        let filters = (0..CHANNEL_COUNT)
            .map(|_| Biquad::bandpass(config.rate_hz, BAND_LOW_HZ, BAND_HIGH_HZ))
            .collect();
        Ok(Self {
            filters,
            buffer: VecDeque::with_capacity(params.config.seq_len),
            history: VecDeque::with_capacity(config.majority_k),
            phase: if warmup_samples == 0 { Phase::Active } else { Phase::WarmUp },
            samples_seen: 0,
            warmup_samples,
            next_decision_at: warmup_samples + t,
            window_index: 0,
            last_seq: None,
            session_id: None,
            gap_count: 0,
            params,
            config,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    fn reset_signal_state(&mut self) {
        for f in self.filters.iter_mut() {
            f.reset();
        }
        self.buffer.clear();
        self.history.clear();
        self.samples_seen = 0;
        self.window_index = 0;
        self.phase = if self.warmup_samples == 0 { Phase::Active } else { Phase::WarmUp };
        self.next_decision_at = self.warmup_samples + self.params.config.seq_len as u64;
        self.last_seq = None;
    }

    /// Feed one raw sample through the causal band-pass into the window
    /// buffer; emits a decision at every stride boundary in Active phase.
    fn push_sample(&mut self, raw: [f64; CHANNEL_COUNT]) -> Option<DecisionEvent> {
        let t = self.params.config.seq_len;
        let stride = (t / 2).max(1) as u64;
        let mut filtered = [0.0; CHANNEL_COUNT];
        for (c, v) in raw.iter().enumerate() {
            filtered[c] = self.filters[c].process(*v);
        }
        self.samples_seen += 1;
        match self.phase {
            Phase::WarmUp => {
                // warm the filters only; the window starts fresh afterwards
                if self.samples_seen >= self.warmup_samples {
                    self.phase = Phase::Active;
                    self.buffer.clear();
                }
                None
            }
            Phase::Active => {
                if self.buffer.len() == t {
                    self.buffer.pop_front();
                }
                self.buffer.push_back(filtered);
                if self.samples_seen == self.next_decision_at && self.buffer.len() == t {
                    self.next_decision_at += stride;
                    let window: Vec<[f64; CHANNEL_COUNT]> =
                        self.buffer.iter().copied().collect();
                    let mut raw_decision =
                        classify_window(&window, &self.params, self.config.threshold);
                    raw_decision.at_sample = self.samples_seen;
                    if self.history.len() == self.config.majority_k {
                        self.history.pop_front();
                    }
                    self.history.push_back(raw_decision.verdict);
                    let hist: Vec<Verdict> = self.history.iter().copied().collect();
                    let smoothed = majority_filter(&hist);
                    let event = DecisionEvent {
                        smoothed,
                        window_index: self.window_index,
                        sample_clock_s: self.samples_seen as f64 / self.config.rate_hz,
                        raw: raw_decision,
                    };
                    self.window_index += 1;
                    Some(event)
                } else {
                    None
                }
            }
        }
    }

    /// Validate sequencing and feed every sample of the packet. A sequence
    /// regression resets the session and reports an error; gaps are counted
    /// but tolerated.
    pub fn session_step(&mut self, packet: &FramedPacket) -> Result<Vec<DecisionEvent>, StreamError> {
        if self.session_id.is_none() {
            self.session_id = Some(packet.session_id);
        }
        if let Some(last) = self.last_seq {
            if packet.seq <= last {
                let got = packet.seq;
                self.reset_signal_state();
                return Err(StreamError::SequenceRegression { last, got });
            }
            if packet.seq > last + 1 {
                self.gap_count += u64::from(packet.seq - last - 1);
            }
        }
        self.last_seq = Some(packet.seq);
        let mut events = Vec::new();
        for sample in &packet.samples {
            let raw = [
                sample[0] as f64,
                sample[1] as f64,
                sample[2] as f64,
                sample[3] as f64,
            ];
            if let Some(event) = self.push_sample(raw) {
                events.push(event);
            }
        }
        Ok(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mat, ModelConfig};
    use crate::signal::{generate_synthetic, SyntheticSubjectProfile};
    use proptest::prelude::*;

    fn model(classes: usize, seq_len: usize) -> Arc<ModelParams> {
        let cfg = ModelConfig::new(4, seq_len, classes).with_hidden(4).with_layers(1).with_dropout(0.0);
        Arc::new(ModelParams::init(&cfg, 1))
    }

    /// A model whose softmax is pinned near one-hot at `class`.
    fn confident_model(classes: usize, seq_len: usize, class: usize) -> Arc<ModelParams> {
        let cfg = ModelConfig::new(4, seq_len, classes).with_hidden(4).with_layers(1).with_dropout(0.0);
        let mut p = ModelParams::init(&cfg, 1);
        p.w_c = Mat::zeros(classes, 8);
        p.b_c = vec![-20.0; classes];
        p.b_c[class] = 20.0;
        Arc::new(p)
    }

    fn wiggly_window(t: usize) -> Vec<[f64; 4]> {
        (0..t).map(|i| {
            let x = i as f64;
            [(x * 0.8).sin(), (x * 0.5).cos(), (x * 0.3).sin() + 0.2, (x * 1.1).cos() - 0.1]
        }).collect()
    }

    #[test]
    fn classify_applies_threshold_rule() {
        let window = wiggly_window(20);
        let confident = confident_model(3, 20, 0);
        let d = classify_window(&window, &confident, 0.8);
        assert_eq!(d.verdict, Verdict::Known(0));
        assert!(d.confidence > 0.99);

        // zero-logit model: uniform probs over 26 classes ≈ 0.0385 < 0.8
        let cfg = ModelConfig::new(4, 20, 26).with_hidden(4).with_layers(1).with_dropout(0.0);
        let mut p = ModelParams::init(&cfg, 1);
        p.w_c = Mat::zeros(26, 8);
        p.b_c = vec![0.0; 26];
        let d = classify_window(&window, &Arc::new(p), 0.8);
        assert_eq!(d.verdict, Verdict::Unknown);
        assert!((d.confidence - 1.0 / 26.0).abs() < 1e-9);
    }

    #[test]
    fn classify_flat_channel_is_unknown_with_zero_confidence() {
        let mut window = wiggly_window(20);
        for s in window.iter_mut() {
            s[2] = 3.25;
        }
        let d = classify_window(&window, &confident_model(3, 20, 0), 0.8);
        assert_eq!(d.verdict, Verdict::Unknown);
        assert_eq!(d.confidence, 0.0);
    }

    #[test]
    fn majority_filter_cases() {
        use Verdict::{Known, Unknown};
        let (a, b, c) = (Known(0), Known(1), Known(2));
        assert_eq!(majority_filter(&[a, a, b, a, a]), a);
        assert_eq!(majority_filter(&[a, b, a, b, c]), c, "no clear majority keeps newest");
        assert_eq!(majority_filter(&[Unknown; 5]), Unknown);
        // during start-up the available history is shorter than K
        assert_eq!(majority_filter(&[b]), b);
        assert_eq!(majority_filter(&[a, b]), b, "1 of 2 is not a clear majority");
        assert_eq!(majority_filter(&[a, b, a]), a);
    }

    proptest! {
        #[test]
        fn smoothing_never_adds_verdict_changes(raw in proptest::collection::vec(0usize..4, 1..60)) {
            let verdicts: Vec<Verdict> = raw
                .iter()
                .map(|&v| if v == 3 { Verdict::Unknown } else { Verdict::Known(v) })
                .collect();
            let mut history: Vec<Verdict> = Vec::new();
            let mut smoothed = Vec::new();
            for v in &verdicts {
                history.push(*v);
                let k = history.len().min(5);
                smoothed.push(majority_filter(&history[history.len() - k..]));
            }
            let changes = |xs: &[Verdict]| xs.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert!(changes(&smoothed) <= changes(&verdicts));
        }
    }

    fn feed_record(
        state: &mut SessionState,
        record: &crate::signal::SignalRecord,
        session_id: u64,
    ) -> Vec<DecisionEvent> {
        let mut events = Vec::new();
        let mut seq = 0u32;
        for chunk_start in (0..record.len()).step_by(25) {
            let end = (chunk_start + 25).min(record.len());
            let samples: Vec<[f32; 4]> = (chunk_start..end)
                .map(|i| {
                    [
                        record.channels[0][i] as f32,
                        record.channels[1][i] as f32,
                        record.channels[2][i] as f32,
                        record.channels[3][i] as f32,
                    ]
                })
                .collect();
            let packet = FramedPacket { session_id, seq, samples };
            events.extend(state.session_step(&packet).unwrap());
            seq += 1;
        }
        events
    }

    fn test_record(duration_s: f64) -> crate::signal::SignalRecord {
        let mut p = SyntheticSubjectProfile::new(5, 70.0);
        p.channels.iter_mut().for_each(|c| c.noise_std = 0.05);
        generate_synthetic(&p, duration_s, 25.0).unwrap()
    }

    #[test]
    fn warmup_then_first_decision_at_expected_clock() {
        let params = confident_model(3, 100, 1);
        let config = SessionConfig { warmup_s: 8.0, ..SessionConfig::default() };
        let mut state = SessionState::new(params, config).unwrap();
        assert_eq!(state.phase(), Phase::WarmUp);
        let events = feed_record(&mut state, &test_record(60.0), 9);
        assert_eq!(state.phase(), Phase::Active);
        // first full window closes at 8 s warm-up + 4 s of samples
        assert_eq!(events[0].sample_clock_s, 12.0);
        // thereafter: one decision per 2 s, last at 60 s
        let count = ((60.0 - 8.0 - 4.0) / 2.0) as usize + 1;
        assert_eq!(events.len(), count);
        for pair in events.windows(2) {
            assert_eq!(pair[1].raw.at_sample - pair[0].raw.at_sample, 50, "exact stride cadence");
        }
        assert_eq!(events.last().unwrap().sample_clock_s, 60.0);
    }

    #[test]
    fn ten_minute_replay_event_count() {
        let params = confident_model(3, 100, 1);
        let mut state = SessionState::new(params, SessionConfig::default()).unwrap();
        let events = feed_record(&mut state, &test_record(600.0), 1);
        assert_eq!(events.len(), ((600 - 120 - 4) / 2) + 1);
        assert_eq!(events[0].sample_clock_s, 124.0);
    }

    #[test]
    fn sequence_gap_tolerated_regression_resets() {
        let params = confident_model(2, 100, 0);
        let mut state = SessionState::new(params, SessionConfig { warmup_s: 0.0, ..Default::default() }).unwrap();
        let mk = |seq: u32| FramedPacket {
            session_id: 4,
            seq,
            samples: vec![[0.1, 0.2, 0.3, 0.4]; 10],
        };
        state.session_step(&mk(0)).unwrap();
        state.session_step(&mk(1)).unwrap();
        state.session_step(&mk(5)).unwrap(); // gap of 3 frames
        assert_eq!(state.gap_count, 3);
        let err = state.session_step(&mk(2)).unwrap_err();
        assert!(matches!(err, StreamError::SequenceRegression { last: 5, got: 2 }));
        // reset: accepts a fresh stream from seq 0
        state.session_step(&mk(0)).unwrap();
    }

    #[test]
    fn streaming_matches_batch_pipeline_on_same_window() {
        // causal filter + per-window z-score must agree between the live
        // session path and the batch preprocessing path
        let record = test_record(30.0);
        let params = model(3, 100);
        let config = SessionConfig { warmup_s: 0.0, ..SessionConfig::default() };
        let mut state = SessionState::new(params.clone(), config).unwrap();
        let events = feed_record(&mut state, &record, 2);

        let filtered = crate::signal::bandpass(&record).unwrap();
        let ds_windows = crate::dataset::segment(&filtered, 4.0, 0.5, 0);
        // events correspond to windows at offsets 0, 50, 100 ... after the
        // f32 wire round trip; compare classifier outputs
        for (event, window) in events.iter().zip(&ds_windows) {
            let normalized = crate::dataset::normalize(window).unwrap();
            let probs =
                crate::nn::classifier_forward(&normalized.values, &params, Mode::Eval).unwrap();
            let batch_conf = probs[crate::train::argmax(&probs)];
            assert!(
                (event.raw.confidence - batch_conf).abs() < 1e-6,
                "window {}: stream {} vs batch {}",
                event.window_index,
                event.raw.confidence,
                batch_conf
            );
        }
    }
}
