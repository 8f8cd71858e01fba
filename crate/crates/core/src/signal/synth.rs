//! Deterministic synthetic pulse waveform generator.
//!
//! Each beat is a systolic Gaussian pulse followed by a delayed dicrotic
//! Gaussian, on top of slow sinusoidal baseline drift and white noise.
//! Channels share the beat train but differ in amplitude scaling, dicrotic
//! shape, and a per-channel lag — the timing/amplitude cues a multi-channel
//! model can exploit and a single channel cannot.
//!
//! The beat train is derived only from the profile seed, never from the
//! sampling rate, so the same profile rendered at 100 Hz and 25 Hz describes
//! the same underlying pulse process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::{Activity, SignalError, SignalRecord, CHANNEL_COUNT};

/// Pulse morphology of one optical channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelShape {
    /// Height of the systolic peak.
    pub systolic_amp: f64,
    /// Height of the dicrotic (reflected) pulse.
    pub dicrotic_amp: f64,
    /// Delay of the dicrotic pulse behind the systolic peak, seconds.
    pub dicrotic_delay_s: f64,
    /// Amplitude of slow sinusoidal baseline drift.
    pub drift_amp: f64,
    /// Frequency of the baseline drift, Hz.
    pub drift_freq_hz: f64,
    /// Standard deviation of additive white noise.
    pub noise_std: f64,
}

impl Default for ChannelShape {
    fn default() -> Self {
        Self {
            systolic_amp: 1.0,
            dicrotic_amp: 0.35,
            dicrotic_delay_s: 0.30,
            drift_amp: 0.15,
            drift_freq_hz: 0.2,
            noise_std: 0.05,
        }
    }
}

/// Everything needed to reproduce one synthetic subject's signal bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubjectProfile {
    pub subject_id: String,
    pub activity: Activity,
    pub seed: u64,
    pub heart_rate_bpm: f64,
    /// Beat-to-beat heart-rate standard deviation, bpm.
    pub hr_variability_bpm: f64,
    /// Channel k is delayed by k times this lag, seconds.
    pub inter_channel_lag_s: f64,
    pub channels: [ChannelShape; CHANNEL_COUNT],
}

impl SyntheticSubjectProfile {
    pub fn new(seed: u64, heart_rate_bpm: f64) -> Self {
        Self {
            subject_id: format!("synth-{seed}"),
            activity: Activity::Rest,
            seed,
            heart_rate_bpm,
            hr_variability_bpm: 0.0,
            inter_channel_lag_s: 0.0,
            channels: [
                ChannelShape::default(),
                ChannelShape::default(),
                ChannelShape::default(),
                ChannelShape::default(),
            ],
        }
    }

    fn validate(&self) -> Result<(), SignalError> {
        let err = |msg: String| Err(SignalError::InvalidProfile(msg));
        if !(35.0..=180.0).contains(&self.heart_rate_bpm) {
            return err(format!("heart_rate_bpm {} outside [35, 180]", self.heart_rate_bpm));
        }
        if self.hr_variability_bpm < 0.0 {
            return err("hr_variability_bpm must be >= 0".into());
        }
        if self.inter_channel_lag_s < 0.0 {
            return err("inter_channel_lag_s must be >= 0".into());
        }
        for (k, ch) in self.channels.iter().enumerate() {
            if ch.noise_std < 0.0 {
                return err(format!("channel {k}: noise_std must be >= 0"));
            }
            if ch.dicrotic_delay_s < 0.0 || ch.drift_freq_hz < 0.0 {
                return err(format!("channel {k}: delays and frequencies must be >= 0"));
            }
            let finite = [ch.systolic_amp, ch.dicrotic_amp, ch.dicrotic_delay_s, ch.drift_amp, ch.drift_freq_hz, ch.noise_std];
            if finite.iter().any(|v| !v.is_finite()) {
                return err(format!("channel {k}: non-finite shape parameter"));
            }
        }
        Ok(())
    }
}

// Systolic peak sits at this fraction of the beat period after onset.
const SYSTOLIC_PHASE: f64 = 0.18;
// Gaussian widths as fractions of the beat period.
const SYSTOLIC_WIDTH: f64 = 0.075;
const DICROTIC_WIDTH: f64 = 0.055;

struct Beat {
    onset_s: f64,
    period_s: f64,
}

/// Beat onsets covering [-margin, duration + margin], driven only by the seed.
fn beat_train(profile: &SyntheticSubjectProfile, duration_s: f64) -> Vec<Beat> {
    let mut rng = ChaCha20Rng::seed_from_u64(profile.seed);
    rng.set_stream(0);
    let jitter = Normal::new(0.0, profile.hr_variability_bpm.max(1e-12)).unwrap();
    let margin = 2.0 * 60.0 / 35.0; // two slowest-possible beats
    let mut beats = Vec::new();
    let mut t = -margin;
    while t < duration_s + margin {
        let bpm = if profile.hr_variability_bpm > 0.0 {
            (profile.heart_rate_bpm + jitter.sample(&mut rng)).clamp(30.0, 200.0)
        } else {
            profile.heart_rate_bpm
        };
        let period = 60.0 / bpm;
        beats.push(Beat { onset_s: t, period_s: period });
        t += period;
    }
    beats
}

fn add_gaussian(buffer: &mut [f64], rate_hz: f64, center_s: f64, width_s: f64, amp: f64) {
    let span = 4.0 * width_s;
    let lo = (((center_s - span) * rate_hz).ceil() as i64).max(0) as usize;
    let hi = ((((center_s + span) * rate_hz).floor() as i64) + 1).max(0) as usize;
    for i in lo..hi.min(buffer.len()) {
        let dt = i as f64 / rate_hz - center_s;
        buffer[i] += amp * (-0.5 * (dt / width_s).powi(2)).exp();
    }
}

/// Render a profile into a record of `round(duration_s · rate_hz)` samples.
///
/// Pure function of its arguments: the same (profile, duration, rate) always
/// produces bit-identical output.
pub fn generate_synthetic(
    profile: &SyntheticSubjectProfile,
    duration_s: f64,
    rate_hz: f64,
) -> Result<SignalRecord, SignalError> {
    profile.validate()?;
    if !(duration_s > 0.0) || !(rate_hz > 0.0) || duration_s * rate_hz < 1.0 {
        return Err(SignalError::InvalidProfile(format!(
            "duration {duration_s} s at {rate_hz} Hz yields no samples"
        )));
    }
    let n = (duration_s * rate_hz).round() as usize;
    let beats = beat_train(profile, duration_s);

    let mut channels = Vec::with_capacity(CHANNEL_COUNT);
    for (k, shape) in profile.channels.iter().enumerate() {
        let lag = k as f64 * profile.inter_channel_lag_s;
        let mut buf = vec![0.0; n];
        for beat in &beats {
            let systolic_center = beat.onset_s + SYSTOLIC_PHASE * beat.period_s + lag;
            add_gaussian(&mut buf, rate_hz, systolic_center, SYSTOLIC_WIDTH * beat.period_s, shape.systolic_amp);
            add_gaussian(
                &mut buf,
                rate_hz,
                systolic_center + shape.dicrotic_delay_s,
                DICROTIC_WIDTH * beat.period_s,
                shape.dicrotic_amp,
            );
        }
        let mut drift_rng = ChaCha20Rng::seed_from_u64(profile.seed);
        drift_rng.set_stream(10 + k as u64);
        let phase0: f64 = drift_rng.random_range(0.0..std::f64::consts::TAU);
        if shape.drift_amp != 0.0 {
            for (i, v) in buf.iter_mut().enumerate() {
                let t = i as f64 / rate_hz;
                *v += shape.drift_amp * (std::f64::consts::TAU * shape.drift_freq_hz * t + phase0).sin();
            }
        }
        if shape.noise_std > 0.0 {
            let mut noise_rng = ChaCha20Rng::seed_from_u64(profile.seed);
            noise_rng.set_stream(20 + k as u64);
            let noise = Normal::new(0.0, shape.noise_std).unwrap();
            for v in buf.iter_mut() {
                *v += noise.sample(&mut noise_rng);
            }
        }
        channels.push(buf);
    }

    SignalRecord::new(profile.subject_id.clone(), profile.activity.clone(), rate_hz, channels, Some(0.0))
}
