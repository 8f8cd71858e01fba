//! Synthetic experiment cohorts.
//!
//! `benchmark_cohort` gives subjects distinct morphology (heart rate,
//! dicrotic timing/size, channel lags) plus per-subject activity variants:
//! the standard end-to-end separability dataset. `lag_cohort` makes subjects
//! differ almost only in cross-channel structure, so a single-channel model
//! has nothing to latch onto — the channel-ablation dataset.

use crate::signal::{
    generate_synthetic, Activity, SignalError, SignalRecord, SyntheticSubjectProfile,
};

/// HR offset and noise/drift scaling per activity, applied on top of a
/// subject's base profile.
pub fn activity_variant(
    base: &SyntheticSubjectProfile,
    activity: Activity,
    seed: u64,
) -> SyntheticSubjectProfile {
    let (hr_delta, noise_scale, drift_scale) = match activity {
        Activity::Rest => (0.0, 1.0, 1.0),
        Activity::Walk => (18.0, 2.2, 1.8),
        Activity::Type => (6.0, 1.4, 1.2),
        Activity::Talk => (3.0, 1.2, 1.1),
        Activity::Other(_) => (10.0, 1.5, 1.3),
    };
    let mut p = base.clone();
    p.activity = activity;
    p.seed = seed;
    p.heart_rate_bpm = (p.heart_rate_bpm + hr_delta).clamp(35.0, 180.0);
    for ch in p.channels.iter_mut() {
        ch.noise_std *= noise_scale;
        ch.drift_amp *= drift_scale;
    }
    p
}

/// Time share per activity in every cohort: half rest, the remainder split
/// between walking and typing.
const ACTIVITY_MIX: [(Activity, f64); 3] =
    [(Activity::Rest, 0.5), (Activity::Walk, 0.25), (Activity::Type, 0.25)];

/// Render one subject's activity mix; `seed` drives the session noise, so
/// a different seed on the same profile gives a fresh held-out session.
pub fn render_mixed(
    base: &SyntheticSubjectProfile,
    minutes_each: f64,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<SignalRecord>, SignalError> {
    ACTIVITY_MIX
        .iter()
        .enumerate()
        .map(|(k, (activity, share))| {
            let profile = activity_variant(base, activity.clone(), seed.wrapping_add(k as u64));
            generate_synthetic(&profile, minutes_each * 60.0 * share, rate_hz)
        })
        .collect()
}

/// Base profiles behind [`benchmark_cohort`], for callers that need extra
/// held-out sessions of the same subjects.
pub fn benchmark_profiles(n_subjects: usize, seed: u64) -> Vec<SyntheticSubjectProfile> {
    (0..n_subjects)
        .map(|i| {
            // heart rates overlap on purpose (2.5 bpm spacing, ±4 bpm
            // beat jitter): identity must come from pulse morphology, not
            // from resting rate alone
            let mut p = SyntheticSubjectProfile::new(
                seed.wrapping_mul(1000).wrapping_add(i as u64),
                60.0 + 2.5 * i as f64,
            );
            p.subject_id = format!("subject-{i:02}");
            p.hr_variability_bpm = 4.0;
            p.inter_channel_lag_s = 0.006 * (i % 4) as f64;
            for (c, ch) in p.channels.iter_mut().enumerate() {
                ch.systolic_amp = 1.0 - 0.08 * c as f64;
                ch.dicrotic_amp = 0.22 + 0.05 * ((i + c) % 4) as f64;
                ch.dicrotic_delay_s = 0.20 + 0.03 * (i % 5) as f64 + 0.01 * c as f64;
                ch.drift_amp = 0.18;
                // shared drift frequency: baseline wander must not act as a
                // subject fingerprint that survives any sampling rate
                ch.drift_freq_hz = 0.14;
                ch.noise_std = 0.08;
            }
            p
        })
        .collect()
}

/// Subjects separable by waveform morphology across mixed activities.
pub fn benchmark_cohort(
    n_subjects: usize,
    minutes_each: f64,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<SignalRecord>, SignalError> {
    let mut records = Vec::new();
    for p in benchmark_profiles(n_subjects, seed) {
        records.extend(render_mixed(&p, minutes_each, rate_hz, p.seed.wrapping_mul(7))?);
    }
    Ok(records)
}

/// Subjects share the green1 waveform and heart-rate distribution; identity
/// lives in inter-channel lags and the other channels' pulse ratios.
pub fn lag_cohort(
    n_subjects: usize,
    minutes_each: f64,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<SignalRecord>, SignalError> {
    let mut records = Vec::new();
    for i in 0..n_subjects {
        let mut p = SyntheticSubjectProfile::new(seed.wrapping_mul(1000).wrapping_add(i as u64), 64.0);
        p.subject_id = format!("subject-{i:02}");
        p.hr_variability_bpm = 3.0;
        p.inter_channel_lag_s = 0.010 + 0.022 * i as f64;
        for (c, ch) in p.channels.iter_mut().enumerate() {
            // channel 0 identical across subjects; others carry the identity
            if c == 0 {
                ch.systolic_amp = 1.0;
                ch.dicrotic_amp = 0.30;
                ch.dicrotic_delay_s = 0.26;
            } else {
                ch.systolic_amp = 1.0 - 0.1 * c as f64;
                ch.dicrotic_amp = 0.15 + 0.07 * ((i + 2 * c) % 4) as f64;
                ch.dicrotic_delay_s = 0.22 + 0.025 * ((i + c) % 5) as f64;
            }
            ch.drift_amp = 0.12;
            ch.drift_freq_hz = 0.15;
            ch.noise_std = 0.05;
        }
        records.extend(render_mixed(&p, minutes_each, rate_hz, p.seed.wrapping_mul(13))?);
    }
    Ok(records)
}
