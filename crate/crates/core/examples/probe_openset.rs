//! Scratch probe for the open-set experiment: trains a 5-subject gallery at
//! a given morphology spacing and noise level, then reports raw and
//! majority-smoothed verdict rates for an enrolled subject and imposters.

use std::sync::Arc;

use pulseauth_core::dataset::{build_dataset, stratified_split, SplitSpec};
use pulseauth_core::nn::ModelConfig;
use pulseauth_core::signal::{bandpass, generate_synthetic, Activity, SyntheticSubjectProfile};
use pulseauth_core::stream::{FramedPacket, SessionConfig, SessionState, Verdict};
use pulseauth_core::study::{activity_variant, render_mixed};
use pulseauth_core::train::{train, TrainConfig};

fn spaced_profiles(seed: u64, scale: f64, noise: f64) -> Vec<SyntheticSubjectProfile> {
    (0..6)
        .map(|i| {
            let mut p = SyntheticSubjectProfile::new(
                seed.wrapping_mul(1000).wrapping_add(i as u64),
                60.0 + 2.5 * scale * i as f64,
            );
            p.subject_id = format!("subject-{i:02}");
            p.hr_variability_bpm = 4.0;
            p.inter_channel_lag_s = 0.006 * scale * (i % 4) as f64;
            for (c, ch) in p.channels.iter_mut().enumerate() {
                ch.systolic_amp = 1.0 - 0.08 * c as f64;
                ch.dicrotic_amp = 0.22 + 0.05 * scale * ((i + c) % 4) as f64;
                ch.dicrotic_delay_s = 0.20 + 0.03 * scale * (i % 5) as f64 + 0.01 * c as f64;
                ch.drift_amp = 0.18;
                ch.drift_freq_hz = 0.14;
                ch.noise_std = noise;
            }
            p
        })
        .collect()
}

fn stream_rates(
    params: &Arc<pulseauth_core::nn::ModelParams>,
    record: &pulseauth_core::signal::SignalRecord,
    want: Option<usize>,
) -> (f64, f64, f64, f64) {
    let mut session = SessionState::new(
        params.clone(),
        SessionConfig { warmup_s: 8.0, ..SessionConfig::default() },
    )
    .unwrap();
    let mut events = Vec::new();
    for (seq, start) in (0..record.len()).step_by(25).enumerate() {
        let end = (start + 25).min(record.len());
        let samples: Vec<[f32; 4]> = (start..end)
            .map(|i| {
                [
                    record.channels[0][i] as f32,
                    record.channels[1][i] as f32,
                    record.channels[2][i] as f32,
                    record.channels[3][i] as f32,
                ]
            })
            .collect();
        events.extend(
            session
                .session_step(&FramedPacket { session_id: 1, seq: seq as u32, samples })
                .unwrap(),
        );
    }
    let n = events.len() as f64;
    let raw_unknown =
        events.iter().filter(|e| e.raw.verdict == Verdict::Unknown).count() as f64 / n;
    let smooth_unknown =
        events.iter().filter(|e| e.smoothed == Verdict::Unknown).count() as f64 / n;
    let (raw_correct, smooth_correct) = match want {
        Some(c) => (
            events.iter().filter(|e| e.raw.verdict == Verdict::Known(c)).count() as f64 / n,
            events.iter().filter(|e| e.smoothed == Verdict::Known(c)).count() as f64 / n,
        ),
        None => (0.0, 0.0),
    };
    (raw_correct, smooth_correct, raw_unknown, smooth_unknown)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scale: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let noise: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30);

    let profiles = spaced_profiles(11, scale, noise);
    let mut records = Vec::new();
    for p in &profiles[..5] {
        records.extend(render_mixed(p, 20.0, 25.0, p.seed.wrapping_mul(7)).unwrap());
    }
    let filtered: Vec<_> = records.iter().map(|r| bandpass(r).unwrap()).collect();
    let ds = build_dataset(&filtered, 4.0, 0.5).unwrap();
    let (tr, va, _) = stratified_split(&ds, &SplitSpec::new(0.6, 0.2, 0.2, 11)).unwrap();
    let cfg = ModelConfig::new(4, 100, 5).with_hidden(32).with_layers(1).with_dropout(0.47);
    let tc = TrainConfig { max_epochs: epochs, seed: 11, ..TrainConfig::default() };
    let (params, history) = train(&cfg, &tc, &tr, &va).unwrap();
    println!(
        "scale={scale} noise={noise} epochs={} val_acc={:.4}",
        history.epochs.len(),
        history.epochs.last().unwrap().val_acc
    );
    let params = Arc::new(params);

    let enrolled = generate_synthetic(
        &activity_variant(&profiles[0], Activity::Rest, 900_002),
        600.0,
        25.0,
    )
    .unwrap();
    let (rc, sc, _, _) = stream_rates(&params, &enrolled, Some(0));
    println!("  enrolled-0 : raw-correct {rc:.3} smoothed-correct {sc:.3}");

    let chimera = generate_synthetic(
        &activity_variant(&profiles[5], Activity::Rest, 900_001),
        600.0,
        25.0,
    )
    .unwrap();
    let (_, _, ru, su) = stream_rates(&params, &chimera, None);
    println!("  chimera-5  : raw-unknown {ru:.3} smoothed-unknown {su:.3}");

    for (a, b) in [(0usize, 1usize), (1, 2), (2, 3)] {
        let mut mid = profiles[a].clone();
        let pb = &profiles[b];
        mid.subject_id = format!("imposter-{a}{b}");
        mid.seed = 4_000_000 + (a * 10 + b) as u64;
        mid.heart_rate_bpm = 0.5 * (profiles[a].heart_rate_bpm + pb.heart_rate_bpm);
        mid.inter_channel_lag_s = 0.5 * (profiles[a].inter_channel_lag_s + pb.inter_channel_lag_s);
        for (c, ch) in mid.channels.iter_mut().enumerate() {
            let ca = &profiles[a].channels[c];
            let cb = &pb.channels[c];
            ch.systolic_amp = 0.5 * (ca.systolic_amp + cb.systolic_amp);
            ch.dicrotic_amp = 0.5 * (ca.dicrotic_amp + cb.dicrotic_amp);
            ch.dicrotic_delay_s = 0.5 * (ca.dicrotic_delay_s + cb.dicrotic_delay_s);
        }
        let rec =
            generate_synthetic(&activity_variant(&mid, Activity::Rest, mid.seed), 600.0, 25.0)
                .unwrap();
        let (_, _, ru, su) = stream_rates(&params, &rec, None);
        println!("  midpoint-{a}{b}: raw-unknown {ru:.3} smoothed-unknown {su:.3}");
    }
}
