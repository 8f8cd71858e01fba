//! Second-order IIR sections (direct form II transposed) with streaming state.
//!
//! The same causal filters serve batch preprocessing and the live gateway:
//! a session keeps one `Biquad` per channel and feeds samples as they arrive.

/// One second-order section. Coefficients are normalized (a0 = 1).
#[derive(Debug, Clone)]
pub struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    // direct form II transposed state, starts at zero
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn from_coeffs(b: [f64; 3], a: [f64; 2]) -> Self {
        Self {
            b0: b[0],
            b1: b[1],
            b2: b[2],
            a1: a[0],
            a2: a[1],
            s1: 0.0,
            s2: 0.0,
        }
    }

    /// Band-pass with -3 dB points at `low_hz` and `high_hz`.
    ///
    /// Bilinear transform of the two-pole analog prototype
    /// `H(s) = BW·s / (s² + BW·s + ω0²)` with both edges prewarped, so the
    /// digital response hits -3 dB at exactly the requested frequencies.
    /// Gain is unity at the geometric band center.
    pub fn bandpass(rate_hz: f64, low_hz: f64, high_hz: f64) -> Self {
        assert!(low_hz > 0.0 && high_hz > low_hz && high_hz < rate_hz / 2.0);
        let k = 2.0 * rate_hz;
        let w1 = k * (std::f64::consts::PI * low_hz / rate_hz).tan();
        let w2 = k * (std::f64::consts::PI * high_hz / rate_hz).tan();
        let w0_sq = w1 * w2;
        let bw = w2 - w1;
        let a0 = k * k + bw * k + w0_sq;
        Self::from_coeffs(
            [bw * k / a0, 0.0, -bw * k / a0],
            [2.0 * (w0_sq - k * k) / a0, (k * k - bw * k + w0_sq) / a0],
        )
    }

    /// Low-pass with cutoff `fc_hz` and quality `q` (bilinear, prewarped).
    pub fn lowpass(rate_hz: f64, fc_hz: f64, q: f64) -> Self {
        assert!(fc_hz > 0.0 && fc_hz < rate_hz / 2.0 && q > 0.0);
        let omega = (std::f64::consts::PI * fc_hz / rate_hz).tan();
        let d = 1.0 + omega / q + omega * omega;
        let b0 = omega * omega / d;
        Self::from_coeffs(
            [b0, 2.0 * b0, b0],
            [2.0 * (omega * omega - 1.0) / d, (1.0 - omega / q + omega * omega) / d],
        )
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.s1;
        self.s1 = self.b1 * x - self.a1 * y + self.s2;
        self.s2 = self.b2 * x - self.a2 * y;
        y
    }

    pub fn process_buffer(&mut self, input: &[f64]) -> Vec<f64> {
        input.iter().map(|&x| self.process(x)).collect()
    }

    pub fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
    }
}

/// Cascade of sections applied in sequence.
#[derive(Debug, Clone)]
pub struct BiquadCascade {
    sections: Vec<Biquad>,
}

impl BiquadCascade {
    /// 4th-order Butterworth low-pass: two sections with the standard
    /// Butterworth quality factors 1/(2·cos(π/8)) and 1/(2·cos(3π/8)).
    pub fn butterworth_lowpass4(rate_hz: f64, fc_hz: f64) -> Self {
        let q1 = 1.0 / (2.0 * (std::f64::consts::PI / 8.0).cos());
        let q2 = 1.0 / (2.0 * (3.0 * std::f64::consts::PI / 8.0).cos());
        Self {
            sections: vec![Biquad::lowpass(rate_hz, fc_hz, q1), Biquad::lowpass(rate_hz, fc_hz, q2)],
        }
    }

    pub fn process(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |acc, s| s.process(acc))
    }

    pub fn process_buffer(&mut self, input: &[f64]) -> Vec<f64> {
        input.iter().map(|&x| self.process(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Steady-state amplitude gain for a pure tone: single-bin DFT of the
    /// filter output over the input, after discarding `skip_s` of transient.
    fn tone_gain(rate: f64, freq: f64, filter: &mut Biquad, duration_s: f64, skip_s: f64) -> f64 {
        let n = (duration_s * rate) as usize;
        let skip = (skip_s * rate) as usize;
        let input: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin())
            .collect();
        let output = filter.process_buffer(&input);
        let bin = |x: &[f64]| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in x.iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * freq * (skip + i) as f64 / rate;
                re += v * ph.cos();
                im -= v * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        bin(&output[skip..]) / bin(&input[skip..])
    }

    #[test]
    fn bandpass_kills_dc() {
        let mut f = Biquad::bandpass(25.0, 0.5, 12.0);
        let out = f.process_buffer(&vec![1.0; 2000]);
        // steady state: last samples essentially zero
        assert!(out[1500..].iter().all(|v| v.abs() < 0.01));
    }

    #[test]
    fn bandpass_unity_at_band_center() {
        // geometric center of 0.5..12 Hz is sqrt(6) ≈ 2.449 Hz
        let mut f = Biquad::bandpass(25.0, 0.5, 12.0);
        let gain = tone_gain(25.0, 2.449, &mut f, 60.0, 5.0);
        let db = 20.0 * gain.log10();
        assert!(db.abs() < 1.0, "band-center gain {db} dB outside ±1 dB");
    }

    #[test]
    fn bandpass_edge_attenuation() {
        for edge in [0.5, 12.0] {
            let mut f = Biquad::bandpass(25.0, 0.5, 12.0);
            let gain = tone_gain(25.0, edge, &mut f, 240.0, 60.0);
            let db = 20.0 * gain.log10();
            assert!((db + 3.01).abs() < 0.35, "gain at {edge} Hz = {db} dB, want ≈ -3 dB");
        }
    }

    #[test]
    fn bandpass_rejects_far_below_band() {
        let mut center = Biquad::bandpass(25.0, 0.5, 12.0);
        let g_center = tone_gain(25.0, 2.449, &mut center, 240.0, 60.0);
        let mut low = Biquad::bandpass(25.0, 0.5, 12.0);
        let g_low = tone_gain(25.0, 0.05, &mut low, 240.0, 60.0);
        let rel_db = 20.0 * (g_low / g_center).log10();
        assert!(rel_db <= -12.0, "0.05 Hz only {rel_db} dB below band center");
    }

    #[test]
    fn lowpass_cascade_attenuates_above_cutoff() {
        let mut f = BiquadCascade::butterworth_lowpass4(500.0, 11.25);
        let n = 5000;
        let input: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 30.0 * i as f64 / 500.0).sin())
            .collect();
        let out = f.process_buffer(&input);
        let rms = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        assert!(rms(&out[1000..]) / rms(&input[1000..]) < 0.05);
    }

    #[test]
    fn finite_output_for_random_input() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let mut f = Biquad::bandpass(25.0, 0.5, 12.0);
        for _ in 0..100_000 {
            let y = f.process(rng.random_range(-100.0..100.0));
            assert!(y.is_finite());
        }
    }
}
