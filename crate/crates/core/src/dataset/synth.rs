//! Synthetic speech-EEG.
//!
//! Each recording is the sum of
//!
//! * 1/f background on every channel (white noise through a three-pole
//!   pinking filter), scaled so its 30–120 Hz power is `background_uv²`;
//! * white amplifier noise on every channel (`sensor_noise_uv` RMS), which
//!   dominates above the burst band;
//! * 60 and 120 Hz line interference;
//! * per trial of a spoken class, band-limited 30–120 Hz bursts gated by the
//!   word's syllable envelope and projected through the word's spatial
//!   mixing vector (a Gaussian bump near the vertex);
//! * blink (vertical) and saccade (horizontal) EOG concentrated frontally;
//! * broadband EMG bursts over one temporal region at random times.
//!
//! Word patterns (mixing centre, syllable timing) depend only on the
//! dataset seed, so they are shared across subjects. Each subject rotates
//! the mixing centres by a small random angle about the vertex.
//!
//! `snr_db` is the power of the burst source along its unit-norm spatial
//! direction relative to the in-band background power of one channel.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{default_classes, ChannelLayout, Event, Recording, WordLabel};
use crate::dsp::design_bandpass;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub subjects: usize,
    pub trials_per_class: usize,
    /// Native sampling rate, Hz.
    pub fs: f64,
    pub snr_db: f64,
    /// Master seed. Subject `s` draws its noise from `seed + s`.
    pub seed: u64,
    /// Spacing between trial onsets, seconds.
    pub trial_period_s: f64,
    /// Time from the start of a trial slot to its onset, seconds.
    pub onset_offset_s: f64,
    /// In-band (30–120 Hz) RMS of the background per channel, µV.
    pub background_uv: f64,
    /// Broadband white noise RMS per channel, µV.
    pub sensor_noise_uv: f64,
    pub line_noise_uv: f64,
    pub eog_uv: f64,
    pub blink_rate_hz: f64,
    pub emg_uv: f64,
    pub emg_rate_hz: f64,
    /// Standard deviation of the Gaussian mixing bump, head-disk units.
    pub mixing_spread: f64,
    /// Standard deviation of the per-subject rotation of mixing centres.
    pub subject_rotation_deg: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 2,
            trials_per_class: 20,
            fs: 1000.0,
            snr_db: 20.0,
            seed: 42,
            trial_period_s: 3.0,
            onset_offset_s: 0.8,
            background_uv: 2.0,
            sensor_noise_uv: 1.0,
            line_noise_uv: 3.0,
            eog_uv: 80.0,
            blink_rate_hz: 0.25,
            emg_uv: 15.0,
            emg_rate_hz: 0.04,
            mixing_spread: 0.15,
            subject_rotation_deg: 8.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.trials_per_class < 5 {
            return bad(format!("trials_per_class {} < 5", self.trials_per_class));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("fs {}", self.fs));
        }
        if !(-20.0..=40.0).contains(&self.snr_db) {
            return bad(format!("snr_db {} outside [-20, 40]", self.snr_db));
        }
        if self.onset_offset_s < 0.5 || self.trial_period_s < self.onset_offset_s + 2.0 {
            return bad("trial slot must hold 0.5 s of baseline and a 2 s epoch".into());
        }
        let positive = [
            self.background_uv,
            self.mixing_spread,
            self.trial_period_s,
        ];
        let non_negative = [
            self.sensor_noise_uv,
            self.line_noise_uv,
            self.eog_uv,
            self.blink_rate_hz,
            self.emg_uv,
            self.emg_rate_hz,
            self.subject_rotation_deg,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || non_negative.iter().any(|v| !(*v >= 0.0)) {
            return bad("amplitudes, rates and spreads must be non-negative".into());
        }
        // 120 Hz line noise and the burst band must be representable.
        if self.fs <= 2.0 * 125.0 {
            return bad(format!("fs {} too low for the 30-120 Hz burst band", self.fs));
        }
        Ok(())
    }

    fn slot_samples(&self) -> usize {
        (self.trial_period_s * self.fs).round() as usize
    }

    fn onset_samples(&self) -> usize {
        (self.onset_offset_s * self.fs).round() as usize
    }
}

/// Timing and location of one word's burst pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordPattern {
    pub class: usize,
    /// Mixing centre on the head disk before subject rotation.
    pub center: [f64; 2],
    /// (start, duration) of each syllable burst, seconds after onset.
    pub syllables: Vec<(f64, f64)>,
}

fn syllable_count(text: &str) -> usize {
    let mut groups = 0;
    let mut in_vowel = false;
    for c in text.chars() {
        let v = "aeiouy".contains(c);
        if v && !in_vowel {
            groups += 1;
        }
        in_vowel = v;
    }
    groups.clamp(1, 3)
}

/// Word patterns for the class table, derived from the master seed only.
pub fn word_patterns(classes: &[WordLabel], seed: u64) -> Vec<WordPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5eed);
    classes
        .iter()
        .map(|c| {
            // Uniform in a disk of radius 0.4 around the vertex.
            let r = 0.4 * rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            let center = [r * a.cos(), r * a.sin()];
            let mut syllables = Vec::new();
            if !c.is_rest() {
                let mut t = 0.15 + 0.35 * rng.random::<f64>();
                for _ in 0..syllable_count(&c.text) {
                    let d = 0.15 + 0.15 * rng.random::<f64>();
                    syllables.push((t, d));
                    t += d + 0.05 + 0.10 * rng.random::<f64>();
                }
            }
            WordPattern {
                class: c.id,
                center,
                syllables,
            }
        })
        .collect()
}

/// Unit-norm Gaussian bump over the electrodes centred at `center`.
pub fn class_mixing(layout: &ChannelLayout, center: [f64; 2], spread: f64) -> Vec<f64> {
    let w: Vec<f64> = layout
        .positions()
        .iter()
        .map(|p| {
            let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
            (-d2 / (2.0 * spread * spread)).exp()
        })
        .collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.into_iter().map(|v| v / norm).collect()
}

fn rotate(p: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

// Paul Kellet's economy pinking filter: three leaky integrators plus a
// direct path. Coefficients are (pole, gain).
const PINK_POLES: [(f64, f64); 3] = [(0.99765, 0.0990460), (0.96300, 0.2965164), (0.57000, 1.0526913)];
const PINK_DIRECT: f64 = 0.1848;

struct Pink {
    state: [f64; 3],
}

impl Pink {
    fn new() -> Self {
        Self { state: [0.0; 3] }
    }

    fn next(&mut self, white: f64) -> f64 {
        let mut out = PINK_DIRECT * white;
        for (s, &(p, g)) in self.state.iter_mut().zip(&PINK_POLES) {
            *s = p * *s + g * white;
            out += *s;
        }
        out
    }
}

/// Power of the pinking filter's output between `lo` and `hi` Hz for
/// unit-variance white input, by Simpson quadrature of |H|².
fn pink_band_power(lo: f64, hi: f64, fs: f64) -> f64 {
    let h2 = |f: f64| {
        let w = std::f64::consts::TAU * f / fs;
        let (mut re, mut im) = (PINK_DIRECT, 0.0);
        for &(p, g) in &PINK_POLES {
            // g / (1 - p e^{-jw})
            let dr = 1.0 - p * w.cos();
            let di = p * w.sin();
            let den = dr * dr + di * di;
            re += g * dr / den;
            im -= g * di / den;
        }
        re * re + im * im
    };
    let n = 4096;
    let step = (hi - lo) / n as f64;
    let mut acc = h2(lo) + h2(hi);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * h2(lo + k as f64 * step);
    }
    // Two-sided density integrated over ±band, normalised by fs.
    2.0 * acc * step / 3.0 / fs
}

fn raised_cosine_gate(t: f64, start: f64, dur: f64, edge: f64) -> f64 {
    let end = start + dur;
    if t < start || t > end {
        0.0
    } else if t < start + edge {
        0.5 - 0.5 * (std::f64::consts::PI * (t - start) / edge).cos()
    } else if t > end - edge {
        0.5 - 0.5 * (std::f64::consts::PI * (end - t) / edge).cos()
    } else {
        1.0
    }
}

/// Rotation of the word mixing centres for `subject`, radians.
pub fn subject_rotation(subject: u32, config: &SynthConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(subject as u64));
    rng.set_stream(0x0a11);
    let z: f64 = StandardNormal.sample(&mut rng);
    config.subject_rotation_deg.to_radians() * z
}

/// Per-class unit-norm mixing vectors of `subject`, in class order.
pub fn subject_mixing(subject: u32, config: &SynthConfig) -> Vec<Vec<f64>> {
    let layout = ChannelLayout::standard_64();
    let rotation = subject_rotation(subject, config);
    word_patterns(&default_classes(), config.seed)
        .iter()
        .map(|p| class_mixing(&layout, rotate(p.center, rotation), config.mixing_spread))
        .collect()
}

/// Synthesize one subject. Deterministic in `(subject, config)`.
pub fn synth_subject(subject: u32, config: &SynthConfig) -> Result<Recording> {
    config.validate()?;
    let classes = default_classes();
    let layout = ChannelLayout::standard_64();
    let n_ch = layout.n_channels();
    let fs = config.fs;
    let slot = config.slot_samples();
    let onset = config.onset_samples();
    let n_trials = classes.len() * config.trials_per_class;
    let n = n_trials * slot + slot / 2;

    let subject_seed = config.seed.wrapping_add(subject as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(subject_seed);
    let normal = StandardNormal;

    // Trial order: every (class, repetition) once, shuffled.
    let mut order: Vec<usize> = (0..n_trials).map(|i| i % classes.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let events: Vec<Event> = order
        .iter()
        .enumerate()
        .map(|(k, &label)| Event {
            sample: k * slot + onset,
            label,
        })
        .collect();

    let mut data = Array2::<f64>::zeros((n_ch, n));

    // Background: independent pink noise per channel, each from its own stream.
    let scale = config.background_uv / pink_band_power(30.0, 120.0, fs).sqrt();
    for (ch, mut row) in data.outer_iter_mut().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(subject_seed);
        r.set_stream(1 + ch as u64);
        let mut pink = Pink::new();
        // Discard the filter's start-up transient.
        for _ in 0..(4 * fs as usize) {
            pink.next(normal.sample(&mut r));
        }
        for v in row.iter_mut() {
            *v = scale * pink.next(normal.sample(&mut r));
        }
        let mut r = ChaCha8Rng::seed_from_u64(subject_seed);
        r.set_stream(0x1_0000 + ch as u64);
        for v in row.iter_mut() {
            let e: f64 = normal.sample(&mut r);
            *v += config.sensor_noise_uv * e;
        }
    }

    // Line interference, common phase, slightly different gain per channel.
    let phase60 = rng.random::<f64>() * std::f64::consts::TAU;
    let phase120 = rng.random::<f64>() * std::f64::consts::TAU;
    let gains: Vec<f64> = (0..n_ch).map(|_| 0.8 + 0.4 * rng.random::<f64>()).collect();
    for (ch, mut row) in data.outer_iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let line = (std::f64::consts::TAU * 60.0 * t + phase60).sin()
                + 0.5 * (std::f64::consts::TAU * 120.0 * t + phase120).sin();
            *v += config.line_noise_uv * gains[ch] * line;
        }
    }

    // Speech bursts.
    let subject_gain = 0.9 + 0.2 * rng.random::<f64>();
    let patterns = word_patterns(&classes, config.seed);
    let mixings = subject_mixing(subject, config);
    let amplitude = config.background_uv * 10f64.powf(config.snr_db / 20.0) * subject_gain;
    let carrier_filter = design_bandpass(30.0, 120.0, fs, 8)?;
    let epoch_len = (2.0 * fs) as usize;
    let edge = 0.02;
    for ev in &events {
        let pattern = &patterns[ev.label];
        if pattern.syllables.is_empty() {
            continue;
        }
        let jitter = 0.01 * (2.0 * rng.random::<f64>() - 1.0);
        let trial_gain = 0.9 + 0.2 * rng.random::<f64>();
        // Band-limited carrier over the epoch plus a lead-in for the filter.
        let lead = (0.2 * fs) as usize;
        let mut carrier: Vec<f64> = (0..lead + epoch_len).map(|_| normal.sample(&mut rng)).collect();
        carrier_filter.filter_forward(&mut carrier);
        let carrier = &carrier[lead..];
        let rms = (carrier.iter().map(|v| v * v).sum::<f64>() / carrier.len() as f64).sqrt();
        let source: Vec<f64> = carrier
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let t = i as f64 / fs - jitter;
                let env: f64 = pattern
                    .syllables
                    .iter()
                    .map(|&(s, d)| raised_cosine_gate(t, s, d, edge))
                    .sum();
                amplitude * trial_gain * env * c / rms
            })
            .collect();
        let mix = &mixings[ev.label];
        for (ch, mut row) in data.outer_iter_mut().enumerate() {
            let w = mix[ch];
            if w < 1e-6 {
                continue;
            }
            for (i, s) in source.iter().enumerate() {
                row[ev.sample + i] += w * s;
            }
        }
    }

    // Ocular artifacts: blinks project vertically, saccades horizontally.
    let positions = layout.positions();
    let vertical: Vec<f64> = positions
        .iter()
        .map(|p| (-((p[0]).powi(2) + (p[1] - 0.95).powi(2)) / (2.0 * 0.3 * 0.3)).exp())
        .collect();
    let horizontal: Vec<f64> = positions
        .iter()
        .map(|p| p[0] * (-((p[1] - 0.8).powi(2)) / (2.0 * 0.35 * 0.35)).exp())
        .collect();
    let duration = n as f64 / fs;
    let mut blink_src = vec![0.0; n];
    let mut saccade_src = vec![0.0; n];
    let n_blinks = (config.blink_rate_hz * duration).round() as usize;
    let blink_sd = 0.06 * fs;
    for _ in 0..n_blinks {
        let c = rng.random::<f64>() * n as f64;
        let a = config.eog_uv * (0.7 + 0.6 * rng.random::<f64>());
        let lo = (c - 5.0 * blink_sd).max(0.0) as usize;
        let hi = ((c + 5.0 * blink_sd) as usize).min(n);
        for (i, s) in blink_src.iter_mut().enumerate().take(hi).skip(lo) {
            *s += a * (-((i as f64 - c).powi(2)) / (2.0 * blink_sd * blink_sd)).exp();
        }
    }
    // Saccades: piecewise-constant gaze, smoothed by a one-pole low-pass.
    let mut gaze = 0.0;
    let mut smooth = 0.0;
    let hold = (1.5 * fs) as usize;
    for (i, s) in saccade_src.iter_mut().enumerate() {
        if i % hold == 0 {
            gaze = 0.5 * config.eog_uv * (2.0 * rng.random::<f64>() - 1.0);
        }
        smooth += 0.02 * (gaze - smooth);
        *s = smooth;
    }
    for (ch, mut row) in data.outer_iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            *v += vertical[ch] * blink_src[i] + horizontal[ch] * saccade_src[i];
        }
    }

    // Muscle artifacts over one temporal region.
    let temporal = |p: &[f64; 2], side: f64| {
        let cx = side * 0.8;
        (-((p[0] - cx).powi(2) + p[1].powi(2)) / (2.0 * 0.25 * 0.25)).exp()
    };
    let n_bursts = (config.emg_rate_hz * duration).round() as usize;
    for _ in 0..n_bursts {
        let start = rng.random_range(0..n);
        let len = ((0.2 + 0.3 * rng.random::<f64>()) * fs) as usize;
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let weights: Vec<f64> = positions.iter().map(|p| temporal(p, side)).collect();
        let end = (start + len).min(n);
        let burst: Vec<f64> = (start..end).map(|_| normal.sample(&mut rng)).collect();
        for (ch, mut row) in data.outer_iter_mut().enumerate() {
            let w = weights[ch] * config.emg_uv;
            if w < 1e-3 {
                continue;
            }
            for (k, b) in burst.iter().enumerate() {
                row[start + k] += w * b;
            }
        }
    }

    Recording::new(subject, data.mapv(|v| v as f32), fs, layout, events)
}

/// All subjects of a synthetic dataset, in subject order.
///
/// Subjects are generated in parallel; each depends only on its own seed.
pub fn synth_dataset(config: &SynthConfig) -> Result<Vec<Recording>> {
    use rayon::prelude::*;
    config.validate()?;
    (0..config.subjects as u32)
        .into_par_iter()
        .map(|s| synth_subject(s, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    fn gaussian_noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn small() -> SynthConfig {
        SynthConfig {
            trials_per_class: 5,
            subjects: 1,
            ..Default::default()
        }
    }

    #[test]
    fn event_count_is_classes_times_trials() {
        let cfg = SynthConfig {
            trials_per_class: 5,
            ..small()
        };
        let r = synth_subject(0, &cfg).unwrap();
        assert_eq!(r.events.len(), 13 * 5);
        assert_eq!(r.data.nrows(), 64);
        for c in 0..13 {
            assert_eq!(r.events.iter().filter(|e| e.label == c).count(), 5);
        }
    }

    #[test]
    fn same_seed_gives_identical_samples() {
        let a = synth_subject(3, &small()).unwrap();
        let b = synth_subject(3, &small()).unwrap();
        assert!(a.data.iter().zip(b.data.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = synth_subject(4, &small()).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn rejects_invalid_configs() {
        for cfg in [
            SynthConfig { trials_per_class: 4, ..small() },
            SynthConfig { snr_db: 41.0, ..small() },
            SynthConfig { snr_db: -20.5, ..small() },
            SynthConfig { fs: 0.0, ..small() },
            SynthConfig { background_uv: -1.0, ..small() },
        ] {
            assert!(matches!(synth_subject(0, &cfg), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn syllables_fit_in_the_epoch() {
        let p = word_patterns(&default_classes(), 42);
        for w in &p {
            for &(s, d) in &w.syllables {
                assert!(s > 0.1 && s + d < 2.0);
            }
        }
        assert!(p[12].syllables.is_empty());
        assert_eq!(syllable_count("tv"), 1);
        assert_eq!(syllable_count("thank you"), 2);
    }

    #[test]
    fn pink_band_power_matches_simulation() {
        let fs = 1000.0;
        let analytic = pink_band_power(30.0, 120.0, fs);
        let bp = design_bandpass(30.0, 120.0, fs, 8).unwrap();
        let mut pink = Pink::new();
        let mut x: Vec<f64> = gaussian_noise(400_000, 1).into_iter().map(|w| pink.next(w)).collect();
        bp.filter_forward(&mut x);
        let tail = &x[20_000..];
        let measured = tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64;
        // An 8th-order band-pass has a slightly wider equivalent bandwidth.
        assert!((measured / analytic - 1.0).abs() < 0.08, "{measured} vs {analytic}");
    }
}
