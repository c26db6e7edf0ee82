//! Butterworth and notch IIR filters as cascades of second-order sections.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One second-order section, `a0` normalised to 1:
///
/// `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        let [a1, a2] = self.a;
        a2.abs() < 1.0 && a1.abs() < 1.0 + a2
    }

    fn response(&self, w: f64) -> (f64, f64) {
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, self.b[1] * s1 + self.b[2] * s2);
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        let d = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d,
            (num.1 * den.0 - num.0 * den.1) / d,
        )
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Direct form II transposed, in place, starting from `state`.
    fn run(&self, x: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + state[0];
            state[0] = b1 * input - a1 * y + state[1];
            state[1] = b2 * input - a2 * y;
            *v = y;
        }
    }

    /// State that makes a constant input `level` a steady state.
    fn steady_state(&self, level: f64) -> [f64; 2] {
        let y = self.dc_gain() * level;
        let s2 = self.b[2] * level - self.a[1] * y;
        let s1 = self.b[1] * level - self.a[0] * y + s2;
        [s1, s2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Lowpass,
    Bandpass,
    Notch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub kind: FilterKind,
    /// Cutoff (low-pass), band edges (band-pass) or centre (notch), Hz.
    pub cutoffs_hz: Vec<f64>,
    pub fs: f64,
    /// Number of poles.
    pub order: usize,
}

fn check_below_nyquist(f: f64, fs: f64) -> Result<()> {
    if f >= fs / 2.0 {
        return Err(Error::NyquistCutoff { cutoff_hz: f, fs });
    }
    Ok(())
}

fn bilinear(re: f64, im: f64, fs: f64) -> (f64, f64) {
    // z = (2fs + s) / (2fs - s)
    let k = 2.0 * fs;
    let (nr, ni) = (k + re, im);
    let (dr, di) = (k - re, -im);
    let d = dr * dr + di * di;
    ((nr * dr + ni * di) / d, (ni * dr - nr * di) / d)
}

fn complex_sqrt(re: f64, im: f64) -> (f64, f64) {
    let m = re.hypot(im);
    let r = ((m + re) / 2.0).max(0.0).sqrt();
    let i = ((m - re) / 2.0).max(0.0).sqrt();
    (r, if im < 0.0 { -i } else { i })
}

/// Denominator of a section from a z-plane pole pair that is either a
/// conjugate pair (`p`, `conj p`) or two real poles.
fn section_from_poles(p1: (f64, f64), p2: (f64, f64)) -> [f64; 2] {
    // (1 - p1 z⁻¹)(1 - p2 z⁻¹), imaginary parts cancel for the admitted pairs.
    let sum = p1.0 + p2.0;
    let prod = p1.0 * p2.0 - p1.1 * p2.1;
    [-sum, prod]
}

/// Butterworth low-pass of `order` poles, cutoff at −3 dB.
pub fn design_lowpass(cutoff_hz: f64, fs: f64, order: usize) -> Result<BiquadCascade> {
    if order == 0 || !(cutoff_hz > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "low-pass needs order ≥ 1 and a positive cutoff, got {order}, {cutoff_hz} Hz"
        )));
    }
    check_below_nyquist(cutoff_hz, fs)?;
    let wc = 2.0 * fs * (PI * cutoff_hz / fs).tan();
    let mut sections = Vec::new();
    for k in 0..order / 2 {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let z = bilinear(wc * theta.cos(), wc * theta.sin(), fs);
        let a = section_from_poles(z, (z.0, -z.1));
        let g = (1.0 + a[0] + a[1]) / 4.0;
        sections.push(Biquad {
            b: [g, 2.0 * g, g],
            a,
        });
    }
    if order % 2 == 1 {
        let (z, _) = bilinear(-wc, 0.0, fs);
        let g = (1.0 - z) / 2.0;
        sections.push(Biquad {
            b: [g, g, 0.0],
            a: [-z, 0.0],
        });
    }
    Ok(BiquadCascade {
        sections,
        kind: FilterKind::Lowpass,
        cutoffs_hz: vec![cutoff_hz],
        fs,
        order,
    })
}

/// Butterworth band-pass with `order` poles in total (`order / 2` sections),
/// −3 dB at both edges and unity gain at the geometric centre.
pub fn design_bandpass(low_hz: f64, high_hz: f64, fs: f64, order: usize) -> Result<BiquadCascade> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "band-pass order must be even and ≥ 2, got {order}"
        )));
    }
    check_below_nyquist(high_hz, fs)?;
    if !(low_hz > 0.0 && low_hz < high_hz) {
        return Err(Error::InvalidConfig(format!(
            "band edges must satisfy 0 < low < high, got {low_hz}, {high_hz}"
        )));
    }
    let n = order / 2;
    let w1 = 2.0 * fs * (PI * low_hz / fs).tan();
    let w2 = 2.0 * fs * (PI * high_hz / fs).tan();
    let w0sq = w1 * w2;
    let bw = w2 - w1;

    // Analog band-pass poles from prototype pole q: s² − q·bw·s + w0² = 0.
    let bp_poles = |qr: f64, qi: f64| {
        let (br, bi) = (qr * bw, qi * bw);
        let (dr, di) = complex_sqrt(br * br - bi * bi - 4.0 * w0sq, 2.0 * br * bi);
        (((br + dr) / 2.0, (bi + di) / 2.0), ((br - dr) / 2.0, (bi - di) / 2.0))
    };

    let mut denominators = Vec::with_capacity(n);
    for k in 0..n / 2 {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let (s1, s2) = bp_poles(theta.cos(), theta.sin());
        for s in [s1, s2] {
            let z = bilinear(s.0, s.1, fs);
            denominators.push(section_from_poles(z, (z.0, -z.1)));
        }
    }
    if n % 2 == 1 {
        let (s1, s2) = bp_poles(-1.0, 0.0);
        let z1 = bilinear(s1.0, s1.1, fs);
        let z2 = bilinear(s2.0, s2.1, fs);
        denominators.push(section_from_poles(z1, z2));
    }

    let w_center = 2.0 * (w0sq.sqrt() / (2.0 * fs)).atan();
    let sections = denominators
        .into_iter()
        .map(|a| {
            let mut s = Biquad { b: [1.0, 0.0, -1.0], a };
            let (re, im) = s.response(w_center);
            let g = 1.0 / re.hypot(im);
            s.b = [g, 0.0, -g];
            s
        })
        .collect();
    Ok(BiquadCascade {
        sections,
        kind: FilterKind::Bandpass,
        cutoffs_hz: vec![low_hz, high_hz],
        fs,
        order,
    })
}

/// Second-order notch at `f0_hz` with quality factor `q`, unity gain at DC.
pub fn design_notch(f0_hz: f64, q: f64, fs: f64) -> Result<BiquadCascade> {
    check_below_nyquist(f0_hz, fs)?;
    if !(f0_hz > 0.0 && q > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "notch needs f0 > 0 and q > 0, got {f0_hz} Hz, q {q}"
        )));
    }
    let w0 = 2.0 * PI * f0_hz / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cos = w0.cos();
    let a0 = 1.0 + alpha;
    let section = Biquad {
        b: [1.0 / a0, -2.0 * cos / a0, 1.0 / a0],
        a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
    };
    Ok(BiquadCascade {
        sections: vec![section],
        kind: FilterKind::Notch,
        cutoffs_hz: vec![f0_hz],
        fs,
        order: 2,
    })
}

impl BiquadCascade {
    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(|s| s.is_stable())
            && self
                .sections
                .iter()
                .all(|s| s.b.iter().chain(&s.a).all(|c| c.is_finite()))
    }

    /// |H| at `f_hz` for a single pass.
    pub fn magnitude(&self, f_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / self.fs;
        self.sections
            .iter()
            .map(|s| {
                let (re, im) = s.response(w);
                re.hypot(im)
            })
            .product()
    }

    pub fn gain_db(&self, f_hz: f64) -> f64 {
        20.0 * self.magnitude(f_hz).log10()
    }

    /// Causal filtering from rest.
    pub fn filter_forward(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x, [0.0; 2]);
        }
    }

    /// Causal filtering with every section started in the steady state of
    /// its first input sample.
    fn filter_steady(&self, x: &mut [f64]) {
        for s in &self.sections {
            let level = x.first().copied().unwrap_or(0.0);
            s.run(x, s.steady_state(level));
        }
    }

    /// Edge padding used by [`filtfilt`](Self::filtfilt).
    pub fn padding(&self) -> usize {
        3 * self.order
    }

    /// Zero-phase filtering.
    ///
    /// The signal is extended at both ends by odd-symmetric reflection of
    /// `3 × order` samples. The output is the mean of the forward-then-
    /// backward and the backward-then-forward passes, each pass starting in
    /// steady state, so it commutes exactly with time reversal. In the
    /// interior the magnitude response is |H|².
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        let pad = self.padding();
        if n <= pad {
            return Err(Error::SignalTooShort { len: n, min: pad });
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let mut fb = ext.clone();
        self.filter_steady(&mut fb);
        fb.reverse();
        self.filter_steady(&mut fb);
        fb.reverse();

        let mut bf = ext;
        bf.reverse();
        self.filter_steady(&mut bf);
        bf.reverse();
        self.filter_steady(&mut bf);

        Ok(fb[pad..pad + n]
            .iter()
            .zip(&bf[pad..pad + n])
            .map(|(a, b)| 0.5 * (a + b))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bandpass_edges_and_center() {
        let bp = design_bandpass(30.0, 120.0, 1000.0, 4).unwrap();
        assert!(bp.is_stable());
        assert_eq!(bp.sections.len(), 2);
        assert_abs_diff_eq!(bp.gain_db(30.0), -3.0103, epsilon = 0.5);
        assert_abs_diff_eq!(bp.gain_db(120.0), -3.0103, epsilon = 0.5);
        let center = bp.gain_db(60.0);
        assert!((-1.0..=1e-9).contains(&center), "{center}");
        assert_eq!(bp.magnitude(0.0), 0.0);
    }

    #[test]
    fn bandpass_odd_prototype_and_high_order() {
        for order in [2, 6, 8, 10] {
            let bp = design_bandpass(8.0, 30.0, 250.0, order).unwrap();
            assert!(bp.is_stable(), "order {order}");
            assert_abs_diff_eq!(bp.gain_db(8.0), -3.0103, epsilon = 1e-6);
            assert_abs_diff_eq!(bp.gain_db(30.0), -3.0103, epsilon = 1e-6);
        }
    }

    #[test]
    fn bandpass_rolloff_is_monotone() {
        let bp = design_bandpass(30.0, 120.0, 1000.0, 4).unwrap();
        let mut prev = bp.magnitude(1.0);
        for f in 2..30 {
            let m = bp.magnitude(f as f64);
            assert!(m > prev);
            prev = m;
        }
        let mut prev = bp.magnitude(120.0);
        for f in 121..500 {
            let m = bp.magnitude(f as f64);
            assert!(m < prev);
            prev = m;
        }
    }

    #[test]
    fn nyquist_is_rejected() {
        let e = design_bandpass(0.5, 125.0, 250.0, 4).unwrap_err();
        assert!(e.to_string().contains("cutoff at/above Nyquist"));
        assert!(matches!(design_notch(125.0, 35.0, 250.0), Err(Error::NyquistCutoff { .. })));
        assert!(design_bandpass(1.0, 10.0, 250.0, 3).is_err());
        assert!(design_bandpass(10.0, 1.0, 250.0, 4).is_err());
    }

    #[test]
    fn notch_depth_and_dc() {
        let n = design_notch(60.0, 35.0, 1000.0).unwrap();
        assert!(n.is_stable());
        assert!(n.gain_db(60.0) <= -40.0);
        assert_abs_diff_eq!(n.magnitude(0.0), 1.0, epsilon = 1e-12);
        assert!(n.gain_db(30.0).abs() <= 0.5);
        assert!(design_notch(120.0, 35.0, 250.0).is_ok());
    }

    #[test]
    fn lowpass_cutoff() {
        for order in [1, 2, 5, 8] {
            let lp = design_lowpass(100.0, 1000.0, order).unwrap();
            assert!(lp.is_stable());
            assert_abs_diff_eq!(lp.gain_db(100.0), -3.0103, epsilon = 1e-6);
            assert_abs_diff_eq!(lp.magnitude(0.0), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn impulse_energy_converges() {
        for c in [
            design_bandpass(30.0, 120.0, 1000.0, 4).unwrap(),
            design_bandpass(0.5, 125.0, 1000.0, 4).unwrap(),
            design_notch(60.0, 35.0, 1000.0).unwrap(),
            design_lowpass(100.0, 1000.0, 8).unwrap(),
        ] {
            let n = (10.0 * c.fs) as usize;
            let mut h = vec![0.0; n];
            h[0] = 1.0;
            c.filter_forward(&mut h);
            let total: f64 = h.iter().map(|v| v * v).sum();
            let tail: f64 = h[n - c.fs as usize..].iter().map(|v| v * v).sum();
            assert!(total.is_finite() && tail < 1e-9, "{:?} tail {tail}", c.kind);
        }
    }

    #[test]
    fn filtfilt_rejects_short_signal() {
        let bp = design_bandpass(30.0, 120.0, 1000.0, 4).unwrap();
        assert!(matches!(bp.filtfilt(&[0.0; 12]), Err(Error::SignalTooShort { .. })));
        assert!(bp.filtfilt(&[0.0; 13]).is_ok());
    }

    #[test]
    fn constant_through_notch_is_unchanged() {
        let n = design_notch(60.0, 35.0, 1000.0).unwrap();
        let x = vec![3.25; 2000];
        let y = n.filtfilt(&x).unwrap();
        for v in y {
            assert_abs_diff_eq!(v, 3.25, epsilon = 1e-9);
        }
    }
}
