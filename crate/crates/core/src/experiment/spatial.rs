//! Event-related band-power change per channel and word, and its scalp
//! rendering.

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelLayout, WordLabel};
use crate::dsp::{design_bandpass, Epoch};
use crate::{Error, Result};

pub const ANALYSIS_BAND_HZ: (f64, f64) = (30.0, 120.0);
const ANALYSIS_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialReport {
    pub channels: Vec<String>,
    pub positions: Vec<[f64; 2]>,
    pub words: Vec<String>,
    pub band_hz: (f64, f64),
    /// channels × words, dB; positive is a power increase after onset.
    pub values: Array2<f64>,
    pub trials: Vec<usize>,
    /// (channel, word) cells where some trial had zero baseline power;
    /// those trials are left out of the cell's average, and a cell with
    /// no usable trial holds 0.
    pub flagged: Vec<(usize, usize)>,
}

impl SpatialReport {
    /// Channel indices of `word`, strongest increase first.
    pub fn ranking(&self, word: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.channels.len()).collect();
        idx.sort_by(|a, b| self.values[[*b, word]].total_cmp(&self.values[[*a, word]]).then(a.cmp(b)));
        idx
    }
}

/// Per-trial 10·log10(post-onset power / baseline power) after a
/// 30–120 Hz zero-phase band-pass of the joined baseline and window,
/// averaged over the trials of each word.
pub fn spatial_analysis(epochs: &[&Epoch], layout: &ChannelLayout, classes: &[WordLabel]) -> Result<SpatialReport> {
    let first = epochs.first().ok_or_else(|| Error::Empty("no epochs for spatial analysis".into()))?;
    let n_ch = layout.n_channels();
    let fs = first.fs;
    for e in epochs {
        if e.n_channels() != n_ch || e.fs != fs {
            return Err(Error::ShapeMismatch(format!(
                "epoch of subject {} trial {} has {} channels at {} Hz, expected {n_ch} at {fs} Hz",
                e.subject,
                e.trial,
                e.n_channels(),
                e.fs
            )));
        }
    }
    for c in classes {
        if !epochs.iter().any(|e| e.label.id == c.id) {
            return Err(Error::Empty(format!("no epoch of word {:?}", c.text)));
        }
    }
    let bp = design_bandpass(ANALYSIS_BAND_HZ.0, ANALYSIS_BAND_HZ.1, fs, ANALYSIS_ORDER)?;

    // Per epoch and channel: Some(dB), or None for zero baseline power.
    let per_epoch: Vec<Vec<Option<f64>>> = epochs
        .par_iter()
        .map(|e| {
            let nb = e.baseline.ncols();
            let joined = concatenate(Axis(1), &[e.baseline.view(), e.data.view()])
                .map_err(|err| Error::ShapeMismatch(err.to_string()))?;
            joined
                .outer_iter()
                .map(|row| {
                    let y = bp.filtfilt(&row.to_vec())?;
                    let power = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
                    let base = power(&y[..nb]);
                    let post = power(&y[nb..]);
                    Ok((base > 0.0).then(|| 10.0 * (post / base).log10()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = Array2::zeros((n_ch, classes.len()));
    let mut trials = vec![0; classes.len()];
    let mut flagged = Vec::new();
    for (w, class) in classes.iter().enumerate() {
        let rows: Vec<&Vec<Option<f64>>> = epochs
            .iter()
            .zip(&per_epoch)
            .filter(|(e, _)| e.label.id == class.id)
            .map(|(_, r)| r)
            .collect();
        trials[w] = rows.len();
        for c in 0..n_ch {
            let usable: Vec<f64> = rows.iter().filter_map(|r| r[c]).collect();
            if usable.len() < rows.len() {
                flagged.push((c, w));
            }
            if !usable.is_empty() {
                values[[c, w]] = usable.iter().sum::<f64>() / usable.len() as f64;
            }
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spatial report".into()));
    }
    Ok(SpatialReport {
        channels: layout.names().to_vec(),
        positions: layout.positions().to_vec(),
        words: classes.iter().map(|c| c.text.clone()).collect(),
        band_hz: ANALYSIS_BAND_HZ,
        values,
        trials,
        flagged,
    })
}

/// Half-width of the colour scale: the largest magnitude in the report
/// rounded up to a whole dB, at least 1 dB. Shared by every panel.
pub fn color_limit(report: &SpatialReport) -> f64 {
    report.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).ceil().max(1.0)
}

fn color(v: f64, limit: f64) -> String {
    let t = (v / limit).clamp(-1.0, 1.0);
    let (end, t) = if t < 0.0 { ([49.0, 54.0, 149.0], -t) } else { ([165.0, 0.0, 38.0], t) };
    let c: Vec<u8> = end.iter().map(|e| (255.0 + (e - 255.0) * t).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// One head disk per word, electrodes coloured by their dB value.
pub fn topography_svg(report: &SpatialReport) -> String {
    const COLS: usize = 5;
    const PANEL: f64 = 170.0;
    const RADIUS: f64 = 70.0;
    let n = report.words.len();
    let rows = n.div_ceil(COLS);
    let width = COLS as f64 * PANEL;
    let height = rows as f64 * PANEL + 60.0;
    let limit = color_limit(report);
    let mut s = String::new();
    let w = |s: &mut String, text: String| s.push_str(&text);
    w(
        &mut s,
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        ),
    );
    w(&mut s, format!("<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>\n"));
    for (k, word) in report.words.iter().enumerate() {
        let cx = (k % COLS) as f64 * PANEL + PANEL / 2.0;
        let cy = (k / COLS) as f64 * PANEL + PANEL / 2.0 + 8.0;
        w(&mut s, format!("<g id=\"word-{k}\">\n"));
        w(
            &mut s,
            format!(
                "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
                cy - RADIUS - 8.0,
                xml_escape(word)
            ),
        );
        w(
            &mut s,
            format!(
                "<polygon points=\"{:.1},{:.1} {cx:.1},{:.1} {:.1},{:.1}\" fill=\"none\" stroke=\"#444444\"/>\n",
                cx - 8.0,
                cy - RADIUS + 1.0,
                cy - RADIUS - 7.0,
                cx + 8.0,
                cy - RADIUS + 1.0
            ),
        );
        w(
            &mut s,
            format!("<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"{RADIUS:.1}\" fill=\"none\" stroke=\"#444444\"/>\n"),
        );
        for (c, [x, y]) in report.positions.iter().enumerate() {
            let v = report.values[[c, k]];
            w(
                &mut s,
                format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4.5\" fill=\"{}\" stroke=\"#888888\" stroke-width=\"0.5\"><title>{} {:.3} dB</title></circle>\n",
                    cx + RADIUS * 0.95 * x,
                    cy - RADIUS * 0.95 * y,
                    color(v, limit),
                    xml_escape(&report.channels[c]),
                    v
                ),
            );
        }
        w(&mut s, "</g>\n".into());
    }
    // Colour bar.
    let bar_y = rows as f64 * PANEL + 20.0;
    let bar_x = width / 2.0 - 150.0;
    for i in 0..60 {
        let v = -limit + (i as f64 + 0.5) * 2.0 * limit / 60.0;
        w(
            &mut s,
            format!(
                "<rect x=\"{:.1}\" y=\"{bar_y:.1}\" width=\"5\" height=\"12\" fill=\"{}\"/>\n",
                bar_x + 5.0 * i as f64,
                color(v, limit)
            ),
        );
    }
    let label_y = bar_y + 26.0;
    w(&mut s, format!("<text x=\"{bar_x:.1}\" y=\"{label_y:.1}\" text-anchor=\"middle\">{:.0} dB</text>\n", -limit));
    w(&mut s, format!("<text x=\"{:.1}\" y=\"{label_y:.1}\" text-anchor=\"middle\">0</text>\n", bar_x + 150.0));
    w(&mut s, format!("<text x=\"{:.1}\" y=\"{label_y:.1}\" text-anchor=\"middle\">+{:.0} dB</text>\n", bar_x + 300.0, limit));
    w(
        &mut s,
        format!(
            "<text x=\"{:.1}\" y=\"{label_y:.1}\">{:.0}-{:.0} Hz</text>\n",
            bar_x + 330.0,
            report.band_hz.0,
            report.band_hz.1
        ),
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::default_classes;

    fn epoch(label: &WordLabel, n_ch: usize, f: impl Fn(usize, f64) -> f64) -> Epoch {
        let fs = 250.0;
        let signal = |offset: usize, len: usize| {
            Array2::from_shape_fn((n_ch, len), |(c, t)| f(c, (offset + t) as f64 / fs))
        };
        Epoch {
            subject: 0,
            trial: 0,
            label: label.clone(),
            onset: 125,
            fs,
            baseline: signal(0, 125),
            data: signal(125, 500),
            flagged: false,
        }
    }

    fn small_layout() -> ChannelLayout {
        ChannelLayout::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]],
        )
        .unwrap()
    }

    #[test]
    fn stationary_tone_is_zero_db() {
        let classes = vec![WordLabel::new(0, "tv")];
        let tone = |_c: usize, t: f64| (2.0 * std::f64::consts::PI * 60.0 * t).sin();
        let e = epoch(&classes[0], 3, tone);
        let r = spatial_analysis(&[&e], &small_layout(), &classes).unwrap();
        assert_eq!(r.values.dim(), (3, 1));
        assert!(r.values.iter().all(|v| v.abs() < 0.05), "{:?}", r.values);
    }

    #[test]
    fn burst_after_onset_is_positive_and_zero_baseline_flagged() {
        let classes = vec![WordLabel::new(0, "tv")];
        let e = epoch(&classes[0], 3, |c, t| {
            let tone = (2.0 * std::f64::consts::PI * 70.0 * t).sin();
            match c {
                0 => tone * if t >= 0.5 { 3.0 } else { 1.0 },
                1 => tone,
                _ => 0.0,
            }
        });
        let r = spatial_analysis(&[&e], &small_layout(), &classes).unwrap();
        assert!(r.values[[0, 0]] > 8.0);
        assert!(r.values[[0, 0]] > r.values[[1, 0]]);
        assert_eq!(r.flagged, vec![(2, 0)]);
        assert_eq!(r.values[[2, 0]], 0.0);
        assert_eq!(r.ranking(0)[0], 0);
    }

    #[test]
    fn missing_word_is_an_error() {
        let classes = default_classes();
        let e = epoch(&classes[0], 64, |_, t| t.sin());
        assert!(spatial_analysis(&[&e], &ChannelLayout::standard_64(), &classes).is_err());
    }

    #[test]
    fn svg_is_deterministic_and_scaled() {
        let classes = vec![WordLabel::new(0, "tv"), WordLabel::new(1, "yes")];
        let r = SpatialReport {
            channels: vec!["A".into(), "B".into()],
            positions: vec![[0.0, 0.0], [0.5, 0.5]],
            words: classes.iter().map(|c| c.text.clone()).collect(),
            band_hz: ANALYSIS_BAND_HZ,
            values: ndarray::array![[2.4, -0.3], [0.0, -1.0]],
            trials: vec![1, 1],
            flagged: vec![],
        };
        assert_eq!(color_limit(&r), 3.0);
        assert_eq!(color(0.0, 3.0), "#ffffff");
        assert_eq!(color(3.0, 3.0), "#a50026");
        assert_eq!(color(-9.0, 3.0), "#313695");
        let svg = topography_svg(&r);
        assert_eq!(svg, topography_svg(&r));
        assert_eq!(svg.matches("<g id=\"word-").count(), 2);
    }
}
