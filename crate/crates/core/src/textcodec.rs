//! Character vocabulary, fixed-length character-distribution sequences,
//! greedy decoding and character error rate.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default sequence length.
pub const MAX_LEN: usize = 12;

/// 26 lowercase letters, space, then PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    chars: Vec<char>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut chars: Vec<char> = ('a'..='z').collect();
        chars.push(' ');
        Self { chars }
    }
}

impl Vocabulary {
    /// Number of symbols including PAD.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pad(&self) -> usize {
        self.chars.len()
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.chars.iter().position(|&x| x == c)
    }

    /// `None` for PAD or an out-of-range index.
    pub fn symbol(&self, index: usize) -> Option<char> {
        self.chars.get(index).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqKind {
    OneHotTarget,
    SoftOutput,
}

/// `len × vocabulary` matrix of per-position symbol distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct CharEmbeddingSeq {
    pub values: Array2<f64>,
    pub kind: SeqKind,
}

impl CharEmbeddingSeq {
    pub fn soft(values: Array2<f64>) -> Self {
        Self {
            values,
            kind: SeqKind::SoftOutput,
        }
    }

    /// Rows are non-negative and sum to one within `tol`.
    pub fn rows_are_distributions(&self, tol: f64) -> bool {
        self.values
            .outer_iter()
            .all(|r| r.iter().all(|v| *v >= 0.0) && (r.sum() - 1.0).abs() <= tol)
    }
}

/// One row per position: the character's symbol, PAD past the end.
///
/// With `smoothing = Some(eps)` the target symbol gets `1 − eps` and every
/// other symbol `eps / (|V| − 1)`.
pub fn encode_text(
    text: &str,
    vocab: &Vocabulary,
    max_len: usize,
    smoothing: Option<f64>,
) -> Result<CharEmbeddingSeq> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() > max_len {
        return Err(Error::InvalidText {
            text: text.into(),
            reason: format!("longer than {max_len} characters"),
        });
    }
    let mut idx = Vec::with_capacity(max_len);
    for c in &chars {
        idx.push(vocab.index_of(*c).ok_or_else(|| Error::InvalidText {
            text: text.into(),
            reason: format!("{c:?} is not in the vocabulary"),
        })?);
    }
    idx.resize(max_len, vocab.pad());
    let v = vocab.len();
    let (on, off) = match smoothing {
        None => (1.0, 0.0),
        Some(eps) if (0.0..1.0).contains(&eps) => (1.0 - eps, eps / (v - 1) as f64),
        Some(eps) => return Err(Error::InvalidConfig(format!("label smoothing {eps} outside [0, 1)"))),
    };
    let values = Array2::from_shape_fn((max_len, v), |(i, j)| if idx[i] == j { on } else { off });
    Ok(CharEmbeddingSeq {
        values,
        kind: SeqKind::OneHotTarget,
    })
}

/// Row-wise argmax (lowest index wins ties); the first PAD ends the text.
pub fn decode(values: ArrayView2<f64>, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for row in values.outer_iter() {
        let mut best = 0;
        for (j, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = j;
            }
        }
        match vocab.symbol(best) {
            Some(c) => out.push(c),
            None => break,
        }
    }
    out
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance over reference length. An empty reference scores 0 against
/// an empty hypothesis and 1 against anything else.
pub fn cer(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    if r.is_empty() {
        return if h.is_empty() { 0.0 } else { 1.0 };
    }
    edit_distance(&r, &h) as f64 / r.len() as f64
}

/// Mean ± population standard deviation, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CerSummary {
    pub mean: f64,
    pub std: f64,
    pub subjects: usize,
    pub trials: usize,
}

/// Aggregate `(subject, cer)` pairs: mean per subject first, then mean and
/// population standard deviation across subjects.
pub fn report_cer(pairs: &[(u32, f64)]) -> Result<CerSummary> {
    if pairs.is_empty() {
        return Err(Error::Empty("no CER values to report".into()));
    }
    let mut per_subject: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for &(s, c) in pairs {
        let e = per_subject.entry(s).or_insert((0.0, 0));
        e.0 += c;
        e.1 += 1;
    }
    let means: Vec<f64> = per_subject.values().map(|(sum, n)| 100.0 * sum / *n as f64).collect();
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / k;
    Ok(CerSummary {
        mean,
        std: var.sqrt(),
        subjects: means.len(),
        trials: pairs.len(),
    })
}
