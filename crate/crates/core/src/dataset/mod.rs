//! Recordings, the on-disk dataset container, fold bookkeeping, and the
//! synthetic EEG generator that stands in for real recordings.

mod container;
mod folds;
mod layout;
mod synth;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use container::{read_dataset, write_dataset};
pub use folds::{make_folds, FoldSplit, Partition, Protocol, TrialKey};
pub use layout::ChannelLayout;
pub use synth::{
    class_mixing, subject_mixing, subject_rotation, synth_dataset, synth_subject, word_patterns, SynthConfig,
    WordPattern,
};

use crate::{Error, Result};

/// Label of the silent class. Its transcript is empty.
pub const REST: &str = "rest";

/// The thirteen spoken classes, in class-id order.
pub const DEFAULT_WORDS: [&str; 13] = [
    "ambulance",
    "light",
    "tv",
    "water",
    "pain",
    "hello",
    "toilet",
    "clock",
    "yes",
    "stop",
    "help me",
    "thank you",
    REST,
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WordLabel {
    pub id: usize,
    pub text: String,
}

impl WordLabel {
    pub fn new(id: usize, text: impl Into<String>) -> Self {
        Self { id, text: text.into() }
    }

    /// Text the decoder is expected to produce for this class.
    pub fn transcript(&self) -> &str {
        if self.is_rest() {
            ""
        } else {
            &self.text
        }
    }

    pub fn is_rest(&self) -> bool {
        self.text == REST
    }
}

pub fn default_classes() -> Vec<WordLabel> {
    DEFAULT_WORDS
        .iter()
        .enumerate()
        .map(|(i, w)| WordLabel::new(i, *w))
        .collect()
}

/// Look a class up by its text.
pub fn find_word<'a>(classes: &'a [WordLabel], text: &str) -> Result<&'a WordLabel> {
    classes
        .iter()
        .find(|c| c.text == text)
        .ok_or_else(|| Error::UnknownWord(text.to_string()))
}

/// Trial onset marker: sample index and class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub sample: usize,
    pub label: usize,
}

/// Continuous multi-channel recording of one subject, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject: u32,
    /// channels × samples
    pub data: Array2<f32>,
    pub fs: f64,
    pub layout: ChannelLayout,
    pub events: Vec<Event>,
}

impl Recording {
    pub fn new(
        subject: u32,
        data: Array2<f32>,
        fs: f64,
        layout: ChannelLayout,
        events: Vec<Event>,
    ) -> Result<Self> {
        let r = Self {
            subject,
            data,
            fs,
            layout,
            events,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.nrows() != self.layout.n_channels() {
            return Err(Error::ShapeMismatch(format!(
                "recording has {} rows, layout has {} channels",
                self.data.nrows(),
                self.layout.n_channels()
            )));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::InvalidConfig(format!("sampling rate {} Hz", self.fs)));
        }
        let n = self.data.ncols();
        for w in self.events.windows(2) {
            if w[1].sample <= w[0].sample {
                return Err(Error::InvalidConfig(
                    "event samples must be strictly increasing".into(),
                ));
            }
        }
        if let Some(last) = self.events.last() {
            if last.sample >= n {
                return Err(Error::InvalidConfig(format!(
                    "event at sample {} beyond recording length {n}",
                    last.sample
                )));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }
}

/// One recording file in the dataset container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub subject: u32,
    /// Relative to the dataset root.
    pub path: String,
    pub n_channels: usize,
    pub n_samples: usize,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub subjects: Vec<u32>,
    pub trials_per_class: usize,
    pub fs: f64,
    pub seed: u64,
    pub classes: Vec<WordLabel>,
    pub layout: ChannelLayout,
    /// Generator settings when the dataset is synthetic.
    pub synth: Option<SynthConfig>,
    pub files: Vec<FileEntry>,
}

impl DatasetManifest {
    /// Manifest describing `recordings`, in the order given.
    pub fn describe(
        recordings: &[Recording],
        trials_per_class: usize,
        fs: f64,
        seed: u64,
        classes: Vec<WordLabel>,
        layout: ChannelLayout,
        synth: Option<SynthConfig>,
    ) -> Self {
        let files = recordings
            .iter()
            .map(|r| FileEntry {
                subject: r.subject,
                path: format!("sub-{:02}.f32", r.subject),
                n_channels: r.data.nrows(),
                n_samples: r.data.ncols(),
                events: r.events.clone(),
            })
            .collect();
        Self {
            subjects: recordings.iter().map(|r| r.subject).collect(),
            trials_per_class,
            fs,
            seed,
            classes,
            layout,
            synth,
            files,
        }
    }

    /// Every trial in manifest order: subject-major, then event order.
    pub fn trials(&self) -> Vec<TrialKey> {
        self.files
            .iter()
            .flat_map(|f| {
                f.events.iter().enumerate().map(move |(i, e)| TrialKey {
                    subject: f.subject,
                    index: i,
                    label: e.label,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_class_table() {
        let c = default_classes();
        assert_eq!(c.len(), 13);
        assert_eq!(find_word(&c, "stop").unwrap().id, 9);
        assert_eq!(find_word(&c, "rest").unwrap().transcript(), "");
        assert_eq!(find_word(&c, "help me").unwrap().transcript(), "help me");
        assert!(find_word(&c, "banana").is_err());
    }

    #[test]
    fn recording_validation() {
        let layout = ChannelLayout::standard_64();
        let bad_rows = Recording::new(0, Array2::zeros((63, 10)), 250.0, layout.clone(), vec![]);
        assert!(matches!(bad_rows, Err(Error::ShapeMismatch(_))));
        let unordered = Recording::new(
            0,
            Array2::zeros((64, 10)),
            250.0,
            layout.clone(),
            vec![Event { sample: 5, label: 0 }, Event { sample: 5, label: 1 }],
        );
        assert!(unordered.is_err());
        let out_of_range = Recording::new(
            0,
            Array2::zeros((64, 10)),
            250.0,
            layout,
            vec![Event { sample: 10, label: 0 }],
        );
        assert!(out_of_range.is_err());
    }
}
