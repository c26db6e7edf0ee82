use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::csp::CspConfig;
use crate::dataset::{Protocol, SynthConfig};
use crate::dsp::PreprocessConfig;
use crate::gan::GanConfig;
use crate::{Error, Result};

pub const DEFAULT_HELD_OUT_WORD: &str = "stop";

/// Everything needed to replay a run. Serialised verbatim into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset directory; when absent the data are synthesised from `synth`.
    pub dataset: Option<PathBuf>,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub csp: CspConfig,
    /// `gan.seed` is replaced per run by a seed derived from `seed`.
    pub gan: GanConfig,
    pub protocol: Protocol,
    /// Word withheld under the unseen_word protocol ("stop" when unset).
    pub held_out_word: Option<String>,
    /// Cross-subject protocol: evaluate only this held-out subject.
    pub held_out_subject: Option<u32>,
    /// Within-subject protocols: restrict to one subject and/or one fold.
    pub subject: Option<u32>,
    pub fold: Option<usize>,
    pub fold_count: usize,
    /// Master seed for folds, label shuffling and GAN runs.
    pub seed: u64,
    /// Permute training labels (chance-level control).
    pub shuffle_labels: bool,
    /// Leave artifact-flagged epochs out of CSP fitting and GAN training.
    pub exclude_flagged: bool,
    /// Label smoothing of the character targets.
    pub label_smoothing: Option<f64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synth: SynthConfig::default(),
            preprocess: PreprocessConfig::default(),
            csp: CspConfig::default(),
            gan: GanConfig::default(),
            protocol: Protocol::UnseenWord,
            held_out_word: None,
            held_out_subject: None,
            subject: None,
            fold: None,
            fold_count: 5,
            seed: 42,
            shuffle_labels: false,
            exclude_flagged: true,
            label_smoothing: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_none() {
            self.synth.validate()?;
        }
        self.gan.validate()?;
        if self.fold_count < 2 {
            return Err(Error::InvalidConfig(format!("fold_count {} < 2", self.fold_count)));
        }
        if let (Protocol::SeenOnly | Protocol::CrossSubject, Some(w)) = (self.protocol, &self.held_out_word) {
            return Err(Error::InvalidConfig(format!(
                "held_out_word {w:?} only applies to the unseen_word protocol"
            )));
        }
        if let Some(f) = self.fold {
            if f >= self.fold_count {
                return Err(Error::InvalidConfig(format!("fold {f} out of range 0..{}", self.fold_count)));
            }
        }
        Ok(())
    }

    /// Held-out word in effect for the configured protocol.
    pub fn effective_held_out_word(&self) -> Option<&str> {
        match self.protocol {
            Protocol::UnseenWord => Some(self.held_out_word.as_deref().unwrap_or(DEFAULT_HELD_OUT_WORD)),
            _ => None,
        }
    }

    /// GAN seed of the run testing `subject` on `fold`.
    pub fn run_seed(&self, subject: u32, fold: Option<usize>) -> u64 {
        let f = fold.map_or(0, |f| f as u64 + 1);
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((subject as u64) << 8 | f)
    }
}
