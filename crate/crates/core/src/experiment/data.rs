//! Loading or synthesising recordings and turning them into epochs, plus
//! the on-disk epoch store used between CLI stages.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::dataset::{
    default_classes, read_dataset, synth_subject, ChannelLayout, DatasetManifest, FileEntry, Recording, WordLabel,
};
use crate::dsp::{preprocess, Epoch, Skipped};
use crate::error::StageExt;
use crate::io::{read_f32, read_json, write_f32, write_json};
use crate::{Error, Result};

/// Preprocessed epochs of every subject, with the manifest of the raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub manifest: DatasetManifest,
    /// Subject-major, event order within a subject.
    pub epochs: Vec<Epoch>,
    pub skipped: Vec<Skipped>,
}

impl PreparedData {
    pub fn classes(&self) -> &[WordLabel] {
        &self.manifest.classes
    }

    pub fn layout(&self) -> &ChannelLayout {
        &self.manifest.layout
    }

    pub fn subject_epochs(&self, subject: u32) -> Vec<&Epoch> {
        self.epochs.iter().filter(|e| e.subject == subject).collect()
    }
}

fn file_entry(rec: &Recording) -> FileEntry {
    FileEntry {
        subject: rec.subject,
        path: format!("sub-{:02}.f32", rec.subject),
        n_channels: rec.data.nrows(),
        n_samples: rec.data.ncols(),
        events: rec.events.clone(),
    }
}

/// Synthesise or load the recordings named by `cfg` and preprocess them.
///
/// Synthetic subjects are generated and preprocessed one at a time so only
/// one raw recording is held in memory.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let mut epochs = Vec::new();
    let mut skipped = Vec::new();
    let manifest = match &cfg.dataset {
        Some(root) => {
            let (recordings, manifest) = read_dataset(root).stage("loading")?;
            for rec in &recordings {
                let set = preprocess(rec, &manifest.classes, &cfg.preprocess)?;
                epochs.extend(set.epochs);
                skipped.extend(set.skipped);
            }
            manifest
        }
        None => {
            let synth = &cfg.synth;
            synth.validate().stage("synthesis")?;
            let classes = default_classes();
            let mut files = Vec::with_capacity(synth.subjects);
            for s in 0..synth.subjects as u32 {
                let rec = synth_subject(s, synth).stage("synthesis")?;
                files.push(file_entry(&rec));
                let set = preprocess(&rec, &classes, &cfg.preprocess)?;
                epochs.extend(set.epochs);
                skipped.extend(set.skipped);
            }
            DatasetManifest {
                subjects: (0..synth.subjects as u32).collect(),
                trials_per_class: synth.trials_per_class,
                fs: synth.fs,
                seed: synth.seed,
                classes,
                layout: ChannelLayout::standard_64(),
                synth: Some(synth.clone()),
                files,
            }
        }
    };
    if epochs.is_empty() {
        return Err(Error::Empty("no trial could be epoched".into()).at("epoching"));
    }
    Ok(PreparedData {
        manifest,
        epochs,
        skipped,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EpochMeta {
    subject: u32,
    trial: usize,
    label: usize,
    onset: usize,
    flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EpochStoreHeader {
    manifest: DatasetManifest,
    fs: f64,
    n_channels: usize,
    baseline_samples: usize,
    window_samples: usize,
    epochs: Vec<EpochMeta>,
    skipped: Vec<Skipped>,
    blob: String,
}

/// Write `epochs.json` and `epochs.f32` (per epoch: baseline then window,
/// each channels × samples row-major).
pub fn write_epochs(data: &PreparedData, dir: &Path) -> Result<()> {
    let first = data.epochs.first().ok_or_else(|| Error::Empty("epoch store".into()))?;
    let (n_channels, window_samples) = first.data.dim();
    let baseline_samples = first.baseline.ncols();
    for e in &data.epochs {
        if e.data.dim() != (n_channels, window_samples) || e.baseline.dim() != (n_channels, baseline_samples) {
            return Err(Error::ShapeMismatch("epochs differ in shape".into()));
        }
    }
    std::fs::create_dir_all(dir)?;
    let header = EpochStoreHeader {
        manifest: data.manifest.clone(),
        fs: first.fs,
        n_channels,
        baseline_samples,
        window_samples,
        epochs: data
            .epochs
            .iter()
            .map(|e| EpochMeta {
                subject: e.subject,
                trial: e.trial,
                label: e.label.id,
                onset: e.onset,
                flagged: e.flagged,
            })
            .collect(),
        skipped: data.skipped.clone(),
        blob: "epochs.f32".into(),
    };
    let values = data.epochs.iter().flat_map(|e| {
        e.baseline
            .rows()
            .into_iter()
            .flat_map(|r| r.to_vec())
            .chain(e.data.rows().into_iter().flat_map(|r| r.to_vec()))
            .map(|v| v as f32)
            .collect::<Vec<_>>()
    });
    write_f32(dir.join(&header.blob), values)?;
    write_json(dir.join("epochs.json"), &header)
}

pub fn read_epochs(dir: &Path) -> Result<PreparedData> {
    let path = dir.join("epochs.json");
    let h: EpochStoreHeader = read_json(&path)?;
    let (c, b, w) = (h.n_channels, h.baseline_samples, h.window_samples);
    let per = c * (b + w);
    let values = read_f32(dir.join(&h.blob), per * h.epochs.len())?;
    let epochs = h
        .epochs
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let label = h.manifest.classes.get(m.label).cloned().ok_or_else(|| Error::CorruptHeader {
                path: path.clone(),
                reason: format!("label {} not in class table", m.label),
            })?;
            let chunk = &values[k * per..(k + 1) * per];
            let (base, win) = chunk.split_at(c * b);
            let baseline = Array2::from_shape_fn((c, b), |(i, j)| base[i * b + j] as f64);
            let data = Array2::from_shape_fn((c, w), |(i, j)| win[i * w + j] as f64);
            Ok(Epoch {
                subject: m.subject,
                trial: m.trial,
                label,
                onset: m.onset,
                fs: h.fs,
                data,
                baseline,
                flagged: m.flagged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedData {
        manifest: h.manifest,
        epochs,
        skipped: h.skipped,
    })
}
