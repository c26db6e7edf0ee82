//! Dataset directory: `manifest.json` plus one headerless float32 file per
//! recording (row-major channels × samples).

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{DatasetManifest, Recording};
use crate::io::{read_f32, read_json, write_f32, write_json};
use crate::{Error, Result};

pub fn write_dataset<P: AsRef<Path>>(
    recordings: &[Recording],
    manifest: &DatasetManifest,
    root: P,
) -> Result<()> {
    let root = root.as_ref();
    if recordings.len() != manifest.files.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} recordings but {} manifest entries",
            recordings.len(),
            manifest.files.len()
        )));
    }
    fs::create_dir_all(root)?;
    for (rec, entry) in recordings.iter().zip(&manifest.files) {
        if rec.data.dim() != (entry.n_channels, entry.n_samples) || rec.subject != entry.subject {
            return Err(Error::ShapeMismatch(format!(
                "recording of subject {} is {:?}, manifest says subject {} with {}x{}",
                rec.subject,
                rec.data.dim(),
                entry.subject,
                entry.n_channels,
                entry.n_samples
            )));
        }
        write_f32(root.join(&entry.path), rec.data.iter().copied())?;
    }
    write_json(root.join("manifest.json"), manifest)
}

pub fn read_dataset<P: AsRef<Path>>(root: P) -> Result<(Vec<Recording>, DatasetManifest)> {
    let root = root.as_ref();
    let manifest: DatasetManifest = read_json(root.join("manifest.json"))?;
    let mut recordings = Vec::with_capacity(manifest.files.len());
    for entry in &manifest.files {
        if entry.n_channels != manifest.layout.n_channels() {
            return Err(Error::ShapeMismatch(format!(
                "{} declares {} channels, layout has {}",
                entry.path,
                entry.n_channels,
                manifest.layout.n_channels()
            )));
        }
        let values = read_f32(root.join(&entry.path), entry.n_channels * entry.n_samples)?;
        let data = Array2::from_shape_vec((entry.n_channels, entry.n_samples), values)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        recordings.push(Recording::new(
            entry.subject,
            data,
            manifest.fs,
            manifest.layout.clone(),
            entry.events.clone(),
        )?);
    }
    Ok((recordings, manifest))
}
