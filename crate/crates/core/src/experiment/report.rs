//! CER report assembly and the report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::PreparedData;
use super::run::{RunOutput, RunSummary};
use super::spatial::{topography_svg, SpatialReport};
use super::ExperimentConfig;
use crate::dataset::Protocol;
use crate::dsp::Skipped;
use crate::io::write_json;
use crate::textcodec::{report_cer, CerSummary};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Validation,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub subject: u32,
    pub trial: usize,
    pub fold: usize,
    pub split: Split,
    pub label: String,
    pub reference: String,
    pub hypothesis: String,
    pub cer: f64,
    /// The label was among the run's training targets.
    pub seen: bool,
    pub flagged: bool,
}

/// Mean CER per subject over test trials, percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRow {
    pub subject: u32,
    pub seen: Option<f64>,
    pub unseen: Option<f64>,
    pub seen_trials: usize,
    pub unseen_trials: usize,
}

/// Wall-clock figures. Kept out of `report.json` so that file is
/// reproducible byte for byte; written to `timing.json` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub prepare_s: f64,
    pub runs_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub protocol: Protocol,
    pub held_out_word: Option<String>,
    pub subjects: Vec<u32>,
    pub epochs: usize,
    pub skipped: Vec<Skipped>,
    pub runs: Vec<RunSummary>,
    pub trials: Vec<TrialResult>,
    /// Test trials of words present in training.
    pub seen: Option<CerSummary>,
    /// Test trials of words absent from training.
    pub unseen: Option<CerSummary>,
    /// Every validation trial.
    pub validation: Option<CerSummary>,
    pub per_subject: Vec<SubjectRow>,
    pub audit_passed: bool,
    #[serde(skip)]
    pub timing: Option<Timing>,
}

struct Aggregates {
    seen: Option<CerSummary>,
    unseen: Option<CerSummary>,
    validation: Option<CerSummary>,
    per_subject: Vec<SubjectRow>,
}

fn summary(trials: &[TrialResult], keep: impl Fn(&TrialResult) -> bool) -> Result<Option<CerSummary>> {
    let pairs: Vec<(u32, f64)> = trials.iter().filter(|t| keep(t)).map(|t| (t.subject, t.cer)).collect();
    if pairs.is_empty() {
        Ok(None)
    } else {
        report_cer(&pairs).map(Some)
    }
}

fn aggregate(trials: &[TrialResult]) -> Result<Aggregates> {
    let mut per: BTreeMap<u32, [(f64, usize); 2]> = BTreeMap::new();
    for t in trials.iter().filter(|t| t.split == Split::Test) {
        let e = per.entry(t.subject).or_default();
        let k = usize::from(!t.seen);
        e[k].0 += t.cer;
        e[k].1 += 1;
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| 100.0 * s / n as f64);
    Ok(Aggregates {
        seen: summary(trials, |t| t.split == Split::Test && t.seen)?,
        unseen: summary(trials, |t| t.split == Split::Test && !t.seen)?,
        validation: summary(trials, |t| t.split == Split::Validation)?,
        per_subject: per
            .into_iter()
            .map(|(subject, [s, u])| SubjectRow {
                subject,
                seen: mean(s),
                unseen: mean(u),
                seen_trials: s.1,
                unseen_trials: u.1,
            })
            .collect(),
    })
}

impl EvalReport {
    pub fn assemble(cfg: &ExperimentConfig, data: &PreparedData, outputs: &[RunOutput]) -> Result<Self> {
        let trials: Vec<TrialResult> = outputs.iter().flat_map(|o| o.trials.iter().cloned()).collect();
        let agg = aggregate(&trials)?;
        let runs: Vec<RunSummary> = outputs.iter().map(|o| o.summary.clone()).collect();
        Ok(Self {
            config: cfg.clone(),
            protocol: cfg.protocol,
            held_out_word: cfg.effective_held_out_word().map(str::to_string),
            subjects: data.manifest.subjects.clone(),
            epochs: data.epochs.len(),
            skipped: data.skipped.clone(),
            audit_passed: runs.iter().all(|r| r.audit.passed),
            runs,
            trials,
            seen: agg.seen,
            unseen: agg.unseen,
            validation: agg.validation,
            per_subject: agg.per_subject,
            timing: None,
        })
    }

    /// Recompute every aggregate from the per-trial rows and compare.
    pub fn check_consistency(&self) -> Result<()> {
        let agg = aggregate(&self.trials)?;
        let same = agg.seen == self.seen
            && agg.unseen == self.unseen
            && agg.validation == self.validation
            && agg.per_subject == self.per_subject
            && self.audit_passed == self.runs.iter().all(|r| r.audit.passed);
        if same {
            Ok(())
        } else {
            Err(Error::InvalidConfig("report aggregates disagree with its trial rows".into()))
        }
    }

    pub fn test_trials(&self) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter(|t| t.split == Split::Test)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per trial of the report.
pub fn cer_csv(report: &EvalReport) -> String {
    let mut out = String::from("subject,trial,fold,split,label,reference,hypothesis,cer,seen,flagged\n");
    for t in &report.trials {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            t.subject,
            t.trial,
            t.fold,
            t.split.as_str(),
            csv_field(&t.label),
            csv_field(&t.reference),
            csv_field(&t.hypothesis),
            t.cer,
            t.seen,
            t.flagged
        )
        .expect("writing to a String");
    }
    out
}

/// Channels × words with the electrode coordinates in front.
pub fn topography_csv(spatial: &SpatialReport) -> String {
    let mut out = String::from("channel,x,y");
    for w in &spatial.words {
        out.push(',');
        out.push_str(&csv_field(w));
    }
    out.push('\n');
    for (c, name) in spatial.channels.iter().enumerate() {
        let [x, y] = spatial.positions[c];
        write!(out, "{},{},{}", csv_field(name), x, y).expect("writing to a String");
        for w in 0..spatial.words.len() {
            write!(out, ",{}", spatial.values[[c, w]]).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Write `topography.csv` and `topography.svg`.
pub fn emit_spatial(spatial: &SpatialReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out_dir.display()))))?;
    let csv = out_dir.join("topography.csv");
    write_text(&csv, &topography_csv(spatial))?;
    let svg = out_dir.join("topography.svg");
    write_text(&svg, &topography_svg(spatial))?;
    Ok(vec![csv, svg])
}

/// Write `report.json`, `cer.csv` and, with a spatial report,
/// `topography.csv` and `topography.svg`; `timing.json` when the report
/// carries timing. Returns the paths written.
pub fn emit_reports(report: &EvalReport, spatial: Option<&SpatialReport>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out_dir.display()))))?;
    let mut written = Vec::new();
    let path = out_dir.join("report.json");
    write_json(&path, report)?;
    written.push(path);
    let path = out_dir.join("cer.csv");
    write_text(&path, &cer_csv(report))?;
    written.push(path);
    if let Some(s) = spatial {
        written.extend(emit_spatial(s, out_dir)?);
    }
    if let Some(t) = &report.timing {
        let path = out_dir.join("timing.json");
        write_json(&path, t)?;
        written.push(path);
    }
    Ok(written)
}
