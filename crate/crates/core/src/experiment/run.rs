//! One protocol run: fold split, CSP on training trials only, GAN training,
//! decoding of the validation and test trials, and the leakage audit.

use std::collections::{BTreeSet, HashMap};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{prepare, PreparedData};
use super::report::{EvalReport, Split, TrialResult};
use super::ExperimentConfig;
use crate::csp::{class_covariances, embed_matrix, fit_multicsp, SpatialFilterBank};
use crate::dataset::{make_folds, FoldSplit, Partition, Protocol, WordLabel};
use crate::dsp::Epoch;
use crate::error::StageExt;
use crate::gan::{generate, train as train_gan, EpochStats, GanConfig, GanModel};
use crate::textcodec::{cer, decode, encode_text, Vocabulary, MAX_LEN};
use crate::{Error, Result};

/// Which subject (and, within subject, which test fold) a run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub subject: u32,
    /// `None` under the cross-subject protocol.
    pub fold: Option<usize>,
}

impl RunSpec {
    /// File stem for the run's artifacts.
    pub fn name(&self) -> String {
        match self.fold {
            Some(f) => format!("s{:02}-f{f}", self.subject),
            None => format!("s{:02}-loso", self.subject),
        }
    }
}

/// Evidence that no forbidden trial reached CSP fitting or GAN training.
///
/// Forbidden trials are recomputed from the fold assignment (not taken from
/// the partition): the test and validation folds, the held-out word, and
/// under cross-subject every trial of the held-out subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub csp_inputs: usize,
    pub gan_inputs: usize,
    pub forbidden: usize,
    /// Training inputs whose content hash matches a forbidden trial.
    pub csp_overlap: usize,
    pub gan_overlap: usize,
    /// SHA-256 over the sorted hashes of the CSP training epochs.
    pub csp_digest: String,
    /// SHA-256 over the sorted hashes of the GAN training embeddings.
    pub gan_digest: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub spec: RunSpec,
    pub seed: u64,
    pub train_trials: usize,
    /// Class ids present in the training targets.
    pub train_classes: Vec<usize>,
    pub n_filters: usize,
    pub final_epoch: Option<EpochStats>,
    pub audit: AuditRecord,
}

/// Everything a run produces; the model and bank are kept for the CLI.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trials: Vec<TrialResult>,
    pub bank: SpatialFilterBank,
    pub model: GanModel,
    pub history: Vec<EpochStats>,
}

pub fn hash_matrix(a: ArrayView2<f64>) -> String {
    let mut h = Sha256::new();
    let (r, c) = a.dim();
    h.update((r as u64).to_le_bytes());
    h.update((c as u64).to_le_bytes());
    for v in a.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize().as_slice())
}

fn digest(hashes: &[String]) -> String {
    let mut sorted = hashes.to_vec();
    sorted.sort();
    let mut h = Sha256::new();
    for s in sorted {
        h.update(s.as_bytes());
    }
    hex::encode(h.finalize().as_slice())
}

/// Runs implied by the protocol and the subject/fold filters of `cfg`.
pub fn run_specs(cfg: &ExperimentConfig, subjects: &[u32]) -> Result<Vec<RunSpec>> {
    let specs: Vec<RunSpec> = match cfg.protocol {
        Protocol::CrossSubject => {
            if subjects.len() < 2 {
                return Err(Error::InvalidConfig("cross-subject protocol needs at least two subjects".into()));
            }
            subjects
                .iter()
                .filter(|s| cfg.held_out_subject.is_none_or(|h| h == **s))
                .map(|&subject| RunSpec { subject, fold: None })
                .collect()
        }
        Protocol::SeenOnly | Protocol::UnseenWord => subjects
            .iter()
            .filter(|s| cfg.subject.is_none_or(|h| h == **s))
            .flat_map(|&subject| {
                (0..cfg.fold_count)
                    .filter(|f| cfg.fold.is_none_or(|h| h == *f))
                    .map(move |f| RunSpec { subject, fold: Some(f) })
            })
            .collect(),
    };
    if specs.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no run matches subject {:?} / held-out subject {:?} among subjects {subjects:?}",
            cfg.subject, cfg.held_out_subject
        )));
    }
    Ok(specs)
}

/// Trial indices (into `split.trials`) that must not influence training.
pub fn forbidden_trials(split: &FoldSplit, spec: RunSpec) -> BTreeSet<usize> {
    let held = split.held_out_word.as_ref().map(|w| w.id);
    split
        .trials
        .iter()
        .enumerate()
        .filter(|(i, t)| {
            let word = held == Some(t.label);
            match spec.fold {
                Some(f) => {
                    let a = split.assignment[*i];
                    t.subject == spec.subject && (word || a == f || a == (f + 1) % split.fold_count)
                }
                None => word || t.subject == spec.subject,
            }
        })
        .map(|(i, _)| i)
        .collect()
}

struct Lookup<'a> {
    epochs: HashMap<(u32, usize), &'a Epoch>,
}

impl<'a> Lookup<'a> {
    fn new(data: &'a PreparedData) -> Self {
        Self {
            epochs: data.epochs.iter().map(|e| ((e.subject, e.trial), e)).collect(),
        }
    }

    /// Epochs of the given trial indices, skipping trials that were not
    /// epoched.
    fn get(&self, split: &FoldSplit, idx: &[usize]) -> Vec<(usize, &'a Epoch)> {
        idx.iter()
            .filter_map(|&i| {
                let t = split.trials[i];
                self.epochs.get(&(t.subject, t.index)).map(|e| (i, *e))
            })
            .collect()
    }
}

fn partition(split: &FoldSplit, spec: RunSpec) -> Result<Partition> {
    match spec.fold {
        Some(f) => split.within_subject(spec.subject, f),
        None => split.cross_subject(spec.subject),
    }
}

/// Under `csp.all_classes`, held-out-word trials outside the evaluation
/// folds are added to CSP fitting. This leaks the held-out word into the
/// filters and is caught by the audit.
fn leaky_extra(split: &FoldSplit, spec: RunSpec) -> Vec<usize> {
    let Some(w) = &split.held_out_word else { return Vec::new() };
    split
        .trials
        .iter()
        .enumerate()
        .filter(|(i, t)| {
            t.label == w.id
                && match spec.fold {
                    Some(f) => {
                        let a = split.assignment[*i];
                        t.subject == spec.subject && a != f && a != (f + 1) % split.fold_count
                    }
                    None => t.subject != spec.subject,
                }
        })
        .map(|(i, _)| i)
        .collect()
}

fn shuffled(labels: &[usize], seed: u64) -> Vec<usize> {
    let mut out = labels.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    for i in (1..out.len()).rev() {
        let j = rng.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

fn embed_rows(epochs: &[&Epoch], bank: &SpatialFilterBank) -> Result<Array2<f64>> {
    let z_dim = bank.z_dim();
    let mut z = Array2::zeros((epochs.len(), z_dim));
    for (k, e) in epochs.iter().enumerate() {
        let m = embed_matrix(e.data.view(), bank)?;
        z.row_mut(k).assign(&ArrayView1::from(m.as_slice().expect("standard layout")));
    }
    Ok(z)
}

/// Training inputs of one run.
struct TrainingSet<'a> {
    epochs: Vec<&'a Epoch>,
    /// Targets of `epochs`, shuffled when configured.
    labels: Vec<usize>,
    /// Epochs and labels passed to CSP fitting.
    csp: Vec<(&'a Epoch, usize)>,
    part: Partition,
}

fn training_set<'a>(
    cfg: &ExperimentConfig,
    lookup: &Lookup<'a>,
    split: &FoldSplit,
    spec: RunSpec,
) -> Result<TrainingSet<'a>> {
    let part = partition(split, spec).stage("fold split")?;
    let epochs: Vec<&Epoch> = lookup
        .get(split, &part.train)
        .into_iter()
        .map(|(_, e)| e)
        .filter(|e| !(cfg.exclude_flagged && e.flagged))
        .collect();
    if epochs.is_empty() {
        return Err(Error::Empty("no training epochs".into()).at("fold split"));
    }
    let true_labels: Vec<usize> = epochs.iter().map(|e| e.label.id).collect();
    let labels = if cfg.shuffle_labels {
        shuffled(&true_labels, cfg.run_seed(spec.subject, spec.fold))
    } else {
        true_labels
    };
    let mut csp: Vec<(&Epoch, usize)> = epochs.iter().copied().zip(labels.iter().copied()).collect();
    if cfg.csp.all_classes {
        for (_, e) in lookup.get(split, &leaky_extra(split, spec)) {
            if !(cfg.exclude_flagged && e.flagged) {
                csp.push((e, e.label.id));
            }
        }
    }
    Ok(TrainingSet {
        epochs,
        labels,
        csp,
        part,
    })
}

fn fit_training_bank(cfg: &ExperimentConfig, ts: &TrainingSet) -> Result<SpatialFilterBank> {
    let trials: Vec<(ArrayView2<f64>, usize)> = ts.csp.iter().map(|(e, l)| (e.data.view(), *l)).collect();
    class_covariances(&trials, cfg.csp.shrinkage)
        .and_then(|covs| fit_multicsp(&covs, cfg.csp.patterns_per_class, cfg.csp.window_count))
        .stage("csp fitting")
}

/// Flattened character targets of `labels`.
fn targets(cfg: &ExperimentConfig, classes: &[WordLabel], labels: &[usize]) -> Result<Array2<f64>> {
    let vocab = Vocabulary::default();
    let mut x = Array2::zeros((labels.len(), MAX_LEN * vocab.len()));
    for (k, l) in labels.iter().enumerate() {
        let t = encode_text(classes[*l].transcript(), &vocab, MAX_LEN, cfg.label_smoothing).stage("target encoding")?;
        x.row_mut(k)
            .assign(&ArrayView1::from(t.values.as_slice().expect("standard layout")));
    }
    Ok(x)
}

/// Fit the run's spatial filter bank on its training trials.
pub fn fit_run_bank(cfg: &ExperimentConfig, data: &PreparedData, split: &FoldSplit, spec: RunSpec) -> Result<SpatialFilterBank> {
    let lookup = Lookup::new(data);
    let ts = training_set(cfg, &lookup, split, spec)?;
    fit_training_bank(cfg, &ts)
}

/// Train the run's GAN on the training embeddings under `bank`.
pub fn train_run(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    split: &FoldSplit,
    spec: RunSpec,
    bank: &SpatialFilterBank,
) -> Result<(GanModel, Vec<EpochStats>)> {
    let lookup = Lookup::new(data);
    let ts = training_set(cfg, &lookup, split, spec)?;
    let z = embed_rows(&ts.epochs, bank).stage("embedding")?;
    let x = targets(cfg, data.classes(), &ts.labels)?;
    let vocab = Vocabulary::default();
    let gan_cfg = GanConfig {
        seed: cfg.run_seed(spec.subject, spec.fold),
        seq_len: MAX_LEN,
        vocab_size: vocab.len(),
        z_dim: 0,
        ..cfg.gan.clone()
    };
    train_gan(&gan_cfg, &z, &x).stage("gan training")
}

fn audit(
    lookup: &Lookup,
    split: &FoldSplit,
    spec: RunSpec,
    ts: &TrainingSet,
    bank: &SpatialFilterBank,
) -> Result<AuditRecord> {
    let forbidden_idx: Vec<usize> = forbidden_trials(split, spec).into_iter().collect();
    let forbidden: Vec<&Epoch> = lookup.get(split, &forbidden_idx).into_iter().map(|(_, e)| e).collect();
    let row_hash = |r: ArrayView1<f64>| hash_matrix(r.insert_axis(Axis(0)));
    let forbidden_data: BTreeSet<String> = forbidden.iter().map(|e| hash_matrix(e.data.view())).collect();
    let forbidden_emb: BTreeSet<String> = embed_rows(&forbidden, bank)
        .stage("embedding")?
        .outer_iter()
        .map(row_hash)
        .collect();
    let csp_hashes: Vec<String> = ts.csp.iter().map(|(e, _)| hash_matrix(e.data.view())).collect();
    let gan_hashes: Vec<String> = embed_rows(&ts.epochs, bank)
        .stage("embedding")?
        .outer_iter()
        .map(row_hash)
        .collect();
    let csp_overlap = csp_hashes.iter().filter(|h| forbidden_data.contains(*h)).count();
    let gan_overlap = gan_hashes.iter().filter(|h| forbidden_emb.contains(*h)).count();
    Ok(AuditRecord {
        csp_inputs: csp_hashes.len(),
        gan_inputs: gan_hashes.len(),
        forbidden: forbidden.len(),
        csp_overlap,
        gan_overlap,
        csp_digest: digest(&csp_hashes),
        gan_digest: digest(&gan_hashes),
        passed: csp_overlap == 0 && gan_overlap == 0,
    })
}

/// Audit the run's inputs, then decode its validation and test trials.
pub fn finish_run(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    split: &FoldSplit,
    spec: RunSpec,
    bank: SpatialFilterBank,
    model: GanModel,
    history: Vec<EpochStats>,
) -> Result<RunOutput> {
    let lookup = Lookup::new(data);
    let ts = training_set(cfg, &lookup, split, spec)?;
    let audit = audit(&lookup, split, spec, &ts, &bank)?;
    let vocab = Vocabulary::default();
    let train_classes: BTreeSet<usize> = ts.labels.iter().copied().collect();
    let mut results = Vec::new();
    for (split_kind, idx) in [(Split::Validation, &ts.part.validation), (Split::Test, &ts.part.test)] {
        let eval = lookup.get(split, idx);
        if eval.is_empty() {
            continue;
        }
        let epochs: Vec<&Epoch> = eval.iter().map(|(_, e)| *e).collect();
        let ze = embed_rows(&epochs, &bank).stage("embedding")?;
        let y = generate(&model, &ze).stage("generation")?;
        for ((i, e), row) in eval.iter().zip(y.outer_iter()) {
            let probs = row
                .to_shape((MAX_LEN, vocab.len()))
                .map_err(|err| Error::ShapeMismatch(err.to_string()))
                .stage("decoding")?;
            let hypothesis = decode(probs.view(), &vocab);
            let reference = e.label.transcript().to_string();
            results.push(TrialResult {
                subject: e.subject,
                trial: e.trial,
                fold: split.assignment[*i],
                split: split_kind,
                label: e.label.text.clone(),
                cer: cer(&reference, &hypothesis),
                reference,
                hypothesis,
                seen: train_classes.contains(&e.label.id),
                flagged: e.flagged,
            });
        }
    }
    Ok(RunOutput {
        summary: RunSummary {
            spec,
            seed: cfg.run_seed(spec.subject, spec.fold),
            train_trials: ts.epochs.len(),
            train_classes: train_classes.into_iter().collect(),
            n_filters: bank.n_filters(),
            final_epoch: history.last().cloned(),
            audit,
        },
        trials: results,
        bank,
        model,
        history,
    })
}

/// Fit, train, audit and decode one run.
pub fn execute_run(cfg: &ExperimentConfig, data: &PreparedData, split: &FoldSplit, spec: RunSpec) -> Result<RunOutput> {
    let bank = fit_run_bank(cfg, data, split, spec)?;
    let (model, history) = train_run(cfg, data, split, spec, &bank)?;
    finish_run(cfg, data, split, spec, bank, model, history)
}

pub fn fold_split(cfg: &ExperimentConfig, data: &PreparedData) -> Result<FoldSplit> {
    make_folds(
        &data.manifest,
        cfg.fold_count,
        cfg.seed,
        cfg.protocol,
        cfg.effective_held_out_word(),
    )
    .stage("fold split")
}

/// All runs of the configured protocol on already prepared data, then the
/// report. Runs execute on the rayon pool; results are collected in run
/// order, so the report does not depend on scheduling.
pub fn run_prepared_outputs(cfg: &ExperimentConfig, data: &PreparedData) -> Result<(EvalReport, Vec<RunOutput>)> {
    cfg.validate()?;
    let split = fold_split(cfg, data)?;
    let specs = run_specs(cfg, &data.manifest.subjects)?;
    let outputs = specs
        .par_iter()
        .map(|s| execute_run(cfg, data, &split, *s))
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::assemble(cfg, data, &outputs)?;
    Ok((report, outputs))
}

pub fn run_prepared(cfg: &ExperimentConfig, data: &PreparedData) -> Result<EvalReport> {
    run_prepared_outputs(cfg, data).map(|(r, _)| r)
}

/// Synthesise or load, preprocess, and run every fold of the protocol.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    run_prepared(cfg, &data)
}
