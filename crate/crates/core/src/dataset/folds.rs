use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{find_word, DatasetManifest, WordLabel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Within-subject folds, every class in training.
    SeenOnly,
    /// Within-subject folds with one word removed from training.
    UnseenWord,
    /// Leave-one-subject-out.
    CrossSubject,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::SeenOnly => "seen_only",
            Protocol::UnseenWord => "unseen_word",
            Protocol::CrossSubject => "cross_subject",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen_only" => Ok(Protocol::SeenOnly),
            "unseen_word" => Ok(Protocol::UnseenWord),
            "cross_subject" => Ok(Protocol::CrossSubject),
            other => Err(Error::InvalidConfig(format!("unknown protocol {other:?}"))),
        }
    }
}

/// A trial: the `index`-th event of `subject`'s recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialKey {
    pub subject: u32,
    pub index: usize,
    pub label: usize,
}

/// Indices into [`FoldSplit::trials`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_count: usize,
    pub seed: u64,
    pub protocol: Protocol,
    pub held_out_word: Option<WordLabel>,
    pub trials: Vec<TrialKey>,
    /// Fold of each entry of `trials`.
    pub assignment: Vec<usize>,
}

/// Stratified fold assignment.
///
/// Within every (subject, class) the trials are shuffled and dealt
/// round-robin; the dealing position carries over between subjects, so
/// per-class fold sizes differ by at most one both per subject and overall.
pub fn make_folds(
    manifest: &DatasetManifest,
    fold_count: usize,
    seed: u64,
    protocol: Protocol,
    held_out_word: Option<&str>,
) -> Result<FoldSplit> {
    if fold_count < 2 {
        return Err(Error::InvalidConfig(format!("fold_count {fold_count} < 2")));
    }
    let held_out_word = match (protocol, held_out_word) {
        (Protocol::UnseenWord, Some(w)) => Some(find_word(&manifest.classes, w)?.clone()),
        (Protocol::UnseenWord, None) => {
            return Err(Error::InvalidConfig(
                "unseen_word protocol needs a held-out word".into(),
            ))
        }
        (_, Some(w)) => {
            return Err(Error::InvalidConfig(format!(
                "held-out word {w:?} given for protocol {protocol}"
            )))
        }
        (_, None) => None,
    };

    let trials = manifest.trials();
    let mut groups: BTreeMap<(u32, usize), Vec<usize>> = BTreeMap::new();
    for (i, t) in trials.iter().enumerate() {
        groups.entry((t.subject, t.label)).or_default().push(i);
    }
    // Subject order follows the manifest, not subject id.
    let subject_rank: BTreeMap<u32, usize> =
        manifest.subjects.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut keys: Vec<(u32, usize)> = groups.keys().copied().collect();
    keys.sort_by_key(|(s, c)| (subject_rank.get(s).copied().unwrap_or(usize::MAX), *c));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offset: BTreeMap<usize, usize> = BTreeMap::new();
    let mut assignment = vec![0; trials.len()];
    for key in keys {
        let mut idx = groups[&key].clone();
        if idx.len() < fold_count {
            return Err(Error::InvalidConfig(format!(
                "subject {} has {} trials of class {}, fewer than {fold_count} folds",
                key.0,
                idx.len(),
                key.1
            )));
        }
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let off = offset.entry(key.1).or_insert(0);
        for (k, trial) in idx.into_iter().enumerate() {
            assignment[trial] = (*off + k) % fold_count;
        }
        *off += groups[&key].len();
    }

    Ok(FoldSplit {
        fold_count,
        seed,
        protocol,
        held_out_word,
        trials,
        assignment,
    })
}

impl FoldSplit {
    fn is_held_out_word(&self, trial: usize) -> bool {
        self.held_out_word
            .as_ref()
            .is_some_and(|w| w.id == self.trials[trial].label)
    }

    /// Within-subject partition: `test_fold` is tested, the next fold
    /// (cyclically) validates, the rest train. Held-out-word trials never
    /// enter training.
    pub fn within_subject(&self, subject: u32, test_fold: usize) -> Result<Partition> {
        if test_fold >= self.fold_count {
            return Err(Error::InvalidConfig(format!(
                "fold {test_fold} out of range 0..{}",
                self.fold_count
            )));
        }
        if !self.trials.iter().any(|t| t.subject == subject) {
            return Err(Error::InvalidConfig(format!("no trials for subject {subject}")));
        }
        let val_fold = (test_fold + 1) % self.fold_count;
        let mut p = Partition::default();
        for (i, t) in self.trials.iter().enumerate() {
            if t.subject != subject {
                continue;
            }
            let f = self.assignment[i];
            if f == test_fold {
                p.test.push(i);
            } else if f == val_fold {
                p.validation.push(i);
            } else if !self.is_held_out_word(i) {
                p.train.push(i);
            }
        }
        Ok(p)
    }

    /// Leave-one-subject-out partition: every trial of the other subjects
    /// trains, every trial of `subject` is tested.
    pub fn cross_subject(&self, subject: u32) -> Result<Partition> {
        if !self.trials.iter().any(|t| t.subject == subject) {
            return Err(Error::InvalidConfig(format!("no trials for subject {subject}")));
        }
        let mut p = Partition::default();
        for (i, t) in self.trials.iter().enumerate() {
            if t.subject == subject {
                p.test.push(i);
            } else if !self.is_held_out_word(i) {
                p.train.push(i);
            }
        }
        if p.train.is_empty() {
            return Err(Error::InvalidConfig(
                "cross-subject protocol needs at least two subjects".into(),
            ));
        }
        Ok(p)
    }

    /// Count of trials of `class` in `fold`, over all subjects.
    pub fn count(&self, class: usize, fold: usize) -> usize {
        self.trials
            .iter()
            .zip(&self.assignment)
            .filter(|(t, f)| t.label == class && **f == fold)
            .count()
    }
}
