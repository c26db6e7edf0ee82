use std::sync::OnceLock;

use neurotext::dataset::Protocol;
use neurotext::experiment::{
    cer_csv, emit_reports, prepare, run_prepared, spatial_analysis, topography_csv, EvalReport, ExperimentConfig,
    PreparedData, Split, DEFAULT_HELD_OUT_WORD,
};

const SMALL: &str = r#"
[synth]
subjects = 2
trials_per_class = 5

[gan]
epochs = 4
g_hidden = [64]
d_hidden = [32]
"#;

fn small() -> &'static (ExperimentConfig, PreparedData) {
    static DATA: OnceLock<(ExperimentConfig, PreparedData)> = OnceLock::new();
    DATA.get_or_init(|| {
        let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
        let data = prepare(&cfg).unwrap();
        (cfg, data)
    })
}

fn report(protocol: Protocol) -> &'static EvalReport {
    static REPORTS: OnceLock<Vec<(Protocol, EvalReport)>> = OnceLock::new();
    let all = REPORTS.get_or_init(|| {
        let (base, data) = small();
        [Protocol::SeenOnly, Protocol::UnseenWord, Protocol::CrossSubject]
            .into_iter()
            .map(|protocol| {
                let cfg = ExperimentConfig { protocol, ..base.clone() };
                (protocol, run_prepared(&cfg, data).unwrap())
            })
            .collect()
    });
    &all.iter().find(|(p, _)| *p == protocol).unwrap().1
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn thread_count_does_not_change_results() {
    let (cfg, data) = small();
    let cfg = ExperimentConfig {
        subject: Some(1),
        ..cfg.clone()
    };
    let one = pool(1).install(|| run_prepared(&cfg, data)).unwrap();
    let four = pool(4).install(|| run_prepared(&cfg, data)).unwrap();
    assert_eq!(one, four);
}

#[test]
fn aggregates_match_trial_rows() {
    for p in [Protocol::SeenOnly, Protocol::UnseenWord, Protocol::CrossSubject] {
        report(p).check_consistency().unwrap();
    }
}

#[test]
fn every_trial_is_tested_once_within_subject() {
    let (_, data) = small();
    for p in [Protocol::SeenOnly, Protocol::UnseenWord] {
        let r = report(p);
        let mut keys: Vec<(u32, usize)> = r.test_trials().map(|t| (t.subject, t.trial)).collect();
        keys.sort();
        let before = keys.len();
        keys.dedup();
        assert_eq!(keys.len(), before, "{p}: a trial was tested twice");
        assert_eq!(keys.len(), data.epochs.len(), "{p}: test folds do not cover the data");
    }
}

#[test]
fn seen_flags_follow_training_classes() {
    let r = report(Protocol::UnseenWord);
    assert_eq!(r.held_out_word.as_deref(), Some(DEFAULT_HELD_OUT_WORD));
    let (_, data) = small();
    let id = |word: &str| data.classes().iter().find(|c| c.text == word).unwrap().id;
    let held = id(DEFAULT_HELD_OUT_WORD);
    assert!(r.runs.iter().all(|run| !run.train_classes.contains(&held)));
    // With few trials, flagged-epoch exclusion can also drop a word from
    // one fold's training set; "seen" follows the run's actual classes.
    for t in r.test_trials() {
        let run = r
            .runs
            .iter()
            .find(|x| x.spec.subject == t.subject && x.spec.fold == Some(t.fold))
            .unwrap();
        assert_eq!(t.seen, run.train_classes.contains(&id(&t.label)), "{t:?}");
        if t.label == DEFAULT_HELD_OUT_WORD {
            assert!(!t.seen);
        }
    }
    assert_eq!(report(Protocol::SeenOnly).held_out_word, None);
}

#[test]
fn cross_subject_runs_test_only_the_held_out_subject() {
    let (_, data) = small();
    let r = report(Protocol::CrossSubject);
    assert_eq!(r.runs.len(), data.manifest.subjects.len());
    for run in &r.runs {
        let s = run.spec.subject;
        let own = data.subject_epochs(s).len();
        let others = data.epochs.len() - own;
        assert!(run.train_trials <= others, "run on subject {s} trained on {} trials", run.train_trials);
    }
    for t in r.test_trials() {
        let run = r.runs.iter().find(|x| x.spec.subject == t.subject).unwrap();
        assert_eq!(run.spec.fold, None);
    }
    assert!(r.trials.iter().all(|t| t.split == Split::Test || t.split == Split::Validation));
}

#[test]
fn cer_csv_has_one_row_per_trial() {
    let r = report(Protocol::UnseenWord);
    let csv = cer_csv(r);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "subject,trial,fold,split,label,reference,hypothesis,cer,seen,flagged");
    assert_eq!(lines.count(), r.trials.len());
}

#[test]
fn topography_csv_carries_the_report_values() {
    let (_, data) = small();
    let epochs: Vec<_> = data.epochs.iter().collect();
    let sp = spatial_analysis(&epochs, data.layout(), data.classes()).unwrap();
    let csv = topography_csv(&sp);
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[3..], sp.words.iter().map(String::as_str).collect::<Vec<_>>()[..]);
    for (c, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], sp.channels[c]);
        for (w, cell) in cells[3..].iter().enumerate() {
            assert_eq!(cell.parse::<f64>().unwrap(), sp.values[[c, w]]);
        }
    }
}

#[test]
fn report_files_are_reproducible() {
    let (_, data) = small();
    let r = report(Protocol::SeenOnly);
    let epochs: Vec<_> = data.epochs.iter().collect();
    let sp = spatial_analysis(&epochs, data.layout(), data.classes()).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let wa = emit_reports(r, Some(&sp), a.path()).unwrap();
    let wb = emit_reports(r, Some(&sp), b.path()).unwrap();
    assert_eq!(wa.len(), 4);
    for (x, y) in wa.iter().zip(&wb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    let back: EvalReport = serde_json::from_slice(&std::fs::read(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(&back, r);
}

#[test]
fn cli_rejects_bad_arguments_with_status_two() {
    let bin = env!("CARGO_BIN_EXE_neurotext");
    let missing = std::process::Command::new(bin)
        .args(["--config", "/nonexistent/config.toml", "run-all"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    let conflict = std::process::Command::new(bin)
        .args(["--protocol", "seen_only", "--held-out-word", "stop", "run-all"])
        .output()
        .unwrap();
    assert_eq!(conflict.status.code(), Some(2));
}
