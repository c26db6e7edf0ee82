use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use neurotext::csp::{read_bank, write_bank};
use neurotext::dataset::{synth_dataset, write_dataset, ChannelLayout, DatasetManifest, Protocol};
use neurotext::experiment::{
    emit_reports, emit_spatial, finish_run, fit_run_bank, fold_split, prepare, read_epochs, run_prepared_outputs,
    run_specs, spatial_analysis, train_run, write_epochs, EvalReport, ExperimentConfig, PreparedData, SpatialReport,
    Timing,
};
use neurotext::gan::{read_model, write_model, EpochStats};
use neurotext::io::{read_json, write_json};
use neurotext::{Error, Result};

#[derive(Parser)]
#[command(name = "neurotext", version, about = "EEG-to-text decoding pipeline")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset container.
    SynthData {
        /// Destination (default: <output-dir>/dataset).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Preprocess the dataset into an epoch store.
    Preprocess,
    /// Fit one spatial filter bank per run from the epoch store.
    FitCsp,
    /// Train one GAN per run from the epoch store and the filter banks.
    Train,
    /// Decode the evaluation trials and write report.json and cer.csv.
    Evaluate,
    /// Band-power change per channel and word; writes the topography files.
    AnalyzeSpatial,
    /// Every stage in memory; writes all report files.
    RunAll,
}

/// Settings that override the configuration file.
#[derive(Args, Default)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset directory (otherwise synthetic data).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// seen_only, unseen_word or cross_subject.
    #[arg(long, global = true)]
    protocol: Option<Protocol>,
    #[arg(long, global = true)]
    held_out_word: Option<String>,
    #[arg(long, global = true)]
    held_out_subject: Option<u32>,
    #[arg(long, global = true)]
    subject: Option<u32>,
    #[arg(long, global = true)]
    fold: Option<usize>,
    #[arg(long, global = true)]
    fold_count: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    shuffle_labels: Option<bool>,
    #[arg(long, global = true)]
    exclude_flagged: Option<bool>,
    #[arg(long, global = true)]
    label_smoothing: Option<f64>,
    #[arg(long, global = true)]
    subjects: Option<usize>,
    #[arg(long, global = true)]
    trials_per_class: Option<usize>,
    #[arg(long, global = true)]
    snr_db: Option<f64>,
    #[arg(long, global = true)]
    synth_seed: Option<u64>,
    #[arg(long, global = true)]
    patterns_per_class: Option<usize>,
    #[arg(long, global = true)]
    all_classes: Option<bool>,
    #[arg(long, global = true)]
    gan_epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    recon_weight: Option<f64>,
}

impl Overrides {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        if self.dataset.is_some() {
            c.dataset = self.dataset.clone();
        }
        set(&mut c.output_dir, &self.output_dir);
        set(&mut c.protocol, &self.protocol);
        if self.held_out_word.is_some() {
            c.held_out_word = self.held_out_word.clone();
        }
        if self.held_out_subject.is_some() {
            c.held_out_subject = self.held_out_subject;
        }
        if self.subject.is_some() {
            c.subject = self.subject;
        }
        if self.fold.is_some() {
            c.fold = self.fold;
        }
        set(&mut c.fold_count, &self.fold_count);
        set(&mut c.seed, &self.seed);
        set(&mut c.shuffle_labels, &self.shuffle_labels);
        set(&mut c.exclude_flagged, &self.exclude_flagged);
        if self.label_smoothing.is_some() {
            c.label_smoothing = self.label_smoothing;
        }
        set(&mut c.synth.subjects, &self.subjects);
        set(&mut c.synth.trials_per_class, &self.trials_per_class);
        set(&mut c.synth.snr_db, &self.snr_db);
        set(&mut c.synth.seed, &self.synth_seed);
        set(&mut c.csp.patterns_per_class, &self.patterns_per_class);
        set(&mut c.csp.all_classes, &self.all_classes);
        set(&mut c.gan.epochs, &self.gan_epochs);
        set(&mut c.gan.batch_size, &self.batch_size);
        set(&mut c.gan.adam.lr, &self.learning_rate);
        set(&mut c.gan.recon_weight, &self.recon_weight);
        c.validate()?;
        Ok(c)
    }
}

fn epochs_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("epochs")
}

fn load_epochs(cfg: &ExperimentConfig) -> Result<PreparedData> {
    read_epochs(&epochs_dir(cfg)).map_err(|e| e.at("loading epochs"))
}

fn spatial(cfg: &ExperimentConfig, data: &PreparedData) -> Result<SpatialReport> {
    let epochs: Vec<_> = data
        .epochs
        .iter()
        .filter(|e| !(cfg.exclude_flagged && e.flagged))
        .collect();
    spatial_analysis(&epochs, data.layout(), data.classes()).map_err(|e| e.at("spatial analysis"))
}

fn say(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn synth_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let recordings = synth_dataset(&cfg.synth).map_err(|e| e.at("synthesis"))?;
    let manifest = DatasetManifest::describe(
        &recordings,
        cfg.synth.trials_per_class,
        cfg.synth.fs,
        cfg.synth.seed,
        neurotext::dataset::default_classes(),
        ChannelLayout::standard_64(),
        Some(cfg.synth.clone()),
    );
    write_dataset(&recordings, &manifest, out)?;
    println!("wrote {} recordings to {}", recordings.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.overrides.config()?;
    let out = &cfg.output_dir;
    match cli.command {
        Command::SynthData { out: dest } => synth_data(&cfg, &dest.unwrap_or_else(|| out.join("dataset"))),
        Command::Preprocess => {
            let data = prepare(&cfg)?;
            write_epochs(&data, &epochs_dir(&cfg))?;
            println!("wrote {} epochs ({} skipped) to {}", data.epochs.len(), data.skipped.len(), epochs_dir(&cfg).display());
            Ok(())
        }
        Command::FitCsp => {
            let data = load_epochs(&cfg)?;
            let split = fold_split(&cfg, &data)?;
            for spec in run_specs(&cfg, &data.manifest.subjects)? {
                let bank = fit_run_bank(&cfg, &data, &split, spec)?;
                write_bank(&bank, &out.join("csp"), &spec.name())?;
                println!("fitted {} filters for run {}", bank.n_filters(), spec.name());
            }
            Ok(())
        }
        Command::Train => {
            let data = load_epochs(&cfg)?;
            let split = fold_split(&cfg, &data)?;
            for spec in run_specs(&cfg, &data.manifest.subjects)? {
                let bank = read_bank(&out.join("csp"), &spec.name()).map_err(|e| e.at("loading filters"))?;
                let (model, history) = train_run(&cfg, &data, &split, spec, &bank)?;
                let dir = out.join("models");
                write_model(&model, &dir, &spec.name())?;
                write_json(dir.join(format!("{}.history.json", spec.name())), &history)?;
                println!("trained run {} for {} epochs", spec.name(), history.len());
            }
            Ok(())
        }
        Command::Evaluate => {
            let data = load_epochs(&cfg)?;
            let split = fold_split(&cfg, &data)?;
            let mut outputs = Vec::new();
            for spec in run_specs(&cfg, &data.manifest.subjects)? {
                let bank = read_bank(&out.join("csp"), &spec.name()).map_err(|e| e.at("loading filters"))?;
                let dir = out.join("models");
                let model = read_model(&dir, &spec.name()).map_err(|e| e.at("loading model"))?;
                let history: Vec<EpochStats> = read_json(dir.join(format!("{}.history.json", spec.name())))?;
                outputs.push(finish_run(&cfg, &data, &split, spec, bank, model, history)?);
            }
            let report = EvalReport::assemble(&cfg, &data, &outputs)?;
            summarize(&report);
            say(&emit_reports(&report, None, out)?);
            Ok(())
        }
        Command::AnalyzeSpatial => {
            let data = if epochs_dir(&cfg).join("epochs.json").exists() {
                load_epochs(&cfg)?
            } else {
                prepare(&cfg)?
            };
            say(&emit_spatial(&spatial(&cfg, &data)?, out)?);
            Ok(())
        }
        Command::RunAll => {
            let start = Instant::now();
            let data = prepare(&cfg)?;
            let prepared = start.elapsed().as_secs_f64();
            let (mut report, _) = run_prepared_outputs(&cfg, &data)?;
            let runs_s = start.elapsed().as_secs_f64() - prepared;
            let sp = spatial(&cfg, &data)?;
            report.timing = Some(Timing {
                prepare_s: prepared,
                runs_s,
                total_s: start.elapsed().as_secs_f64(),
            });
            summarize(&report);
            say(&emit_reports(&report, Some(&sp), out)?);
            Ok(())
        }
    }
}

fn summarize(report: &EvalReport) {
    let line = |name: &str, s: &Option<neurotext::textcodec::CerSummary>| match s {
        Some(s) => println!("{name:<10} CER {:6.2} ± {:5.2} %  ({} trials, {} subjects)", s.mean, s.std, s.trials, s.subjects),
        None => println!("{name:<10} CER n/a"),
    };
    line("seen", &report.seen);
    line("unseen", &report.unseen);
    line("validation", &report.validation);
    println!("audit {}", if report.audit_passed { "passed" } else { "FAILED" });
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::MissingFile(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
