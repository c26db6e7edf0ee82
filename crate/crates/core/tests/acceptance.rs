//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use neurotext::csp::fit_csp_pair;
use neurotext::dataset::{subject_mixing, Protocol};
use neurotext::dsp::{common_average_reference, decimate_rows, design_bandpass, design_notch};
use neurotext::experiment::{prepare, run_prepared, spatial_analysis, EvalReport, ExperimentConfig, PreparedData};
use neurotext::gan::{
    cross_entropy_tape, loss_d, loss_d_tape, loss_g, loss_g_tape, Activation, DenseNet, Tape, PROB_CLAMP,
};
use neurotext::textcodec::{cer, edit_distance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

// Default synthetic dataset, prepared once and shared by criteria 1, 2 and 9.

struct Default {
    cfg: ExperimentConfig,
    data: PreparedData,
    prepare_s: f64,
}

fn default_data() -> &'static Default {
    static DATA: OnceLock<Default> = OnceLock::new();
    DATA.get_or_init(|| {
        let cfg = ExperimentConfig::default();
        let t = Instant::now();
        let data = single_core(|| prepare(&cfg)).expect("default dataset prepares");
        Default {
            prepare_s: t.elapsed().as_secs_f64(),
            cfg,
            data,
        }
    })
}

fn default_report() -> &'static (EvalReport, f64) {
    static REPORT: OnceLock<(EvalReport, f64)> = OnceLock::new();
    REPORT.get_or_init(|| {
        let d = default_data();
        let t = Instant::now();
        let r = single_core(|| run_prepared(&d.cfg, &d.data)).expect("default run completes");
        (r, t.elapsed().as_secs_f64())
    })
}

fn single_core<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool").install(f)
}

fn criterion_1() -> Outcome {
    let d = default_data();
    let (report, run_s) = default_report();
    let elapsed = d.prepare_s + run_s;
    let seen = report.seen.as_ref().ok_or("no seen-word trials")?.mean;
    let shuffled_cfg = ExperimentConfig {
        shuffle_labels: true,
        ..d.cfg.clone()
    };
    let shuffled = single_core(|| run_prepared(&shuffled_cfg, &d.data)).map_err(|e| e.to_string())?;
    let chance = shuffled.seen.as_ref().ok_or("no seen-word trials in shuffled run")?.mean;
    check(
        elapsed < 600.0 && seen <= 35.0 && chance >= 80.0,
        format!("{elapsed:.0} s on one core, seen CER {seen:.1}%, shuffled-label seen CER {chance:.1}%"),
    )
}

fn criterion_2() -> Outcome {
    let (report, _) = default_report();
    let seen = report.seen.as_ref().ok_or("no seen-word trials")?.mean;
    let unseen = report.unseen.as_ref().ok_or("no unseen-word trials")?.mean;
    let per_subject_ok = report
        .per_subject
        .iter()
        .all(|r| matches!((r.seen, r.unseen), (Some(s), Some(u)) if u >= s));
    check(
        unseen >= seen && per_subject_ok,
        format!(
            "unseen {unseen:.1}% vs seen {seen:.1}%; per subject {:?}",
            report.per_subject.iter().map(|r| (r.subject, r.seen, r.unseen)).collect::<Vec<_>>()
        ),
    )
}

// Criterion 3: tape gradients against central differences.

struct Nets {
    g: DenseNet,
    d: DenseNet,
    z: Array2<f64>,
    x: Array2<f64>,
    groups: usize,
}

#[derive(Clone, Copy, Debug)]
enum Objective {
    Discriminator,
    Generator,
    GeneratorWithReconstruction,
}

fn plain_objective(n: &Nets, obj: Objective) -> f64 {
    let fake = n.g.forward(&n.z).unwrap();
    let d_fake = n.d.forward(&fake).unwrap().column(0).to_vec();
    match obj {
        Objective::Discriminator => {
            let d_real = n.d.forward(&n.x).unwrap().column(0).to_vec();
            loss_d(&d_real, &d_fake).unwrap()
        }
        Objective::Generator => loss_g(&d_fake).unwrap(),
        Objective::GeneratorWithReconstruction => {
            let ce: f64 = n
                .x
                .iter()
                .zip(fake.iter())
                .map(|(t, o)| -t * o.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln())
                .sum::<f64>()
                / (fake.nrows() * n.groups) as f64;
            -loss_g(&d_fake).unwrap() + 0.7 * ce
        }
    }
}

fn tape_gradients(n: &Nets, obj: Objective) -> Vec<Array2<f64>> {
    let mut tape = Tape::new();
    let gv = n.g.register(&mut tape);
    let dv = n.d.register(&mut tape);
    let z = tape.leaf(n.z.clone());
    let fake = n.g.forward_tape(&mut tape, &gv, z).unwrap();
    let df = n.d.forward_tape(&mut tape, &dv, fake).unwrap();
    let out = match obj {
        Objective::Discriminator => {
            let x = tape.leaf(n.x.clone());
            let dr = n.d.forward_tape(&mut tape, &dv, x).unwrap();
            loss_d_tape(&mut tape, dr, df)
        }
        Objective::Generator => loss_g_tape(&mut tape, df),
        Objective::GeneratorWithReconstruction => {
            let lg = loss_g_tape(&mut tape, df);
            let neg = tape.scale(lg, -1.0);
            let t = tape.leaf(n.x.clone());
            let ce = cross_entropy_tape(&mut tape, t, fake, n.groups);
            let w = tape.scale(ce, 0.7);
            tape.add(neg, w)
        }
    };
    let grads = tape.backward(out).unwrap();
    let shapes: Vec<(usize, usize)> = n.g.params().iter().chain(n.d.params().iter()).map(|p| p.dim()).collect();
    gv.0.iter()
        .chain(dv.0.iter())
        .flat_map(|&(w, b)| [w, b])
        .zip(shapes)
        .map(|(v, s)| grads.get(v, s))
        .collect()
}

fn param_mut(n: &mut Nets, k: usize) -> &mut Array2<f64> {
    let g_count = n.g.params().len();
    if k < g_count {
        n.g.params_mut().into_iter().nth(k).unwrap()
    } else {
        n.d.params_mut().into_iter().nth(k - g_count).unwrap()
    }
}

fn random_nets(seed: u64) -> Nets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = rng.random_range(2..6);
    let z_dim = rng.random_range(2..6);
    let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(3..7)).collect();
    let (head, out, groups) = match seed % 3 {
        0 => (Activation::Softmax { width: 3 }, 6, 2),
        1 => (Activation::Sigmoid, 4, 1),
        _ => (Activation::Identity, 3, 1),
    };
    let g_dims: Vec<usize> = [z_dim].into_iter().chain(hidden.iter().copied()).chain([out]).collect();
    let d_dims: Vec<usize> = [out, rng.random_range(3..7), 1].into();
    let mut g = DenseNet::new(&g_dims, head, &mut rng).unwrap();
    let d = DenseNet::new(&d_dims, Activation::Sigmoid, &mut rng).unwrap();
    // Non-zero biases so every bias path is exercised.
    for layer in &mut g.layers {
        layer.bias.mapv_inplace(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            0.1 * v
        });
    }
    let z = normal(batch, z_dim, &mut rng);
    let x = match head {
        Activation::Softmax { width } => Array2::from_shape_fn((batch, out), |(i, j)| {
            if j % width == (i + j / width) % width {
                1.0
            } else {
                0.0
            }
        }),
        _ => Array2::from_shape_fn((batch, out), |_| rng.random_range(0.05..0.95)),
    };
    Nets { g, d, z, x, groups }
}

fn criterion_3() -> Outcome {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let nets = 24;
    let mut heads = std::collections::BTreeSet::new();
    for seed in 0..nets {
        let mut n = random_nets(seed);
        heads.insert(format!("{:?}", n.g.layers.last().unwrap().activation));
        for obj in [Objective::Discriminator, Objective::Generator, Objective::GeneratorWithReconstruction] {
            if matches!(obj, Objective::GeneratorWithReconstruction) && n.groups == 1 && seed % 3 == 2 {
                continue; // cross-entropy needs probabilities
            }
            let analytic = tape_gradients(&n, obj);
            for (k, a) in analytic.iter().enumerate() {
                let dim = a.dim();
                for i in 0..dim.0 {
                    for j in 0..dim.1 {
                        let orig = param_mut(&mut n, k)[[i, j]];
                        param_mut(&mut n, k)[[i, j]] = orig + h;
                        let up = plain_objective(&n, obj);
                        param_mut(&mut n, k)[[i, j]] = orig - h;
                        let down = plain_objective(&n, obj);
                        param_mut(&mut n, k)[[i, j]] = orig;
                        let numeric = (up - down) / (2.0 * h);
                        let scale = a[[i, j]].abs().max(numeric.abs()).max(1e-6);
                        let err = (a[[i, j]] - numeric).abs() / scale;
                        worst = worst.max(err);
                        checked += 1;
                    }
                }
            }
        }
    }
    check(
        worst < 1e-4 && heads.len() == 3,
        format!("{nets} networks, {checked} partial derivatives, heads {heads:?}, max relative error {worst:.2e}"),
    )
}

// Criterion 4: CSP against whitening + symmetric eigendecomposition.

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let x = normal(d, 2 * d, rng);
    let mut c = x.dot(&x.t()) / (2 * d) as f64;
    for i in 0..d {
        c[[i, i]] += 0.1;
    }
    c
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Rows are filters; returned with their eigenvalues.
fn whitening_oracle(a: &Array2<f64>, b: &Array2<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (a, b) = (to_na(a), to_na(b));
    let s = SymmetricEigen::new(&a + &b);
    let inv_sqrt = DMatrix::from_diagonal(&s.eigenvalues.map(|v| 1.0 / v.sqrt()));
    let p = inv_sqrt * s.eigenvectors.transpose();
    let m = &p * &a * p.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(m);
    (e.eigenvectors.transpose() * p, e.eigenvalues.iter().copied().collect())
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_filter: f64 = 0.0;
    let mut worst_value: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..=8);
        let a = random_spd(d, &mut rng);
        let b = random_spd(d, &mut rng);
        let pair = fit_csp_pair(&a, &b, d / 2).map_err(|e| e.to_string())?;
        let (oracle, values) = whitening_oracle(&a, &b);
        for (k, w) in pair.filters.outer_iter().enumerate() {
            let lambda = pair.eigenvalues[k];
            let j = (0..d)
                .min_by(|p, q| (values[*p] - lambda).abs().total_cmp(&(values[*q] - lambda).abs()))
                .unwrap();
            worst_value = worst_value.max((values[j] - lambda).abs());
            let v: Vec<f64> = oracle.row(j).iter().copied().collect();
            let plus = w.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let minus = w.iter().zip(&v).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
            worst_filter = worst_filter.max(plus.min(minus));
        }
        let w = &pair.filters;
        let da = w.dot(&a).dot(&w.t());
        let ds = w.dot(&(&a + &b)).dot(&w.t());
        for i in 0..w.nrows() {
            for j in 0..w.nrows() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst_residual = worst_residual.max((ds[[i, j]] - target).abs());
                if i != j {
                    worst_residual = worst_residual.max(da[[i, j]].abs());
                }
            }
        }
    }
    check(
        worst_filter < 1e-8 && worst_value < 1e-8 && worst_residual < 1e-8,
        format!(
            "100 pairs: filter deviation {worst_filter:.1e}, eigenvalue deviation {worst_value:.1e}, diagonalisation residual {worst_residual:.1e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (lo, hi, fs) in [(0.5, 125.0, 1000.0), (30.0, 120.0, 250.0)] {
        let bp = design_bandpass(lo, hi, fs, 4).map_err(|e| e.to_string())?;
        let (gl, gh) = (bp.gain_db(lo), bp.gain_db(hi));
        ok &= (gl + 3.0).abs() <= 0.5 && (gh + 3.0).abs() <= 0.5;
        notes.push(format!("band-pass {lo}-{hi} Hz edges {gl:.2}/{gh:.2} dB"));
    }
    for f0 in [60.0, 120.0] {
        let n = design_notch(f0, 35.0, 1000.0).map_err(|e| e.to_string())?;
        let (depth, dc) = (n.gain_db(f0), n.gain_db(0.0));
        ok &= depth <= -40.0 && dc.abs() <= 0.5;
        notes.push(format!("notch {f0} Hz {depth:.0} dB, DC {dc:.3} dB"));
    }
    let fs = 1000.0;
    let n = 10_000;
    let sine = |f: f64| Array2::from_shape_fn((1, n), |(_, t)| (std::f64::consts::TAU * f * t as f64 / fs).sin());
    let (pass, out_fs) = decimate_rows(&sine(10.0), fs, 4).map_err(|e| e.to_string())?;
    let mid = 250..pass.ncols() - 250;
    let pass_err = mid
        .clone()
        .map(|t| (pass[[0, t]] - (std::f64::consts::TAU * 10.0 * t as f64 / out_fs).sin()).abs())
        .fold(0.0, f64::max);
    let (stop, _) = decimate_rows(&sine(200.0), fs, 4).map_err(|e| e.to_string())?;
    let stop_rms = (mid.clone().map(|t| stop[[0, t]].powi(2)).sum::<f64>() / mid.len() as f64).sqrt();
    let stop_db = 20.0 * (stop_rms / 0.5f64.sqrt()).log10();
    ok &= pass_err <= 0.01 && stop_db <= -40.0;
    notes.push(format!("decimation 10 Hz error {pass_err:.1e}, 200 Hz {stop_db:.0} dB"));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = normal(64, 1000, &mut rng);
    for (c, mut row) in x.outer_iter_mut().enumerate() {
        row += 10.0 * c as f64;
    }
    let car = common_average_reference(&x).map_err(|e| e.to_string())?;
    let worst_mean = car.mean_axis(Axis(0)).unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ok &= worst_mean < 1e-12;
    notes.push(format!("CAR mean {worst_mean:.1e}"));
    check(ok, notes.join("; "))
}

fn brute_distance(a: &[char], b: &[char]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => (brute_distance(ra, b) + 1)
            .min(brute_distance(a, rb) + 1)
            .min(brute_distance(ra, rb) + usize::from(x != y)),
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let alphabet = ['a', 'b', 'c', ' '];
    let word = |rng: &mut ChaCha8Rng| -> Vec<char> {
        let len = rng.random_range(0..=6);
        (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
    };
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (a, b) = (word(&mut rng), word(&mut rng));
        let brute = brute_distance(&a, &b);
        let (sa, sb): (String, String) = (a.iter().collect(), b.iter().collect());
        let expected = if a.is_empty() {
            if b.is_empty() { 0.0 } else { 1.0 }
        } else {
            brute as f64 / a.len() as f64
        };
        if edit_distance(&a, &b) != brute || cer(&sa, &sb) != expected {
            mismatches += 1;
        }
    }
    let water = cer("water", "wotor");
    check(
        mismatches == 0 && water == 0.4,
        format!("1000 pairs, {mismatches} mismatches; cer(water, wotor) = {water}"),
    )
}

const SMALL_CONFIG: &str = r#"
[synth]
subjects = 2
trials_per_class = 5

[gan]
epochs = 3
g_hidden = [64]
d_hidden = [32]
"#;

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL_CONFIG).map_err(|e| e.to_string())?;
    // The same command line twice, from two working directories.
    let run = |cwd: &Path| -> Result<(), String> {
        std::fs::create_dir_all(cwd).map_err(|e| e.to_string())?;
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_neurotext"))
            .current_dir(cwd)
            .arg("--config")
            .arg(&config)
            .args(["--output-dir", "out", "run-all"])
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if status.success() {
            Ok(())
        } else {
            Err(format!("run-all exited with {status}"))
        }
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a)?;
    run(&b)?;
    let (a, b) = (a.join("out"), b.join("out"));
    let files = ["report.json", "cer.csv", "topography.csv", "topography.svg"];
    let mut differing = Vec::new();
    let mut bytes = 0;
    for f in files {
        let (x, y) = (
            std::fs::read(a.join(f)).map_err(|e| format!("{f}: {e}"))?,
            std::fs::read(b.join(f)).map_err(|e| format!("{f}: {e}"))?,
        );
        bytes += x.len();
        if x != y {
            differing.push(f);
        }
    }
    check(
        differing.is_empty(),
        format!("two run-all invocations, {bytes} bytes over {} files, differing: {differing:?}", files.len()),
    )
}

fn criterion_8() -> Outcome {
    let base = ExperimentConfig::from_toml_str(SMALL_CONFIG).map_err(|e| e.to_string())?;
    let data = prepare(&base).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    for protocol in [Protocol::SeenOnly, Protocol::UnseenWord, Protocol::CrossSubject] {
        let cfg = ExperimentConfig { protocol, ..base.clone() };
        let r = run_prepared(&cfg, &data).map_err(|e| e.to_string())?;
        let inputs: usize = r.runs.iter().map(|x| x.audit.csp_inputs).sum();
        let forbidden: usize = r.runs.iter().map(|x| x.audit.forbidden).sum();
        let runs_ok = r.runs.iter().all(|x| x.audit.passed && x.audit.csp_inputs > 0 && x.audit.forbidden > 0);
        ok &= r.audit_passed && runs_ok;
        notes.push(format!(
            "{protocol}: {} runs, {inputs} training inputs vs {forbidden} forbidden, {}",
            r.runs.len(),
            if r.audit_passed { "clean" } else { "LEAK" }
        ));
    }
    // The audit must notice a deliberate leak of the held-out word into CSP.
    let mut leaky = base.clone();
    leaky.csp.all_classes = true;
    let r = run_prepared(&leaky, &data).map_err(|e| e.to_string())?;
    let caught = !r.audit_passed && r.runs.iter().all(|x| x.audit.csp_overlap > 0 && x.audit.gan_overlap == 0);
    ok &= caught;
    notes.push(format!("deliberate held-out-word leak {}", if caught { "detected" } else { "MISSED" }));
    check(ok, notes.join("; "))
}

fn criterion_9() -> Outcome {
    let d = default_data();
    let synth = &d.cfg.synth;
    let classes = d.data.classes();
    let mut misses = Vec::new();
    let mut checked = 0;
    let mut worst_rank = 0;
    for &subject in &d.data.manifest.subjects {
        let epochs: Vec<_> = d.data.subject_epochs(subject).into_iter().filter(|e| !e.flagged).collect();
        let report = spatial_analysis(&epochs, d.data.layout(), classes).map_err(|e| e.to_string())?;
        let mixing = subject_mixing(subject, synth);
        for (w, class) in classes.iter().enumerate() {
            if class.is_rest() {
                continue;
            }
            let m = Array1::from(mixing[class.id].clone());
            let peak = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let ranking = report.ranking(w);
            for (ch, weight) in m.iter().enumerate() {
                if weight.abs() >= 0.5 * peak {
                    checked += 1;
                    let rank = ranking.iter().position(|c| *c == ch).unwrap();
                    worst_rank = worst_rank.max(rank + 1);
                    if rank >= 5 {
                        misses.push(format!("subject {subject} {} {} rank {}", class.text, report.channels[ch], rank + 1));
                    }
                }
            }
        }
    }
    check(
        misses.is_empty(),
        format!("{checked} carrying channels (weight ≥ half the peak), worst rank {worst_rank}; misses {misses:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("end-to-end signal and shuffled-label null", criterion_1),
        ("unseen-word CER not below seen-word CER", criterion_2),
        ("loss gradients vs finite differences", criterion_3),
        ("CSP vs whitening eigen-solver", criterion_4),
        ("filter, decimation and CAR specs", criterion_5),
        ("CER vs brute-force edit distance", criterion_6),
        ("byte-identical run-all outputs", criterion_7),
        ("protocol hygiene audit", criterion_8),
        ("spatial analysis recovers mixing channels", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name} ({secs:.1} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name} ({secs:.1} s): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
