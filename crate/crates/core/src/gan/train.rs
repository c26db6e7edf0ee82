use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy_tape, loss_d_tape, loss_g_tape};
use super::net::{Activation, Dense, DenseNet};
use super::optim::{Adam, AdamConfig};
use super::tape::Tape;
use crate::io::{read_f32, read_json, write_f32, write_json};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    /// Generator input width; 0 means "take it from the training data".
    pub z_dim: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
    /// Generator output head. `None` uses a softmax per position.
    pub head: Option<Activation>,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub d_steps: usize,
    pub g_steps: usize,
    /// Weight of the supervised cross-entropy term in the generator
    /// objective; 0 leaves the purely adversarial game.
    pub recon_weight: f64,
    /// Standard deviation of Gaussian noise added to z during training.
    pub noise_sigma: f64,
    /// Standardise z per dimension with training-set statistics.
    pub standardize: bool,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            z_dim: 0,
            seq_len: crate::textcodec::MAX_LEN,
            vocab_size: 28,
            head: None,
            g_hidden: vec![512, 512],
            d_hidden: vec![256, 256],
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 120,
            seed: 42,
            d_steps: 1,
            g_steps: 1,
            recon_weight: 1.0,
            noise_sigma: 0.0,
            standardize: true,
        }
    }
}

impl GanConfig {
    pub fn out_dim(&self) -> usize {
        self.seq_len * self.vocab_size
    }

    pub fn head(&self) -> Activation {
        self.head.unwrap_or(Activation::Softmax { width: self.vocab_size })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.seq_len,
            self.vocab_size,
            self.batch_size,
            self.epochs,
            self.d_steps,
            self.g_steps,
        ];
        if positive.contains(&0) || self.g_hidden.contains(&0) || self.d_hidden.contains(&0) {
            return Err(Error::InvalidConfig("GAN sizes and step counts must be positive".into()));
        }
        let a = &self.adam;
        if !(a.lr > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::InvalidConfig(format!("optimiser settings {a:?}")));
        }
        if !(self.recon_weight >= 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("recon_weight and noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-epoch averages over batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Discriminator objective (maximised).
    pub loss_d: f64,
    /// Generator adversarial objective (maximised).
    pub loss_g: f64,
    /// Fraction of real samples with D > 0.5.
    pub d_acc_real: f64,
    /// Fraction of generated samples with D < 0.5.
    pub d_acc_fake: f64,
    pub recon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub config: GanConfig,
    pub generator: DenseNet,
    pub discriminator: DenseNet,
    pub z_mean: Array1<f64>,
    pub z_scale: Array1<f64>,
    pub epochs_trained: usize,
}

impl GanModel {
    fn normalise(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.z_mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "embedding width {}, generator expects {}",
                z.ncols(),
                self.z_mean.len()
            )));
        }
        Ok((z - &self.z_mean) / &self.z_scale)
    }

    pub fn discriminate(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        Ok(self.discriminator.forward(x)?.column(0).to_owned())
    }
}

/// Generator output for each row of `z`; each row is `seq_len × vocab`
/// flattened row-major.
pub fn generate(model: &GanModel, z: &Array2<f64>) -> Result<Array2<f64>> {
    model.generator.forward(&model.normalise(z)?)
}

fn diverged(epoch: usize, reason: String, history: &[EpochStats]) -> Error {
    Error::Divergence {
        epoch,
        reason,
        history: history.to_vec(),
    }
}

fn rows(a: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

/// Alternate discriminator and generator updates over shuffled batches of
/// `(z, x)` pairs. Deterministic in `(config, z, x)`.
pub fn train(config: &GanConfig, z: &Array2<f64>, x: &Array2<f64>) -> Result<(GanModel, Vec<EpochStats>)> {
    config.validate()?;
    let n = z.nrows();
    if n == 0 {
        return Err(Error::Empty("training set".into()));
    }
    if x.nrows() != n {
        return Err(Error::ShapeMismatch(format!("{n} embeddings but {} targets", x.nrows())));
    }
    if config.z_dim != 0 && config.z_dim != z.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "embedding width {}, configured z_dim {}",
            z.ncols(),
            config.z_dim
        )));
    }
    let out_dim = x.ncols();
    if matches!(config.head(), Activation::Softmax { .. }) && out_dim != config.out_dim() {
        return Err(Error::ShapeMismatch(format!(
            "targets have {out_dim} columns, expected {}",
            config.out_dim()
        )));
    }
    let mut cfg = config.clone();
    cfg.z_dim = z.ncols();

    let (z_mean, z_scale) = if cfg.standardize {
        let mean = z.mean_axis(Axis(0)).expect("non-empty");
        let scale = z.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        (mean, scale)
    } else {
        (Array1::zeros(cfg.z_dim), Array1::ones(cfg.z_dim))
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g_dims: Vec<usize> = std::iter::once(cfg.z_dim).chain(cfg.g_hidden.iter().copied()).chain([out_dim]).collect();
    let d_dims: Vec<usize> = std::iter::once(out_dim).chain(cfg.d_hidden.iter().copied()).chain([1]).collect();
    let mut model = GanModel {
        generator: DenseNet::new(&g_dims, cfg.head(), &mut init_rng)?,
        discriminator: DenseNet::new(&d_dims, Activation::Sigmoid, &mut init_rng)?,
        z_mean,
        z_scale,
        epochs_trained: 0,
        config: cfg.clone(),
    };
    let zn = model.normalise(z)?;
    let mut opt_g = Adam::new(cfg.adam.clone(), &model.generator.params());
    let mut opt_d = Adam::new(cfg.adam.clone(), &model.discriminator.params());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);
    let groups = match cfg.head() {
        Activation::Softmax { width } => out_dim / width,
        _ => 1,
    };

    let mut history: Vec<EpochStats> = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        for i in (1..n).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut sums = [0.0f64; 5];
        let mut real_seen = 0usize;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let mut zb = rows(&zn, idx);
            if cfg.noise_sigma > 0.0 {
                zb.mapv_inplace(|v| {
                    let e: f64 = StandardNormal.sample(&mut noise_rng);
                    v + cfg.noise_sigma * e
                });
            }
            let xb = rows(x, idx);
            let fail = |e: Error, h: &[EpochStats]| diverged(epoch, e.to_string(), h);

            let mut last_d = (0.0, 0.0, 0.0);
            for _ in 0..cfg.d_steps {
                let fake = model.generator.forward(&zb).map_err(|e| fail(e, &history))?;
                let mut tape = Tape::new();
                let dv = model.discriminator.register(&mut tape);
                let real_v = tape.leaf(xb.clone());
                let fake_v = tape.leaf(fake);
                let dr = model.discriminator.forward_tape(&mut tape, &dv, real_v)?;
                let df = model.discriminator.forward_tape(&mut tape, &dv, fake_v)?;
                let ld = loss_d_tape(&mut tape, dr, df);
                let obj = tape.scale(ld, -1.0);
                let mut grads = tape.backward(obj).map_err(|e| fail(e, &history))?;
                let g: Vec<Array2<f64>> = dv
                    .0
                    .iter()
                    .flat_map(|&(w, b)| [w, b])
                    .map(|v| grads.take(v).expect("parameter gradient"))
                    .collect();
                opt_d.step(model.discriminator.params_mut(), &g).map_err(|e| fail(e, &history))?;
                let acc_r = tape.value(dr).iter().filter(|p| **p > 0.5).count() as f64;
                let acc_f = tape.value(df).iter().filter(|p| **p < 0.5).count() as f64;
                last_d = (tape.scalar_value(ld), acc_r, acc_f);
            }

            let mut last_g = (0.0, 0.0);
            for _ in 0..cfg.g_steps {
                let mut tape = Tape::new();
                let gv = model.generator.register(&mut tape);
                let dv = model.discriminator.register(&mut tape);
                let z_v = tape.leaf(zb.clone());
                let xf = model.generator.forward_tape(&mut tape, &gv, z_v)?;
                let df = model.discriminator.forward_tape(&mut tape, &dv, xf)?;
                let lg = loss_g_tape(&mut tape, df);
                let mut obj = tape.scale(lg, -1.0);
                let mut recon = 0.0;
                if cfg.recon_weight > 0.0 {
                    let t = tape.leaf(xb.clone());
                    let ce = cross_entropy_tape(&mut tape, t, xf, groups);
                    recon = tape.scalar_value(ce);
                    let weighted = tape.scale(ce, cfg.recon_weight);
                    obj = tape.add(obj, weighted);
                }
                let mut grads = tape.backward(obj).map_err(|e| fail(e, &history))?;
                let g: Vec<Array2<f64>> = gv
                    .0
                    .iter()
                    .flat_map(|&(w, b)| [w, b])
                    .map(|v| grads.take(v).expect("parameter gradient"))
                    .collect();
                opt_g.step(model.generator.params_mut(), &g).map_err(|e| fail(e, &history))?;
                last_g = (tape.scalar_value(lg), recon);
            }

            sums[0] += last_d.0;
            sums[1] += last_g.0;
            sums[2] += last_d.1;
            sums[3] += last_d.2;
            sums[4] += last_g.1;
            real_seen += idx.len();
            batches += 1;
        }
        let b = batches as f64;
        let stats = EpochStats {
            epoch,
            loss_d: sums[0] / b,
            loss_g: sums[1] / b,
            d_acc_real: sums[2] / real_seen as f64,
            d_acc_fake: sums[3] / real_seen as f64,
            recon: sums[4] / b,
        };
        if [stats.loss_d, stats.loss_g, stats.recon].iter().any(|v| !v.is_finite()) {
            return Err(diverged(epoch, "non-finite loss".into(), &history));
        }
        history.push(stats);
        model.epochs_trained = epoch + 1;
    }
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerHeader {
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    config: GanConfig,
    seed: u64,
    epochs_trained: usize,
    generator: Vec<LayerHeader>,
    discriminator: Vec<LayerHeader>,
    z_mean: Vec<f64>,
    z_scale: Vec<f64>,
    blob: String,
}

fn layer_headers(net: &DenseNet) -> Vec<LayerHeader> {
    net.layers
        .iter()
        .map(|l| LayerHeader {
            inputs: l.weight.nrows(),
            outputs: l.weight.ncols(),
            activation: l.activation,
        })
        .collect()
}

/// `<name>.json` metadata plus `<name>.f32` holding every generator then
/// discriminator parameter (weights row-major, then bias, per layer).
pub fn write_model(model: &GanModel, dir: &Path, name: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let header = ModelHeader {
        config: model.config.clone(),
        seed: model.config.seed,
        epochs_trained: model.epochs_trained,
        generator: layer_headers(&model.generator),
        discriminator: layer_headers(&model.discriminator),
        z_mean: model.z_mean.to_vec(),
        z_scale: model.z_scale.to_vec(),
        blob: format!("{name}.f32"),
    };
    let values = model
        .generator
        .params()
        .into_iter()
        .chain(model.discriminator.params())
        .flat_map(|p| p.iter().map(|v| *v as f32).collect::<Vec<_>>());
    write_f32(dir.join(&header.blob), values)?;
    write_json(dir.join(format!("{name}.json")), &header)
}

pub fn read_model(dir: &Path, name: &str) -> Result<GanModel> {
    let path = dir.join(format!("{name}.json"));
    let h: ModelHeader = read_json(&path)?;
    let count = |ls: &[LayerHeader]| ls.iter().map(|l| l.inputs * l.outputs + l.outputs).sum::<usize>();
    let values = read_f32(dir.join(&h.blob), count(&h.generator) + count(&h.discriminator))?;
    let mut pos = 0;
    let mut build = |ls: &[LayerHeader]| -> Result<DenseNet> {
        if ls.is_empty() || ls.windows(2).any(|w| w[0].outputs != w[1].inputs) {
            return Err(Error::CorruptHeader {
                path: path.clone(),
                reason: "layer widths do not chain".into(),
            });
        }
        let mut take = |r: usize, c: usize| {
            let a = Array2::from_shape_fn((r, c), |(i, j)| values[pos + i * c + j] as f64);
            pos += r * c;
            a
        };
        Ok(DenseNet {
            layers: ls
                .iter()
                .map(|l| Dense {
                    weight: take(l.inputs, l.outputs),
                    bias: take(1, l.outputs),
                    activation: l.activation,
                })
                .collect(),
        })
    };
    let generator = build(&h.generator)?;
    let discriminator = build(&h.discriminator)?;
    if h.z_mean.len() != generator.input_dim() || h.z_scale.len() != generator.input_dim() {
        return Err(Error::CorruptHeader {
            path,
            reason: "input statistics do not match the generator".into(),
        });
    }
    Ok(GanModel {
        config: h.config,
        generator,
        discriminator,
        z_mean: Array1::from(h.z_mean),
        z_scale: Array1::from(h.z_scale),
        epochs_trained: h.epochs_trained,
    })
}
