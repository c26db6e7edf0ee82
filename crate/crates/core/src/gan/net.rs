use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{group_softmax_inplace, leaky_relu, sigmoid, Tape, Var};
use crate::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Sigmoid,
    /// Softmax over consecutive groups of `width` outputs.
    Softmax { width: usize },
    Identity,
}

/// `act(x·W + b)`, with `W` stored `in × out` and `b` as a `1 × out` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
}

/// Parameter leaves of a network registered on a tape, in layer order
/// (weight then bias).
pub struct NetVars(pub Vec<(Var, Var)>);

impl DenseNet {
    /// Layer widths `dims[0] → … → dims[k]`; hidden layers use leaky ReLU and
    /// the last layer `head`. Weights are Glorot-uniform, biases zero.
    pub fn new<R: Rng>(dims: &[usize], head: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("layer widths {dims:?}")));
        }
        if let Activation::Softmax { width } = head {
            if width == 0 || dims[dims.len() - 1] % width != 0 {
                return Err(Error::InvalidConfig(format!(
                    "softmax groups of {width} do not tile {} outputs",
                    dims[dims.len() - 1]
                )));
            }
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-limit..=limit)),
                    bias: Array2::zeros((1, w[1])),
                    activation: if k + 2 == dims.len() { head } else { Activation::LeakyRelu },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Every parameter array, in layer order (weight then bias).
    pub fn params(&self) -> Vec<&Array2<f64>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input width {cols}, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Batch forward pass, one sample per row.
    pub fn forward(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut x = input.clone();
        for l in &self.layers {
            x = x.dot(&l.weight) + &l.bias;
            match l.activation {
                Activation::LeakyRelu => x.mapv_inplace(|t| leaky_relu(t, LEAKY_SLOPE)),
                Activation::Sigmoid => x.mapv_inplace(sigmoid),
                Activation::Softmax { width } => group_softmax_inplace(&mut x, width),
                Activation::Identity => {}
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(x)
    }

    /// Register the parameters as tape leaves.
    pub fn register(&self, tape: &mut Tape) -> NetVars {
        NetVars(
            self.layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
                .collect(),
        )
    }

    /// Forward pass recorded on `tape` using previously registered leaves.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &NetVars, input: Var) -> Result<Var> {
        self.check_input(tape.value(input).ncols())?;
        let mut x = input;
        for (l, &(w, b)) in self.layers.iter().zip(&vars.0) {
            let h = tape.matmul(x, w);
            let h = tape.add_bias(h, b);
            x = match l.activation {
                Activation::LeakyRelu => tape.leaky_relu(h, LEAKY_SLOPE),
                Activation::Sigmoid => tape.sigmoid(h),
                Activation::Softmax { width } => tape.group_softmax(h, width),
                Activation::Identity => h,
            };
        }
        Ok(x)
    }
}
