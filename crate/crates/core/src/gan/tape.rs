//! Reverse-mode differentiation over 2-D `f64` arrays.
//!
//! Every operation appends a node holding its value and its inputs; a
//! backward sweep from a scalar node accumulates gradients for all nodes.

use ndarray::{Array2, Axis, Zip};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    GroupSoftmax(Var, usize),
    ClampedLog(Var, f64),
    OneMinus(Var),
    Mean(Var),
    Sum(Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Add(Var, Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::GroupSoftmax(..) => "softmax",
            Op::ClampedLog(..) => "log",
            Op::OneMinus(_) => "one_minus",
            Op::Mean(_) => "mean",
            Op::Sum(_) => "sum",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Add(..) => "add",
        }
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
    non_finite: Option<&'static str>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax over consecutive groups of `width` columns, in place.
pub(crate) fn group_softmax_inplace(x: &mut Array2<f64>, width: usize) {
    for mut row in x.outer_iter_mut() {
        for start in (0..row.len()).step_by(width) {
            let mut chunk = row.slice_mut(ndarray::s![start..start + width]);
            let m = chunk.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            chunk.mapv_inplace(|v| (v - m).exp());
            let s = chunk.sum();
            chunk /= s;
        }
    }
}

pub(crate) fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        if self.non_finite.is_none() && value.iter().any(|v| !v.is_finite()) {
            self.non_finite = Some(op.name());
        }
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.values[v.0]
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.values[v.0][[0, 0]]
    }

    /// Error if any operation so far produced NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.non_finite {
            Some(op) => Err(Error::NonFinite(format!("output of {op}"))),
            None => Ok(()),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `x + b` with the `1 × n` row `b` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let v = self.value(x) + self.value(b);
        self.push(v, Op::AddBias(x, b))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let v = self.value(x).mapv(|t| leaky_relu(t, slope));
        self.push(v, Op::LeakyRelu(x, slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn group_softmax(&mut self, x: Var, width: usize) -> Var {
        let mut v = self.value(x).to_owned();
        group_softmax_inplace(&mut v, width);
        self.push(v, Op::GroupSoftmax(x, width))
    }

    /// `ln(clamp(x, eps, 1 − eps))`.
    pub fn clamped_log(&mut self, x: Var, eps: f64) -> Var {
        let v = self.value(x).mapv(|t| t.clamp(eps, 1.0 - eps).ln());
        self.push(v, Op::ClampedLog(x, eps))
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|t| 1.0 - t);
        self.push(v, Op::OneMinus(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x).mean().unwrap_or(f64::NAN);
        self.push(scalar(v), Op::Mean(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.value(x).sum();
        self.push(scalar(v), Op::Sum(x))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let v = self.value(x) * k;
        self.push(v, Op::Scale(x, k))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Gradients of the scalar `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        self.check_finite()?;
        if self.values[out.0].len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward from a {:?} node, expected a scalar",
                self.values[out.0].dim()
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.values.len()];
        grads[out.0] = Some(scalar(1.0));
        for i in (0..=out.0).rev() {
            if matches!(self.ops[i], Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let acc = |grads: &mut Vec<Option<Array2<f64>>>, v: Var, d: Array2<f64>| match &mut grads[v.0] {
                Some(existing) => *existing += &d,
                slot => *slot = Some(d),
            };
            match self.ops[i] {
                Op::Leaf => unreachable!("leaves keep their gradient"),
                Op::MatMul(a, b) => {
                    acc(&mut grads, a, g.dot(&self.values[b.0].t()));
                    acc(&mut grads, b, self.values[a.0].t().dot(&g));
                }
                Op::AddBias(x, b) => {
                    acc(&mut grads, b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, x, g);
                }
                Op::LeakyRelu(x, slope) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&self.values[x.0])
                        .for_each(|d, &t| *d *= if t > 0.0 { 1.0 } else { slope });
                    acc(&mut grads, x, d);
                }
                Op::Sigmoid(x) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&self.values[i]).for_each(|d, &y| *d *= y * (1.0 - y));
                    acc(&mut grads, x, d);
                }
                Op::GroupSoftmax(x, width) => {
                    let y = &self.values[i];
                    // A product's gradient can arrive column-major.
                    let g = g.as_standard_layout();
                    let mut d = Array2::zeros(y.dim());
                    for ((mut dr, yr), gr) in d.outer_iter_mut().zip(y.outer_iter()).zip(g.outer_iter()) {
                        let dr = dr.as_slice_mut().expect("standard layout");
                        let yr = yr.as_slice().expect("standard layout");
                        let gr = gr.as_slice().expect("standard layout");
                        for ((dc, yc), gc) in dr.chunks_mut(width).zip(yr.chunks(width)).zip(gr.chunks(width)) {
                            let dot: f64 = yc.iter().zip(gc).map(|(a, b)| a * b).sum();
                            for ((dv, yv), gv) in dc.iter_mut().zip(yc).zip(gc) {
                                *dv = yv * (gv - dot);
                            }
                        }
                    }
                    acc(&mut grads, x, d);
                }
                Op::ClampedLog(x, eps) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&self.values[x.0]).for_each(|d, &t| {
                        *d = if t >= eps && t <= 1.0 - eps { *d / t } else { 0.0 };
                    });
                    acc(&mut grads, x, d);
                }
                Op::OneMinus(x) => acc(&mut grads, x, -g),
                Op::Mean(x) => {
                    let n = self.values[x.0].len() as f64;
                    acc(&mut grads, x, Array2::from_elem(self.values[x.0].dim(), g[[0, 0]] / n));
                }
                Op::Sum(x) => acc(&mut grads, x, Array2::from_elem(self.values[x.0].dim(), g[[0, 0]])),
                Op::Mul(a, b) => {
                    acc(&mut grads, a, &g * &self.values[b.0]);
                    acc(&mut grads, b, &g * &self.values[a.0]);
                }
                Op::Scale(x, k) => acc(&mut grads, x, g * k),
                Op::Add(a, b) => {
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, b, g);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf, zero-filled if the output does not depend on it.
    pub fn get(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| Array2::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads[v.0].take()
    }
}
