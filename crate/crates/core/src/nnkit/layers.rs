use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::ParamGroup;
use crate::error::{arg_err, Result};
use crate::math;
use crate::rng::SeededRng;

/// Elementwise nonlinearity. Backward passes use the activation's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, xs: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => xs.iter_mut().for_each(|x| {
                if *x < 0.0 {
                    *x = 0.0
                }
            }),
            Activation::Tanh => xs.iter_mut().for_each(|x| *x = math::tanh(*x)),
            Activation::Sigmoid => xs.iter_mut().for_each(|x| *x = math::sigmoid(*x)),
        }
    }

    /// `dy <- dy * f'(x)`, where `y = f(x)` is the stored output.
    pub fn backward(self, y: &[f64], dy: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => dy.iter_mut().zip(y).for_each(|(d, &v)| {
                if v <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Tanh => dy.iter_mut().zip(y).for_each(|(d, &v)| *d *= 1.0 - v * v),
            Activation::Sigmoid => dy.iter_mut().zip(y).for_each(|(d, &v)| *d *= v * (1.0 - v)),
        }
    }
}

/// `y = x W^T + b` over a row-major batch; `W` is `[output, input]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Affine {
    pub w: usize,
    pub b: usize,
    pub input: usize,
    pub output: usize,
}

impl Affine {
    pub fn create(group: &mut ParamGroup, prefix: &str, input: usize, output: usize, rng: &mut SeededRng) -> Self {
        let w = group.push(&format!("{prefix}.w"), ParamGroup::uniform_tensor(&[output, input], input, rng));
        let b = group.push(&format!("{prefix}.b"), ParamGroup::uniform_tensor(&[output], input, rng));
        Self { w, b, input, output }
    }

    /// Binds to existing tensors, checking their shapes.
    pub fn bind(group: &ParamGroup, prefix: &str) -> Result<Self> {
        let w = group.index_of(&format!("{prefix}.w")).ok_or_else(|| arg_err!("missing tensor {prefix}.w"))?;
        let b = group.index_of(&format!("{prefix}.b")).ok_or_else(|| arg_err!("missing tensor {prefix}.b"))?;
        let ws = group.param(w).shape();
        if ws.len() != 2 || group.param(b).shape() != [ws[0]] {
            return Err(arg_err!("tensors {prefix}.w/{prefix}.b have incompatible shapes"));
        }
        Ok(Self { w, b, input: ws[1], output: ws[0] })
    }

    pub fn forward(&self, group: &ParamGroup, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.input {
            return Err(arg_err!("affine expects {}x{} input, got {} values", batch, self.input, x.len()));
        }
        let w = group.param(self.w).data();
        let b = group.param(self.b).data();
        let mut y = vec![0.0; batch * self.output];
        for r in 0..batch {
            let xr = &x[r * self.input..(r + 1) * self.input];
            let yr = &mut y[r * self.output..(r + 1) * self.output];
            for (o, yo) in yr.iter_mut().enumerate() {
                *yo = b[o] + math::dot(&w[o * self.input..(o + 1) * self.input], xr);
            }
        }
        Ok(y)
    }

    /// Accumulates `dW`, `db` into the group's gradients and returns `dx` if asked.
    pub fn backward(&self, group: &mut ParamGroup, x: &[f64], dy: &[f64], batch: usize, want_dx: bool) -> Option<Vec<f64>> {
        let (ni, no) = (self.input, self.output);
        {
            let (_, dw) = group.param_and_grad_mut(self.w);
            let dw = dw.data_mut();
            for r in 0..batch {
                let xr = &x[r * ni..(r + 1) * ni];
                for o in 0..no {
                    let d = dy[r * no + o];
                    if d != 0.0 {
                        let row = &mut dw[o * ni..(o + 1) * ni];
                        row.iter_mut().zip(xr).for_each(|(g, &xv)| *g += d * xv);
                    }
                }
            }
        }
        {
            let (_, db) = group.param_and_grad_mut(self.b);
            let db = db.data_mut();
            for r in 0..batch {
                for o in 0..no {
                    db[o] += dy[r * no + o];
                }
            }
        }
        if !want_dx {
            return None;
        }
        let w = group.param(self.w).data();
        let mut dx = vec![0.0; batch * ni];
        for r in 0..batch {
            let dxr = &mut dx[r * ni..(r + 1) * ni];
            for o in 0..no {
                let d = dy[r * no + o];
                if d != 0.0 {
                    dxr.iter_mut().zip(&w[o * ni..(o + 1) * ni]).for_each(|(g, &wv)| *g += d * wv);
                }
            }
        }
        Some(dx)
    }

    /// Sets the layer to identity weights (square layers) and zero bias.
    pub fn set_identity(&self, group: &mut ParamGroup) {
        let n = self.input.min(self.output);
        let w = group.param_mut(self.w);
        w.fill(0.0);
        for i in 0..n {
            w.data_mut()[i * self.input + i] = 1.0;
        }
        group.param_mut(self.b).fill(0.0);
    }
}

/// Stack of affine layers with a hidden activation and an output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Affine>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Per-layer inputs and the final output of one forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub batch: usize,
    inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    /// `sizes = [input, hidden..., output]`; tensors named `{prefix}{k}.w/b`.
    pub fn create(
        group: &mut ParamGroup,
        prefix: &str,
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut SeededRng,
    ) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| Affine::create(group, &format!("{prefix}{k}"), w[0], w[1], rng))
            .collect();
        Self { layers, hidden, output }
    }

    pub fn bind(group: &ParamGroup, prefix: &str, depth: usize, hidden: Activation, output: Activation) -> Result<Self> {
        let layers = (0..depth).map(|k| Affine::bind(group, &format!("{prefix}{k}"))).collect::<Result<Vec<_>>>()?;
        for w in layers.windows(2) {
            if w[0].output != w[1].input {
                return Err(arg_err!("layer widths of `{prefix}` do not chain"));
            }
        }
        Ok(Self { layers, hidden, output })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.output).unwrap_or(0)
    }

    pub fn forward(&self, group: &ParamGroup, x: &[f64], batch: usize) -> Result<MlpCache> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(group, &cur, batch)?;
            let act = if k + 1 == self.layers.len() { self.output } else { self.hidden };
            act.apply(&mut y);
            inputs.push(cur);
            cur = y;
        }
        Ok(MlpCache { batch, inputs, output: cur })
    }

    /// Backpropagates `dy` (gradient w.r.t. the post-activation output).
    pub fn backward(&self, group: &mut ParamGroup, cache: &MlpCache, dy: &[f64], want_dx: bool) -> Option<Vec<f64>> {
        let mut grad = dy.to_vec();
        let n = self.layers.len();
        for k in (0..n).rev() {
            let act = if k + 1 == n { self.output } else { self.hidden };
            let y = if k + 1 == n { &cache.output } else { &cache.inputs[k + 1] };
            act.backward(y, &mut grad);
            let need = want_dx || k > 0;
            grad = self.layers[k].backward(group, &cache.inputs[k], &grad, cache.batch, need)?;
        }
        Some(grad)
    }
}

/// Row-wise concatenation `[a | b]` of two batches.
pub fn concat_rows(a: &[f64], a_width: usize, b: &[f64], b_width: usize, batch: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * (a_width + b_width));
    for r in 0..batch {
        out.extend_from_slice(&a[r * a_width..(r + 1) * a_width]);
        out.extend_from_slice(&b[r * b_width..(r + 1) * b_width]);
    }
    out
}

/// Inverse of [`concat_rows`], used to route gradients back to each input.
pub fn split_rows(x: &[f64], a_width: usize, b_width: usize, batch: usize) -> (Vec<f64>, Vec<f64>) {
    let w = a_width + b_width;
    let mut a = Vec::with_capacity(batch * a_width);
    let mut b = Vec::with_capacity(batch * b_width);
    for r in 0..batch {
        a.extend_from_slice(&x[r * w..r * w + a_width]);
        b.extend_from_slice(&x[r * w + a_width..(r + 1) * w]);
    }
    (a, b)
}
