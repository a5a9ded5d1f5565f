use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::ParamGroup;
use crate::error::{arg_err, Result};
use crate::math::{self, sigmoid};
use crate::rng::SeededRng;

/// Single-layer LSTM with the standard gate equations.
///
/// Gate pre-activations are stacked as `[input, forget, candidate, output]`
/// in `wx: [4H, D]`, `wh: [4H, H]`, `b: [4H]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    pub wx: usize,
    pub wh: usize,
    pub b: usize,
    pub input: usize,
    pub hidden: usize,
}

/// Everything the backward pass needs from one forward sequence.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub steps: usize,
    xs: Vec<f64>,
    /// Post-activation gates per step, `[i, f, g, o]` each of width H.
    gates: Vec<f64>,
    /// Cell states `c_0..c_T` (index 0 is the zero initial state).
    cells: Vec<f64>,
    /// Hidden states `h_0..h_T`.
    hiddens: Vec<f64>,
}

impl LstmTrace {
    /// Hidden outputs `h_1..h_T` as a `[T, H]` row-major block.
    pub fn outputs(&self, hidden: usize) -> &[f64] {
        &self.hiddens[hidden..]
    }
}

impl Lstm {
    pub fn create(group: &mut ParamGroup, prefix: &str, input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let fan_in = input + hidden;
        let wx = group.push(&format!("{prefix}.wx"), ParamGroup::uniform_tensor(&[4 * hidden, input], fan_in, rng));
        let wh = group.push(&format!("{prefix}.wh"), ParamGroup::uniform_tensor(&[4 * hidden, hidden], fan_in, rng));
        let mut bias = ParamGroup::uniform_tensor(&[4 * hidden], fan_in, rng);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let b = group.push(&format!("{prefix}.b"), bias);
        Self { wx, wh, b, input, hidden }
    }

    pub fn bind(group: &ParamGroup, prefix: &str) -> Result<Self> {
        let find = |s: &str| group.index_of(&format!("{prefix}.{s}")).ok_or_else(|| arg_err!("missing tensor {prefix}.{s}"));
        let (wx, wh, b) = (find("wx")?, find("wh")?, find("b")?);
        let sx = group.param(wx).shape();
        let hidden = sx[0] / 4;
        if sx.len() != 2 || sx[0] % 4 != 0 || group.param(wh).shape() != [4 * hidden, hidden] || group.param(b).shape() != [4 * hidden] {
            return Err(arg_err!("LSTM tensors under `{prefix}` have inconsistent shapes"));
        }
        Ok(Self { wx, wh, b, input: sx[1], hidden })
    }

    /// Runs the sequence `xs: [T, D]` from zero initial state.
    pub fn forward(&self, group: &ParamGroup, xs: &[f64]) -> Result<LstmTrace> {
        let (d, h) = (self.input, self.hidden);
        if d == 0 || xs.len() % d != 0 {
            return Err(arg_err!("LSTM expects rows of width {d}, got {} values", xs.len()));
        }
        let steps = xs.len() / d;
        let wx = group.param(self.wx).data();
        let wh = group.param(self.wh).data();
        let b = group.param(self.b).data();
        let mut gates = vec![0.0; steps * 4 * h];
        let mut cells = vec![0.0; (steps + 1) * h];
        let mut hiddens = vec![0.0; (steps + 1) * h];
        let mut z = vec![0.0; 4 * h];
        for t in 0..steps {
            let x = &xs[t * d..(t + 1) * d];
            let hp = &hiddens[t * h..(t + 1) * h];
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = b[r] + math::dot(&wx[r * d..(r + 1) * d], x) + math::dot(&wh[r * h..(r + 1) * h], hp);
            }
            let gt = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                gt[k] = sigmoid(z[k]);
                gt[h + k] = sigmoid(z[h + k]);
                gt[2 * h + k] = math::tanh(z[2 * h + k]);
                gt[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            for k in 0..h {
                let c = gt[h + k] * cells[t * h + k] + gt[k] * gt[2 * h + k];
                cells[(t + 1) * h + k] = c;
                hiddens[(t + 1) * h + k] = gt[3 * h + k] * math::tanh(c);
            }
        }
        Ok(LstmTrace { steps, xs: xs.to_vec(), gates, cells, hiddens })
    }

    /// Backpropagation through time. `dh: [T, H]` is the loss gradient w.r.t.
    /// each output `h_t`; returns the gradient w.r.t. each input row.
    pub fn backward(&self, group: &mut ParamGroup, trace: &LstmTrace, dh: &[f64]) -> Vec<f64> {
        let (d, h, steps) = (self.input, self.hidden, trace.steps);
        let mut dxs = vec![0.0; steps * d];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gt = &trace.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &trace.cells[t * h..(t + 1) * h];
            let c = &trace.cells[(t + 1) * h..(t + 2) * h];
            for k in 0..h {
                let (i, f, g, o) = (gt[k], gt[h + k], gt[2 * h + k], gt[3 * h + k]);
                let tc = math::tanh(c[k]);
                let dht = dh[t * h + k] + dh_next[k];
                let dc = dc_next[k] + dht * o * (1.0 - tc * tc);
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = dht * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            let x = &trace.xs[t * d..(t + 1) * d];
            let hp = &trace.hiddens[t * h..(t + 1) * h];
            {
                let (_, gwx) = group.param_and_grad_mut(self.wx);
                let gwx = gwx.data_mut();
                for r in 0..4 * h {
                    let row = &mut gwx[r * d..(r + 1) * d];
                    row.iter_mut().zip(x).for_each(|(gv, &xv)| *gv += dz[r] * xv);
                }
            }
            {
                let (_, gwh) = group.param_and_grad_mut(self.wh);
                let gwh = gwh.data_mut();
                for r in 0..4 * h {
                    let row = &mut gwh[r * h..(r + 1) * h];
                    row.iter_mut().zip(hp).for_each(|(gv, &hv)| *gv += dz[r] * hv);
                }
            }
            {
                let (_, gb) = group.param_and_grad_mut(self.b);
                gb.data_mut().iter_mut().zip(&dz).for_each(|(gv, &z)| *gv += z);
            }
            let wx = group.param(self.wx).data();
            let wh = group.param(self.wh).data();
            let dx = &mut dxs[t * d..(t + 1) * d];
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..4 * h {
                let zr = dz[r];
                dx.iter_mut().zip(&wx[r * d..(r + 1) * d]).for_each(|(a, &w)| *a += zr * w);
                dh_next.iter_mut().zip(&wh[r * h..(r + 1) * h]).for_each(|(a, &w)| *a += zr * w);
            }
        }
        dxs
    }
}
