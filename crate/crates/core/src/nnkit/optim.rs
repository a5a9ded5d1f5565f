use alloc::vec::Vec;

use super::tensor::{ParamGroup, Tensor};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

/// Optimizer hyperparameters plus per-parameter Adam moments for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn sgd(lr: f64) -> Self {
        Self { kind: OptimizerKind::Sgd, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn adam(lr: f64) -> Self {
        Self { kind: OptimizerKind::Adam, ..Self::sgd(lr) }
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::sgd(lr),
            OptimizerKind::Adam => Self::adam(lr),
        }
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    fn ensure_moments(&mut self, group: &ParamGroup) {
        if self.m.len() != group.len() {
            self.m = group.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
    }
}

/// The SGD update `scale * (lr * grad)` for every parameter, without applying it.
pub fn sgd_update(group: &ParamGroup, opt: &OptimizerState, scale: f64) -> Vec<Vec<f64>> {
    group.grads().iter().map(|g| g.data().iter().map(|&d| scale * (opt.lr * d)).collect()).collect()
}

/// `w <- w - scale * lr * grad`.
pub fn sgd_step(group: &mut ParamGroup, opt: &mut OptimizerState, scale: f64) {
    let lr = opt.lr;
    let (params, grads) = group.params_and_grads_mut();
    for (p, g) in params.iter_mut().zip(grads) {
        p.data_mut().iter_mut().zip(g.data()).for_each(|(w, &d)| *w -= scale * (lr * d));
    }
    opt.step += 1;
}

/// Adam with bias correction on the pre-scaled gradient `scale * grad`.
pub fn adam_step(group: &mut ParamGroup, opt: &mut OptimizerState, scale: f64) {
    opt.ensure_moments(group);
    opt.step += 1;
    let t = opt.step as i32;
    let (b1, b2, eps, lr) = (opt.beta1, opt.beta2, opt.eps, opt.lr);
    let c1 = 1.0 - math::powi(b1, t);
    let c2 = 1.0 - math::powi(b2, t);
    let (params, grads) = group.params_and_grads_mut();
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = opt.m[k].data_mut();
        let v = opt.v[k].data_mut();
        for (j, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let gs = scale * d;
            m[j] = b1 * m[j] + (1.0 - b1) * gs;
            v[j] = b2 * v[j] + (1.0 - b2) * gs * gs;
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            *w -= lr * mh / (math::sqrt(vh) + eps);
        }
    }
}

/// Dispatches on the optimizer kind.
pub fn apply_step(group: &mut ParamGroup, opt: &mut OptimizerState, scale: f64) {
    match opt.kind {
        OptimizerKind::Sgd => sgd_step(group, opt, scale),
        OptimizerKind::Adam => adam_step(group, opt, scale),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::GroupTag;
    use alloc::vec;

    fn group() -> ParamGroup {
        let mut g = ParamGroup::new("g", GroupTag::Proprio);
        g.push("w", Tensor::from_vec(&[3], vec![0.5, -0.25, 1.0]).unwrap());
        g.grad_mut(0).data_mut().copy_from_slice(&[0.1, -0.4, 2.0]);
        g
    }

    #[test]
    fn zero_scale_leaves_params() {
        let mut g = group();
        let before = g.flat_params();
        sgd_step(&mut g, &mut OptimizerState::sgd(0.1), 0.0);
        assert_eq!(g.flat_params(), before);
    }

    #[test]
    fn unit_scale_is_plain_gd() {
        let mut g = group();
        sgd_step(&mut g, &mut OptimizerState::sgd(0.1), 1.0);
        let want = [0.5 - 0.1 * 0.1, -0.25 + 0.1 * 0.4, 1.0 - 0.1 * 2.0];
        assert_eq!(g.flat_params(), want);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut g = group();
        g.zero_grads();
        let before = g.flat_params();
        let mut opt = OptimizerState::adam(0.01);
        adam_step(&mut g, &mut opt, 1.0);
        assert_eq!(g.flat_params(), before);
        let (m, v) = opt.moments();
        assert_eq!(m[0].shape(), v[0].shape());
    }
}
