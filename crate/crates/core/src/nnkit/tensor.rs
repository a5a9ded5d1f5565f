use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Result};

/// Row-major `f64` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(arg_err!("shape {shape:?} needs {n} values, got {}", data.len()));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// Which part of a model a parameter group belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupTag {
    Vision,
    Proprio,
    Head,
    Indicator,
}

impl GroupTag {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupTag::Vision => "vision",
            GroupTag::Proprio => "proprio",
            GroupTag::Head => "head",
            GroupTag::Indicator => "indicator",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "vision" => GroupTag::Vision,
            "proprio" => GroupTag::Proprio,
            "head" => GroupTag::Head,
            "indicator" => GroupTag::Indicator,
            other => return Err(arg_err!("unknown group tag `{other}`")),
        })
    }
}

/// Named tensors plus gradients of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub tag: GroupTag,
    names: Vec<String>,
    params: Vec<Tensor>,
    grads: Vec<Tensor>,
}

impl ParamGroup {
    pub fn new(name: &str, tag: GroupTag) -> Self {
        Self { name: name.to_string(), tag, names: Vec::new(), params: Vec::new(), grads: Vec::new() }
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: &str, tensor: Tensor) -> usize {
        self.grads.push(Tensor::zeros(tensor.shape()));
        self.params.push(tensor);
        self.names.push(name.to_string());
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn param(&self, i: usize) -> &Tensor {
        &self.params[i]
    }

    pub fn param_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.params[i]
    }

    pub fn grad(&self, i: usize) -> &Tensor {
        &self.grads[i]
    }

    pub fn grad_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.grads[i]
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn grads(&self) -> &[Tensor] {
        &self.grads
    }

    /// Parameter `i` read-only alongside its gradient mutably.
    pub fn param_and_grad_mut(&mut self, i: usize) -> (&Tensor, &mut Tensor) {
        (&self.params[i], &mut self.grads[i])
    }

    pub fn params_and_grads_mut(&mut self) -> (&mut [Tensor], &[Tensor]) {
        (&mut self.params, &self.grads)
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale_grads(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// All parameter values concatenated in declaration order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_values() {
            return Err(arg_err!("expected {} values, got {}", self.num_values(), values.len()));
        }
        let mut k = 0;
        for t in &mut self.params {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[k..k + n]);
            k += n;
        }
        Ok(())
    }

    /// Uniform initialization in `±1/sqrt(fan_in)`.
    pub(crate) fn uniform_tensor(shape: &[usize], fan_in: usize, rng: &mut crate::rng::SeededRng) -> Tensor {
        let bound = 1.0 / crate::math::sqrt(fan_in.max(1) as f64);
        let mut t = Tensor::zeros(shape);
        t.data_mut().iter_mut().for_each(|x| *x = rng.range(-bound, bound));
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_enforced() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn grads_mirror_params() {
        let mut g = ParamGroup::new("g", GroupTag::Head);
        g.push("w", Tensor::zeros(&[3, 4]));
        g.push("b", Tensor::zeros(&[3]));
        for (p, d) in g.params().iter().zip(g.grads()) {
            assert_eq!(p.shape(), d.shape());
        }
        assert_eq!(g.index_of("b"), Some(1));
        assert_eq!(g.num_values(), 15);
    }

    #[test]
    fn flat_roundtrip() {
        let mut g = ParamGroup::new("g", GroupTag::Vision);
        g.push("w", Tensor::zeros(&[2, 2]));
        let v = [1.0, 2.0, 3.0, 4.0];
        g.set_flat_params(&v).unwrap();
        assert_eq!(g.flat_params(), v);
        assert!(g.set_flat_params(&v[..3]).is_err());
    }
}
