use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Per-dimension affine normalization of delta vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Zero mean, unit variance per dimension; constant dimensions keep scale 1.
    pub fn fit(rows: &[&[f64]], dim: usize) -> Self {
        let mut mean = vec![0.0; dim];
        let mut count = 0usize;
        for seq in rows {
            for row in seq.chunks(dim) {
                mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
                count += 1;
            }
        }
        if count == 0 {
            return Self::identity(dim);
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; dim];
        for seq in rows {
            for row in seq.chunks(dim) {
                for k in 0..dim {
                    let d = row[k] - mean[k];
                    var[k] += d * d;
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = math::sqrt(v / count as f64);
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Normalizes rows laid out back to back.
    pub fn apply(&self, rows: &[f64]) -> Vec<f64> {
        let dim = self.mean.len();
        rows.iter().enumerate().map(|(j, x)| (x - self.mean[j % dim]) / self.std[j % dim]).collect()
    }

    pub fn apply_in_place(&self, rows: &mut [f64]) {
        let dim = self.mean.len();
        rows.iter_mut().enumerate().for_each(|(j, x)| *x = (*x - self.mean[j % dim]) / self.std[j % dim]);
    }

    pub fn invert_in_place(&self, rows: &mut [f64]) {
        let dim = self.mean.len();
        rows.iter_mut().enumerate().for_each(|(j, x)| *x = *x * self.std[j % dim] + self.mean[j % dim]);
    }
}
