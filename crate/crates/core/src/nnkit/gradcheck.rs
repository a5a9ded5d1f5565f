use alloc::vec::Vec;

/// Central finite differences of `f` at `x` with step `h`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = f(&xp);
            xp[i] = orig - h;
            let down = f(&xp);
            xp[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Largest `|a - n| / max(1, |n|)` over all coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> GradCheckReport {
    let mut rep = GradCheckReport { max_error: 0.0, worst_index: 0, checked: analytic.len().min(numeric.len()) };
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let e = (a - n).abs() / n.abs().max(1.0);
        if e > rep.max_error || e.is_nan() {
            rep.max_error = e;
            rep.worst_index = i;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let x = [1.0, -2.0, 0.5];
        let num = central_difference(|v| v.iter().map(|a| a * a).sum(), &x, 1e-5);
        let ana: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        assert!(max_relative_error(&ana, &num).max_error < 1e-8);
    }

    #[test]
    fn reports_worst_coordinate() {
        let r = max_relative_error(&[1.0, 2.0, 3.0], &[1.0, 2.5, 3.0]);
        assert_eq!(r.worst_index, 1);
        assert!((r.max_error - 0.2).abs() < 1e-12);
    }
}
