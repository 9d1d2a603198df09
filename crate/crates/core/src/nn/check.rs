//! Central-difference gradient checking.

use alloc::vec::Vec;

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(x);
        x[i] = orig - h;
        let down = f(x);
        x[i] = orig;
        g.push((up - down) / (2.0 * h));
    }
    g
}

/// Largest relative error between an analytic and a numeric gradient.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic.iter().zip(numeric).map(|(&a, &b)| relative_error(a, b, floor)).fold(0.0, f64::max)
}
