//! Central finite-difference gradient checking, always in 64-bit.
//!
//! Every backward rule in this crate is validated against these helpers;
//! the acceptance suite re-runs them over randomized instances.

/// Central difference of a scalar function at every coordinate of `x`.
pub fn central_diff<F>(f: &F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    (0..x.len()).map(|i| central_diff_at(f, x, i, h)).collect()
}

/// Central difference at a single coordinate.
pub fn central_diff_at<F>(f: &F, x: &[f64], i: usize, h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Worst relative error between analytic and numeric gradients.
///
/// Per element: `|a - n| / max(|a|, |n|, floor)`. The floor turns the test
/// into an absolute comparison for near-zero gradients, where a pure ratio
/// would amplify finite-difference noise.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Default floor used throughout: gradients below 1e-3 in magnitude are
/// compared absolutely at 1e-7 (= 1e-4 * floor).
pub const REL_FLOOR: f64 = 1e-3;

/// The spec tolerance for all gradient checks.
pub const GRAD_RTOL: f64 = 1e-4;

/// Step size for central differences.
pub const GRAD_H: f64 = 1e-4;
