//! Central finite-difference checking. Re-runs the caller's forward pass at
//! perturbed parameter values, never touching the tape's backward path, so it
//! stands as an independent oracle for analytic gradients.

/// Central differences `(f(x+h) - f(x-h)) / 2h` for every element of every
/// parameter vector. `forward` must rebuild the computation from raw values
/// deterministically.
pub fn central_diff(
    forward: &mut dyn FnMut(&[Vec<f64>]) -> f64,
    params: &[Vec<f64>],
    h: f64,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut grad = vec![0.0; params[p].len()];
        for i in 0..params[p].len() {
            let mut plus = params.to_vec();
            plus[p][i] += h;
            let fp = forward(&plus);
            let mut minus = params.to_vec();
            minus[p][i] -= h;
            let fm = forward(&minus);
            grad[i] = (fp - fm) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}

/// Worst relative error between two gradient vectors,
/// `|a - n| / max(|a|, |n|, 1e-6)` elementwise.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(
        analytic.len(),
        numeric.len(),
        "max_rel_error: length mismatch {} vs {}",
        analytic.len(),
        numeric.len()
    );
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_diff_matches_polynomial_derivative() {
        // f(x) = x0^2 + 3 x1 => df = [2 x0, 3]
        let mut f = |vals: &[Vec<f64>]| vals[0][0] * vals[0][0] + 3.0 * vals[0][1];
        let grads = central_diff(&mut f, &[vec![1.5, -0.5]], 1e-5);
        assert!((grads[0][0] - 3.0).abs() < 1e-9);
        assert!((grads[0][1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rel_error_handles_zero_grads() {
        assert_eq!(max_rel_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }
}
