//! Numerical gradient checking.
//!
//! Central finite differences in `f64` are the ground truth every analytic
//! gradient in this crate is validated against. The helpers live in the
//! library (not a test module) so that layer tests, model tests, and the
//! acceptance suite can all share one oracle.

/// Central finite-difference gradient of `f` at `x` with half-step `step`:
/// `g_i ≈ (f(x + step·e_i) − f(x − step·e_i)) / (2·step)`.
///
/// `f` is called `2·len(x)` times and must be deterministic.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "numeric_gradient: step must be positive, got {step}");
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + step;
        let up = f(&point);
        point[i] = orig - step;
        let down = f(&point);
        point[i] = orig;
        grad.push((up - down) / (2.0 * step));
    }
    grad
}

/// Largest elementwise relative error between two gradients:
/// `max_i |a_i − n_i| / max(|a_i|, |n_i|, 1)`.
///
/// The `1` in the denominator keeps near-zero components comparable on an
/// absolute scale instead of amplifying round-off.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(
        analytic.len(),
        numeric.len(),
        "max_relative_error: gradient lengths differ, {} vs {}",
        analytic.len(),
        numeric.len()
    );
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let denom = a.abs().max(n.abs()).max(1.0);
        worst = worst.max((a - n).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact_to_first_order() {
        // f(x) = Σ x_i² → ∇f = 2x.
        let x = [1.0, -2.0, 0.5];
        let g = numeric_gradient(|p| p.iter().map(|v| v * v).sum(), &x, 1e-5);
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - 2.0 * xi).abs() < 1e-9, "got {gi}, want {}", 2.0 * xi);
        }
    }

    #[test]
    fn relative_error_uses_unit_floor() {
        // Tiny absolute disagreement near zero should not explode.
        assert!(max_relative_error(&[1e-12], &[0.0]) < 1e-11);
        // Large values are compared relatively.
        let e = max_relative_error(&[100.0], &[101.0]);
        assert!((e - 1.0 / 101.0).abs() < 1e-12);
    }
}
