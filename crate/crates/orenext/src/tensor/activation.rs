//! Smooth nonlinearities and the logistic function.

/// GELU, tanh approximation:
/// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
pub fn gelu(x: f64) -> f64 {
    const K: f64 = 0.7978845608028654; // sqrt(2/pi)
    0.5 * x * (1.0 + (K * (x + 0.044715 * x * x * x)).tanh())
}

/// Derivative of [`gelu`].
pub fn gelu_grad(x: f64) -> f64 {
    const K: f64 = 0.7978845608028654;
    let u = K * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = K * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::finite_diff_grad;

    #[test]
    fn gelu_fixed_points() {
        assert_eq!(gelu(0.0), 0.0);
        // Large |x|: behaves like identity on the right, like zero on the left.
        assert!((gelu(10.0) - 10.0).abs() < 1e-9);
        assert!(gelu(-10.0).abs() < 1e-9);
        // Odd-ish midpoint check: gelu(1) from the tanh form.
        assert!((gelu(1.0) - 0.8411919906082768).abs() < 1e-12);
    }

    #[test]
    fn gelu_grad_matches_finite_differences() {
        for (k, x) in [-3.0, -1.0, -0.3, 0.0, 0.4, 1.2, 2.5].iter().enumerate() {
            let num = finite_diff_grad(&mut |v| Ok(gelu(v[0])), &[*x], 1e-6).unwrap()[0];
            let ana = gelu_grad(*x);
            assert!((num - ana).abs() < 1e-8, "probe {k} at x={x}: {ana} vs {num}");
        }
    }

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(800.0) > 1.0 - 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-12);
        for z in [-5.0, -1.0, 0.3, 4.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
    }
}
