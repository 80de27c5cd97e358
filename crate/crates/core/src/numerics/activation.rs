use super::dense::DenseMatrix;

/// Parametric ReLU: `x` where `x ≥ 0`, `slope·x` otherwise.
pub fn prelu(x: &DenseMatrix, slope: f64) -> DenseMatrix {
    let mut out = x.clone();
    out.as_mut_slice().iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v *= slope;
        }
    });
    out
}

/// Backward pass of [`prelu`]. At exactly zero the positive branch is used.
///
/// Returns `(grad_x, grad_slope)`.
pub fn prelu_backward(x: &DenseMatrix, slope: f64, upstream: &DenseMatrix) -> (DenseMatrix, f64) {
    assert_eq!(x.shape(), upstream.shape(), "prelu_backward shape");
    let mut grad_x = upstream.clone();
    let mut grad_slope = 0.0;
    for (g, &xv) in grad_x.as_mut_slice().iter_mut().zip(x.as_slice()) {
        if xv < 0.0 {
            grad_slope += *g * xv;
            *g *= slope;
        }
    }
    (grad_x, grad_slope)
}

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow for large `x` or precision loss for very negative `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_slope_is_identity() {
        let x = DenseMatrix::from_rows(&[vec![-1.5, 0.0, 2.0]]);
        assert_eq!(prelu(&x, 1.0), x);
        let up = DenseMatrix::from_rows(&[vec![0.3, -0.2, 0.7]]);
        assert_eq!(prelu_backward(&x, 1.0, &up).0, up);
    }

    #[test]
    fn negative_branch() {
        let x = DenseMatrix::from_rows(&[vec![-2.0]]);
        assert_eq!(prelu(&x, 0.25).as_slice(), &[-0.5]);
    }

    #[test]
    fn zero_uses_positive_branch() {
        let x = DenseMatrix::from_rows(&[vec![0.0]]);
        let up = DenseMatrix::from_rows(&[vec![2.0]]);
        let (gx, gs) = prelu_backward(&x, 0.25, &up);
        assert_eq!(gx.as_slice(), &[2.0]);
        assert_eq!(gs, 0.0);
    }

    #[test]
    fn backward_matches_central_differences() {
        let xs = [-1.3, -0.4, 0.6, 2.1];
        let slope = 0.3;
        let h = 1e-6;
        for &xv in &xs {
            let f = |x: f64, a: f64| if x >= 0.0 { x } else { a * x };
            let x = DenseMatrix::from_rows(&[vec![xv]]);
            let up = DenseMatrix::from_rows(&[vec![1.0]]);
            let (gx, gs) = prelu_backward(&x, slope, &up);
            let fd_x = (f(xv + h, slope) - f(xv - h, slope)) / (2.0 * h);
            let fd_a = (f(xv, slope + h) - f(xv, slope - h)) / (2.0 * h);
            assert!((gx.as_slice()[0] - fd_x).abs() / fd_x.abs().max(1e-12) < 1e-6);
            if xv < 0.0 {
                assert!((gs - fd_a).abs() / fd_a.abs() < 1e-6);
            } else {
                assert_eq!(gs, 0.0);
            }
        }
    }

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(logistic(1000.0), 1.0);
        assert_eq!(logistic(-1000.0), 0.0);
        assert!((logistic(2.0) - 0.8807970779).abs() < 1e-10);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1e4), 1e4);
        assert!(softplus(-1e4) >= 0.0 && softplus(-1e4) < 1e-300);
        for x in [-3.0, -0.5, 0.7, 4.0] {
            assert!((softplus(x) - softplus(-x) - x).abs() < 1e-14);
            assert!((softplus(-x) + logistic(x).ln()).abs() < 1e-14);
        }
    }
}
