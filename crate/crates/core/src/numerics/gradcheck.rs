//! Central finite-difference check for analytic gradients.

use rand::seq::index;
use rand::Rng;

use super::adam::ParamTensor;
use super::dense::DenseMatrix;

/// Magnitude below which errors are measured in absolute rather than relative terms.
pub const GRAD_SCALE_FLOOR: f64 = 1e-6;

/// Relative error between an analytic and a numerical derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(GRAD_SCALE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares `p.grad` against `(L(θ+h) − L(θ−h)) / 2h` on `probes` random coordinates
/// (all coordinates when `probes` covers the tensor) and returns the worst relative error.
///
/// `loss_fn` receives the perturbed value matrix; `p.grad` must already hold the
/// analytic gradient at `p.value`.
pub fn finite_difference_check<F, R>(
    mut loss_fn: F,
    p: &ParamTensor,
    probes: usize,
    h: f64,
    rng: &mut R,
) -> f64
where
    F: FnMut(&DenseMatrix) -> f64,
    R: Rng + ?Sized,
{
    let n = p.len();
    let coords: Vec<usize> = if probes >= n {
        (0..n).collect()
    } else {
        index::sample(rng, n, probes).into_vec()
    };
    let mut probe = p.value.clone();
    let mut worst = 0.0f64;
    for i in coords {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let plus = loss_fn(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let minus = loss_fn(&probe);
        probe.as_mut_slice()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(p.grad.as_slice()[i], numeric));
    }
    worst
}
