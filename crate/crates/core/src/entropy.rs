//! Configuration-entropy sparsity loss for weight matrices.
//!
//! For a weight matrix `W` the spatial gradient is the pair of Scharr
//! responses `(Gx * W, Gy * W)` (zero-padded, same shape). The loss is
//!
//! ```text
//! H_C(W) = 1/2 ln( 1/2 * sum(Gx*W)^2 + 1/2 * sum(Gy*W)^2 ) - ln( sum |W| )
//! ```
//!
//! which is invariant under `W -> a W` and smaller when the nonzero weights
//! are gathered into compact regions. This quantity is what gets added to the
//! training loss, so minimizing the loss drives configuration entropy down.

use crate::error::{Error, Result};
use crate::tensor::{conv2d_same, conv2d_same_adjoint, sum_abs, sum_sq, Kernel3, Matrix};

/// Additive guard inside both logarithms. Small enough that the scale
/// invariance error stays far below 1e-9 for scales down to 1e-3.
pub const LOG_GUARD: f64 = 1e-300;

/// The normalized Scharr derivative kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScharrPair {
    pub gx: Kernel3,
    pub gy: Kernel3,
}

pub const SCHARR: ScharrPair = ScharrPair {
    gx: Kernel3::new([
        [3.0 / 32.0, 0.0, -3.0 / 32.0],
        [10.0 / 32.0, 0.0, -10.0 / 32.0],
        [3.0 / 32.0, 0.0, -3.0 / 32.0],
    ]),
    gy: Kernel3::new([
        [3.0 / 32.0, 10.0 / 32.0, 3.0 / 32.0],
        [0.0, 0.0, 0.0],
        [-3.0 / 32.0, -10.0 / 32.0, -3.0 / 32.0],
    ]),
};

impl Default for ScharrPair {
    fn default() -> Self {
        SCHARR
    }
}

/// Value of the loss and its gradient with respect to the weights.
#[derive(Clone, Debug)]
pub struct ConfigEntropyResult {
    pub value: f64,
    pub grad: Matrix,
}

/// Spatial gradient of a weight matrix: `(Gx * w, Gy * w)`.
pub fn weight_matrix_gradient(w: &Matrix) -> (Matrix, Matrix) {
    (conv2d_same(w, &SCHARR.gx), conv2d_same(w, &SCHARR.gy))
}

#[inline]
fn entropy_from_parts(gradient_energy: f64, l1: f64) -> f64 {
    0.5 * (0.5 * gradient_energy + LOG_GUARD).ln() - (l1 + LOG_GUARD).ln()
}

/// Configuration entropy `H_C(w)` in nats.
pub fn config_entropy(w: &Matrix) -> f64 {
    let (dx, dy) = weight_matrix_gradient(w);
    entropy_from_parts(sum_sq(&dx) + sum_sq(&dy), sum_abs(w))
}

/// `H_C(w)` together with its exact gradient.
///
/// With `S = sum(Gx*w)^2 + sum(Gy*w)^2` and `A = sum |w|`:
/// `dH/dw = (Gx^T(Gx*w) + Gy^T(Gy*w)) / (S + 2 eps) - sign(w) / (A + eps)`,
/// taking `sign(0) = 0`.
pub fn config_entropy_with_grad(w: &Matrix) -> ConfigEntropyResult {
    let (dx, dy) = weight_matrix_gradient(w);
    let energy = sum_sq(&dx) + sum_sq(&dy);
    let l1 = sum_abs(w);
    let value = entropy_from_parts(energy, l1);

    let mut grad = conv2d_same_adjoint(&dx, &SCHARR.gx);
    grad.add_scaled(1.0, &conv2d_same_adjoint(&dy, &SCHARR.gy));
    let smooth_scale = 1.0 / (energy + 2.0 * LOG_GUARD);
    let l1_scale = 1.0 / (l1 + LOG_GUARD);
    for (g, &v) in grad.as_mut_slice().iter_mut().zip(w.as_slice()) {
        let sign = if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        };
        *g = *g * smooth_scale - sign * l1_scale;
    }
    ConfigEntropyResult { value, grad }
}

/// Discrete Rayleigh quotient `sum |grad w|^2 / sum w^2`. Diagnostic only.
pub fn rayleigh_quotient(w: &Matrix) -> Result<f64> {
    let denom = sum_sq(w);
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "Rayleigh quotient of an all-zero matrix is undefined".into(),
        ));
    }
    let (dx, dy) = weight_matrix_gradient(w);
    Ok((sum_sq(&dx) + sum_sq(&dy)) / denom)
}

/// Unweighted sum of `H_C` over the given weight matrices.
pub fn total_sparsity_loss<'a>(layers: impl IntoIterator<Item = &'a Matrix>) -> f64 {
    layers.into_iter().map(config_entropy).sum()
}
