//! Central finite-difference checks of the analytic gradients.
//!
//! The gradient routine under test is passed in as a function so that a
//! deliberately broken implementation can be checked against the same suite.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entropy::{config_entropy, config_entropy_with_grad};
use crate::mlp::{init_params, loss_and_grads, Gradients, MlpParams};
use crate::tensor::Matrix;

pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

/// Gradient magnitudes below this are compared on an absolute scale; finite
/// differences at `h = 1e-6` carry roughly `1e-10` of rounding noise.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Shapes exercised by the entropy suite.
pub const ENTROPY_SHAPES: [(usize, usize); 3] = [(3, 3), (8, 8), (10, 30)];

/// Widths of the small analog of LeNet300.
pub const TINY_SIZES: [usize; 4] = [4, 2, 2, 2];

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

pub fn step_for(value: f64) -> f64 {
    1e-6 * value.abs().max(1.0)
}

/// Largest relative error between `grad` and central differences of `f`.
pub fn check_against_central_differences(
    point: &[f64],
    grad: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert_eq!(point.len(), grad.len());
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let v = point[i];
        let h = step_for(v);
        x[i] = v + h;
        let plus = f(&x);
        x[i] = v - h;
        let minus = f(&x);
        x[i] = v;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    worst
}

/// One line of a gradient-check report.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckEntry {
    pub name: String,
    pub cases: usize,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.max_relative_error <= self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.entries
            .iter()
            .fold(0.0, |m, e| m.max(e.max_relative_error))
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let verdict = if e.max_relative_error <= self.tolerance {
                "ok"
            } else {
                "FAIL"
            };
            writeln!(
                f,
                "{:<28} cases={:<4} max_rel_err={:.3e} {}",
                e.name, e.cases, e.max_relative_error, verdict
            )?;
        }
        write!(
            f,
            "gradcheck {} (tolerance {:.0e})",
            if self.passed() { "PASSED" } else { "FAILED" },
            self.tolerance
        )
    }
}

pub type EntropyGradFn = fn(&Matrix) -> Matrix;
pub type NetworkGradFn = fn(&MlpParams, &Matrix, &[u8], bool) -> Gradients;

pub fn analytic_entropy_grad(w: &Matrix) -> Matrix {
    config_entropy_with_grad(w).grad
}

pub fn analytic_network_grad(p: &MlpParams, x: &Matrix, labels: &[u8], sparse: bool) -> Gradients {
    loss_and_grads(p, x, labels, sparse).1
}

/// Worst error for one matrix.
pub fn entropy_case(w: &Matrix, grad_fn: EntropyGradFn) -> f64 {
    let g = grad_fn(w);
    let (rows, cols) = w.shape();
    check_against_central_differences(w.as_slice(), g.as_slice(), |x| {
        config_entropy(&Matrix::from_vec(rows, cols, x.to_vec()).unwrap())
    })
}

/// Random uniform(-1, 1) matrices of each shape in [`ENTROPY_SHAPES`].
pub fn entropy_suite(cases_per_shape: usize, seed: u64, grad_fn: EntropyGradFn) -> Vec<GradcheckEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ENTROPY_SHAPES
        .iter()
        .map(|&(r, c)| {
            let worst = (0..cases_per_shape)
                .map(|_| {
                    let w = Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
                    entropy_case(&w, grad_fn)
                })
                .fold(0.0, f64::max);
            GradcheckEntry {
                name: format!("config_entropy {r}x{c}"),
                cases: cases_per_shape,
                max_relative_error: worst,
            }
        })
        .collect()
}

/// A fixed batch of three inputs for the tiny network.
pub fn tiny_batch(seed: u64) -> (Matrix, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x = Matrix::from_fn(3, TINY_SIZES[0], |_, _| rng.gen_range(-1.0..1.0));
    let labels = (0..3).map(|_| rng.gen_range(0..2u8)).collect();
    (x, labels)
}

/// Worst error over every parameter of the tiny network.
pub fn network_case(params: &MlpParams, x: &Matrix, labels: &[u8], sparse: bool, grad_fn: NetworkGradFn) -> f64 {
    let g = grad_fn(params, x, labels, sparse);
    let point = params.flatten();
    let mut probe = params.clone();
    check_against_central_differences(&point, &g.flatten(), |v| {
        for (i, &val) in v.iter().enumerate() {
            *probe.param_slot(i) = val;
        }
        loss_and_grads(&probe, x, labels, sparse).0.total()
    })
}

pub fn network_suite(cases: usize, seed: u64, grad_fn: NetworkGradFn) -> Vec<GradcheckEntry> {
    [false, true]
        .iter()
        .map(|&sparse| {
            let worst = (0..cases as u64)
                .map(|k| {
                    let mut p = init_params(&TINY_SIZES, seed.wrapping_add(k));
                    // nonzero biases so every parameter is exercised
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k) ^ 0xb1a5);
                    for layer in &mut p.layers {
                        for b in &mut layer.bias {
                            *b = rng.gen_range(-0.2..0.2);
                        }
                    }
                    let (x, labels) = tiny_batch(seed.wrapping_add(k));
                    network_case(&p, &x, &labels, sparse, grad_fn)
                })
                .fold(0.0, f64::max);
            GradcheckEntry {
                name: format!(
                    "network 4-2-2-2 {}",
                    if sparse { "with penalty" } else { "cross-entropy" }
                ),
                cases,
                max_relative_error: worst,
            }
        })
        .collect()
}

/// Full suite with injectable gradient routines.
pub fn run_with(entropy_grad: EntropyGradFn, network_grad: NetworkGradFn) -> GradcheckReport {
    let mut entries = entropy_suite(17, 0xC0FFEE, entropy_grad);
    entries.extend(network_suite(10, 0xBEEF, network_grad));
    GradcheckReport {
        tolerance: GRADCHECK_TOLERANCE,
        entries,
    }
}

/// Suite against the library's own gradients.
pub fn run() -> GradcheckReport {
    run_with(analytic_entropy_grad, analytic_network_grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flipped_entropy_grad(w: &Matrix) -> Matrix {
        config_entropy_with_grad(w).grad.scale(-1.0)
    }

    #[test]
    fn default_suite_passes() {
        let report = run();
        assert!(report.passed(), "{report}");
        assert_eq!(report.entries.len(), 5);
    }

    #[test]
    fn sign_flip_is_caught() {
        let report = run_with(flipped_entropy_grad, analytic_network_grad);
        assert!(!report.passed());
        assert!(report.worst() > 1.0);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-9) - 1e-6).abs() < 1e-18);
    }
}
