//! Scharr responses of a single weight, then the configuration entropy of
//! 36 ones packed into a block versus spread over the matrix.
//!
//! cargo run --example scharr_gradient

use entroreg::entropy::{config_entropy_with_grad, rayleigh_quotient};
use entroreg::{config_entropy, weight_matrix_gradient, Matrix};

fn show(name: &str, m: &Matrix) {
    println!("{name}:");
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:7.4}")).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() {
    let mut impulse = Matrix::zeros(5, 5);
    impulse[(2, 2)] = 1.0;
    let (gx, gy) = weight_matrix_gradient(&impulse);
    show("Gx * impulse", &gx);
    show("Gy * impulse", &gy);
    println!("H_C(impulse) = {:+.6}\n", config_entropy(&impulse));

    let mut block = Matrix::zeros(20, 20);
    let mut spread = Matrix::zeros(20, 20);
    for i in 0..6 {
        for j in 0..6 {
            block[(7 + i, 7 + j)] = 1.0;
            spread[(1 + 3 * i, 1 + 3 * j)] = 1.0;
        }
    }
    for (name, w) in [("block", &block), ("spread", &spread)] {
        println!(
            "{name:>6}: sum|w| = {}  H_C = {:+.6}  Rayleigh = {:.6}",
            entroreg::tensor::sum_abs(w),
            config_entropy(w),
            rayleigh_quotient(w).unwrap()
        );
    }

    println!("\nscale invariance of the block:");
    for alpha in [1e-3, 0.5, 7.0, 1e3, -2.0] {
        println!("  alpha = {alpha:>7}: H_C = {:+.12}", config_entropy(&block.scale(alpha)));
    }

    let r = config_entropy_with_grad(&block);
    // homogeneous of degree zero, so the gradient is orthogonal to W
    println!("<W, dH/dW> = {:.3e}", block.dot(&r.grad));
    println!(
        "dH/dW at the block center {:+.5}, corner {:+.5}, just outside {:+.5}",
        r.grad[(9, 9)],
        r.grad[(7, 7)],
        r.grad[(6, 6)]
    );
}
