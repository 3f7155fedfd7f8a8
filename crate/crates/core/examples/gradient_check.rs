//! Analytic gradients of the entropy loss and of a tiny 4-2-2-2 network
//! against central finite differences.
//!
//! cargo run --example gradient_check

use entroreg::gradcheck::{self, relative_error, step_for};
use entroreg::{config_entropy, config_entropy_with_grad, Matrix};

fn main() {
    // one coordinate by hand first
    let w = Matrix::from_rows(&[[0.3, -1.2, 0.0], [2.0, 0.7, -0.4], [0.1, 0.0, 1.5]]);
    let analytic = config_entropy_with_grad(&w).grad[(1, 1)];
    let h = step_for(w[(1, 1)]);
    let (mut plus, mut minus) = (w.clone(), w.clone());
    plus[(1, 1)] += h;
    minus[(1, 1)] -= h;
    let numeric = (config_entropy(&plus) - config_entropy(&minus)) / (2.0 * h);
    println!(
        "dH/dW[1,1]: analytic {analytic:+.10} numeric {numeric:+.10} rel err {:.2e}\n",
        relative_error(analytic, numeric)
    );

    let report = gradcheck::run();
    println!("{report}");
    std::process::exit(if report.passed() { 0 } else { 1 });
}
