//! Scale-invariant configuration entropy as a sparsity regularizer, plus the
//! LeNet300/MNIST harness used to measure how well it concentrates weights.
//!
//! The building blocks are usable on their own:
//!
//! - [`tensor`]: dense matrices, 3x3 same-shape convolution, GEMM wrappers
//! - [`entropy`]: the configuration-entropy loss and its analytic gradient
//! - [`mlp`]: a fully connected ReLU network trained with Adam
//! - [`data`]: IDX parsing, MNIST loading, deterministic minibatches
//! - [`pruning`]: sensitivity pruning sweeps and cross-run aggregation
//! - [`synthetic`]: binary matrices that `L_p` norms cannot tell apart
//! - [`experiment`]: the orchestration behind the `entroreg` binary
//!
//! ```
//! use entroreg::{config_entropy, Matrix};
//!
//! let mut w = Matrix::zeros(8, 8);
//! w[(3, 3)] = 2.0;
//! w[(3, 4)] = -1.0;
//! let h = config_entropy(&w);
//! let scaled = config_entropy(&w.scale(1e3));
//! assert!((h - scaled).abs() < 1e-9);
//! ```

pub mod checkpoint;
pub mod data;
pub mod entropy;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod mlp;
pub mod pruning;
pub mod report;
pub mod synthetic;
pub mod tensor;

pub use entropy::{config_entropy, config_entropy_with_grad, total_sparsity_loss, weight_matrix_gradient, SCHARR};
pub use error::{Error, IdxError, Result};
pub use mlp::{train, MlpParams, TrainingConfig, LENET300_SIZES};
pub use tensor::{conv2d_same, conv2d_same_adjoint, Kernel3, Matrix};
