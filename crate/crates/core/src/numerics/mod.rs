//! Matrix kernels, activations, the Adam update and a gradient checker.

mod activation;
mod adam;
mod dense;
pub mod gradcheck;
mod sparse;

pub use activation::{logistic, prelu, prelu_backward, softplus};
pub use adam::{adam_step, AdamConfig, AdamState, ParamTensor};
pub use dense::{dot, matmul, squared_distance, DenseMatrix};
pub use gradcheck::{finite_difference_check, relative_error};
pub use sparse::{spmm, CsrMatrix};
