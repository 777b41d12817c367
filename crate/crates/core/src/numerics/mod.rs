//! Tensors, the layers of the segmentation network, a reverse-mode tape,
//! Adam, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod graph;
mod init;
mod kernels;
mod real;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, relative_error, FiniteDiffConfig, GradCheckEntry, GradCheckReport};
pub use graph::{Gradients, GradientsOf, Graph, Graph64, GraphOf, Var};
pub use init::glorot_uniform;
pub use real::Real;
pub use tensor::{Tensor, Tensor64, TensorOf};
