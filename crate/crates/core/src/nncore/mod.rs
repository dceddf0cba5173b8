//! Tensors, layer kernels with backward passes, and gradient checking.

pub mod gradcheck;
pub mod layer;
pub mod ops;
pub mod tensor;

pub use gradcheck::{check_gradient, check_scalar_gradient, grad_check, Differentiable, Evaluation, GradCheckReport};
pub use layer::{ActivationKind, ConvGeometry, LayerSpec};
pub use ops::{apply_activation, conv2d, conv_transpose2d, dense, dropout, instance_norm};
pub use tensor::{Real, Tensor4};
