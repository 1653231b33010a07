//! Dense n-dimensional `f32`/`f64` tensors with tape-based reverse-mode
//! automatic differentiation.
//!
//! The primitive set covers what small convolutional / MLP-Mixer style
//! networks need: element-wise arithmetic, matmul and linear layers, NCHW
//! convolution (and kernel==stride transposed convolution), max pooling,
//! layer and instance normalisation, GELU, PReLU, reshape/permute/concat,
//! and scalar reductions. Arbitrary external linear operators can be spliced
//! into a graph with [`Graph::linear_map`] as long as their adjoint is given.
//!
//! ```
//! use ndauto::{Graph, Params, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.input(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap().with_requires_grad(true));
//! let y = g.sum_of_squares(x).unwrap();
//! let grads = g.backward(y, &mut Params::new()).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0, 6.0]);
//! ```

pub mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
pub mod init;
mod kernels;
mod real;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use graph::{Gradients, Graph, Var, NORM_EPS};
pub use real::{gemm, Real};
pub use tensor::{ParamId, Params, Tensor};
