//! Real tensor algebra, reverse-mode differentiation, special functions and
//! seeded sampling.

pub mod autodiff;
mod complex;
mod rng;
mod special;
mod tensor;

pub use autodiff::{Gradients, Graph, Node, Op, Var};
pub use complex::{c2r, r2c, ComplexMatrix};
pub use rng::Rng;
pub use special::bessel_j0;
pub use tensor::RealTensor;
