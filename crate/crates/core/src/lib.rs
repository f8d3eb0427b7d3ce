//! Model reduction for controlled open quantum systems in the Heisenberg
//! picture: observable Krylov spaces, finite-dimensional ∗-algebra
//! decomposition, reduced Lindblad generators and trajectory comparison.

pub mod central_spin;
pub mod error;
pub mod krylov;
pub mod lindblad;
pub mod model_file;
pub mod linalg;
pub mod operator;
pub mod propagation;
pub mod reduction;
pub mod star_algebra;
pub mod workflow;

pub use error::{QmrError, Result};
