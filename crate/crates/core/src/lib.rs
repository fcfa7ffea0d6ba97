pub mod bilinear;
pub mod endpoint;
pub mod error;
pub mod fields;
pub mod grid;
pub mod par;
pub mod quad;
pub mod kernels;
pub mod linear;
pub mod special;
pub mod symbols;
pub mod weights;

pub use error::{Error, Result};
pub use num_complex::Complex64;
