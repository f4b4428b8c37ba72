//! Adversarial training versus weight decay as robustness mechanisms:
//! logistic regression and a small bias-free CNN, the usual white-box and
//! L0 attacks, and an evaluation harness that sweeps attack strength.

// `!(x >= 0.0)` is how argument checks reject NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]

pub mod attacks;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Shape2D, Tensor};
