//! Reverse-mode differentiation engine and the small dense linear algebra
//! used by every differentiable computation in the crate.

mod linalg;
mod mlp;
mod ops;
mod params;
mod tape;

pub use linalg::{cholesky, Matrix};
pub use mlp::{Mlp, MlpTrace};
pub use ops::{Eval, Op, Ops};
pub use params::{ParamGroup, ParamVector};
pub use tape::{grad, jacobian, AdError, Tape, Var};
