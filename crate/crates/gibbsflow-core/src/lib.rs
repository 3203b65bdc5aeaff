//! Thermodynamic formalism for suspension semiflows over piecewise expanding
//! Markov interval maps.
//!
//! The crate is `no_std` (with `alloc`). Enable `std` for `std::error::Error`
//! integration and `parallel` for rayon-backed loops.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x < y)` is used on purpose so that NaN fails range checks
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

extern crate alloc;

pub mod dolgopyat;
pub mod error;
pub mod expr;
pub mod flow;
pub mod gibbs;
pub mod grid;
pub mod operator;
pub mod presets;
pub mod system;
pub mod uni;

pub use error::{DolgopyatError, ExprError, FlowError, GibbsError, OperatorError, SystemError, UniError};
pub use expr::Expr;
pub use grid::{Grid, GridFunction};
pub use operator::{Discretization, EigenData};
pub use system::{Cylinder, MarkovSystem, Piecewise, SystemSpec};

pub use num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> alloc::vec::Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> alloc::vec::Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
