#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analytic;
pub mod cell_sizing;
pub mod error;
pub mod harness;
pub mod policy;
pub mod power_opt;
mod quad;
pub mod sim;
pub mod speed;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/power-laws.md")]
    mod power_laws {}
    #[doc = include_str!("../../../book/src/cell-size.md")]
    mod cell_size {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
