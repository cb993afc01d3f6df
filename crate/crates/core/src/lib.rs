//! Numerical laboratory for the prion proliferation model with general
//! incidence: monomer ODE coupled to a size-structured polymer PDE.
//!
//! The numerical core is generic over [`Real`] (`f32`, `f64`); the aliases at
//! the crate root fix it to `f64`.

// NaN must fail validity checks, hence `!(x > 0)`; the QR port keeps its index loops
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod frag;
pub mod grid;
pub mod params;
pub mod pde;
pub mod profile;
pub mod real;
pub mod reduction;
pub mod stability;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use params::{FragKernel, InvalidParams, ModelParams};
pub use real::Real;
pub use transport::Scheme;

pub type Params = ModelParams<f64>;
pub type Grid = grid::SizeGrid<f64>;
pub type Density = grid::Density<f64>;
pub type Frag = frag::FragMatrix<f64>;
pub type Profile = profile::Profile<f64>;
