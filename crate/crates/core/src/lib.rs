pub mod cli;
pub mod config;
pub mod consts;
pub mod error;
pub mod grid;
pub mod interp;
pub mod kernels;
pub mod lagrange;
pub mod lattice;
pub mod quad;
pub mod specfun;
pub mod symbol;

pub use error::{Error, Result};
