//! Numerical machinery for touching a function on the unit ball with
//! sliding paraboloids: masked ball grids, Pucci extremal operators, an
//! analytic case catalog, discrete solvers, separable envelope transforms,
//! contact sets, measure-decay estimation and ball-covering checks.

pub mod catalog;
pub mod contact;
pub mod covering;
pub mod density;
pub mod error;
pub mod gf01;
pub mod grid;
pub mod measure;
pub mod operators;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
