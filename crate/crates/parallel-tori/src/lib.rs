//! Doubly periodic minimal tori with parallel ends: Weierstrass data on
//! genus-one curves, their periods, boundary charts, a period solver and meshes.

pub mod boundary;
pub mod cli;
pub mod curve;
pub mod error;
pub mod family;
pub mod mesh;
pub mod numerics;
pub mod periods;
pub mod solver;

pub use error::{Error, Result};
pub use numerics::C64;
