//! Numerical laboratory for finite-rank Lieb–Thirring constants `L^(N)_{γ,d}`
//! and the critical CLR quantities `ℓ^(N)_{0,d}`.

pub mod birman_schwinger;
pub mod error;
pub mod functional;
pub mod grid;
pub mod kdv;
pub mod profiles;
pub mod scf;
pub mod schrodinger;
pub mod tridiag;
pub mod verify;

pub use error::{LabError, Result};
pub use grid::{Grid, Grid1D, PotentialField, RadialGrid};
