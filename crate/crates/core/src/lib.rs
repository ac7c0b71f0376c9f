//! Lattice wave equations through incidence-matrix factorizations.
//!
//! A Laplacian `L` on a lattice of spacing `a` is written as `L = B B†`.
//! The Hermitian matrix `H = (1/a)[[0, B], [B†, 0]]` then generates
//! Schrödinger dynamics whose vertex block obeys the discrete wave equation
//! `φ̈ = −(1/a²) L φ`. The modules build the lattice, the Laplacian, its
//! factor, the generator, initial states and classical evolution, plus the
//! convergence and conditioning studies used to validate them.

pub mod analysis;
pub mod error;
pub mod evolve;
pub mod hamiltonian;
pub mod incidence;
pub mod initstate;
pub mod laplacian;
pub mod lattice;
pub mod linalg;

pub use error::{Error, Result};
