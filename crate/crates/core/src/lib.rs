//! Matrix-free additive multilevel solvers for complex-scaled Poisson and
//! Helmholtz problems on dynamically adaptive spacetrees.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! parsing and the command line runner live in the `mgtree` companion crate.
//!
//! The building blocks, bottom-up:
//!
//! * [`elemops`] turns PDE coefficients into per-cell complex operators.
//! * [`spacetree`] stores the 3-partitioned multiscale grid and drives the
//!   depth-first traversal with its vertex/cell events.
//! * [`transfer`] holds the p-linear prolongation, restriction and injection.
//! * [`kernels`] are the element-wise residual/diagonal accumulations and the
//!   Jacobi update.
//! * [`cycles`] implements the additive multigrid family (textbook, bottom-up
//!   FAS, single-sweep top-down FAS and its BPX variant) and the relaxation
//!   policies.
//! * [`amr`] is the feature-based refine/erase criterion.
//! * [`problems`] defines the benchmark right-hand sides and shift fields.
//! * [`oracle`] is a dense reference implementation used by the tests.
//! * [`solver`] ties everything into a sweep loop with norm reporting.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod amr;
pub mod cycles;
pub mod elemops;
mod error;
pub mod kernels;
pub mod norms;
pub mod oracle;
pub mod problems;
pub mod solver;
pub mod spacetree;
pub mod transfer;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Complex scalar used for unknowns, mesh widths and relaxation factors.
pub type C64 = Complex64;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 4;

/// Integer lattice position of a cell or vertex on one level. Components
/// beyond the active dimension are zero.
pub type Index = [u32; MAX_DIM];
