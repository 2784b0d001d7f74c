//! Sector-sparse tensor algebra and a parallel two-site DMRG solver.
//!
//! The crate is organised bottom-up:
//!
//! * [`qn`], [`sector`] – quantum-number bases and block-sparse matrices with
//!   the sector-table / task-table / execute / self-check layering.
//! * [`gemm`], [`sbmm4s`] – column-major GEMM backends and the accumulating
//!   batched product `B += α Σᵢ Lᵢ A Rᵢᵀ` without a reduction pass.
//! * [`mazerunner`] – batched discovery-then-consumption task pool.
//! * [`ttcache`] – bump-offset arena driven by depth-first traversal of a
//!   data dependency tree.
//! * [`model`] – Hamiltonians, integral files and operator factorization.
//! * [`dmrg`] – blocks, effective Hamiltonian, Lanczos, renormalization,
//!   sweeps and checkpoints.
//! * [`oracle`] – dense and sparse exact-diagonalization references.

pub mod dmrg;
pub mod error;
pub mod gemm;
pub mod hilbert;
pub mod mazerunner;
pub mod model;
pub mod oracle;
pub mod qn;
pub mod sbmm4s;
pub mod sector;
pub mod ttcache;

pub use error::{ArenaError, CheckpointError, DmrgError, KernelError, ModelError, SectorError};
pub use hilbert::hilbert_dimension;
pub use qn::{QuantumNumber, SectorBasis};
pub use sector::{SectorMatrix, SectorSpec};
