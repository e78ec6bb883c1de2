//! Finite-difference spectrum of `-L~ = -½Δ + K~` and the eigen-expansions of
//! the heat kernel, the semigroup `P_t` and the ground-state projection.

pub mod decomposition;
pub mod grid;
pub mod io;
pub mod lanczos;
pub mod linalg;
pub mod operator;

pub use decomposition::{
    decompose, decompose_checked, eigenfunction_envelope_check, eigs_smallest, envelope_check_with,
    BoxStability, EnvelopeCheck, HeatKernel, SpectralDecomposition,
};
pub use grid::Grid;
pub use operator::{discretize, discretize_with_offset, DiscreteOperator};
