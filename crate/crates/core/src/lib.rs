//! Generalized Bäcklund–Darboux transformation (GBDT) for the
//! non-isospectral canonical system
//!
//! ```text
//! w_x(x, z) = i λ J H(x) w(x, z),    λ = (z - x)⁻¹,    w(0, z) = I
//! ```
//!
//! The crate evolves GBDT triples `(A, S, Π)`, builds transformed
//! Hamiltonians `H̃` and jump matrices `R̃` (numerically for a general
//! Hamiltonian, in closed form for the rank-one base family), checks the
//! Riemann–Hilbert jump relations `W₊ = W₋ R²` by integrating fundamental
//! solutions up to the real axis, and recovers `(H̃, R̃)` from a scalar
//! rational inner function.

// `!(a < b)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod exec;
pub mod explicit;
pub mod inverse;
pub mod json;
pub mod linalg;
pub mod ode;
pub mod rh;
pub mod types;

pub use error::{GbdtError, Result};
pub use exec::Execution;
pub use num_complex::Complex64;
pub use types::{
    check_material_identity, check_structure, GbdtTriple, HamiltonianField, HamiltonianKind, ResidualReport,
    SignatureMatrix, StructureKind,
};

/// Dense complex matrix used for every matrix quantity.
pub type CMat = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<Complex64>;
