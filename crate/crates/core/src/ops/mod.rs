//! Superoperator algebra on a finite-dimensional Hilbert space.

mod expm;
mod kraus;
mod operator;
mod spectral;
mod superop;

pub use expm::expm;
pub use kraus::{effective_hamiltonian, kraus_step, KrausStep};
pub use operator::{CMatrix, CVector, Operator};
pub use spectral::{drazin, steady_state, steady_state_with, Tolerances};
pub use superop::{
    commutator_superop, dissipator, jump_superop, liouvillian, no_jump_generator, Superoperator, HERMITIAN_TOL,
};

pub(crate) use expm::same_step;
pub(crate) use operator::{I, ONE, ZERO};
pub(crate) use spectral::{group_inverse, refine_kernel, schur_form, unique_null_vector};
pub(crate) use superop::{check_dims, check_hermitian};
