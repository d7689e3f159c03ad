//! Finite orthogonal group representations and symmetrization operators.

mod rep;
mod symmetrize;

pub use rep::{CheckItem, GroupCheckReport, GroupRep, GroupSpec, CLOSURE_TOL, ORTHOGONALITY_TOL};
pub use symmetrize::{
    augment, dfe, equivariance_residual, equivariant_wrap, symmetrize_field_at,
    symmetrize_function, EquivariantWrapper,
};
