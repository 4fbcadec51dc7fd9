//! Fields on `R^N` backed by expressions, and the operators acting on them.

mod fields;
mod ops;
mod verify;

pub use fields::{
    liouville, shifted_liouville, OneFormField, ScalarField, SmoothMap, Tensor11Eval, Tensor11Field, TensorJet,
    TwoFormField, VectorField, VectorFieldEval, VectorJet,
};
pub use ops::{
    bracket_jets, conformal_hamiltonian_residual, contract_twoform, hamiltonian_field, hamiltonian_vf,
    lagrange_residual, lagrange_residual_with, lie_bracket, lie_oneform, lie_scalar, lie_tensor11, nijenhuis,
    nijenhuis_jets, pullback_twoform, sode_residual, theta_lagrangian, theta_lagrangian_field,
};
pub use verify::{
    verify_tangent_structure, AxiomResult, RankSummary, VerificationReport, VerifyError, VerifyOptions,
    DELTA_IN_IMAGE, FLOW_LIMIT, LIE_DELTA_S, NIJENHUIS, SODE, S_SQUARED,
};
