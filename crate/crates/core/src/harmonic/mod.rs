//! Harmonic-function candidates and the Liouville verification checks.

mod candidate;
mod catalog;
mod checks;
mod verdict;

pub use candidate::{
    compose_linear, counterexample_1d, derivative_consistency, Affine, CandidateSummary, Composed, Constant, ErfLift,
    ExpSquare, FnField, HarmonicCandidate, Quadratic, ScalarField,
};
pub use catalog::harmonic_catalog;
pub use catalog::polynomial_certificate;
pub use checks::{
    apply_operator, convexity_check, gradient_growth_check, residual, semigroup_invariance, ConvexityMode,
};
pub use verdict::{liouville_verdict, LiouvilleOutcome, LiouvilleVerdict};
