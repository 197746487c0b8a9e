//! Numerical laboratory for Ornstein-Uhlenbeck operators
//! `L = 1/2 tr(Q D^2) + <Ax, D>`.

// NaN must fail tolerance checks, so `!(x <= tol)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod expm;
pub mod growth;
pub mod harmonic;
pub mod io;
pub mod jordan;
pub mod linalg;
pub mod mc;
pub mod operator;
pub mod report;
pub mod sampling;
pub mod sde;
pub mod semigroup;

pub use config::Config;
pub use error::{LabError, Result};
pub use growth::{GrowthCertificate, GrowthKind};
pub use harmonic::HarmonicCandidate;
pub use jordan::{BlockKind, JordanBlock, JordanDecomposition};
pub use linalg::{Mat, Vector};
pub use operator::{OperatorSpec, SpectralReport, Stability};
pub use report::{Verdict, VerificationReport};
pub use semigroup::{Engine, GaussianMeasure, GramianMethod, GramianResult};
