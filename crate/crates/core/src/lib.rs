//! Bifurcations of fixed points in one-parameter families of area-preserving
//! maps of the plane, and their use on Poincaré maps of two-degree-of-freedom
//! Hamiltonians near straight-line librations.
//!
//! The entry point for map families is [`classifier::classify`]; Hamiltonian
//! work starts from [`poincare::Hamiltonian`].

// Tolerance guards are written `!(x <= tol)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod continuation;
pub mod error;
pub mod family;
pub mod fit;
pub mod frames;
pub mod linalg;
pub mod ode;
pub mod perturbation;
pub mod poincare;
pub mod poly;
pub mod quadrature;
pub mod taylor;
pub mod tolerances;

pub use classifier::{classify, BifurcationKind, BifurcationReport};
pub use error::{EigenspaceError, Error, Result};
pub use family::{DerivativeJet, Point3, ShearFamily, SymplecticFamily, TwoParamFamily};
pub use frames::{to_adapted, AdaptedFrame, FramedFamily};
pub use tolerances::Tolerances;
