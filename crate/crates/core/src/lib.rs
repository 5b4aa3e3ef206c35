//! Multi-species weakly asymmetric exclusion with momentum-conserving collisions.
//!
//! The crate covers the velocity-set algebra, exact simulation on the discrete
//! torus, generator identities on small state spaces, spectral gaps on
//! micro-canonical surfaces, and the incompressible-limit PDE together with the
//! harness that compares the two.

pub mod dynamics;
pub mod exact;
pub mod exactgen;
pub mod harness;
pub mod lattice;
pub mod linalg;
pub mod measure;
pub mod micro;
pub mod pde;
pub mod rng;
pub mod scalar;
pub mod velocity;

pub use exact::{ExactVector, SymbolBasis};
pub use scalar::{theta, Real};
pub use velocity::{build_velocity_set, Quadruple, VelocitySet, VelocitySpec};

/// Exact rational scalar used for surface labels, `h_α` and k-space weights.
pub type Rational = num_rational::BigRational;
