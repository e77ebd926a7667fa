//! Numerics for horocycle-flow mixing asymptotics on Abelian covers of
//! compact hyperbolic surfaces.
//!
//! The crate is `no_std` (with `alloc`) and pure: every operation is a
//! function of its inputs, so sweeps can be split across threads by the
//! caller. Reductions that a caller might parallelize expose their block
//! structure so the split never changes the result.
//!
//! * [`spectral`]: the bottom eigenvalue branch `λ₀(ω)` and its constants.
//! * [`ode`]: matrix-coefficient ODE, forcing, and asymptotic amplitudes.
//! * [`laplace`]: Laplace-type integrals and their `T^{-j-d/2}` expansions.
//! * [`cover`]: character lattices of finite covers and spectral measures.
//! * [`mixing`]: the correlation integral in `log t` and its leading constant.

#![no_std]

extern crate alloc;

pub mod chebyshev;
pub mod cover;
pub mod error;
pub mod extrapolate;
pub mod laplace;
pub mod linalg;
pub mod mixing;
pub mod ode;
pub mod quad;
pub mod spectral;
pub mod sum;

pub use cover::{CharacterLattice, TestFunction};
pub use error::{Error, Result};
pub use laplace::{ExpansionCoefficients, PhaseProblem};
pub use mixing::MixingProblem;
pub use linalg::SymMatrix;
pub use spectral::{nu_of_lambda, CasimirPoint, Perturbation, SpectralModel};
