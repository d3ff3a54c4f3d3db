//! Poisson–Boltzmann equations with steric effects.
//!
//! The crate evaluates ion and solvent concentration maps `φ ↦ c_i(φ)` for several
//! steric-coupling families, discretizes the 1-D boundary-value problem
//! `−(ε φ′)′ = ρ₀ + f(φ)` on `(−1, 1)` with Robin data by Legendre–Gauss–Lobatto
//! collocation, and solves it by damped Newton.
//!
//! Module map:
//! - [`specfun`]: principal-branch Lambert W.
//! - [`models`]: ion systems and the concentration-map strategies plus their registry.
//! - [`spectral`]: LGL grid and differentiation matrix.
//! - [`solver`]: residual/Jacobian assembly and the Newton solve.
//! - [`analysis`]: profiles, oscillation detection and Λ→∞ convergence studies.
//! - [`cli`]: configuration format, CSV writers and the `pbs` command runner.

pub mod analysis;
pub mod cli;
pub mod linalg;
pub mod models;
pub mod solver;
pub mod specfun;
pub mod spectral;
