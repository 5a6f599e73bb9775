//! Numerical laboratory for radial self-similar solutions of the minimal
//! parabolic–elliptic Keller–Segel system
//!
//! ```text
//! u_t = Δu − ∇·(u∇ψ),   −Δψ = u,   x ∈ ℝ^d, d ≥ 3,
//! ```
//!
//! with initial data below the singular Chandrasekhar solution
//! `u_C = 2(d−2)/|x|²`. Radial solutions are handled through the mass
//! distribution `M(t, r) = ∫_{|x|<r} u`, which solves a scalar parabolic
//! equation with singular coefficients.

pub mod barrier;
pub mod blowup;
pub mod error;
pub mod grid;
pub mod mass_pde;
pub mod model;
pub mod par;
pub mod poisson;
pub mod profile;
pub mod specfun;

pub use error::{Error, Result};
