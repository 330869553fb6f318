//! Pseudospectral simulation and verification suite for the nonrelativistic
//! limit of the Klein-Gordon-Maxwell system on a periodic 3-torus.
//!
//! The crate integrates two coupled models and the machinery needed to compare
//! them as the light speed parameter c grows:
//!
//! * a split formulation of Klein-Gordon-Maxwell in Coulomb gauge, evolved in
//!   the rescaled pair ψ± = e^{±itc²}φ± together with the divergence-free
//!   vector potential (A, ∂ₜA),
//! * the limiting Schrödinger-Poisson pair v±.
//!
//! Everything is spectral: fields live on the integer frequency lattice
//! ξ(k) = (2π/L)k of the torus [0,L)³, transforms are unitary, products are
//! dealiased by zero padding, and all Fourier multipliers are evaluated in
//! cancellation-safe forms that stay accurate for large c.

pub mod diagnostics;
pub mod error;
pub mod estimate_lab;
pub mod fft;
pub mod field;
pub mod grid;
pub mod kgm;
pub mod multiplier;
pub mod products;
pub mod propagators;
pub mod quadrature;
pub mod snapshot;
pub mod sp;

pub use error::CoreError;
pub use field::{Reality, SpectralField, VectorField};
pub use grid::Grid;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
