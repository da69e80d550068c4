//! Numerical laboratory for ODE-type blow-up solutions of the focusing
//! nonlinear wave equation `□φ + |φ|^{p−1}φ = 0` in 1+1 dimensions.
//!
//! The crate constructs singular solutions near a spacelike blow-up surface
//! `{t = f(x)}` from prescribed data `(f, ψ)` via a Fuchsian series ansatz,
//! evolves them with a method-of-lines solver, and recovers the data back from
//! numerical solutions through the blow-up foliation geometry (τ-gauge,
//! Jacobian fields, surface and scattering-data extraction). Energy-current
//! diagnostics certify the coercivity mechanisms behind the construction.

pub mod ansatz;
pub mod energy;
pub mod error;
pub mod expr;
pub mod exponents;
pub mod fit;
pub mod gauge;
pub mod grid;
pub mod ode;
pub mod pipeline;
pub mod series;
pub mod solver;

pub use error::{Error, Result};
pub use exponents::{Boost, Exponents};
pub use grid::{Grid1D, SpatialField};
pub use series::{Coeff, FuchsianSeries, SeriesTerm};
