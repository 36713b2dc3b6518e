//! Stochastic simulation of collective emission from a disordered ensemble of
//! two-level emitters coupled to a non-chiral one-dimensional waveguide.
//!
//! The dynamics are sampled with the truncated Wigner approximation for spins:
//! every trajectory carries one pair of phase-space angles `(theta, phi)` per
//! emitter and is integrated with Euler-Maruyama. Emitters may move
//! ballistically during the emission, which together with the spatially
//! oscillating phase of the Raman-dressed dipoles produces directional
//! superfluorescence. A dense Lindblad integrator for a handful of spins serves
//! as an exact reference.
//!
//! Module map:
//!
//! * [`params`]: configuration, unit conventions and scalar parameter formulas.
//! * [`coupling`]: collective exchange/decay matrices and their noise factors.
//! * [`twa`]: phase-space sampling, SDE integration and trajectory ensembles.
//! * [`observables`]: field symbols, intensities, correlations, burst metrics.
//! * [`oracle`]: exact master-equation reference for small ensembles.
//! * [`analysis`]: threshold and scaling fits, sweeps and oracle gates.
//! * [`io`]: CSV/JSON serialization used by the `wgsf` command-line tool.

pub mod analysis;
pub mod coupling;
pub mod error;
pub mod io;
pub mod observables;
pub mod oracle;
pub mod params;
pub mod rng;
pub mod twa;

pub use error::{Error, Result};

/// Complex double used throughout.
pub type C64 = num_complex::Complex64;
