//! Noncooperative kinetically constrained lattice gases.
//!
//! The crate covers the full pipeline for this model class:
//!
//! * [`lattice`]: sites, finite boxes with boundary conventions, occupancy
//!   configurations, finite permutations;
//! * [`models`]: constraint models given by enabling vacancy clauses, the
//!   built-in families, rate evaluation, and the model axiom checker;
//! * [`moves`]: multistep moves, their validation calculus (permutation,
//!   information loss, excess vacancies), certificate search for mobile
//!   clusters, and reservoir flip moves;
//! * [`spectral`]: exact generators on small boxes, relaxation times via
//!   symmetrized eigenproblems, ergodic components, box census bounds;
//! * [`transport`]: the variational diffusion coefficient as a finite
//!   quadratic program, auxiliary zero-current models, comparison constants;
//! * [`selfdiff`]: tracer dynamics given by permutation moves and the
//!   variational self-diffusion coefficient;
//! * [`simulate`]: rejection-free kinetic Monte Carlo with tracer tracking;
//! * [`io`]: TOML schemas for models, moves, and certificates, plus CSV
//!   output with reproducibility headers.

pub mod error;
pub mod io;
pub mod lattice;
pub mod models;
pub mod moves;
pub mod rng;
pub mod selfdiff;
pub mod simulate;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
