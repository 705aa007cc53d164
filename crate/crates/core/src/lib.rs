//! Device-independent lower bounds on the Hilbert-space dimension behind
//! prepare-and-measure and Bell correlations.
//!
//! * [`model`] and [`io`]: validated correlation tensors and their file formats.
//! * [`bell`]: the two Bell-scenario bounds.
//! * [`pm_bound`]: the prepare-and-measure bound, its fidelity matrix and the
//!   PM-to-Bell transform.
//! * [`stqp`]: optimizing the free distribution `q` (a standard quadratic program).
//! * [`witness`]: incompressibility, quadratic and determinant witnesses, the
//!   PSD-rank bound and the Nayak bound.
//! * [`generators`]: named correlation families.
//! * [`realization`]: explicit realizations and a local search for them.

#![forbid(unsafe_code)]

pub mod bell;
pub mod error;
pub mod generators;
pub mod io;
pub mod model;
pub mod pm_bound;
pub mod realization;
pub mod stqp;
pub mod witness;

pub use error::{Error, Result, Violation};
pub use model::{BellCorrelation, PmCorrelation, SimplexWeights, DEFAULT_TOL};
