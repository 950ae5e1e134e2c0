//! Concentration of sums of rank-one random tensors.
//!
//! The crate evaluates the deviation `sup_{|v|=1} |N^-1 sum <X_i,v>^p - E<X,v>^p|`
//! of the empirical order-`p` moment tensor, computes the closed-form rates that
//! bound it, and provides the generic-chaining functionals (`gamma_2`, Dudley
//! sums, graded norms, the `Lambda` functional) used for `L_p` empirical
//! processes. A Monte Carlo harness runs seeded sweeps and the verification
//! suites exposed through the `tensorconc` binary.

pub mod chaining;
pub mod covmodel;
pub mod error;
pub mod harness;
mod linalg;
pub mod rates;
pub mod sampling;
pub mod tensornorm;

pub use covmodel::{Spectrum, SpectrumKind};
pub use error::{Error, Result};
pub use sampling::{DistributionSpec, Family, Sample};
pub use tensornorm::{DeviationProblem, MaximizerResult, SolverConfig, Variant};
