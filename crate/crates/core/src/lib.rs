//! Front dynamics for the heterogeneous bistable (Zeldovich) equation
//! `u_t = u_xx + s(x) u (1 - u) (u - a)`.
//!
//! * [`defects`]: localized profiles `s(x)` and their sharp equivalents.
//! * [`pde`]: method-of-lines ground truth with adaptive Dormand–Prince stepping.
//! * [`kinkfit`]: least-squares extraction of the front position and width.
//! * [`cv`]: collective-variable ODEs for `(x0, w)`.
//! * [`pinning`]: critical defect strength, pinning detection and threshold search.
//! * [`inverse`]: defect topography from an observed trajectory.

pub mod cv;
pub mod defects;
pub mod error;
pub mod exec;
pub mod inverse;
pub mod kinkfit;
pub mod ode;
pub mod output;
pub mod pde;
pub mod pinning;
pub mod quad;

pub use defects::DefectSpec;
pub use error::{Error, Result};
pub use exec::Execution;
pub use kinkfit::{FrontTrajectory, KinkState, TrajectorySample};
pub use pde::{FieldState, Grid, ReactionParams, SolverConfig};
