//! Follow-the-leader traffic and pedestrian flow with reaction time.
//!
//! The crate covers the microscopic first-order model on a ring, its
//! Eulerian finite-volume discretizations, the linear stability theory of
//! both, and the observables used to compare them.

pub mod error;
pub mod fmt;
pub mod macroscopic;
pub mod measure;
pub mod micro;
pub mod ov;
pub mod rng;
pub mod stability;

pub use error::{Error, Result};
pub use macroscopic::{BoundsPolicy, MacroGrid, Scheme};
pub use micro::{InitKind, MicroState, RingConfig, TrajectoryRecord};
pub use ov::{AffineOV, FundamentalDiagram, TriangularOV};
pub use measure::{DensityField, EmpiricalSet, FDSample};
pub use stability::{LinearizationCoeffs, StabilityQuery, StabilityReport, StabilityScheme, Verdict};
