//! Symmetric periodic orbits of the Coulomb (N+1)-body problem.
//!
//! A nucleus of charge `Q` sits at the origin and `N = 12, 24, 60` electrons
//! move so that `u_R(t) = R u_I(t)` for every rotation `R` of a Platonic
//! polyhedron. The crate finds such orbits by multiple shooting on the
//! six-dimensional system of the generating particle, continues them in the
//! forcing weight and in `Q`, and audits their Floquet spectrum and second
//! variation.

pub mod continuation;
pub mod dynamics;
pub mod error;
pub mod integrator;
mod linalg;
pub mod seeding;
pub mod secondvar;
pub mod shooting;
pub mod stability;
pub mod symmetry;

pub use continuation::{ContinuationCurve, ContinuationRecord, StepControl, StopCriteria, TraceStatus};
pub use dynamics::{FullField, FullState, ParamKind, ProblemParams, ReducedField, ReducedState};
pub use error::{CollisionKind, Error, Result};
pub use integrator::IntegratorConfig;
pub use shooting::{NewtonReport, ShootingConfig, ShootingProblem, ShootingVector};
pub use symmetry::{GroupKind, PolyhedralGroup, RotationElement, TwistSpec};
pub use seeding::{run_pipeline, PipelineConfig, PipelineResult, SeedCurve, SeedOptions, Waypoints};
pub use secondvar::{Classification, MinimizerVerdict};
pub use stability::{MonodromyResult, StabilityAssessment, StabilityVerdict};
