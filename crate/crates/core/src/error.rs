use thiserror::Error;

/// Which denominator of the vector field became too small.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionKind {
    /// Electron came too close to the nucleus.
    Nucleus,
    /// The generating particle hit the axis of the group element with this index.
    Axis(usize),
    /// Two electrons of the full system met.
    Pair(usize, usize),
}

impl std::fmt::Display for CollisionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CollisionKind::Nucleus => write!(f, "nucleus"),
            CollisionKind::Axis(i) => write!(f, "axis of element {i}"),
            CollisionKind::Pair(i, j) => write!(f, "electrons {i} and {j}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid twist: {0}")]
    InvalidTwist(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("collision with {kind} (distance {distance:e}) at t = {time:?}")]
    Collision {
        kind: CollisionKind,
        distance: f64,
        time: Option<f64>,
    },

    #[error("step size underflow at t = {time}")]
    StepUnderflow { time: f64 },

    #[error("integrator exceeded {steps} steps at t = {time}")]
    TooManySteps { steps: usize, time: f64 },

    #[error("integration of segment {segment} failed: {source}")]
    Segment {
        segment: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular linear system: numerical rank {rank} < {required}")]
    Singular { rank: usize, required: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (|G| = {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("degenerate tangent: previous records coincide")]
    DegenerateTangent,

    #[error("step control exhausted: delta fell below {delta_min:e}")]
    StepControlExhausted { delta_min: f64 },

    #[error("homotopy safety violated: distance {distance:e} to the collision set is below {guard:e}")]
    HomotopySafety { distance: f64, guard: f64 },

    #[error("matrix is too ill-conditioned to invert (condition {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("pipeline stage `{stage}` failed: {source}")]
    Pipeline {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach an integration time to a collision error raised inside a vector field.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            Error::Collision {
                kind,
                distance,
                time: None,
            } => Error::Collision {
                kind,
                distance,
                time: Some(t),
            },
            other => other,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Pipeline {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
