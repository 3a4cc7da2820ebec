use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("refinement {level}: region edge in dimension {dim} is not on a parent cell face")]
    Alignment { level: usize, dim: usize },

    #[error("refinement {level}: region does not nest inside its parent level")]
    Nesting { level: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("cell {idx:?} lies outside every box of level {level}")]
    OutOfLevel { level: usize, idx: [i64; 4] },

    #[error("point {point:?} lies outside the phase-space domain")]
    OutsideDomain { point: [f64; 4] },

    #[error("initial distribution is not finite at {point:?}")]
    NonFiniteDistribution { point: [f64; 4] },

    #[error("particle at ({x}, {y}) lies outside the field grid")]
    OutsideFieldGrid { x: f64, y: f64 },

    #[error("right-hand side has mean {mean:e} and no neutralizing background")]
    Solvability { mean: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("target {target:?} coincides with a surface-charge source")]
    SingularKernel { target: [f64; 2] },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("grids are not nested: {0}")]
    NotNested(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step {step} (t = {t}): {source}")]
    AtStep { step: usize, t: f64, source: Box<Error> },

    #[error("worker pool: {0}")]
    Workers(String),
}
