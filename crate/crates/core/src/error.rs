use thiserror::Error;

/// Unified error type for the whole crate.
///
/// Variants are grouped by where they arise: argument validation, scenario
/// generation, dataset / checkpoint I/O, constraint geometry, and training.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Placement rejection sampling exhausted its attempt budget for one UE.
    #[error("cell-edge region unreachable for cell {cell} after {attempts} placement attempts")]
    RegionUnreachable { cell: usize, attempts: u64 },

    /// Feasibility filtering accepted too small a fraction of candidate draws.
    #[error("dataset yield too low: {kept} kept out of {attempts} attempts (floor {floor:e})")]
    YieldTooLow { kept: u64, attempts: u64, floor: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally well-formed file whose shape contradicts its own header.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Constraint matrix is singular or numerically unusable (cond > 1e12).
    #[error("singular constraint geometry: {0}")]
    SingularGeometry(String),

    /// A direction-sum entry of the distance-to-power map is non-positive,
    /// so the shared step size along all hyperplane normals is undefined.
    #[error("degenerate constraint geometry: direction sum {value:e} at row {row}")]
    DegenerateGeometry { row: usize, value: f64 },

    /// The boundary point's max coordinate is too small to scale safely.
    #[error("degenerate scale: max boundary coordinate {value:e} at index {index}")]
    DegenerateScale { index: usize, value: f64 },

    /// A backward-pass denominator is too small to divide safely.
    #[error("degenerate gradient: denominator {value:e} at row {row}")]
    DegenerateGradient { row: usize, value: f64 },

    /// The segment from the network output to the interior point crosses no
    /// constraint hyperplane from the violated side; the projection geometry
    /// assumptions do not hold for these inputs.
    #[error("projection geometry violated: no positive segment component")]
    GeometryViolated,

    /// An iterative solver hit its iteration cap before meeting tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    /// The per-user rate targets cannot all be met under the power budget.
    #[error("infeasible instance: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
