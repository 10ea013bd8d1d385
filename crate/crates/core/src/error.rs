use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("non-finite integrand or limits on [{a}, {b}]")]
    NonFinite { a: f64, b: f64 },
    #[error("subdivision cap {cap} reached on [{a}, {b}] (error estimate {estimate:e})")]
    SubdivisionCap {
        a: f64,
        b: f64,
        estimate: f64,
        cap: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("points per axis must be a power of two >= 4, got {0}")]
    BadSize(usize),
    #[error("dimension must be >= 1")]
    ZeroDimension,
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("{points}^{dim} modes exceeds the mode budget {cap}")]
    ModeBudget { dim: usize, points: usize, cap: usize },
    #[error("symbol is not finite at frequency {xi:?}")]
    NonFiniteSymbol { xi: Vec<f64> },
    #[error("base symbol is negative ({value}) at frequency {xi:?}")]
    NegativeSymbol { xi: Vec<f64>, value: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("fractional index {0} outside [0, 1]")]
    BadAlpha(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("coefficient {name} is not finite at t = {t}")]
    NonFinite { name: String, t: f64 },
    #[error("diffusion matrix not symmetric at t = {t}: a[{i}][{j}] = {aij}, a[{j}][{i}] = {aji}")]
    NotSymmetric {
        t: f64,
        i: usize,
        j: usize,
        aij: f64,
        aji: f64,
    },
    #[error("empty time mesh")]
    EmptyMesh,
    #[error("degenerate mesh: no distinct sample pairs")]
    DegenerateMesh,
    #[error("Hölder audit needs at least 16 mesh points, got {0}")]
    ShortMesh(usize),
    #[error("resolvent point {zeta:?} collides with a symbol value at t = {t}")]
    ResolventCollision { zeta: (f64, f64), t: f64 },
    #[error("Cesàro schedule must be strictly increasing with >= 3 entries")]
    BadSchedule,
    #[error("Cesàro mean of {entry} did not converge (last two values {previous} and {last})")]
    NotConverged {
        entry: String,
        previous: f64,
        last: f64,
    },
    #[error("sampled coefficient table is invalid: {0}")]
    BadTable(String),
    #[error("family dimension {family} does not match grid dimension {grid}")]
    DimensionMismatch { family: usize, grid: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolutionError {
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("evolution requires s <= t, got s = {s}, t = {t}")]
    Backwards { s: f64, t: f64 },
    #[error("matrix exponential overflowed (norm {norm:e}, t = {t})")]
    ExpOverflow { norm: f64, t: f64 },
    #[error("Levi series did not decay within {iterations} terms on [{s}, {t}] even after subdivision")]
    SeriesStalled { s: f64, t: f64, iterations: usize },
    #[error("empty probe mesh")]
    EmptyMesh,
    #[error("gap {gap:e} is below the finite-difference resolution {step:e}")]
    GapTooSmall { gap: f64, step: f64 },
    #[error("matrix dimension {0} outside 1..=64")]
    BadDimension(usize),
    #[error("non-finite input to the evolution engine")]
    NonFinite,
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error("steps must be >= 1")]
    NoSteps,
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error(
        "growth bound rejected step {step} at t = {t}: ||F|| = {forcing_norm:e} > C(1+||u||_a) = {bound:e}"
    )]
    GrowthBound {
        step: usize,
        t: f64,
        forcing_norm: f64,
        bound: f64,
    },
    #[error("quadrature node budget exceeded: {needed} nodes per step > {budget}")]
    NodeBudget { needed: usize, budget: usize },
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("fit needs at least 3 positive points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate fit: all lambda values equal")]
    DegenerateFit,
    #[error("scenario has no forcing; use the linear sweep")]
    MissingForcing,
    #[error("scenario has forcing; the linear sweep requires it absent")]
    UnexpectedForcing,
    #[error("audit found inconsistent declarations: {}", .0.join("; "))]
    AuditFailed(Vec<String>),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}
