use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes; each maps to a process exit code in the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
    Certification,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Input => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Certification => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Input => "input",
            ErrorClass::Numerical => "numerical",
            ErrorClass::Certification => "certification",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("entry ({row}, {col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("entry ({row}, {col}) is negative: {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("diagonal entry {index} is nonzero: {value}")]
    NonZeroDiagonal { index: usize, value: f64 },
    #[error("asymmetry {max_asymmetry:e} exceeds tolerance {tolerance:e}")]
    AsymmetryBeyondTolerance { max_asymmetry: f64, tolerance: f64 },
    #[error("triangle inequality violated by {violation:e} at d[{i}][{k}] > d[{i}][{j}] + d[{j}][{k}]")]
    TriangleViolation {
        i: usize,
        j: usize,
        k: usize,
        violation: f64,
    },
    #[error("points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
    #[error("index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("need at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("row {0} is the zero vector")]
    ZeroVector(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid diversity order q = {0} (must be >= 1)")]
    InvalidOrder(f64),
    #[error("scale t = {0} must be positive and finite")]
    NonPositiveScale(f64),
    #[error("invalid exponent {0}")]
    InvalidExponent(f64),
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("product of {size} points exceeds the cap of {cap}")]
    ProductTooLarge { size: usize, cap: usize },
    #[error("similarity matrix could not be factorized (singular or indefinite)")]
    SingularOrIndefinite,
    #[error("weighting residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("weighting has a nonpositive entry w[{index}] = {value}")]
    NonPositiveWeighting { index: usize, value: f64 },
    #[error("(Zp)_{0} underflowed on the support")]
    Underflow(usize),
    #[error("restricted distance matrix on {size} points is singular")]
    SingularSubmatrix { size: usize },
    #[error("distance matrix is singular")]
    SingularMatrix,
    #[error("support failed to shrink after {iterations} passes")]
    IterationOverflow { iterations: usize },
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("metric is not of negative type (min eigenvalue {min_eigenvalue:e})")]
    NotNegativeType { min_eigenvalue: f64 },
    #[error("antipodal feature vectors present; strict negative type cannot be certified")]
    AntipodesPresent,
    #[error("source and target coincide: {0}")]
    SourceTargetCoincide(String),
    #[error("unknown node id {0}")]
    UnknownNode(String),
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("no directed path from {source_id} to {target_id}")]
    DisconnectedSourceTarget { source_id: String, target_id: String },
    #[error("no paths with exactly {0} intermediate stops")]
    NoPathsWithStops(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            SingularOrIndefinite
            | ResidualTooLarge { .. }
            | NonPositiveWeighting { .. }
            | Underflow(_)
            | SingularSubmatrix { .. }
            | SingularMatrix
            | IterationOverflow { .. }
            | NoConvergence(_) => ErrorClass::Numerical,
            NotNegativeType { .. } | AntipodesPresent => ErrorClass::Certification,
            Layer { source, .. } => source.class(),
            _ => ErrorClass::Input,
        }
    }

    /// Variant name, used as the machine-readable `kind` in error reports.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            NonSquare { .. } => "NonSquare",
            EmptyInput => "EmptyInput",
            NonFiniteEntry { .. } => "NonFiniteEntry",
            NegativeEntry { .. } => "NegativeEntry",
            NonZeroDiagonal { .. } => "NonZeroDiagonal",
            AsymmetryBeyondTolerance { .. } => "AsymmetryBeyondTolerance",
            TriangleViolation { .. } => "TriangleViolation",
            DuplicatePoints(..) => "DuplicatePoints",
            IndexOutOfRange { .. } => "IndexOutOfRange",
            TooFewPoints { .. } => "TooFewPoints",
            ZeroVector(_) => "ZeroVector",
            DimensionMismatch { .. } => "DimensionMismatch",
            InvalidOrder(_) => "InvalidOrder",
            NonPositiveScale(_) => "NonPositiveScale",
            InvalidExponent(_) => "InvalidExponent",
            InvalidDistribution(_) => "InvalidDistribution",
            ProductTooLarge { .. } => "ProductTooLarge",
            SingularOrIndefinite => "SingularOrIndefinite",
            ResidualTooLarge { .. } => "ResidualTooLarge",
            NonPositiveWeighting { .. } => "NonPositiveWeighting",
            Underflow(_) => "Underflow",
            SingularSubmatrix { .. } => "SingularSubmatrix",
            SingularMatrix => "SingularMatrix",
            IterationOverflow { .. } => "IterationOverflow",
            NoConvergence(_) => "NoConvergence",
            NotNegativeType { .. } => "NotNegativeType",
            AntipodesPresent => "AntipodesPresent",
            SourceTargetCoincide(_) => "SourceTargetCoincide",
            UnknownNode(_) => "UnknownNode",
            DuplicateNode(_) => "DuplicateNode",
            DisconnectedSourceTarget { .. } => "DisconnectedSourceTarget",
            NoPathsWithStops(_) => "NoPathsWithStops",
            InvalidConfig(_) => "InvalidConfig",
            Parse(_) => "Parse",
            Io(_) => "Io",
            Layer { .. } => "Layer",
        }
    }
}
