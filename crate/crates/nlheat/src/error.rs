//! Error taxonomy for the solver and audit laboratory.
//!
//! Every fallible operation in the crate returns [`Result`]. Variants are
//! grouped by the stage that raises them: construction of kernels and grids,
//! field/operator compatibility, linear algebra, geometric queries, and the
//! audit/covering machinery. Messages carry the concrete offending value
//! (a radius, a lattice index, a config line) so failures are actionable
//! without a debugger.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar or structural argument is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A candidate kernel profile violates the ellipticity envelope; the
    /// first offending sample radius is named.
    #[error("kernel rejected: profile leaves the admissible envelope at radius {radius}: {detail}")]
    KernelRejected { radius: f64, detail: String },

    /// The mesh width is too coarse for the requested domain.
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    /// A point or cylinder does not fit inside the domain it must live in.
    #[error("out of domain: {0}")]
    OutOfDomain(String),

    /// The cylinder slack parameter is outside the admissible interval
    /// (it must satisfy 0 < sigma <= 2/5, the two-fifths rule that keeps
    /// fat and plus cylinders measure-compatible).
    #[error("invalid sigma: {0}")]
    InvalidSigma(String),

    /// A field lacks collar (exterior) samples that an operator needs.
    #[error("incomplete field: {0}")]
    IncompleteField(String),

    /// Exterior data is missing where a lift or boundary solve requires it.
    #[error("incomplete boundary data: {0}")]
    IncompleteBoundary(String),

    /// Two fields (or a field and an operator) disagree on grid or times.
    #[error("incompatible fields: {0}")]
    IncompatibleFields(String),

    /// A norm or form that requires zero exterior values was fed a field
    /// with nonzero collar or far-field data.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// Operator assembly failed (non-finite weight, empty offset set, ...).
    #[error("assembly failure: {0}")]
    Assembly(String),

    /// The symmetric eigensolve failed or returned an inadmissible spectrum.
    #[error("spectral failure: {0}")]
    SpectralFailure(String),

    /// A linear solve (LU/Cholesky) failed.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// A tail or cylinder radius is nonpositive or too small for the mesh.
    #[error("invalid radius: {0}")]
    InvalidRadius(String),

    /// A requested time window exits the field's stored extent.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A cylinder captured no lattice members, so extrema are undefined.
    #[error("empty cylinder: {0}")]
    EmptyCylinder(String),

    /// An audit's hypotheses do not hold for the supplied scenario; the
    /// check is skipped rather than failed.
    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),

    /// A decay-sequence hypothesis fails at a concrete index.
    #[error("hypothesis violated at index {index}: {detail}")]
    HypothesisViolation { index: usize, detail: String },

    /// Neither branch of the covering dichotomy holds beyond tolerance.
    #[error("dichotomy violation: {0}")]
    DichotomyViolation(String),

    /// A scenario configuration is malformed; when the problem is textual
    /// (JSON syntax, wrong type) the line number anchors it in the original
    /// file, and line 0 marks semantic errors with no single source line.
    #[error("config error{}: {message}", if *line > 0 { format!(" at line {line}") } else { String::new() })]
    Config { line: usize, message: String },

    /// Filesystem failure while reading data or writing reports.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
