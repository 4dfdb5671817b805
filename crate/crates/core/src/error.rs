use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid profile spec: {0}")]
    InvalidSpec(String),
    #[error("profile validation failed: {0}")]
    ValidationFailed(String),
    #[error("infeasible profile spec: {0}")]
    InfeasibleSpec(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("trajectory left the domain at t={t} (r={r})")]
    LeftDomain { t: f64, r: f64 },
    #[error("energy drift {drift:e} exceeds limit {limit:e}")]
    ConservationFailure { drift: f64, limit: f64 },
    #[error("no root of the circular-orbit equation in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("{count} roots of the circular-orbit equation in [{lo}, {hi}]; shrink the bracket")]
    AmbiguousRoot { lo: f64, hi: f64, count: usize },
    #[error("continuation broke down at energy {k}: {reason}")]
    ContinuationBreakdown { k: f64, reason: String },
    #[error("degenerate cylinder: {0}")]
    DegenerateCylinder(String),
    #[error("no convergence after {iterations} iterations (defect {defect:e})")]
    NoConvergence { iterations: usize, defect: f64 },
    #[error("value {value:e} is within a factor {factor} of tolerance {tol:e}")]
    ToleranceAmbiguity { value: f64, tol: f64, factor: f64 },
    #[error("cylinder plane is not symplectic: pairing {0:e}")]
    FrameDegenerate(f64),
    #[error("crossing resolution failure: {0}")]
    CrossingResolutionFailure(String),
    #[error("delta {delta:e} too large for endpoint gap {gap:e}")]
    DeltaTooLarge { delta: f64, gap: f64 },
    #[error("vector not in range: residual {0:e}")]
    NotInRange(f64),
    #[error("endpoint triple not regular: |tau - lambda| = {0:e}")]
    NotRegular(f64),
    #[error("loop is not critical: gradient norm {0:e}")]
    NotCritical(f64),
    #[error("eigenvalue {value:e} within factor 3 of null band {band:e}")]
    BandAmbiguity { value: f64, band: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}
