use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("collapsed curve")]
    CollapsedCurve,
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("projection not unique: point at distance {distance} from the barrier exceeds tubular radius {tubular_radius}")]
    ProjectionNotUnique { distance: f64, tubular_radius: f64 },
    #[error("projection did not converge after {0} iterations")]
    ProjectionDiverged(usize),
    #[error("vector is not tangent to the barrier (normal component {0})")]
    NotTangent(f64),
    #[error("point is off the barrier by {0}")]
    OffBarrier(f64),
    #[error("sigma_hat must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("blowup overflow: non-finite state at t = {0}")]
    BlowupOverflow(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("mismatched node counts: {0} vs {1}")]
    MismatchedNodes(usize, usize),
    #[error("degenerate curvature on the evaluation window")]
    DegenerateCurvature,
    #[error("window longer than c/M_t0: span {span} > {limit}")]
    WindowTooLong { span: f64, limit: f64 },
    #[error("time {t} is not before the singular time {t_sing}")]
    NotBeforeSingularTime { t: f64, t_sing: f64 },
    #[error("empty entropy scan grid")]
    EmptyGrid,
    #[error("quadrature window {0} is below the reliable minimum of 5")]
    WindowTooSmall(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
