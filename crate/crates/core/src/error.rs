use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("graph is disconnected: point {0} is unreachable")]
    Disconnected(usize),

    #[error("triangle inequality violated on {violations} of {checked} sampled triples")]
    MetricAudit { violations: usize, checked: usize },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("antipodal endpoints: the geodesic is not unique")]
    Antipodal,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("map mismatch: {0}")]
    Mismatch(String),

    #[error("boundary trace mismatch at point {0}")]
    TraceMismatch(usize),

    #[error("value at point {point} lies outside the regular ball (distance {distance} > {radius})")]
    OutsideBall {
        point: usize,
        distance: f64,
        radius: f64,
    },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
