use thiserror::Error;

/// Error taxonomy shared by all modules.
///
/// The variants mirror the failure modes of the public operations: bad input
/// data, evaluation outside a chart or past the cut locus, non-finite
/// arithmetic, contract violations on preconditions, and solver failures that
/// are exceptional (as opposed to non-convergence, which is reported, not
/// thrown).
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("domain error: point ({0}, {1}) outside chart", .point.0, .point.1)]
    OutsideChart { point: (f64, f64) },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("cut-locus error: node at ({0}, {1}) lies beyond the regular band (d = {d}, reach = {reach})", .point.0, .point.1)]
    CutLocus { point: (f64, f64), d: f64, reach: f64 },

    #[error("numeric error: {what} at ({0}, {1})", .point.0, .point.1)]
    Numeric { what: String, point: (f64, f64) },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("precondition unmet: {0}")]
    Precondition(String),

    #[error("barrier-bound failure: {what}; worst node at ({0}, {1}) with margin {margin}", .point.0, .point.1)]
    BarrierBound { what: String, point: (f64, f64), margin: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numeric(what: impl Into<String>, point: (f64, f64)) -> Self {
        Error::Numeric { what: what.into(), point }
    }
}
