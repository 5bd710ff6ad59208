use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("map is not bimodal: found {sign_changes} sign changes of the derivative per period")]
    NotBimodal { sign_changes: usize },

    #[error("derivative vanishes on an interval of width {width:e} near {at}")]
    DegenerateCritical { at: f64, width: f64 },

    #[error("value {value} is not attained on the requested branch [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("bisection bracket [{lo}, {hi}] does not change sign")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("plateau iterates {i} and {j} overlap within tolerance")]
    PlateauCollision { i: i64, j: i64 },

    #[error("bracket [{lo}, {hi}] only resolves {certified} partial quotients before an endpoint expansion terminates")]
    RationalDetected { lo: f64, hi: f64, certified: usize },

    #[error("precision exhausted at level {level}")]
    PrecisionExhausted { level: usize },

    #[error("orbit of {x} does not enter the target within {n_cap} steps")]
    NoEntry { x: f64, n_cap: u32 },

    #[error("bisection could not separate return-time changes near {at} within depth {depth}")]
    ResolutionTooCoarse { at: f64, depth: usize },

    #[error("decomposition frame invalid at M0 = {m0}: {reason}")]
    FrameInvalid { m0: usize, reason: String },

    #[error("partition coverage {coverage} is below the required {required}")]
    CoverageTooLow { coverage: f64, required: f64 },

    #[error("power iteration did not converge after {iterations} steps (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("quadrature of log|Df| failed to converge on bin [{lo}, {hi}]")]
    IntegrandSingular { lo: f64, hi: f64 },

    #[error("only binary64 arithmetic is available; requested {bits} bits")]
    UnsupportedPrecision { bits: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
