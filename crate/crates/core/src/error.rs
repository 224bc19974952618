//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable sets differ: {left:?} vs {right:?}")]
    VariableMismatch { left: Vec<String>, right: Vec<String> },

    #[error("truncation orders differ: {left} vs {right}")]
    OrderMismatch { left: u32, right: u32 },

    #[error("unknown variable `{var}`")]
    UnknownVariable { var: String },

    #[error("no value assigned to variable `{var}`")]
    MissingAssignment { var: String },

    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },

    #[error("no real solution on branch {branch} (x={x}, h={h}, lambda={lambda})")]
    NoRealBranch { branch: String, x: f64, h: f64, lambda: f64 },

    #[error("({h}, {lambda}) outside the swallow-tail domain")]
    OutsideSwallowTail { h: f64, lambda: f64 },

    #[error("quadrature did not converge: last two estimates {prev} and {last}")]
    QuadratureNonConvergence { prev: f64, last: f64 },

    #[error("level component through ({x}, {y}) does not reach the initial-condition locus")]
    PathNotConnected { x: f64, y: f64 },

    #[error("flow escaped the chart (radius {radius}) at ({x}, {y})")]
    ChartEscape { x: f64, y: f64, radius: f64 },

    #[error("no bracket for section crossing after time {t_max}")]
    NoSectionCrossing { t_max: f64 },

    #[error("truncation order {order} too small; need at least {needed}")]
    InsufficientOrder { order: u32, needed: u32 },

    #[error("density is not even in x (odd part present)")]
    OddPartPresent,

    #[error(
        "area-function hypothesis violated: vanishing-cycle action {max_abs:.3e} at (h={h}, lambda={lambda}) exceeds {tol:.1e}"
    )]
    HypothesisViolated { max_abs: f64, h: f64, lambda: f64, tol: f64 },

    #[error("inexact division: remainder {remainder} while dividing by {divisor}")]
    InexactDivision { divisor: String, remainder: String },

    #[error("design matrix is rank deficient (pivot {pivot:.3e})")]
    RankDeficient { pivot: f64 },

    #[error("input too noisy to differentiate (condition estimate {condition:.3e})")]
    NoisyInput { condition: f64 },

    #[error("invalid germ: {reason}")]
    InvalidGerm { reason: String },

    #[error("root isolation failed at j={j}: {reason}")]
    RootIsolation { j: f64, reason: String },

    #[error("bifurcation diagram contains no flap")]
    NoFlap,

    #[error("lambda ranges incomparable: [{a0}, {a1}] vs [{b0}, {b1}]")]
    IncomparableRanges { a0: f64, a1: f64, b0: f64, b1: f64 },

    #[error("cycle {cycle} absent at (h={h}, j={j})")]
    CycleAbsent { cycle: String, h: f64, j: f64 },

    #[error("error at grid index {index}: {source}")]
    AtGridIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
