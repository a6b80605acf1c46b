use thiserror::Error;

use crate::charts::ChartId;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GuidanceError {
    #[error("chart {chart:?} is singular here: {detail}")]
    ChartSingularity { chart: ChartId, detail: String },

    #[error("state in chart {found:?} where chart {expected:?} was required")]
    ChartMismatch { expected: ChartId, found: ChartId },

    #[error("nonregular arc with saturated control (C = {c:.3e}, D = {d:.3e}) is not supported")]
    UnsupportedNonregularArc { c: f64, d: f64 },

    #[error("control is nonregular here: |(lam, rho)| = {norm:.3e}")]
    NonregularRegime { norm: f64 },

    #[error("degenerate costate on a nonregular arc: |p_v| = {p_v:.3e}")]
    DegenerateCostate { p_v: f64 },

    #[error("unbounded control: order-zero Hamiltonian is not concave (D = {d:.3e})")]
    UnboundedControl { d: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shooting did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    NoConvergence {
        iterations: usize,
        best_residual: f64,
        /// Initial costate of the best iterate.
        best: Vec<f64>,
    },

    #[error("singular shooting Jacobian")]
    SingularJacobian,

    #[error("continuation stalled at lambda = ({lambda1}, {lambda2}) with step {delta:e}")]
    ContinuationStalled { lambda1: f64, lambda2: f64, delta: f64 },
}

pub type Result<T> = std::result::Result<T, GuidanceError>;
