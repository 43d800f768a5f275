use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid step function `{name}`: {reason}")]
    InvalidStepFunction { name: String, reason: String },

    #[error("invalid Lévy measure: {0}")]
    InvalidMeasure(String),

    #[error(
        "signal variance vanishes on [{t}, T0] and the jump part is not lattice-valued \
         (no decaying Fourier envelope)"
    )]
    ZeroDiffusionTail { t: f64 },

    #[error("horizon T = {horizon} exceeds T0 - dt = {limit}")]
    HorizonTooLate { horizon: f64, limit: f64 },

    #[error("horizon T = {0} is not a grid node")]
    HorizonOffGrid(f64),

    #[error("an empty Lévy measure requires a non-zero Brownian signal coefficient")]
    EmptyMeasure,

    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("invalid quadrature settings: {0}")]
    InvalidQuadrature(String),

    #[error(
        "quadrature did not converge: error estimate {error:e} > tolerance {tol:e} \
         after {nodes} nodes"
    )]
    QuadratureDidNotConverge { error: f64, tol: f64, nodes: usize },

    #[error("y = {0} is not a point of the signal lattice")]
    OffLattice(f64),

    #[error("operation requires a {expected} model")]
    WrongMode { expected: &'static str },

    #[error("closed form not applicable: {0}")]
    WrongModel(String),

    #[error(
        "conditional density at the realized signal underflowed on path {path_id} \
         at t = {t}: {denom:e} (reference {reference:e})"
    )]
    DenominatorUnderflow {
        path_id: u64,
        t: f64,
        denom: f64,
        reference: f64,
    },

    #[error("control u = {u} violates 1 + u*gamma >= eps_adm at t = {t} for mark {mark}")]
    InadmissibleControl { u: f64, t: f64, mark: usize },

    #[error("u = {u} lies outside the admissible interval [{lo}, {hi}]")]
    InadmissiblePoint { u: f64, lo: f64, hi: f64 },

    #[error("no admissible root: residual({lo}) = {r_lo:e}, residual({hi}) = {r_hi:e}")]
    NoAdmissibleRoot {
        lo: f64,
        hi: f64,
        r_lo: f64,
        r_hi: f64,
    },

    #[error("root solver stalled at u = {u} with residual {residual:e}")]
    RootNotResolved { u: f64, residual: f64 },

    #[error("drift field for path {path_id} covers {have} cells, {need} required")]
    MissingDrift {
        path_id: u64,
        have: usize,
        need: usize,
    },

    #[error("control table has no entry for path {path_id}")]
    MissingControls { path_id: u64 },
}
