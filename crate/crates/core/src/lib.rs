//! Insider trading under an enlarged filtration: a Fourier representation of
//! the Donsker delta of a Lévy-driven signal, the resulting information drift
//! and jump compensator, the insider's optimal log-utility control, and
//! Monte Carlo checks of the enlarged-filtration decompositions.

pub mod drift;
pub mod error;
pub mod kernel;
pub mod model;
pub mod optimizer;
pub mod path;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod verify;

pub use drift::{
    closed_form_phi_brownian, closed_form_psi_poisson, drift_field, phi, psi, psi_poisson_bridge,
    DriftField, DriftPoint,
};
pub use error::{Error, Result};
pub use kernel::{
    cond_delta, cond_malliavin_b, cond_malliavin_n, evaluate, FourierState, KernelEstimate,
    KernelRequest, KernelValues,
};
pub use model::{
    validate_model, DiscreteLevyMeasure, LevyConfig, Mark, MarketConfig, MarketSpec, Mode,
    ModelSpec, SignalConfig, SignalSpec, StepFunction, StepSpec, TimeGrid, ValidatedModel,
};
pub use optimizer::{
    drift_formula_value, expected_log_wealth, foc_residual, honest_benchmark, resolve_controls,
    solve_optimal_control, ControlPath, Estimator, FocProblem, PolicyValue, ValueEstimate,
};
pub use path::{
    check_admissible, log_wealth, simulate, simulate_path, ControlPolicy, Ensemble, SamplePath,
};
pub use quadrature::{QuadratureMode, QuadratureSpec};
pub use stats::{summarize, SampleSummary};
pub use verify::{
    decompose, martingale_test, quadratic_variation_test, verify_suite, DecomposedPath, Instrument,
    Process, Role, SuiteReport, SuiteSettings, TestReport,
};
