//! Information drift `Φ`, jump correction `Ψ` and the enlarged-filtration
//! compensator, as ratios of conditional Donsker-delta quantities evaluated at
//! the realized signal:
//!
//! ```text
//! Φ(t)     = E[D_t δ_Y(y) | F_t] / E[δ_Y(y) | F_t]        at y = Y
//! Ψ(t, ζ)  = E[D_{t,ζ} δ_Y(y) | F_t] / E[δ_Y(y) | F_t]    at y = Y
//! α₁ = Φ,  α₂(t, dζ) = Ψ(t, ζ) ν(dζ),  ν_H(dt, dζ) = (1 + Ψ) ν(dζ) dt
//! ```
//!
//! Values are taken at cell left endpoints and held over the cell.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{evaluate, FourierState, KernelRequest};
use crate::model::{Mode, ValidatedModel};
use crate::path::SamplePath;
use crate::quadrature::QuadratureSpec;

/// Abort when the conditional density at `Y` falls below this fraction of its
/// value at `t = 0` on the same path.
pub const RELATIVE_DENOM_FLOOR: f64 = 1e-12;

/// Compensators below `-COMPENSATOR_TOL` are reported as failures.
pub const COMPENSATOR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftPoint {
    pub node: usize,
    pub t: f64,
    pub phi: f64,
    /// `Ψ(t, ζ_j)` per mark.
    pub psi: Vec<f64>,
    /// Largest imaginary residual of the integrals at this point.
    pub im_residual: f64,
    /// `E[δ_Y(y) | F_t]` at `y = Y`; NaN when there is no enlargement.
    pub denom: f64,
}

/// Per-path drift on the cells of `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftField {
    pub path_id: u64,
    pub intensities: Vec<f64>,
    pub points: Vec<DriftPoint>,
}

impl DriftField {
    pub fn n_cells(&self) -> usize {
        self.points.len()
    }

    /// `α₁(t_i) = Φ(t_i)`.
    pub fn alpha1(&self, cell: usize) -> f64 {
        self.points[cell].phi
    }

    pub fn psi(&self, cell: usize, mark: usize) -> f64 {
        self.points[cell].psi[mark]
    }

    /// Density of `α₂(t_i, ·)` against the counting measure on marks:
    /// `Ψ(t_i, ζ_j) λ_j`.
    pub fn alpha2_weight(&self, cell: usize, mark: usize) -> f64 {
        self.points[cell].psi[mark] * self.intensities[mark]
    }

    /// `λ_j (1 + Ψ(t_i, ζ_j))`.
    pub fn compensator(&self, cell: usize, mark: usize) -> f64 {
        self.intensities[mark] * (1.0 + self.points[cell].psi[mark])
    }

    pub fn min_compensator(&self) -> f64 {
        (0..self.points.len())
            .flat_map(|i| (0..self.intensities.len()).map(move |j| (i, j)))
            .map(|(i, j)| self.compensator(i, j))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_im_residual(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.im_residual)
            .fold(0.0, f64::max)
    }

    /// Drift of a policy that ignores the signal.
    pub fn zero(model: &ValidatedModel, path_id: u64) -> Self {
        let m = model.n_marks();
        let points = (0..model.horizon_steps())
            .map(|i| DriftPoint {
                node: i,
                t: model.grid().node(i),
                phi: 0.0,
                psi: vec![0.0; m],
                im_residual: 0.0,
                denom: f64::NAN,
            })
            .collect();
        Self {
            path_id,
            intensities: intensities(model),
            points,
        }
    }
}

fn intensities(model: &ValidatedModel) -> Vec<f64> {
    model.levy().marks().iter().map(|m| m.intensity).collect()
}

struct Evaluator<'a> {
    model: &'a ValidatedModel,
    path: &'a SamplePath,
    q: &'a QuadratureSpec,
    marks: Vec<usize>,
    reference: f64,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a ValidatedModel, path: &'a SamplePath, q: &'a QuadratureSpec) -> Result<Self> {
        let marks: Vec<usize> = (0..model.n_marks()).collect();
        let mut ev = Self {
            model,
            path,
            q,
            marks,
            reference: 0.0,
        };
        let state = FourierState::new(model, path, 0);
        ev.reference = evaluate(&state, path.signal(), q, KernelRequest::DELTA)?
            .delta
            .value;
        Ok(ev)
    }

    fn point(&self, node: usize) -> Result<DriftPoint> {
        let state = FourierState::new(self.model, self.path, node);
        let gaussian = self.model.mode() == Mode::GaussianDominant;
        let req = KernelRequest {
            malliavin_b: gaussian,
            marks: &self.marks,
        };
        let v = evaluate(&state, self.path.signal(), self.q, req)?;
        let denom = v.delta.value;
        if denom.is_nan() || denom <= 0.0 || denom < RELATIVE_DENOM_FLOOR * self.reference {
            return Err(Error::DenominatorUnderflow {
                path_id: self.path.path_id,
                t: state.t,
                denom,
                reference: self.reference,
            });
        }
        let phi = v.malliavin_b.map_or(0.0, |e| e.value / denom);
        // `1 + Ψ` is a ratio of densities; rounding just below -1 is clipped.
        let psi = v
            .malliavin_n
            .iter()
            .map(|e| {
                let p = e.value / denom;
                if (-1.0 - COMPENSATOR_TOL..-1.0).contains(&p) {
                    -1.0
                } else {
                    p
                }
            })
            .collect();
        Ok(DriftPoint {
            node,
            t: state.t,
            phi,
            psi,
            im_residual: v.max_im_residual(),
            denom,
        })
    }
}

/// `Φ` and `Ψ` at every cell of `[0, T]` along one path.
pub fn drift_field(
    model: &ValidatedModel,
    path: &SamplePath,
    q: &QuadratureSpec,
) -> Result<DriftField> {
    if model.mode() == Mode::NoEnlargement {
        return Ok(DriftField::zero(model, path.path_id));
    }
    let ev = Evaluator::new(model, path, q)?;
    let points = (0..model.horizon_steps())
        .map(|i| ev.point(i))
        .collect::<Result<Vec<_>>>()?;
    Ok(DriftField {
        path_id: path.path_id,
        intensities: intensities(model),
        points,
    })
}

fn single_point(
    model: &ValidatedModel,
    path: &SamplePath,
    node: usize,
    q: &QuadratureSpec,
) -> Result<Option<DriftPoint>> {
    if model.mode() == Mode::NoEnlargement {
        return Ok(None);
    }
    Evaluator::new(model, path, q)?.point(node).map(Some)
}

/// `Φ(t_i)` along `path`.
pub fn phi(
    model: &ValidatedModel,
    path: &SamplePath,
    node: usize,
    q: &QuadratureSpec,
) -> Result<f64> {
    Ok(single_point(model, path, node, q)?.map_or(0.0, |p| p.phi))
}

/// `Ψ(t_i, ζ_j)` along `path`.
pub fn psi(
    model: &ValidatedModel,
    path: &SamplePath,
    node: usize,
    mark: usize,
    q: &QuadratureSpec,
) -> Result<f64> {
    Ok(single_point(model, path, node, q)?.map_or(0.0, |p| p.psi[mark]))
}

/// Brownian-bridge drift `(Y − Y(t)) β(t) / ‖β‖²_{[t,T0]}` for `Y = ∫ β dB`.
pub fn closed_form_phi_brownian(
    model: &ValidatedModel,
    path: &SamplePath,
    node: usize,
) -> Result<f64> {
    if model.n_marks() != 0 || model.mode() != Mode::GaussianDominant {
        return Err(Error::WrongModel(
            "Brownian closed form needs a jump-free Gaussian signal".into(),
        ));
    }
    let beta = model.signal().sigma.cell(node);
    Ok((path.signal() - path.running_signal(node)) * beta / model.tail_gaussian(node))
}

/// `(Y − θB(t) − Ñ(t)) / (λ(T0 − t)) − (θ/λ) Φ(t)` for `Y = θB(T0) + Ñ(T0)`.
///
/// With `θ = 0` this is the Poisson bridge `(Y − Ñ(t)) / (λ(T0 − t))`.
pub fn psi_poisson_bridge(
    signal: f64,
    brownian_t: f64,
    compensated_t: f64,
    theta: f64,
    lambda: f64,
    time_to_end: f64,
    phi: f64,
) -> f64 {
    let bridge = (signal - theta * brownian_t - compensated_t) / (lambda * time_to_end);
    if theta == 0.0 {
        bridge
    } else {
        bridge - theta / lambda * phi
    }
}

/// Closed-form `Ψ(t, 1)` for the single unit-jump model `Y = θB + Ñ` with
/// constant `θ` (possibly zero); `phi_value` is `Φ(t)` and is ignored when
/// `θ = 0`.
pub fn closed_form_psi_poisson(
    model: &ValidatedModel,
    path: &SamplePath,
    node: usize,
    phi_value: f64,
) -> Result<f64> {
    let (theta, lambda) = unit_poisson_params(model)?;
    Ok(psi_poisson_bridge(
        path.signal(),
        path.brownian(node),
        path.compensated(model, 0, node),
        theta,
        lambda,
        model.time_to_end(node),
        phi_value,
    ))
}

/// `(θ, λ)` if the model is `Y = θB + Ñ` with one unit mark.
pub fn unit_poisson_params(model: &ValidatedModel) -> Result<(f64, f64)> {
    let marks = model.levy().marks();
    let wrong = |why: &str| Err(Error::WrongModel(format!("Poisson closed form: {why}")));
    if marks.len() != 1 || marks[0].size != 1.0 {
        return wrong("needs exactly one mark of size 1");
    }
    if model.signal().theta[0].constant_value() != Some(1.0) {
        return wrong("jump coefficient must be identically 1");
    }
    let Some(theta) = model.signal().sigma.constant_value() else {
        return wrong("Brownian coefficient must be constant");
    };
    if model.mode() == Mode::NoEnlargement {
        return wrong("model is not enlarged");
    }
    Ok((theta, marks[0].intensity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        validate_model, LevyConfig, Mark, MarketConfig, ModelSpec, SignalConfig, TimeGrid,
    };
    use crate::path::simulate_path;

    fn model(sigma_y: f64, marks: Vec<(f64, f64)>, n: usize, horizon: f64) -> ValidatedModel {
        validate_model(&ModelSpec {
            grid: TimeGrid {
                t_end: 1.0,
                n_steps: n,
            },
            signal: SignalConfig {
                sigma: sigma_y.into(),
                theta: None,
                enlarge: true,
            },
            levy: LevyConfig {
                marks: marks
                    .into_iter()
                    .map(|(size, intensity)| Mark { size, intensity })
                    .collect(),
            },
            market: MarketConfig {
                b: 0.0.into(),
                sigma: 1.0.into(),
                gamma: None,
                horizon,
                eps_adm: 1e-9,
            },
        })
        .unwrap()
    }

    fn path_with(
        model: &ValidatedModel,
        increments: Vec<f64>,
        counts: Vec<Vec<u32>>,
    ) -> SamplePath {
        SamplePath::from_draws(model, 0, increments, counts)
    }

    #[test]
    fn brownian_phi_hand_value() {
        // β ≡ 1, T0 = 1, Y(0.5) = 0.25, Y = 1: Φ(0.5) = 0.75 / 0.5 = 1.5.
        let m = model(1.0, vec![], 2, 0.5);
        let p = path_with(&m, vec![0.25, 0.75], vec![]);
        let q = QuadratureSpec::default();
        assert!((closed_form_phi_brownian(&m, &p, 1).unwrap() - 1.5).abs() < 1e-15);
        assert!((phi(&m, &p, 1, &q).unwrap() - 1.5).abs() < 1e-8);
        // t = 0: Φ(0) = Y / T0.
        assert!((closed_form_phi_brownian(&m, &p, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!((phi(&m, &p, 0, &q).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn brownian_phi_zero_where_beta_vanishes() {
        let mut spec = model(1.0, vec![], 4, 0.5).to_spec();
        spec.signal.sigma = crate::model::StepSpec::Cells(vec![1.0, 0.0, 2.0, 1.0]);
        let m = validate_model(&spec).unwrap();
        let p = simulate_path(&m, 3, 1);
        assert_eq!(closed_form_phi_brownian(&m, &p, 1).unwrap(), 0.0);
        assert_eq!(phi(&m, &p, 1, &QuadratureSpec::default()).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_rejects_wrong_models() {
        let m = model(1.0, vec![(1.0, 1.0)], 10, 0.5);
        let p = simulate_path(&m, 1, 0);
        assert!(matches!(
            closed_form_phi_brownian(&m, &p, 0),
            Err(Error::WrongModel(_))
        ));
        let m2 = model(1.0, vec![(2.0, 1.0)], 10, 0.5);
        let p2 = simulate_path(&m2, 1, 0);
        assert!(matches!(
            closed_form_psi_poisson(&m2, &p2, 0, 0.0),
            Err(Error::WrongModel(_))
        ));
    }

    #[test]
    fn poisson_bridge_hand_values() {
        // N(1) = 2, N(0.5) = 1, λ = 1: Ψ = (Ñ(1) − Ñ(0.5)) / 0.5 = 1, compensator 2.
        let m = model(0.0, vec![(1.0, 1.0)], 2, 0.5);
        let p = path_with(&m, vec![0.0, 0.0], vec![vec![1, 1]]);
        let q = QuadratureSpec::default();
        let f = drift_field(&m, &p, &q).unwrap();
        assert!((f.psi(0, 0) - 1.0).abs() < 1e-12);
        assert!((closed_form_psi_poisson(&m, &p, 1, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((psi(&m, &p, 1, 0, &q).unwrap() - 1.0).abs() < 1e-12);
        // α = λΨ = (Ñ(T0) − Ñ(t)) / (T0 − t).
        let alpha = 1.0 * closed_form_psi_poisson(&m, &p, 1, 0.0).unwrap();
        let expect = (p.compensated(&m, 0, 2) - p.compensated(&m, 0, 1)) / 0.5;
        assert!((alpha - expect).abs() < 1e-15);
    }

    #[test]
    fn all_jumps_realized_kills_the_compensator() {
        let m = model(0.0, vec![(1.0, 1.0)], 4, 0.75);
        let p = path_with(&m, vec![0.0; 4], vec![vec![1, 1, 0, 0]]);
        let f = drift_field(&m, &p, &QuadratureSpec::default()).unwrap();
        assert!((f.psi(2, 0) + 1.0).abs() < 1e-12);
        assert!(f.compensator(2, 0).abs() < 1e-12);
        assert!(f.min_compensator() >= 0.0);
        assert!((0..3).all(|i| f.psi(i, 0) >= -1.0));
    }

    #[test]
    fn mixed_hand_value() {
        let v = psi_poisson_bridge(1.3, 0.5, 0.2, 0.8, 1.0, 0.5, 0.7);
        assert!((v - 0.84).abs() < 1e-15, "{v}");
        // θ = 0 ignores Φ.
        assert_eq!(psi_poisson_bridge(1.3, 0.5, 0.2, 0.0, 1.0, 0.5, 123.0), 2.2);
    }

    #[test]
    fn drift_field_layout() {
        let m = model(0.8, vec![(1.0, 1.0)], 10, 0.5);
        let p = simulate_path(&m, 4, 2);
        let f = drift_field(&m, &p, &QuadratureSpec::default()).unwrap();
        assert_eq!(f.n_cells(), 5);
        for i in 0..5 {
            assert_eq!(f.alpha1(i), f.points[i].phi);
            assert_eq!(f.alpha2_weight(i, 0), f.psi(i, 0) * 1.0);
            assert_eq!(f.compensator(i, 0), 1.0 * (1.0 + f.psi(i, 0)));
            assert!(f.points[i].denom > 0.0);
        }
    }

    #[test]
    fn no_enlargement_has_zero_drift() {
        let mut spec = model(1.0, vec![(1.0, 1.0)], 10, 0.5).to_spec();
        spec.signal.enlarge = false;
        let m = validate_model(&spec).unwrap();
        let p = simulate_path(&m, 1, 0);
        let f = drift_field(&m, &p, &QuadratureSpec::default()).unwrap();
        assert!(f
            .points
            .iter()
            .all(|pt| pt.phi == 0.0 && pt.psi == vec![0.0]));
    }

    #[test]
    fn underflowing_denominator_aborts() {
        // A path whose terminal value sits ~40 conditional std devs from Y(t).
        let m = model(1.0, vec![], 100, 0.9);
        let mut inc = vec![0.0; 100];
        inc[99] = 4.0;
        let p = path_with(&m, inc, vec![]);
        let err = drift_field(&m, &p, &QuadratureSpec::default()).unwrap_err();
        assert!(matches!(err, Error::DenominatorUnderflow { .. }), "{err:?}");
    }
}
