//! Pointwise first-order condition for the optimal log-utility control and
//! Monte Carlo value estimates.

use serde::Serialize;

use crate::drift::{drift_field, DriftField};
use crate::error::{Error, Result};
use crate::model::ValidatedModel;
use crate::path::{log_wealth, ControlPolicy, Ensemble, SamplePath};
use crate::quadrature::QuadratureSpec;
use crate::stats::{summarize, SampleSummary};

/// Target for `|residual(u*)|`.
pub const FOC_TOL: f64 = 1e-12;

/// Bracket expansion gives up beyond this magnitude.
const MAX_EXPANSION: f64 = 1e12;

/// First-order condition on one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocProblem {
    pub b: f64,
    pub sigma: f64,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: f64,
    pub eps_adm: f64,
}

impl FocProblem {
    /// The `F`-adapted problem on `cell` (`Φ = Ψ = 0`).
    pub fn honest(model: &ValidatedModel, cell: usize) -> Self {
        let market = model.market();
        Self {
            b: market.b.cell(cell),
            sigma: market.sigma.cell(cell),
            gamma: market.gamma.iter().map(|g| g.cell(cell)).collect(),
            lambda: model.levy().marks().iter().map(|m| m.intensity).collect(),
            psi: vec![0.0; model.n_marks()],
            phi: 0.0,
            eps_adm: market.eps_adm,
        }
    }

    /// The insider problem on `cell` with the path's drift.
    pub fn insider(model: &ValidatedModel, field: &DriftField, cell: usize) -> Self {
        let point = &field.points[cell];
        Self {
            phi: point.phi,
            psi: point.psi.clone(),
            ..Self::honest(model, cell)
        }
    }

    /// Closed interval `{u : 1 + uγ_j ≥ eps_adm ∀j}`, possibly unbounded.
    pub fn admissible_interval(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        // Pulled inward by a few ulps so the endpoints themselves are admissible.
        let shrink = 1.0 - 4.0 * f64::EPSILON;
        for &g in &self.gamma {
            let edge = (self.eps_adm - 1.0) / g * shrink;
            if g > 0.0 {
                lo = lo.max(edge);
            } else if g < 0.0 {
                hi = hi.min(edge);
            }
        }
        (lo, hi)
    }

    pub fn is_admissible(&self, u: f64) -> bool {
        self.gamma
            .iter()
            .all(|&g| u.mul_add(g, 1.0) >= self.eps_adm)
    }

    /// `b + σΦ − uσ² + Σ_j λ_j γ_j [(1 + Ψ_j)/(1 + uγ_j) − 1]`, unchecked.
    pub fn residual(&self, u: f64) -> f64 {
        let mut r = self.b + self.sigma * self.phi - u * self.sigma * self.sigma;
        for j in 0..self.gamma.len() {
            let g = self.gamma[j];
            if g != 0.0 {
                r += self.lambda[j] * g * ((1.0 + self.psi[j]) / u.mul_add(g, 1.0) - 1.0);
            }
        }
        r
    }

    /// `d residual / du`.
    pub fn slope(&self, u: f64) -> f64 {
        let mut d = -self.sigma * self.sigma;
        for j in 0..self.gamma.len() {
            let g = self.gamma[j];
            let s = u.mul_add(g, 1.0);
            d -= self.lambda[j] * (1.0 + self.psi[j]) * g * g / (s * s);
        }
        d
    }
}

/// Residual of the first-order condition at an admissible `u`.
pub fn foc_residual(u: f64, prob: &FocProblem) -> Result<f64> {
    if !prob.is_admissible(u) {
        let (lo, hi) = prob.admissible_interval();
        return Err(Error::InadmissiblePoint { u, lo, hi });
    }
    Ok(prob.residual(u))
}

/// Unique root of the (decreasing) residual on the admissible interval, by
/// safeguarded Newton iteration inside a sign bracket.
///
/// Near the admissibility edge the residual can change by more than
/// [`FOC_TOL`] between adjacent floats; the bracket then collapses and the
/// float with the smaller residual is returned. Callers that need the
/// tolerance check the residual.
pub fn solve_optimal_control(prob: &FocProblem) -> Result<f64> {
    let (lo, hi) = prob.admissible_interval();
    let r0 = prob.residual(0.0);
    if r0.abs() <= FOC_TOL {
        return Ok(0.0);
    }
    let no_root = |r_lo: f64, r_hi: f64| Error::NoAdmissibleRoot { lo, hi, r_lo, r_hi };

    // Bracket [a, b] with r(a) > 0 > r(b).
    let (mut a, mut b);
    if r0 > 0.0 {
        a = 0.0;
        if hi.is_finite() {
            let r_hi = prob.residual(hi);
            if r_hi > 0.0 {
                return Err(no_root(prob.residual(lo.max(-MAX_EXPANSION)), r_hi));
            }
            b = hi;
        } else {
            let mut step = 1.0;
            loop {
                b = a + step;
                if prob.residual(b) <= 0.0 {
                    break;
                }
                if b > MAX_EXPANSION {
                    return Err(no_root(
                        prob.residual(lo.max(-MAX_EXPANSION)),
                        prob.residual(b),
                    ));
                }
                a = b;
                step *= 2.0;
            }
        }
    } else {
        b = 0.0;
        if lo.is_finite() {
            let r_lo = prob.residual(lo);
            if r_lo < 0.0 {
                return Err(no_root(r_lo, prob.residual(hi.min(MAX_EXPANSION))));
            }
            a = lo;
        } else {
            let mut step = 1.0;
            loop {
                a = b - step;
                if prob.residual(a) >= 0.0 {
                    break;
                }
                if a < -MAX_EXPANSION {
                    return Err(no_root(
                        prob.residual(a),
                        prob.residual(hi.min(MAX_EXPANSION)),
                    ));
                }
                b = a;
                step *= 2.0;
            }
        }
    }

    let mut u = 0.5 * (a + b);
    let mut best = (f64::INFINITY, u);
    for _ in 0..400 {
        let r = prob.residual(u);
        if r.abs() < best.0 {
            best = (r.abs(), u);
        }
        if r.abs() <= FOC_TOL {
            return Ok(polish(prob, u, r));
        }
        if r > 0.0 {
            a = u;
        } else {
            b = u;
        }
        let newton = u - r / prob.slope(u);
        let next = if newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if next == u || next_up(a) >= b {
            let (ra, rb) = (prob.residual(a).abs(), prob.residual(b).abs());
            for (r, x) in [(ra, a), (rb, b)] {
                if r < best.0 {
                    best = (r, x);
                }
            }
            return Ok(best.1);
        }
        u = next;
    }
    if best.0 <= FOC_TOL {
        Ok(best.1)
    } else {
        Err(Error::RootNotResolved {
            u: best.1,
            residual: best.0,
        })
    }
}

/// A few extra Newton steps once within tolerance, keeping the best iterate.
fn polish(prob: &FocProblem, mut u: f64, mut r: f64) -> f64 {
    let mut best = (r.abs(), u);
    for _ in 0..3 {
        if r == 0.0 {
            break;
        }
        let next = u - r / prob.slope(u);
        if !next.is_finite() || !prob.is_admissible(next) || next == u {
            break;
        }
        u = next;
        r = prob.residual(u);
        if r.abs() < best.0 {
            best = (r.abs(), u);
        }
    }
    best.1
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

/// Per-cell honest control on `[0, T]`; identical for every path.
pub fn honest_benchmark(model: &ValidatedModel) -> Result<Vec<f64>> {
    (0..model.horizon_steps())
        .map(|i| solve_optimal_control(&FocProblem::honest(model, i)))
        .collect()
}

/// Controls of one path with the FOC residual where the policy solves one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPath {
    pub path_id: u64,
    pub u: Vec<f64>,
    /// NaN for policies that do not solve a first-order condition.
    pub residual: Vec<f64>,
}

impl ControlPath {
    pub fn max_abs_residual(&self) -> f64 {
        self.residual
            .iter()
            .filter(|r| !r.is_nan())
            .fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Controls of `policy` along one path; `field` is required by the insider
/// policy.
pub fn resolve_controls(
    model: &ValidatedModel,
    policy: &ControlPolicy,
    path_id: u64,
    field: Option<&DriftField>,
) -> Result<ControlPath> {
    let n_t = model.horizon_steps();
    let fixed = |u: Vec<f64>| ControlPath {
        path_id,
        residual: vec![f64::NAN; u.len()],
        u,
    };
    let solved = |make: &dyn Fn(usize) -> FocProblem| -> Result<ControlPath> {
        let mut u = Vec::with_capacity(n_t);
        let mut residual = Vec::with_capacity(n_t);
        for i in 0..n_t {
            let p = make(i);
            let root = solve_optimal_control(&p)?;
            residual.push(p.residual(root));
            u.push(root);
        }
        Ok(ControlPath {
            path_id,
            u,
            residual,
        })
    };
    match policy {
        ControlPolicy::Zero => Ok(fixed(vec![0.0; n_t])),
        ControlPolicy::Constant(c) => Ok(fixed(vec![*c; n_t])),
        ControlPolicy::Table(rows) => {
            let row = rows
                .get(path_id as usize)
                .ok_or(Error::MissingControls { path_id })?;
            if row.len() < n_t {
                return Err(Error::MissingControls { path_id });
            }
            Ok(fixed(row[..n_t].to_vec()))
        }
        ControlPolicy::HonestOptimal => solved(&|i| FocProblem::honest(model, i)),
        ControlPolicy::InsiderOptimal => {
            let field = field.ok_or(Error::MissingDrift {
                path_id,
                have: 0,
                need: n_t,
            })?;
            check_coverage(field, n_t)?;
            solved(&|i| FocProblem::insider(model, field, i))
        }
    }
}

fn check_coverage(field: &DriftField, need: usize) -> Result<()> {
    if field.n_cells() < need {
        return Err(Error::MissingDrift {
            path_id: field.path_id,
            have: field.n_cells(),
            need,
        });
    }
    Ok(())
}

/// `Σ_i [uβ − ½u²σ² + Σ_j (ln(1+uγ_j) − uγ_j) λ_j(1+Ψ_j)] Δt` with
/// `β = b + σΦ + Σ_j γ_j Ψ_j λ_j`.
pub fn drift_formula_value(
    model: &ValidatedModel,
    controls: &[f64],
    field: &DriftField,
) -> Result<f64> {
    let n_t = model.horizon_steps();
    check_coverage(field, n_t)?;
    crate::path::check_admissible(model, controls)?;
    let market = model.market();
    let dt = model.grid().dt();
    let mut total = 0.0;
    for (i, &u) in controls.iter().enumerate().take(n_t) {
        if u == 0.0 {
            continue;
        }
        let s = market.sigma.cell(i);
        let mut beta = market.b.cell(i) + s * field.alpha1(i);
        let mut jumps = 0.0;
        for j in 0..model.n_marks() {
            let g = market.gamma[j].cell(i);
            beta += g * field.alpha2_weight(i, j);
            let ug = u * g;
            jumps += (ug.ln_1p() - ug) * field.compensator(i, j);
        }
        total += (u * beta - 0.5 * u * u * s * s + jumps) * dt;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Mean of the realized log-wealth.
    Pathwise,
    /// Mean of the time integral of the enlarged-filtration drift.
    DriftFormula,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub estimator: Estimator,
}

impl ValueEstimate {
    pub fn from_samples(samples: &[f64], estimator: Estimator) -> Self {
        let SampleSummary {
            mean, stderr, n, ..
        } = summarize(samples);
        Self {
            mean,
            stderr,
            n_paths: n,
            estimator,
        }
    }
}

/// Both estimators for one policy plus the worst FOC residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyValue {
    pub policy: String,
    pub pathwise: ValueEstimate,
    pub drift_formula: ValueEstimate,
    pub max_foc_residual: f64,
}

impl PolicyValue {
    /// `|a − b| / sqrt(se_a² + se_b²)`.
    pub fn estimator_gap(&self) -> f64 {
        let se = self.pathwise.stderr.hypot(self.drift_formula.stderr);
        let d = (self.pathwise.mean - self.drift_formula.mean).abs();
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / se
        }
    }
}

/// Per-path outcome of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub controls: ControlPath,
    pub log_wealth: f64,
    pub drift_formula: f64,
}

/// Evaluates several policies on one path, sharing its drift field.
pub fn evaluate_path(
    model: &ValidatedModel,
    path: &SamplePath,
    field: &DriftField,
    policies: &[ControlPolicy],
) -> Result<Vec<PathOutcome>> {
    policies
        .iter()
        .map(|policy| {
            let controls = resolve_controls(model, policy, path.path_id, Some(field))?;
            Ok(PathOutcome {
                log_wealth: log_wealth(model, path, &controls.u)?,
                drift_formula: drift_formula_value(model, &controls.u, field)?,
                controls,
            })
        })
        .collect()
}

/// Expected log-wealth of each policy over the ensemble, both estimators.
pub fn expected_log_wealth(
    ensemble: &Ensemble<'_>,
    policies: &[ControlPolicy],
    q: &QuadratureSpec,
) -> Result<Vec<PolicyValue>> {
    let model = ensemble.model;
    let per_path = ensemble
        .map(|path| {
            let field = drift_field(model, &path, q)?;
            evaluate_path(model, &path, &field, policies)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(policies
        .iter()
        .enumerate()
        .map(|(k, policy)| {
            let a: Vec<f64> = per_path.iter().map(|o| o[k].log_wealth).collect();
            let b: Vec<f64> = per_path.iter().map(|o| o[k].drift_formula).collect();
            let res = per_path
                .iter()
                .map(|o| o[k].controls.max_abs_residual())
                .fold(0.0, f64::max);
            PolicyValue {
                policy: policy.name().to_string(),
                pathwise: ValueEstimate::from_samples(&a, Estimator::Pathwise),
                drift_formula: ValueEstimate::from_samples(&b, Estimator::DriftFormula),
                max_foc_residual: res,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        validate_model, LevyConfig, Mark, MarketConfig, ModelSpec, SignalConfig, TimeGrid,
    };
    use crate::path::simulate;
    use proptest::prelude::*;

    fn prob(b: f64, sigma: f64, phi: f64, marks: &[(f64, f64, f64)]) -> FocProblem {
        FocProblem {
            b,
            sigma,
            gamma: marks.iter().map(|m| m.0).collect(),
            lambda: marks.iter().map(|m| m.1).collect(),
            psi: marks.iter().map(|m| m.2).collect(),
            phi,
            eps_adm: 1e-9,
        }
    }

    /// Plain bisection on a sign bracket.
    fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn brownian_roots() {
        assert!((solve_optimal_control(&prob(0.0, 1.0, 1.5, &[])).unwrap() - 1.5).abs() < 1e-14);
        assert!((solve_optimal_control(&prob(0.1, 1.0, 0.0, &[])).unwrap() - 0.1).abs() < 1e-14);
        let p = prob(0.3, 2.0, 0.0, &[]);
        assert!((solve_optimal_control(&p).unwrap() - 0.075).abs() < 1e-14);
        assert_eq!(
            solve_optimal_control(&prob(0.0, 1.0, 0.0, &[(0.7, 2.0, 0.0)])).unwrap(),
            0.0
        );
    }

    #[test]
    fn jump_residual_matches_written_form() {
        let p = prob(0.0, 1.0, 0.0, &[(0.5, 1.0, 1.0)]);
        for u in [-1.5, -0.3, 0.0, 0.4, 3.0] {
            let expect = -u - 0.25 * u / (1.0 + 0.5 * u) + 0.5 / (1.0 + 0.5 * u);
            assert!((foc_residual(u, &p).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn jump_root_matches_bisection_oracle() {
        let p = prob(0.0, 1.0, 0.0, &[(0.5, 1.0, 1.0)]);
        let u = solve_optimal_control(&p).unwrap();
        let oracle = bisect(
            |u| -u - 0.25 * u / (1.0 + 0.5 * u) + 0.5 / (1.0 + 0.5 * u),
            0.0,
            1.0,
        );
        assert!((u - oracle).abs() < 1e-10, "{u} vs {oracle}");
        assert!(foc_residual(u, &p).unwrap().abs() <= FOC_TOL);
    }

    #[test]
    fn honest_jump_root_matches_bisection_oracle() {
        let p = prob(0.4, 0.5, 0.0, &[(0.3, 2.0, 0.0), (-0.2, 1.0, 0.0)]);
        let u = solve_optimal_control(&p).unwrap();
        let f =
            |u: f64| 0.4 - 0.25 * u - 2.0 * u * 0.09 / (1.0 + 0.3 * u) - u * 0.04 / (1.0 - 0.2 * u);
        let oracle = bisect(f, 0.0, 4.9);
        assert!((u - oracle).abs() < 1e-10, "{u} vs {oracle}");
    }

    #[test]
    fn admissible_interval_from_gamma_signs() {
        let p = prob(
            0.0,
            1.0,
            0.0,
            &[(0.5, 1.0, 0.0), (-0.25, 1.0, 0.0), (2.0, 1.0, 0.0)],
        );
        let (lo, hi) = p.admissible_interval();
        assert!((lo + 0.5).abs() < 1e-9 && (hi - 4.0).abs() < 1e-8);
        assert!(p.is_admissible(lo) && p.is_admissible(hi));
        assert!(matches!(
            foc_residual(5.0, &p),
            Err(Error::InadmissiblePoint { .. })
        ));
        assert_eq!(
            prob(0.0, 1.0, 0.0, &[]).admissible_interval(),
            (f64::NEG_INFINITY, f64::INFINITY)
        );
    }

    #[test]
    fn realized_jumps_give_the_drift_adjusted_merton_root() {
        // Ψ = −1: residual = b − uσ² − λγ, linear.
        let p = prob(0.05, 0.5, 0.0, &[(0.3, 1.0, -1.0)]);
        assert!((solve_optimal_control(&p).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_root_when_sign_is_constant() {
        // Pure jumps, γ > 0 and Ψ = −1: residual ≡ b − λγ < 0.
        let p = prob(0.0, 0.0, 0.0, &[(0.5, 1.0, -1.0)]);
        assert!(matches!(
            solve_optimal_control(&p),
            Err(Error::NoAdmissibleRoot { .. })
        ));
        // σ = 0, b large: residual stays positive toward +∞.
        let p = prob(5.0, 0.0, 0.0, &[(0.5, 1.0, 0.0)]);
        assert!(matches!(
            solve_optimal_control(&p),
            Err(Error::NoAdmissibleRoot { .. })
        ));
    }

    #[test]
    fn roots_near_the_admissibility_edge() {
        // Large Ψ pushes the root toward +∞ for γ < 0, bounded by 1/|γ|.
        let p = prob(0.0, 0.1, 0.0, &[(-1.0, 1.0, 50.0)]);
        let u = solve_optimal_control(&p).unwrap();
        assert!(p.is_admissible(u));
        assert!(p.residual(u).abs() <= FOC_TOL);
    }

    #[test]
    fn edge_root_is_the_best_float() {
        // 1 + Ψ = 1e-7 with a bearish Φ puts the root within ~1e-7 of −1/γ,
        // where the residual moves by ~1e-9 per ulp of u.
        let p = prob(0.05, 0.5, -3.0, &[(0.3, 1.0, -1.0 + 1e-7)]);
        let u = solve_optimal_control(&p).unwrap();
        assert!(p.is_admissible(u));
        let r = p.residual(u).abs();
        let below = f64::from_bits(u.to_bits() + 1);
        let above = f64::from_bits(u.to_bits() - 1);
        assert!(r <= p.residual(above).abs());
        if p.is_admissible(below) {
            assert!(r <= p.residual(below).abs());
        }
        assert!(p.residual(above) < 0.0 || p.residual(u) <= 0.0);
    }

    proptest! {
        #[test]
        fn plug_back_and_monotone(
            b in -1.0f64..1.0,
            sigma in 0.05f64..2.0,
            phi in -5.0f64..5.0,
            g1 in -0.9f64..2.0,
            l1 in 0.1f64..3.0,
            psi1 in -1.0f64..5.0,
            g2 in -2.0f64..0.9,
            l2 in 0.1f64..3.0,
            psi2 in -1.0f64..5.0,
        ) {
            let p = prob(b, sigma, phi, &[(g1, l1, psi1), (g2, l2, psi2)]);
            let u = solve_optimal_control(&p).unwrap();
            prop_assert!(p.is_admissible(u));
            prop_assert!(foc_residual(u, &p).unwrap().abs() <= FOC_TOL);
            // Strictly decreasing on 100 interior sample points.
            let (lo, hi) = p.admissible_interval();
            let (a, z) = (lo.max(-50.0), hi.min(50.0));
            let pts: Vec<f64> = (0..100).map(|k| a + (z - a) * (k as f64 + 0.5) / 100.0).collect();
            for w in pts.windows(2) {
                prop_assert!(p.residual(w[1]) < p.residual(w[0]));
            }
        }
    }

    fn brownian_model(n: usize, horizon: f64, b: f64) -> ValidatedModel {
        validate_model(&ModelSpec {
            grid: TimeGrid {
                t_end: 1.0,
                n_steps: n,
            },
            signal: SignalConfig {
                sigma: 1.0.into(),
                theta: None,
                enlarge: true,
            },
            levy: LevyConfig::default(),
            market: MarketConfig {
                b: b.into(),
                sigma: 1.0.into(),
                gamma: None,
                horizon,
                eps_adm: 1e-9,
            },
        })
        .unwrap()
    }

    #[test]
    fn honest_benchmark_is_merton() {
        let m = brownian_model(10, 0.5, 0.2);
        assert_eq!(honest_benchmark(&m).unwrap(), vec![0.2; 5]);
        let m0 = brownian_model(10, 0.5, 0.0);
        assert_eq!(honest_benchmark(&m0).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn zero_policy_has_zero_value() {
        let m = brownian_model(20, 0.5, 0.1);
        let v = expected_log_wealth(
            &simulate(&m, 200, 1),
            &[ControlPolicy::Zero],
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_eq!(v[0].pathwise.mean, 0.0);
        assert_eq!(v[0].pathwise.stderr, 0.0);
        assert_eq!(v[0].drift_formula.mean, 0.0);
    }

    #[test]
    fn table_policy_requires_rows() {
        let m = brownian_model(10, 0.5, 0.0);
        let t = ControlPolicy::Table(vec![vec![0.1; 5]]);
        assert_eq!(resolve_controls(&m, &t, 0, None).unwrap().u, vec![0.1; 5]);
        assert!(matches!(
            resolve_controls(&m, &t, 1, None),
            Err(Error::MissingControls { path_id: 1 })
        ));
        assert!(matches!(
            resolve_controls(&m, &ControlPolicy::InsiderOptimal, 0, None),
            Err(Error::MissingDrift { .. })
        ));
    }

    /// Left-Riemann form of `½∫_0^T dt / (T0 − t)` on the grid.
    fn discrete_insider_value(n: usize, horizon_steps: usize) -> f64 {
        let dt = 1.0 / n as f64;
        (0..horizon_steps)
            .map(|i| 0.5 * dt / (1.0 - i as f64 * dt))
            .sum()
    }

    #[test]
    fn insider_value_grows_with_horizon() {
        let n = 40;
        let q = QuadratureSpec::default();
        let policies = [ControlPolicy::InsiderOptimal, ControlPolicy::HonestOptimal];
        let mut last = 0.0;
        for horizon in [0.25, 0.5, 0.75] {
            let m = brownian_model(n, horizon, 0.0);
            let v = expected_log_wealth(&simulate(&m, 4000, 17), &policies, &q).unwrap();
            let ins = &v[0];
            let exact = 0.5 * (1.0 / (1.0 - horizon)).ln();
            let discrete = discrete_insider_value(n, (horizon * n as f64).round() as usize);
            for est in [ins.pathwise, ins.drift_formula] {
                assert!(
                    (est.mean - discrete).abs() <= 3.0 * est.stderr,
                    "T={horizon} {:?}: {} vs {discrete} (continuum {exact}) se {}",
                    est.estimator,
                    est.mean,
                    est.stderr
                );
            }
            assert!(ins.max_foc_residual <= FOC_TOL);
            assert!(ins.estimator_gap() <= 3.0);
            assert!(ins.pathwise.mean > last);
            last = ins.pathwise.mean;
            let hon = &v[1];
            assert_eq!(hon.pathwise.mean, 0.0);
            assert!(ins.pathwise.mean >= hon.pathwise.mean - 3.0 * ins.pathwise.stderr);
        }
    }

    #[test]
    fn poisson_insider_controls_are_admissible() {
        let m = validate_model(&ModelSpec {
            grid: TimeGrid {
                t_end: 1.0,
                n_steps: 20,
            },
            signal: SignalConfig {
                sigma: 0.0.into(),
                theta: None,
                enlarge: true,
            },
            levy: LevyConfig {
                marks: vec![Mark {
                    size: 1.0,
                    intensity: 1.0,
                }],
            },
            market: MarketConfig {
                b: 0.05.into(),
                sigma: 0.5.into(),
                gamma: Some(vec![0.3.into()]),
                horizon: 0.5,
                eps_adm: 1e-9,
            },
        })
        .unwrap();
        let policies = [ControlPolicy::InsiderOptimal, ControlPolicy::HonestOptimal];
        let v = expected_log_wealth(
            &simulate(&m, 3000, 5),
            &policies,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!(v[0].max_foc_residual <= FOC_TOL);
        assert!(v[1].max_foc_residual <= FOC_TOL);
        for pv in &v {
            assert!(pv.estimator_gap() <= 3.0, "{pv:?}");
        }
        let se = v[0].pathwise.stderr.hypot(v[1].pathwise.stderr);
        assert!(v[0].pathwise.mean >= v[1].pathwise.mean - 3.0 * se);
    }
}
