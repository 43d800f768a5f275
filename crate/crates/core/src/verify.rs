//! Enlarged-filtration martingale parts and statistical checks of the
//! semimartingale decompositions
//!
//! ```text
//! B(t) = B̂(t) + ∫_0^t Φ ds,      Ñ(t) = M(t) + ∫_0^t λΨ ds.
//! ```

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::drift::{drift_field, DriftField};
use crate::error::{Error, Result};
use crate::kernel::{cond_delta, FourierState};
use crate::model::{Mode, ValidatedModel};
use crate::path::{simulate, Ensemble, SamplePath};
use crate::quadrature::{panel_rule, QuadratureSpec};
use crate::stats::{pairwise_sum, summarize};

/// `B̂` and the aggregated jump martingale `M = Σ_j M_j` on the nodes of `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecomposedPath {
    pub path_id: u64,
    pub signal: f64,
    pub brownian: Vec<f64>,
    /// `Σ_j Ñ_j(t_i)`.
    pub compensated: Vec<f64>,
    /// `Σ_{k<i} Φ_k Δt`.
    pub b_drift: Vec<f64>,
    pub b_hat: Vec<f64>,
    /// `Σ_{k<i} Σ_j λ_j Ψ_{kj} Δt`.
    pub n_drift: Vec<f64>,
    pub m_jump: Vec<f64>,
}

impl DecomposedPath {
    pub fn n_nodes(&self) -> usize {
        self.b_hat.len()
    }

    /// `B̂(t_i) + ∫_0^{t_i} Φ ds`.
    pub fn reconstruct_brownian(&self, node: usize) -> f64 {
        self.b_hat[node] + self.b_drift[node]
    }

    pub fn reconstruct_compensated(&self, node: usize) -> f64 {
        self.m_jump[node] + self.n_drift[node]
    }

    pub fn process(&self, p: Process, node: usize) -> f64 {
        match p {
            Process::BHat => self.b_hat[node],
            Process::Jump => self.m_jump[node],
            Process::RawBrownian => self.brownian[node],
            Process::RawCompensated => self.compensated[node],
        }
    }

    /// `Σ (ΔB̂)²` over `[0, T]`.
    pub fn qv_b_hat(&self) -> f64 {
        qv(&self.b_hat)
    }

    pub fn qv_brownian(&self) -> f64 {
        qv(&self.brownian)
    }
}

fn qv(x: &[f64]) -> f64 {
    let sq: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]).powi(2)).collect();
    pairwise_sum(&sq)
}

/// Subtracts the drift integrals from `B` and `Ñ` up to the horizon.
pub fn decompose(
    model: &ValidatedModel,
    path: &SamplePath,
    field: &DriftField,
) -> Result<DecomposedPath> {
    let n_t = model.horizon_steps();
    if field.n_cells() < n_t {
        return Err(Error::MissingDrift {
            path_id: path.path_id,
            have: field.n_cells(),
            need: n_t,
        });
    }
    let dt = model.grid().dt();
    let m = model.n_marks();
    let mut d = DecomposedPath {
        path_id: path.path_id,
        signal: path.signal(),
        brownian: Vec::with_capacity(n_t + 1),
        compensated: Vec::with_capacity(n_t + 1),
        b_drift: Vec::with_capacity(n_t + 1),
        b_hat: Vec::with_capacity(n_t + 1),
        n_drift: Vec::with_capacity(n_t + 1),
        m_jump: Vec::with_capacity(n_t + 1),
    };
    let (mut bd, mut nd) = (0.0, 0.0);
    for i in 0..=n_t {
        if i > 0 {
            bd += field.alpha1(i - 1) * dt;
            nd += (0..m).map(|j| field.alpha2_weight(i - 1, j)).sum::<f64>() * dt;
        }
        let b = path.brownian(i);
        let n: f64 = (0..m).map(|j| path.compensated(model, j, i)).sum();
        d.brownian.push(b);
        d.compensated.push(n);
        d.b_drift.push(bd);
        d.b_hat.push(b - bd);
        d.n_drift.push(nd);
        d.m_jump.push(n - nd);
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Process {
    BHat,
    /// Aggregated jump martingale `Σ_j M_j`.
    Jump,
    RawBrownian,
    RawCompensated,
}

impl Process {
    pub fn as_str(self) -> &'static str {
        match self {
            Process::BHat => "b_hat",
            Process::Jump => "m",
            Process::RawBrownian => "raw_b",
            Process::RawCompensated => "raw_n",
        }
    }
}

/// `H_s`-measurable test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Instrument {
    One,
    BrownianS,
    CompensatedS,
    Signal,
    SignalTimesBrownianS,
}

impl Instrument {
    pub const ALL: [Instrument; 5] = [
        Instrument::One,
        Instrument::BrownianS,
        Instrument::CompensatedS,
        Instrument::Signal,
        Instrument::SignalTimesBrownianS,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::One => "1",
            Instrument::BrownianS => "B(s)",
            Instrument::CompensatedS => "N(s)",
            Instrument::Signal => "Y",
            Instrument::SignalTimesBrownianS => "Y*B(s)",
        }
    }

    pub fn eval(self, d: &DecomposedPath, s: usize) -> f64 {
        match self {
            Instrument::One => 1.0,
            Instrument::BrownianS => d.brownian[s],
            Instrument::CompensatedS => d.compensated[s],
            Instrument::Signal => d.signal,
            Instrument::SignalTimesBrownianS => d.signal * d.brownian[s],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Positive,
    /// Expected to fail decisively.
    NegativeControl,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub statistic: f64,
    pub stderr: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub name: String,
    pub role: Role,
    /// Worst check statistic (z-score for instrument tests).
    pub statistic: f64,
    pub stderr: Option<f64>,
    pub threshold: f64,
    /// Verdict of the test itself: every check within its threshold.
    pub passed: bool,
    /// Outcome matches the role: positive tests pass, negative controls fail
    /// by more than `NEGATIVE_CONTROL_Z` standard errors.
    pub ok: bool,
    /// Counts toward the false-alarm allowance when it fails.
    pub statistical: bool,
    pub n_paths: usize,
    pub notes: String,
    pub checks: Vec<Check>,
}

/// Positive instrument tests pass within this many standard errors.
pub const POSITIVE_Z: f64 = 3.0;
/// Negative controls must exceed this many standard errors.
pub const NEGATIVE_CONTROL_Z: f64 = 10.0;
/// Default relative tolerance of the quadratic-variation test.
pub const QV_TOLERANCE: f64 = 0.02;
/// Normalization tolerance of the conditional density.
pub const NORMALIZATION_TOL: f64 = 1e-6;

fn z_score(mean: f64, stderr: f64) -> f64 {
    if stderr > 0.0 {
        mean.abs() / stderr
    } else if mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Sample mean of `g · (X(u) − X(s))` for each instrument.
pub fn martingale_test(
    paths: &[DecomposedPath],
    process: Process,
    s: usize,
    u: usize,
    instruments: &[Instrument],
    role: Role,
) -> TestReport {
    assert!(s < u, "martingale window needs s < u");
    let checks: Vec<Check> = instruments
        .iter()
        .map(|&g| {
            let xs: Vec<f64> = paths
                .iter()
                .map(|d| g.eval(d, s) * (d.process(process, u) - d.process(process, s)))
                .collect();
            let sm = summarize(&xs);
            let z = z_score(sm.mean, sm.stderr);
            Check {
                label: format!("g={}", g.as_str()),
                statistic: sm.mean,
                stderr: Some(sm.stderr),
                threshold: POSITIVE_Z * sm.stderr,
                passed: z <= POSITIVE_Z,
            }
        })
        .collect();
    let worst = checks
        .iter()
        .map(|c| z_score(c.statistic, c.stderr.unwrap_or(0.0)))
        .fold(0.0, f64::max);
    let passed = checks.iter().all(|c| c.passed);
    let ok = match role {
        Role::Positive => passed,
        Role::NegativeControl => checks
            .iter()
            .all(|c| z_score(c.statistic, c.stderr.unwrap_or(0.0)) > NEGATIVE_CONTROL_Z),
    };
    let stderr = (checks.len() == 1).then(|| checks[0].stderr).flatten();
    TestReport {
        name: format!("martingale:{}:[{s},{u}]", process.as_str()),
        role,
        statistic: worst,
        stderr,
        threshold: POSITIVE_Z,
        passed,
        ok,
        statistical: true,
        n_paths: paths.len(),
        notes: format!(
            "statistic is the largest |mean|/stderr over instruments; nodes s={s}, u={u}"
        ),
        checks,
    }
}

/// Mean realized `Σ(ΔB̂)²` against `T`; passes within `tolerance · T`.
pub fn quadratic_variation_test(
    paths: &[DecomposedPath],
    horizon: f64,
    tolerance: f64,
) -> TestReport {
    let qvs: Vec<f64> = paths.iter().map(DecomposedPath::qv_b_hat).collect();
    let sm = summarize(&qvs);
    let stat = sm.mean - horizon;
    let threshold = tolerance * horizon;
    let passed = stat.abs() <= threshold;
    TestReport {
        name: "quadratic-variation:b_hat".into(),
        role: Role::Positive,
        statistic: stat,
        stderr: Some(sm.stderr),
        threshold,
        passed,
        ok: passed,
        statistical: false,
        n_paths: paths.len(),
        notes: format!("mean QV {} vs T = {horizon}", sm.mean),
        checks: vec![],
    }
}

/// Mean and stderr of `QV(B̂) − QV(B)`, the drift-induced QV bias.
pub fn qv_drift_bias(paths: &[DecomposedPath]) -> (f64, f64) {
    let d: Vec<f64> = paths
        .iter()
        .map(|p| p.qv_b_hat() - p.qv_brownian())
        .collect();
    let s = summarize(&d);
    (s.mean, s.stderr)
}

/// Spread of `Y − Y(t)` given `F_t`: Gaussian variance and total variance.
fn spread(state: &FourierState<'_>) -> (f64, f64) {
    let v = state.model().tail_gaussian(state.node);
    let jumps: f64 = state
        .model()
        .tail_jump(state.node)
        .iter()
        .map(|t| t.weight * t.theta * t.theta)
        .sum();
    (v, v + jumps)
}

/// `∫ E[δ_Y(y) | F_t] dy` (a lattice sum in lattice mode).
pub fn normalization(state: &FourierState<'_>, q: &QuadratureSpec) -> Result<f64> {
    let model = state.model();
    let center = state.running_signal();
    let (v, v_tot) = spread(state);
    let sd = v_tot.sqrt();
    if model.mode() == Mode::PureLattice {
        let c = model.lattice_offset();
        let k0 = (center + c).round() as i64;
        let reach = (14.0 * sd + 30.0).ceil() as i64;
        let masses = ((k0 - reach)..=(k0 + reach))
            .map(|k| Ok(cond_delta(state, k as f64 - c, q)?.value))
            .collect::<Result<Vec<f64>>>()?;
        return Ok(pairwise_sum(&masses));
    }
    let half = 14.0 * sd + 1.0;
    let panels = ((4.0 * half / v.sqrt()).ceil() as usize).max(8);
    let mut err = None;
    let mut vals = Vec::with_capacity(panels * 20);
    panel_rule().for_each_node(center - half, center + half, panels, |y, w| {
        if err.is_none() {
            match cond_delta(state, y, q) {
                Ok(e) => vals.push(w * e.value),
                Err(e) => err = Some(e),
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(pairwise_sum(&vals)),
    }
}

/// Probability of `[a, b]` under the conditional density (Gaussian mode).
fn interval_mass(
    state: &FourierState<'_>,
    a: f64,
    b: f64,
    panels: usize,
    q: &QuadratureSpec,
) -> Result<f64> {
    let mut vals = Vec::new();
    let mut err = None;
    panel_rule().for_each_node(a, b, panels, |y, w| {
        if err.is_none() {
            match cond_delta(state, y, q) {
                Ok(e) => vals.push(w * e.value),
                Err(e) => err = Some(e),
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(pairwise_sum(&vals)),
    }
}

/// Merges adjacent bins until each expects at least `min_expected` counts.
fn merge_bins(bins: &[(f64, u64)], n: f64, min_expected: f64) -> Vec<(f64, u64)> {
    let mut out: Vec<(f64, u64)> = Vec::new();
    let mut cur = (0.0, 0u64);
    for &(p, k) in bins {
        cur.0 += p;
        cur.1 += k;
        if cur.0 * n >= min_expected {
            out.push(cur);
            cur = (0.0, 0);
        }
    }
    if cur.0 > 0.0 || cur.1 > 0 {
        match out.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => out.push(cur),
        }
    }
    out
}

/// Chi-square goodness of fit of `Y` against the `t = 0` conditional law,
/// at the 99% level.
pub fn chi_square_test(
    model: &ValidatedModel,
    signals: &[f64],
    q: &QuadratureSpec,
) -> Result<TestReport> {
    let state = FourierState::from_running(model, 0, 0.0, 0.0);
    let n = signals.len() as f64;
    let (v, v_tot) = spread(&state);
    let sd = v_tot.sqrt();
    let fine: Vec<(f64, u64)> = if model.mode() == Mode::PureLattice {
        let c = model.lattice_offset();
        let reach = (8.0 * sd + 10.0).ceil() as i64;
        let (k_lo, k_hi) = ((-c).round() as i64 - reach, (-c).round() as i64 + reach);
        let width = (k_hi - k_lo + 1) as usize;
        let mut counts = vec![0u64; width];
        for &y in signals {
            let k = model.lattice_index(y).ok_or(Error::OffLattice(y))?;
            counts[(k.clamp(k_lo, k_hi) - k_lo) as usize] += 1;
        }
        let mut probs = ((k_lo)..=k_hi)
            .map(|k| Ok(cond_delta(&state, k as f64 - c, q)?.value))
            .collect::<Result<Vec<f64>>>()?;
        // Fold the remote tails into the edge cells.
        let inner: f64 = pairwise_sum(&probs);
        let slack = (1.0 - inner).max(0.0);
        probs[0] += 0.5 * slack;
        probs[width - 1] += 0.5 * slack;
        probs.into_iter().zip(counts).collect()
    } else {
        let (lo, hi) = (-3.0 * sd, 3.0 * sd);
        let h = (hi - lo) / 18.0;
        let panels = ((h / v.sqrt()).ceil() as usize).max(2);
        let mut out = Vec::with_capacity(20);
        let mut counts = [0u64; 20];
        for &y in signals {
            let k = if y < lo {
                0
            } else if y >= hi {
                19
            } else {
                1 + (((y - lo) / h) as usize).min(17)
            };
            counts[k] += 1;
        }
        let left = interval_mass(&state, lo - 17.0 * sd, lo, 12 * panels, q)?;
        out.push((left, counts[0]));
        let mut inner = 0.0;
        for b in 0..18 {
            let a = lo + b as f64 * h;
            let p = interval_mass(&state, a, a + h, panels, q)?;
            inner += p;
            out.push((p, counts[b + 1]));
        }
        out.push(((1.0 - left - inner).max(0.0), counts[19]));
        out
    };
    let bins = merge_bins(&fine, n, 5.0);
    let chi2: f64 = bins
        .iter()
        .map(|&(p, k)| {
            let e = p * n;
            (k as f64 - e).powi(2) / e
        })
        .sum();
    let df = bins.len().saturating_sub(1).max(1);
    let critical = ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.99);
    let passed = chi2 <= critical;
    Ok(TestReport {
        name: "density:chi-square-t0".into(),
        role: Role::Positive,
        statistic: chi2,
        stderr: None,
        threshold: critical,
        passed,
        ok: passed,
        statistical: true,
        n_paths: signals.len(),
        notes: format!(
            "{} bins, {df} degrees of freedom, 99% critical value",
            bins.len()
        ),
        checks: vec![],
    })
}

/// Closed-form `t = 0` law of `Y` for the reference families.
pub fn reference_density(model: &ValidatedModel, y: f64) -> Option<f64> {
    let marks = model.levy().marks();
    let t0 = model.grid().t_end;
    let v = model.tail_gaussian(0);
    let normal =
        |x: f64, var: f64| (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    match marks.len() {
        0 => Some(normal(y, v)),
        1 if marks[0].size == 1.0 && model.signal().theta[0].constant_value() == Some(1.0) => {
            let mu = marks[0].intensity * t0;
            let k_max = (mu + 40.0 * mu.sqrt() + 40.0).ceil() as u64;
            let pois = |k: u64| (k as f64 * mu.ln() - mu - ln_factorial(k)).exp();
            if v == 0.0 {
                let k = (y + mu).round();
                if (y + mu - k).abs() > 1e-9 || k < 0.0 {
                    return Some(0.0);
                }
                return Some(pois(k as u64));
            }
            let terms: Vec<f64> = (0..=k_max)
                .map(|k| pois(k) * normal(y - (k as f64 - mu), v))
                .collect();
            Some(pairwise_sum(&terms))
        }
        _ => None,
    }
}

fn ln_factorial(k: u64) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Kernel at `t = 0` against the series or closed-form law on `y_grid`.
pub fn oracle_test(
    model: &ValidatedModel,
    y_grid: &[f64],
    q: &QuadratureSpec,
) -> Result<Option<TestReport>> {
    let state = FourierState::from_running(model, 0, 0.0, 0.0);
    let lattice = model.mode() == Mode::PureLattice;
    let mut checks = Vec::new();
    for &y0 in y_grid {
        // Lattice models are probed at the nearest lattice point.
        let y = if lattice {
            let c = model.lattice_offset();
            (y0 + c).round() - c
        } else {
            y0
        };
        let Some(exact) = reference_density(model, y) else {
            return Ok(None);
        };
        let got = cond_delta(&state, y, q)?.value;
        let err = (got - exact).abs() / (1.0 + exact.abs());
        checks.push(Check {
            label: format!("y={y}"),
            statistic: err,
            stderr: None,
            threshold: 1e-8,
            passed: err <= 1e-8,
        });
    }
    let worst = checks.iter().map(|c| c.statistic).fold(0.0, f64::max);
    let passed = checks.iter().all(|c| c.passed);
    Ok(Some(TestReport {
        name: "density:reference-law-t0".into(),
        role: Role::Positive,
        statistic: worst,
        stderr: None,
        threshold: 1e-8,
        passed,
        ok: passed,
        statistical: false,
        n_paths: 0,
        notes: "error metric |a-b|/(1+|b|)".into(),
        checks,
    }))
}

/// Normalization of `E[δ_Y(·) | F_t]` on the given paths and nodes.
pub fn normalization_test(
    model: &ValidatedModel,
    paths: &[SamplePath],
    nodes: &[usize],
    q: &QuadratureSpec,
) -> Result<TestReport> {
    let mut checks = Vec::new();
    for p in paths {
        for &i in nodes {
            let state = FourierState::new(model, p, i);
            let err = (normalization(&state, q)? - 1.0).abs();
            checks.push(Check {
                label: format!("path={} node={i}", p.path_id),
                statistic: err,
                stderr: None,
                threshold: NORMALIZATION_TOL,
                passed: err <= NORMALIZATION_TOL,
            });
        }
    }
    let worst = checks.iter().map(|c| c.statistic).fold(0.0, f64::max);
    let passed = checks.iter().all(|c| c.passed);
    Ok(TestReport {
        name: "density:normalization".into(),
        role: Role::Positive,
        statistic: worst,
        stderr: None,
        threshold: NORMALIZATION_TOL,
        passed,
        ok: passed,
        statistical: false,
        n_paths: paths.len(),
        notes: format!("{} states", checks.len()),
        checks,
    })
}

/// Tower property `E[E[δ_Y(y) | F_t]] = E[δ_Y(y) | F_0]`, one check per
/// `(t, y)`; `values[p][k]` holds path `p`'s kernel at the `k`-th pair.
pub fn tower_test(
    model: &ValidatedModel,
    pairs: &[(usize, f64)],
    values: &[Vec<f64>],
    q: &QuadratureSpec,
) -> Result<TestReport> {
    let state0 = FourierState::from_running(model, 0, 0.0, 0.0);
    let mut checks = Vec::new();
    for (k, &(node, y)) in pairs.iter().enumerate() {
        let reference = cond_delta(&state0, y, q)?.value;
        let xs: Vec<f64> = values.iter().map(|v| v[k] - reference).collect();
        let s = summarize(&xs);
        checks.push(Check {
            label: format!("node={node} y={y} ref={reference}"),
            statistic: s.mean,
            stderr: Some(s.stderr),
            threshold: POSITIVE_Z * s.stderr,
            passed: z_score(s.mean, s.stderr) <= POSITIVE_Z,
        });
    }
    let worst = checks
        .iter()
        .map(|c| z_score(c.statistic, c.stderr.unwrap_or(0.0)))
        .fold(0.0, f64::max);
    let passed = checks.iter().all(|c| c.passed);
    Ok(TestReport {
        name: "density:tower".into(),
        role: Role::Positive,
        statistic: worst,
        stderr: None,
        threshold: POSITIVE_Z,
        passed,
        ok: passed,
        statistical: true,
        n_paths: values.len(),
        notes: "statistic is the largest |mean - reference|/stderr".into(),
        checks,
    })
}

/// Points `(node, y)` used by the tower test: nodes `T/2` and `T`-minus-one
/// cell, `y` from `y_grid` snapped to the lattice when needed.
pub fn tower_pairs(model: &ValidatedModel, y_grid: &[f64]) -> Vec<(usize, f64)> {
    let n_t = model.horizon_steps();
    let mut nodes = vec![n_t / 2, n_t.saturating_sub(1)];
    nodes.dedup();
    let snap = |y: f64| {
        if model.mode() == Mode::PureLattice {
            let c = model.lattice_offset();
            (y + c).round() - c
        } else {
            y
        }
    };
    nodes
        .into_iter()
        .filter(|&i| i > 0)
        .flat_map(|i| y_grid.iter().map(move |&y| (i, snap(y))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSettings {
    pub qv_tolerance: f64,
    pub y_grid: Vec<f64>,
    /// Paths whose conditional densities are checked for normalization.
    pub normalization_paths: usize,
    pub max_attempts: usize,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        Self {
            qv_tolerance: QV_TOLERANCE,
            y_grid: vec![0.0, 1.0],
            normalization_paths: 4,
            max_attempts: 3,
        }
    }
}

/// One full run of the suite on a single seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteAttempt {
    pub seed: u64,
    pub reports: Vec<TestReport>,
    /// Failed instrument-level checks among statistical positive tests.
    pub statistical_failures: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub mode: Mode,
    pub n_paths: usize,
    pub attempts: Vec<SuiteAttempt>,
    pub ok: bool,
}

impl SuiteReport {
    pub fn final_attempt(&self) -> &SuiteAttempt {
        self.attempts.last().expect("at least one attempt")
    }
}

struct PathRecord {
    decomposed: DecomposedPath,
    tower: Vec<f64>,
}

/// Martingale, QV and density checks on one ensemble.
pub fn run_suite_once(
    ensemble: &Ensemble<'_>,
    q: &QuadratureSpec,
    settings: &SuiteSettings,
) -> Result<SuiteAttempt> {
    let model = ensemble.model;
    let n_t = model.horizon_steps();
    let enlarged = model.mode() != Mode::NoEnlargement;
    let pairs = if model.mode() == Mode::NoEnlargement {
        vec![]
    } else {
        tower_pairs(model, &settings.y_grid)
    };
    let records = ensemble
        .map(|path| -> Result<PathRecord> {
            let field = drift_field(model, &path, q)?;
            let decomposed = decompose(model, &path, &field)?;
            let tower = pairs
                .iter()
                .map(|&(i, y)| Ok(cond_delta(&FourierState::new(model, &path, i), y, q)?.value))
                .collect::<Result<Vec<f64>>>()?;
            Ok(PathRecord { decomposed, tower })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (decomposed, tower): (Vec<_>, Vec<_>) =
        records.into_iter().map(|r| (r.decomposed, r.tower)).unzip();

    let mut reports = Vec::new();
    let has_jumps = model.n_marks() > 0;
    let mut instruments: Vec<Instrument> = Instrument::ALL.to_vec();
    if !enlarged {
        instruments.retain(|g| !matches!(g, Instrument::Signal | Instrument::SignalTimesBrownianS));
    }
    if !has_jumps {
        instruments.retain(|g| *g != Instrument::CompensatedS);
    }
    let windows = [(0, n_t), (n_t / 2, n_t)];
    for &(s, u) in windows.iter().filter(|(s, u)| s < u) {
        reports.push(martingale_test(
            &decomposed,
            Process::BHat,
            s,
            u,
            &instruments,
            Role::Positive,
        ));
        if has_jumps {
            reports.push(martingale_test(
                &decomposed,
                Process::Jump,
                s,
                u,
                &instruments,
                Role::Positive,
            ));
        }
    }
    if enlarged {
        if model.signal().sigma.values().iter().any(|&s| s != 0.0) {
            reports.push(martingale_test(
                &decomposed,
                Process::RawBrownian,
                0,
                n_t,
                &[Instrument::Signal],
                Role::NegativeControl,
            ));
        }
        if has_jumps {
            reports.push(martingale_test(
                &decomposed,
                Process::RawCompensated,
                0,
                n_t,
                &[Instrument::Signal],
                Role::NegativeControl,
            ));
        }
    }
    reports.push(quadratic_variation_test(
        &decomposed,
        model.market().horizon,
        settings.qv_tolerance,
    ));

    if enlarged {
        let sample: Vec<SamplePath> = (0..settings.normalization_paths.min(ensemble.n_paths)
            as u64)
            .map(|id| ensemble.path(id))
            .collect();
        let nodes: Vec<usize> = [0, n_t / 2, n_t.saturating_sub(1)].into_iter().collect();
        reports.push(normalization_test(model, &sample, &nodes, q)?);
        let signals: Vec<f64> = decomposed.iter().map(|d| d.signal).collect();
        reports.push(chi_square_test(model, &signals, q)?);
        if !pairs.is_empty() {
            reports.push(tower_test(model, &pairs, &tower, q)?);
        }
        if let Some(r) = oracle_test(model, &settings.y_grid, q)? {
            reports.push(r);
        }
    }

    let statistical_failures = reports
        .iter()
        .filter(|r| r.statistical && r.role == Role::Positive)
        .map(|r| {
            if r.checks.is_empty() {
                usize::from(!r.passed)
            } else {
                r.checks.iter().filter(|c| !c.passed).count()
            }
        })
        .sum();
    let hard_ok = reports
        .iter()
        .filter(|r| !(r.statistical && r.role == Role::Positive))
        .all(|r| r.ok);
    Ok(SuiteAttempt {
        seed: ensemble.seed,
        ok: hard_ok && statistical_failures <= 1,
        statistical_failures,
        reports,
    })
}

/// Runs the suite, rerunning on seeds `seed + 1, seed + 2, ...` while an
/// attempt has more than one statistical failure or a hard failure.
pub fn verify_suite(
    model: &ValidatedModel,
    n_paths: usize,
    seed: u64,
    q: &QuadratureSpec,
    settings: &SuiteSettings,
) -> Result<SuiteReport> {
    let mut attempts = Vec::new();
    for k in 0..settings.max_attempts.max(1) as u64 {
        let attempt = run_suite_once(&simulate(model, n_paths, seed.wrapping_add(k)), q, settings)?;
        let ok = attempt.ok;
        attempts.push(attempt);
        if ok {
            break;
        }
    }
    let ok = attempts.last().is_some_and(|a| a.ok);
    Ok(SuiteReport {
        mode: model.mode(),
        n_paths,
        attempts,
        ok,
    })
}
