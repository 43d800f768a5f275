//! Model configuration: time grid, piecewise-constant coefficients, the finite
//! discrete Lévy measure, the first-order-chaos signal
//! `Y = ∫ σ_Y dB + Σ_j ∫ θ_j dÑ_j` and the controlled wealth market.
//!
//! A raw [`ModelSpec`] (what a config file deserializes into) is turned into a
//! sealed [`ValidatedModel`] by [`validate_model`]. The validated model also
//! caches the path-independent tail integrals used by the Fourier kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a time sits on a grid node.
const GRID_TOL: f64 = 1e-9;

/// Uniform grid `0 = t_0 < t_1 < ... < t_n = T0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "t_end must be positive, got {t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(Self { t_end, n_steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_end
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.node(i)).collect()
    }

    /// Index of the right-open cell `[t_i, t_{i+1})` containing `t`; `T0`
    /// itself maps to the last cell.
    pub fn cell_of(&self, t: f64) -> usize {
        let i = (t / self.dt()).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.n_steps - 1)
        }
    }

    /// The node index of `t` if `t` lies on the grid.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let r = t / self.dt();
        let i = r.round();
        if i < 0.0 || i > self.n_steps as f64 {
            return None;
        }
        ((r - i).abs() <= GRID_TOL * r.abs().max(1.0)).then_some(i as usize)
    }
}

/// A scalar or a per-cell list, as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Constant(f64),
    Cells(Vec<f64>),
}

impl Default for StepSpec {
    fn default() -> Self {
        StepSpec::Constant(0.0)
    }
}

impl From<f64> for StepSpec {
    fn from(v: f64) -> Self {
        StepSpec::Constant(v)
    }
}

/// Deterministic function of time, constant on each grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepFunction {
    values: Vec<f64>,
}

impl StepFunction {
    pub fn constant(value: f64, n_steps: usize) -> Self {
        Self {
            values: vec![value; n_steps],
        }
    }

    pub fn from_spec(name: &str, spec: &StepSpec, n_steps: usize) -> Result<Self> {
        let values = match spec {
            StepSpec::Constant(v) => vec![*v; n_steps],
            StepSpec::Cells(v) => {
                if v.len() != n_steps {
                    return Err(Error::InvalidStepFunction {
                        name: name.into(),
                        reason: format!("expected {n_steps} cell values, got {}", v.len()),
                    });
                }
                v.clone()
            }
        };
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidStepFunction {
                name: name.into(),
                reason: format!("non-finite value {bad}"),
            });
        }
        Ok(Self { values })
    }

    #[inline]
    pub fn cell(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn eval(&self, grid: &TimeGrid, t: f64) -> f64 {
        self.values[grid.cell_of(t)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn constant_value(&self) -> Option<f64> {
        let first = *self.values.first()?;
        self.values.iter().all(|&v| v == first).then_some(first)
    }

    /// `∫_{t_i}^{T0} f(s)^2 ds` as an exact cell sum.
    pub fn tail_square_norm(&self, dt: f64, i: usize) -> f64 {
        self.values[i..].iter().map(|v| v * v).sum::<f64>() * dt
    }

    pub fn to_spec(&self) -> StepSpec {
        StepSpec::Cells(self.values.clone())
    }
}

/// One atom `λ δ_ζ` of the Lévy measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mark {
    pub size: f64,
    pub intensity: f64,
}

/// `ν = Σ_j λ_j δ_{ζ_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLevyMeasure {
    marks: Vec<Mark>,
}

impl DiscreteLevyMeasure {
    pub fn new(marks: Vec<Mark>) -> Result<Self> {
        for (j, m) in marks.iter().enumerate() {
            if !(m.size.is_finite() && m.size != 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "mark {j}: jump size must be finite and non-zero, got {}",
                    m.size
                )));
            }
            if !(m.intensity.is_finite() && m.intensity > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "mark {j}: intensity must be positive, got {}",
                    m.intensity
                )));
            }
            if marks[..j].iter().any(|o| o.size == m.size) {
                return Err(Error::InvalidMeasure(format!(
                    "mark {j}: duplicate jump size {}",
                    m.size
                )));
            }
        }
        Ok(Self { marks })
    }

    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn intensity(&self, j: usize) -> f64 {
        self.marks[j].intensity
    }

    /// `∫ ζ² ν(dζ)`; finite for any finite list of marks.
    pub fn second_moment(&self) -> f64 {
        self.marks
            .iter()
            .map(|m| m.intensity * m.size * m.size)
            .sum()
    }

    pub fn is_integer_lattice(&self) -> bool {
        self.marks.iter().all(|m| m.size.fract() == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub sigma: StepFunction,
    /// `θ(s, ζ_j)`, one step function per mark.
    pub theta: Vec<StepFunction>,
    /// When false the filtration is not enlarged: `Φ = Ψ = 0`.
    pub enlarge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub b: StepFunction,
    pub sigma: StepFunction,
    /// `γ(t, ζ_j)`, one step function per mark.
    pub gamma: Vec<StepFunction>,
    pub horizon: f64,
    /// Admissibility floor: `1 + u γ_j >= eps_adm`.
    pub eps_adm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `‖σ_Y‖²_{[t,T0]} > 0` for every `t < T0`: the Fourier integrand has a
    /// Gaussian envelope.
    GaussianDominant,
    /// `σ_Y ≡ 0` and `Y` lives on a shifted integer lattice.
    PureLattice,
    /// The insider has no extra information.
    NoEnlargement,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::GaussianDominant => "gaussian-dominant",
            Mode::PureLattice => "pure-lattice",
            Mode::NoEnlargement => "no-enlargement",
        }
    }
}

// Raw configuration, as parsed from the [grid], [signal], [levy] and [market]
// sections of a run file.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    #[serde(default)]
    pub sigma: StepSpec,
    /// Defaults to `θ(s, ζ_j) = ζ_j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<StepSpec>>,
    #[serde(default = "default_true")]
    pub enlarge: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyConfig {
    #[serde(default)]
    pub marks: Vec<Mark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    #[serde(default)]
    pub b: StepSpec,
    pub sigma: StepSpec,
    /// Defaults to `γ ≡ 0` for every mark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<StepSpec>>,
    pub horizon: f64,
    #[serde(default = "default_eps_adm")]
    pub eps_adm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub grid: TimeGrid,
    pub signal: SignalConfig,
    #[serde(default)]
    pub levy: LevyConfig,
    pub market: MarketConfig,
}

fn default_true() -> bool {
    true
}

pub const DEFAULT_EPS_ADM: f64 = 1e-9;

fn default_eps_adm() -> f64 {
    DEFAULT_EPS_ADM
}

/// One term `w (e^{ixθ} − 1 − ixθ)` of the deterministic jump tail
/// `Σ_j λ_j ∫_t^{T0} (e^{ixθ_j(s)} − 1 − ixθ_j(s)) ds`, with equal `θ`
/// values merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTerm {
    pub theta: f64,
    pub weight: f64,
}

/// A configuration whose invariants have all been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    grid: TimeGrid,
    levy: DiscreteLevyMeasure,
    signal: SignalSpec,
    market: MarketSpec,
    mode: Mode,
    horizon_steps: usize,
    tail_gaussian: Vec<f64>,
    tail_jump: Vec<Vec<TailTerm>>,
}

pub fn validate_model(spec: &ModelSpec) -> Result<ValidatedModel> {
    let grid = TimeGrid::new(spec.grid.t_end, spec.grid.n_steps)?;
    let n = grid.n_steps;
    let levy = DiscreteLevyMeasure::new(spec.levy.marks.clone())?;
    let m = levy.len();

    let sigma_y = StepFunction::from_spec("signal.sigma", &spec.signal.sigma, n)?;
    let theta = match &spec.signal.theta {
        Some(list) => {
            if list.len() != m {
                return Err(Error::InvalidStepFunction {
                    name: "signal.theta".into(),
                    reason: format!("expected one entry per mark ({m}), got {}", list.len()),
                });
            }
            list.iter()
                .enumerate()
                .map(|(j, s)| StepFunction::from_spec(&format!("signal.theta[{j}]"), s, n))
                .collect::<Result<Vec<_>>>()?
        }
        None => levy
            .marks()
            .iter()
            .map(|mk| StepFunction::constant(mk.size, n))
            .collect(),
    };
    let signal = SignalSpec {
        sigma: sigma_y,
        theta,
        enlarge: spec.signal.enlarge,
    };

    let mc = &spec.market;
    let gamma = match &mc.gamma {
        Some(list) => {
            if list.len() != m {
                return Err(Error::InvalidStepFunction {
                    name: "market.gamma".into(),
                    reason: format!("expected one entry per mark ({m}), got {}", list.len()),
                });
            }
            list.iter()
                .enumerate()
                .map(|(j, s)| StepFunction::from_spec(&format!("market.gamma[{j}]"), s, n))
                .collect::<Result<Vec<_>>>()?
        }
        None => vec![StepFunction::constant(0.0, n); m],
    };
    let market = MarketSpec {
        b: StepFunction::from_spec("market.b", &mc.b, n)?,
        sigma: StepFunction::from_spec("market.sigma", &mc.sigma, n)?,
        gamma,
        horizon: mc.horizon,
        eps_adm: mc.eps_adm,
    };

    ValidatedModel::new(grid, levy, signal, market)
}

impl ValidatedModel {
    pub fn new(
        grid: TimeGrid,
        levy: DiscreteLevyMeasure,
        signal: SignalSpec,
        market: MarketSpec,
    ) -> Result<Self> {
        let n = grid.n_steps;
        let m = levy.len();
        if signal.sigma.len() != n || signal.theta.iter().any(|f| f.len() != n) {
            return Err(Error::InvalidStepFunction {
                name: "signal".into(),
                reason: "coefficient length does not match the grid".into(),
            });
        }
        if signal.theta.len() != m || market.gamma.len() != m {
            return Err(Error::InvalidStepFunction {
                name: "theta/gamma".into(),
                reason: format!("expected one function per mark ({m})"),
            });
        }

        let mode = determine_mode(&grid, &levy, &signal)?;
        let horizon_steps = check_market(&grid, &market)?;

        let dt = grid.dt();
        let mut tail_gaussian = vec![0.0; n + 1];
        for i in (0..n).rev() {
            tail_gaussian[i] = signal.sigma.tail_square_norm(dt, i);
        }

        // Tail jump terms: for every node, merge cells k >= i by θ value.
        let mut tail_jump: Vec<Vec<TailTerm>> = vec![Vec::new(); n + 1];
        let mut acc: Vec<(f64, f64)> = Vec::new(); // (θ, Σ λ·#cells)
        for i in (0..n).rev() {
            for (j, mk) in levy.marks().iter().enumerate() {
                let th = signal.theta[j].cell(i);
                if th == 0.0 {
                    continue;
                }
                match acc.iter_mut().find(|(t, _)| *t == th) {
                    Some(entry) => entry.1 += mk.intensity,
                    None => acc.push((th, mk.intensity)),
                }
            }
            tail_jump[i] = acc
                .iter()
                .map(|&(theta, lam_cells)| TailTerm {
                    theta,
                    weight: lam_cells * dt,
                })
                .collect();
        }

        Ok(Self {
            grid,
            levy,
            signal,
            market,
            mode,
            horizon_steps,
            tail_gaussian,
            tail_jump,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn levy(&self) -> &DiscreteLevyMeasure {
        &self.levy
    }

    pub fn signal(&self) -> &SignalSpec {
        &self.signal
    }

    pub fn market(&self) -> &MarketSpec {
        &self.market
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n_marks(&self) -> usize {
        self.levy.len()
    }

    /// Number of cells in `[0, T]`.
    pub fn horizon_steps(&self) -> usize {
        self.horizon_steps
    }

    /// `‖σ_Y‖²_{[t_i, T0]}`.
    pub fn tail_gaussian(&self, node: usize) -> f64 {
        self.tail_gaussian[node]
    }

    pub fn tail_jump(&self, node: usize) -> &[TailTerm] {
        &self.tail_jump[node]
    }

    /// `T0 − t_i` computed from the cell count.
    pub fn time_to_end(&self, node: usize) -> f64 {
        (self.grid.n_steps - node) as f64 * self.grid.dt()
    }

    /// `c = Σ_j λ_j ∫ θ_j ds`; in pure-lattice mode `Y + c` is an integer.
    pub fn lattice_offset(&self) -> f64 {
        let dt = self.grid.dt();
        self.levy
            .marks()
            .iter()
            .zip(&self.signal.theta)
            .map(|(mk, th)| mk.intensity * th.values().iter().sum::<f64>() * dt)
            .sum()
    }

    /// Integer label `y + c` of a lattice point, if `y` is one.
    pub fn lattice_index(&self, y: f64) -> Option<i64> {
        let z = y + self.lattice_offset();
        let k = z.round();
        ((z - k).abs() <= 1e-9 * z.abs().max(1.0)).then_some(k as i64)
    }

    /// Raw form with every step function written out cell by cell.
    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            grid: self.grid,
            signal: SignalConfig {
                sigma: self.signal.sigma.to_spec(),
                theta: Some(self.signal.theta.iter().map(|f| f.to_spec()).collect()),
                enlarge: self.signal.enlarge,
            },
            levy: LevyConfig {
                marks: self.levy.marks().to_vec(),
            },
            market: MarketConfig {
                b: self.market.b.to_spec(),
                sigma: self.market.sigma.to_spec(),
                gamma: Some(self.market.gamma.iter().map(|f| f.to_spec()).collect()),
                horizon: self.market.horizon,
                eps_adm: self.market.eps_adm,
            },
        }
    }
}

impl Serialize for ValidatedModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ValidatedModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = ModelSpec::deserialize(d)?;
        validate_model(&spec).map_err(serde::de::Error::custom)
    }
}

fn determine_mode(
    grid: &TimeGrid,
    levy: &DiscreteLevyMeasure,
    signal: &SignalSpec,
) -> Result<Mode> {
    if !signal.enlarge {
        return Ok(Mode::NoEnlargement);
    }
    let n = grid.n_steps;
    // ‖σ_Y‖²_{[t,T0]} > 0 for all t < T0 iff the last cell is non-zero.
    if signal.sigma.cell(n - 1) != 0.0 {
        return Ok(Mode::GaussianDominant);
    }
    if signal.sigma.is_zero() {
        if levy.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let integer_thetas = signal
            .theta
            .iter()
            .all(|th| th.constant_value().is_some_and(|c| c.fract() == 0.0));
        if levy.is_integer_lattice() && integer_thetas {
            return Ok(Mode::PureLattice);
        }
        return Err(Error::ZeroDiffusionTail { t: 0.0 });
    }
    // Last zero-tail node: the earliest t from which σ_Y vanishes.
    let last_nonzero = (0..n)
        .rev()
        .find(|&i| signal.sigma.cell(i) != 0.0)
        .unwrap_or(0);
    Err(Error::ZeroDiffusionTail {
        t: grid.node(last_nonzero + 1),
    })
}

fn check_market(grid: &TimeGrid, market: &MarketSpec) -> Result<usize> {
    let sig = market.sigma.values();
    if sig.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidMarket("sigma must be non-negative".into()));
    }
    let all_positive = sig.iter().all(|&s| s > 0.0);
    let all_zero = sig.iter().all(|&s| s == 0.0);
    let any_gamma = market.gamma.iter().any(|g| !g.is_zero());
    if !(all_positive || (all_zero && any_gamma)) {
        return Err(Error::InvalidMarket(
            "sigma must be positive on every cell, or identically zero with some gamma != 0".into(),
        ));
    }
    if !(market.eps_adm > 0.0 && market.eps_adm < 1.0) {
        return Err(Error::InvalidMarket(format!(
            "eps_adm must lie in (0, 1), got {}",
            market.eps_adm
        )));
    }
    let t = market.horizon;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidMarket(format!(
            "horizon must be positive, got {t}"
        )));
    }
    let limit = grid.t_end - grid.dt();
    if t > limit * (1.0 + GRID_TOL) {
        return Err(Error::HorizonTooLate { horizon: t, limit });
    }
    grid.node_index(t).ok_or(Error::HorizonOffGrid(t))
}
