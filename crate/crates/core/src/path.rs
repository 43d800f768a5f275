//! Path simulation on the model grid and exact log-space wealth.

use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ValidatedModel;
use crate::rng::{self, BROWNIAN_STREAM};

/// One realized trajectory of `(B, N)` with the running signal `Y(t_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub path_id: u64,
    increments: Vec<f64>,
    brownian: Vec<f64>,
    /// `jump_counts[j][i]`: jumps of mark `j` in cell `i`.
    jump_counts: Vec<Vec<u32>>,
    brownian_integral: Vec<f64>,
    jump_phase: Vec<f64>,
}

impl SamplePath {
    /// Builds a path from its cell-level draws.
    pub fn from_draws(
        model: &ValidatedModel,
        path_id: u64,
        increments: Vec<f64>,
        jump_counts: Vec<Vec<u32>>,
    ) -> Self {
        let n = model.grid().n_steps;
        let dt = model.grid().dt();
        assert_eq!(increments.len(), n, "one Brownian increment per cell");
        assert_eq!(
            jump_counts.len(),
            model.n_marks(),
            "one count series per mark"
        );
        let signal = model.signal();

        let mut brownian = Vec::with_capacity(n + 1);
        let mut brownian_integral = Vec::with_capacity(n + 1);
        let mut jump_phase = Vec::with_capacity(n + 1);
        let (mut b, mut bi, mut jp) = (0.0, 0.0, 0.0);
        brownian.push(b);
        brownian_integral.push(bi);
        jump_phase.push(jp);
        for (i, &db) in increments.iter().enumerate() {
            b += db;
            bi += signal.sigma.cell(i) * db;
            for (j, mk) in model.levy().marks().iter().enumerate() {
                let compensated = jump_counts[j][i] as f64 - mk.intensity * dt;
                jp += signal.theta[j].cell(i) * compensated;
            }
            brownian.push(b);
            brownian_integral.push(bi);
            jump_phase.push(jp);
        }
        Self {
            path_id,
            increments,
            brownian,
            jump_counts,
            brownian_integral,
            jump_phase,
        }
    }

    /// Same jumps, Gaussian draws with flipped sign.
    pub fn antithetic(&self, model: &ValidatedModel) -> Self {
        Self::from_draws(
            model,
            self.path_id,
            self.increments.iter().map(|d| -d).collect(),
            self.jump_counts.clone(),
        )
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    #[inline]
    pub fn increment(&self, cell: usize) -> f64 {
        self.increments[cell]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `B(t_i)`.
    #[inline]
    pub fn brownian(&self, node: usize) -> f64 {
        self.brownian[node]
    }

    #[inline]
    pub fn count(&self, mark: usize, cell: usize) -> u32 {
        self.jump_counts[mark][cell]
    }

    pub fn counts(&self, mark: usize) -> &[u32] {
        &self.jump_counts[mark]
    }

    /// `N_j(t_i)`.
    pub fn cumulative_count(&self, mark: usize, node: usize) -> u64 {
        self.jump_counts[mark][..node]
            .iter()
            .map(|&c| c as u64)
            .sum()
    }

    /// `Ñ_j(t_i) = N_j(t_i) − λ_j t_i`, accumulated cell by cell.
    pub fn compensated(&self, model: &ValidatedModel, mark: usize, node: usize) -> f64 {
        let lam_dt = model.levy().intensity(mark) * model.grid().dt();
        self.jump_counts[mark][..node]
            .iter()
            .map(|&c| c as f64 - lam_dt)
            .sum()
    }

    /// `∫_0^{t_i} σ_Y dB` (left-endpoint sum).
    #[inline]
    pub fn brownian_integral(&self, node: usize) -> f64 {
        self.brownian_integral[node]
    }

    /// `Σ_j ∫_0^{t_i} θ_j dÑ_j`.
    #[inline]
    pub fn jump_phase(&self, node: usize) -> f64 {
        self.jump_phase[node]
    }

    /// `Y(t_i)`.
    #[inline]
    pub fn running_signal(&self, node: usize) -> f64 {
        self.brownian_integral[node] + self.jump_phase[node]
    }

    /// `Y = Y(T0)`.
    pub fn signal(&self) -> f64 {
        self.running_signal(self.n_steps())
    }
}

/// Generates path `path_id` of the ensemble keyed by `seed`.
pub fn simulate_path(model: &ValidatedModel, seed: u64, path_id: u64) -> SamplePath {
    let n = model.grid().n_steps;
    let dt = model.grid().dt();
    let sqrt_dt = dt.sqrt();

    let mut g = rng::path_rng(seed, path_id, BROWNIAN_STREAM);
    let increments: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut g);
            z * sqrt_dt
        })
        .collect();

    let counts = model
        .levy()
        .marks()
        .iter()
        .enumerate()
        .map(|(j, mk)| {
            let mut r = rng::path_rng(seed, path_id, rng::mark_stream(j));
            let pois = Poisson::new(mk.intensity * dt).expect("positive intensity");
            (0..n).map(|_| pois.sample(&mut r) as u32).collect()
        })
        .collect();

    SamplePath::from_draws(model, path_id, increments, counts)
}

/// A reproducible ensemble: path `i` is a pure function of `(seed, i)`.
///
/// Paths are regenerated on demand instead of being held in memory, so large
/// ensembles can be streamed through per-path stages.
#[derive(Debug, Clone, Copy)]
pub struct Ensemble<'a> {
    pub model: &'a ValidatedModel,
    pub seed: u64,
    pub n_paths: usize,
}

impl<'a> Ensemble<'a> {
    pub fn path(&self, path_id: u64) -> SamplePath {
        simulate_path(self.model, self.seed, path_id)
    }

    /// Ordered parallel map over all paths.
    pub fn map<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(SamplePath) -> T + Sync + Send,
    {
        (0..self.n_paths as u64)
            .into_par_iter()
            .map(|id| f(self.path(id)))
            .collect()
    }

    pub fn materialize(&self) -> Vec<SamplePath> {
        self.map(|p| p)
    }
}

pub fn simulate(model: &ValidatedModel, n_paths: usize, seed: u64) -> Ensemble<'_> {
    assert!(n_paths >= 1, "an ensemble needs at least one path");
    Ensemble {
        model,
        seed,
        n_paths,
    }
}

/// Control process `u`, evaluated at cell left endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlPolicy {
    Zero,
    Constant(f64),
    /// `F`-adapted benchmark: the first-order condition with `Φ = Ψ = 0`.
    HonestOptimal,
    /// Root of the first-order condition using the path's drift field.
    InsiderOptimal,
    /// Explicit values, `table[path_id][cell]`.
    Table(Vec<Vec<f64>>),
}

impl ControlPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ControlPolicy::Zero => "zero",
            ControlPolicy::Constant(_) => "constant",
            ControlPolicy::HonestOptimal => "honest-optimal",
            ControlPolicy::InsiderOptimal => "insider-optimal",
            ControlPolicy::Table(_) => "table",
        }
    }
}

/// Checks `1 + u γ_j ≥ eps_adm` on every cell of `[0, T]` and every mark.
pub fn check_admissible(model: &ValidatedModel, controls: &[f64]) -> Result<()> {
    let market = model.market();
    for (i, &u) in controls.iter().enumerate().take(model.horizon_steps()) {
        for (j, g) in market.gamma.iter().enumerate() {
            if u.mul_add(g.cell(i), 1.0) < market.eps_adm {
                return Err(Error::InadmissibleControl {
                    u,
                    t: model.grid().node(i),
                    mark: j,
                });
            }
        }
    }
    Ok(())
}

/// `ln X(T)` for cell-constant controls, from the exact solution of the
/// wealth equation:
/// `Σ_i [u b Δt − ½u²σ²Δt + uσΔB] + Σ_j [N_ij ln(1+uγ_j) − uγ_j λ_j Δt]`.
pub fn log_wealth(model: &ValidatedModel, path: &SamplePath, controls: &[f64]) -> Result<f64> {
    let n_t = model.horizon_steps();
    assert!(controls.len() >= n_t, "one control per cell of [0, T]");
    check_admissible(model, controls)?;
    let market = model.market();
    let dt = model.grid().dt();
    let mut total = 0.0;
    for (i, &u) in controls.iter().enumerate().take(n_t) {
        if u == 0.0 {
            continue;
        }
        let (b, s) = (market.b.cell(i), market.sigma.cell(i));
        let mut cell = u * b * dt - 0.5 * u * u * s * s * dt + u * s * path.increment(i);
        for (j, mk) in model.levy().marks().iter().enumerate() {
            let ug = u * market.gamma[j].cell(i);
            let k = path.count(j, i);
            if k > 0 {
                cell += k as f64 * ug.ln_1p();
            }
            cell -= ug * mk.intensity * dt;
        }
        total += cell;
    }
    Ok(total)
}
