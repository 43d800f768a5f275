//! Conditional Donsker delta functional of a first-order-chaos signal and its
//! conditional Hida–Malliavin derivatives, evaluated as Fourier integrals.
//!
//! For `Y = ∫_0^{T0} σ_Y dB + Σ_j ∫_0^{T0} θ_j dÑ_j` and a grid node `t < T0`,
//!
//! ```text
//! F(t, x, y) = exp[ ix Y(t) + Σ_j λ_j ∫_t^{T0} (e^{ixθ_j(s)} − 1 − ixθ_j(s)) ds
//!                   − ½ x² ∫_t^{T0} σ_Y(s)² ds − ixy ]
//!
//! E[δ_Y(y) | F_t]          = (1/2π) ∫ F(t,x,y) dx
//! E[D_t δ_Y(y) | F_t]      = (1/2π) ∫ F(t,x,y) · ixσ_Y(t) dx
//! E[D_{t,ζ_j} δ_Y(y) | F_t] = (1/2π) ∫ F(t,x,y) · (e^{ixθ_j(t)} − 1) dx
//! ```
//!
//! With a Gaussian tail the integrals run over a truncated real line; in the
//! pure-lattice case they run over one period `[-π, π)` and return
//! conditional probability masses instead of densities. All three integrands
//! are evaluated on shared nodes.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Mode, TailTerm, ValidatedModel};
use crate::path::SamplePath;
use crate::quadrature::{
    panel_rule, trapezoid_nodes, QuadratureMode, QuadratureSpec, PANEL_POINTS,
};

const INITIAL_TRAPEZOID: usize = 32;

/// Everything `F(t, ·, ·)` needs at one node of one path.
#[derive(Debug, Clone)]
pub struct FourierState<'a> {
    model: &'a ValidatedModel,
    pub node: usize,
    pub t: f64,
    /// `Σ_j ∫_0^t θ_j dÑ_j`.
    pub running_jump_phase: f64,
    /// `∫_0^t σ_Y dB`.
    pub running_brownian_integral: f64,
    /// `∫_t^{T0} σ_Y² ds`.
    pub tail_gaussian: f64,
    tail_jump: &'a [TailTerm],
    sigma_now: f64,
    theta_now: Vec<f64>,
}

impl<'a> FourierState<'a> {
    pub fn new(model: &'a ValidatedModel, path: &SamplePath, node: usize) -> Self {
        Self::from_running(
            model,
            node,
            path.brownian_integral(node),
            path.jump_phase(node),
        )
    }

    /// State built from given running integrals (hand-specified states).
    pub fn from_running(
        model: &'a ValidatedModel,
        node: usize,
        brownian_integral: f64,
        jump_phase: f64,
    ) -> Self {
        let n = model.grid().n_steps;
        assert!(
            node < n,
            "Fourier state requires t < T0 (node {node} of {n})"
        );
        let signal = model.signal();
        Self {
            model,
            node,
            t: model.grid().node(node),
            running_jump_phase: jump_phase,
            running_brownian_integral: brownian_integral,
            tail_gaussian: model.tail_gaussian(node),
            tail_jump: model.tail_jump(node),
            sigma_now: signal.sigma.cell(node),
            theta_now: signal.theta.iter().map(|th| th.cell(node)).collect(),
        }
    }

    pub fn model(&self) -> &'a ValidatedModel {
        self.model
    }

    /// `Y(t)`.
    pub fn running_signal(&self) -> f64 {
        self.running_brownian_integral + self.running_jump_phase
    }

    /// `σ_Y(t)` on the cell starting at `t`.
    pub fn sigma_now(&self) -> f64 {
        self.sigma_now
    }

    /// `θ_j(t)` on the cell starting at `t`.
    pub fn theta_now(&self, mark: usize) -> f64 {
        self.theta_now[mark]
    }

    /// `Σ_j λ_j ∫_t^{T0} (e^{ixθ_j} − 1 − ixθ_j) ds`.
    pub fn tail_jump(&self, x: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for term in self.tail_jump {
            let a = x * term.theta;
            let (s, c) = a.sin_cos();
            acc += term.weight * Complex64::new(c - 1.0, s - a);
        }
        acc
    }

    /// `F(t, x, y)`.
    pub fn integrand_f(&self, x: f64, y: f64) -> Complex64 {
        let (re, im) = self.log_f(x, self.linear_coefficient(y));
        Complex64::from_polar(re.exp(), im)
    }

    /// Coefficient of `ix` in `log F`: `Y(t) − y − Σ wθ`.
    fn linear_coefficient(&self, y: f64) -> f64 {
        let drift: f64 = self.tail_jump.iter().map(|t| t.weight * t.theta).sum();
        self.running_signal() - y - drift
    }

    #[inline]
    fn log_f(&self, x: f64, lin: f64) -> (f64, f64) {
        let mut re = -0.5 * x * x * self.tail_gaussian;
        let mut im = x * lin;
        for term in self.tail_jump {
            let (s, c) = (x * term.theta).sin_cos();
            re += term.weight * (c - 1.0);
            im += term.weight * s;
        }
        (re, im)
    }

    /// Upper bound on the phase speed of the integrands.
    fn frequency_scale(&self, lin: f64) -> f64 {
        let tail: f64 = self
            .tail_jump
            .iter()
            .map(|t| t.weight * t.theta.abs())
            .sum();
        let tmax = self
            .tail_jump
            .iter()
            .map(|t| t.theta.abs())
            .chain(self.theta_now.iter().map(|t| t.abs()))
            .fold(0.0, f64::max);
        lin.abs() + tail + tmax
    }
}

/// Real part of a conditional quantity plus the discarded imaginary part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEstimate {
    pub value: f64,
    pub im_residual: f64,
}

impl KernelEstimate {
    fn from_sum(z: Complex64) -> Self {
        Self {
            value: z.re,
            im_residual: z.im.abs(),
        }
    }
}

/// Which conditional quantities to integrate on the shared nodes.
#[derive(Debug, Clone, Copy)]
pub struct KernelRequest<'r> {
    pub malliavin_b: bool,
    pub marks: &'r [usize],
}

impl KernelRequest<'_> {
    pub const DELTA: KernelRequest<'static> = KernelRequest {
        malliavin_b: false,
        marks: &[],
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelValues {
    pub delta: KernelEstimate,
    pub malliavin_b: Option<KernelEstimate>,
    /// Aligned with the requested marks.
    pub malliavin_n: Vec<KernelEstimate>,
    pub error_estimate: f64,
    pub nodes: usize,
}

impl KernelValues {
    pub fn max_im_residual(&self) -> f64 {
        self.malliavin_n
            .iter()
            .chain(self.malliavin_b.iter())
            .map(|e| e.im_residual)
            .fold(self.delta.im_residual, f64::max)
    }
}

/// Integrates the requested quantities at `y` on shared quadrature nodes.
pub fn evaluate(
    state: &FourierState<'_>,
    y: f64,
    q: &QuadratureSpec,
    request: KernelRequest<'_>,
) -> Result<KernelValues> {
    q.check()?;
    let mode = resolve_mode(state.model, q)?;
    if mode == QuadratureMode::Periodic && state.model.lattice_index(y).is_none() {
        return Err(Error::OffLattice(y));
    }
    if request.malliavin_b && state.model.mode() != Mode::GaussianDominant {
        return Err(Error::WrongMode {
            expected: Mode::GaussianDominant.as_str(),
        });
    }

    let lin = state.linear_coefficient(y);
    let b_factor = if request.malliavin_b {
        Some(state.sigma_now)
    } else {
        None
    };
    let thetas: Vec<f64> = request.marks.iter().map(|&j| state.theta_now[j]).collect();
    let width = 1 + usize::from(request.malliavin_b) + thetas.len();

    // Adds w·[F, ixσF, (e^{ixθ_j} − 1)F, ...] at node x.
    let accumulate = |acc: &mut [Complex64], x: f64, w: f64| {
        let (re, im) = state.log_f(x, lin);
        let f = Complex64::from_polar(w * re.exp(), im);
        acc[0] += f;
        let mut k = 1;
        if let Some(sig) = b_factor {
            acc[k] += Complex64::new(0.0, x * sig) * f;
            k += 1;
        }
        for &th in &thetas {
            if th != 0.0 {
                let a = x * th;
                let (s, _) = a.sin_cos();
                let h = (0.5 * a).sin();
                acc[k] += Complex64::new(-2.0 * h * h, s) * f;
            }
            k += 1;
        }
    };

    let (sums, err, nodes) = match mode {
        QuadratureMode::GaussianDecay => {
            let v = state.tail_gaussian;
            let x_max = (2.0 * (1.0 / q.envelope_floor).ln() / v).sqrt();
            let omega = state.frequency_scale(lin);
            // Two periods of the fastest phase per 20-point panel; doubling certifies.
            let mut panels = ((x_max * omega / (2.0 * PI)).ceil() as usize).max(4);
            let rule = panel_rule();
            let run = |panels: usize| {
                let mut acc = vec![Complex64::new(0.0, 0.0); width];
                rule.for_each_node(-x_max, x_max, panels, |x, w| {
                    accumulate(&mut acc, x, w / (2.0 * PI))
                });
                acc
            };
            let mut coarse = run(panels);
            let mut nodes = panels * PANEL_POINTS;
            loop {
                let next = 2 * panels * PANEL_POINTS;
                if nodes + next > q.max_nodes {
                    return Err(Error::QuadratureDidNotConverge {
                        error: f64::INFINITY,
                        tol: q.abs_tol,
                        nodes,
                    });
                }
                let fine = run(2 * panels);
                nodes += next;
                let err = max_diff(&coarse, &fine);
                if err <= q.abs_tol {
                    break (fine, err, nodes);
                }
                if nodes + 2 * next > q.max_nodes {
                    return Err(Error::QuadratureDidNotConverge {
                        error: err,
                        tol: q.abs_tol,
                        nodes,
                    });
                }
                coarse = fine;
                panels *= 2;
            }
        }
        QuadratureMode::Periodic => {
            let mut raw = vec![Complex64::new(0.0, 0.0); width];
            let mut m = INITIAL_TRAPEZOID;
            trapezoid_nodes(m, false, |x| accumulate(&mut raw, x, 1.0));
            let mut nodes = m;
            let mut coarse: Vec<Complex64> = raw.iter().map(|z| z / m as f64).collect();
            loop {
                if nodes + m > q.max_nodes {
                    return Err(Error::QuadratureDidNotConverge {
                        error: f64::INFINITY,
                        tol: q.abs_tol,
                        nodes,
                    });
                }
                trapezoid_nodes(2 * m, true, |x| accumulate(&mut raw, x, 1.0));
                nodes += m;
                m *= 2;
                let fine: Vec<Complex64> = raw.iter().map(|z| z / m as f64).collect();
                let err = max_diff(&coarse, &fine);
                if err <= q.abs_tol {
                    break (fine, err, nodes);
                }
                coarse = fine;
            }
        }
    };

    let mut it = sums.into_iter();
    let delta = KernelEstimate::from_sum(it.next().expect("delta component"));
    let malliavin_b = request
        .malliavin_b
        .then(|| KernelEstimate::from_sum(it.next().expect("Brownian component")));
    let malliavin_n = it.map(KernelEstimate::from_sum).collect();
    Ok(KernelValues {
        delta,
        malliavin_b,
        malliavin_n,
        error_estimate: err,
        nodes,
    })
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn resolve_mode(model: &ValidatedModel, q: &QuadratureSpec) -> Result<QuadratureMode> {
    let natural = match model.mode() {
        Mode::GaussianDominant => QuadratureMode::GaussianDecay,
        Mode::PureLattice => QuadratureMode::Periodic,
        Mode::NoEnlargement => {
            return Err(Error::WrongMode {
                expected: "enlarged (gaussian-dominant or pure-lattice)",
            })
        }
    };
    match q.mode {
        Some(m) if m != natural => Err(Error::InvalidQuadrature(format!(
            "{m:?} quadrature cannot be used with a {} model",
            model.mode().as_str()
        ))),
        _ => Ok(natural),
    }
}

/// `E[δ_Y(y) | F_t]`: conditional density (or lattice mass) of `Y` at `y`.
pub fn cond_delta(state: &FourierState<'_>, y: f64, q: &QuadratureSpec) -> Result<KernelEstimate> {
    evaluate(state, y, q, KernelRequest::DELTA).map(|v| v.delta)
}

/// `E[D_t δ_Y(y) | F_t]`.
pub fn cond_malliavin_b(
    state: &FourierState<'_>,
    y: f64,
    q: &QuadratureSpec,
) -> Result<KernelEstimate> {
    let v = evaluate(
        state,
        y,
        q,
        KernelRequest {
            malliavin_b: true,
            marks: &[],
        },
    )?;
    Ok(v.malliavin_b.expect("requested"))
}

/// `E[D_{t,ζ_j} δ_Y(y) | F_t]`.
pub fn cond_malliavin_n(
    state: &FourierState<'_>,
    mark: usize,
    y: f64,
    q: &QuadratureSpec,
) -> Result<KernelEstimate> {
    let marks = [mark];
    let v = evaluate(
        state,
        y,
        q,
        KernelRequest {
            malliavin_b: false,
            marks: &marks,
        },
    )?;
    Ok(v.malliavin_n[0])
}
