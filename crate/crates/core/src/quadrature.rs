//! Quadrature building blocks: Gauss–Legendre rules, composite panels and the
//! nested periodic trapezoid rule.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Visits the nodes of `panels` equal panels on `[a, b]` as `(x, weight)`.
    pub fn for_each_node(&self, a: f64, b: f64, panels: usize, mut visit: impl FnMut(f64, f64)) {
        let h = (b - a) / panels as f64;
        let half = 0.5 * h;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                visit(mid + half * x, half * w);
            }
        }
    }

    pub fn integrate(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let mut s = 0.0;
        self.for_each_node(a, b, panels, |x, w| s += w * f(x));
        s
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Points per panel of the composite rule used by the Fourier kernel.
pub const PANEL_POINTS: usize = 20;

pub fn panel_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(PANEL_POINTS))
}

/// Nodes of the `m`-point periodic trapezoid rule on `[-π, π)` that are new
/// relative to the `m/2`-point rule (all nodes when `fresh_only` is false).
pub fn trapezoid_nodes(m: usize, fresh_only: bool, mut visit: impl FnMut(f64)) {
    let h = 2.0 * PI / m as f64;
    if fresh_only {
        for k in (1..m).step_by(2) {
            visit(-PI + k as f64 * h);
        }
    } else {
        for k in 0..m {
            visit(-PI + k as f64 * h);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureMode {
    /// Composite Gauss–Legendre on a truncated real line.
    GaussianDecay,
    /// Trapezoid rule on one period `[-π, π)`.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Chosen from the model mode when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<QuadratureMode>,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default = "default_envelope_floor")]
    pub envelope_floor: f64,
}

fn default_abs_tol() -> f64 {
    1e-10
}

fn default_max_nodes() -> usize {
    200_000
}

fn default_envelope_floor() -> f64 {
    1e-16
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            mode: None,
            abs_tol: default_abs_tol(),
            max_nodes: default_max_nodes(),
            envelope_floor: default_envelope_floor(),
        }
    }
}

impl QuadratureSpec {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::InvalidQuadrature(format!(
                "abs_tol must be positive, got {}",
                self.abs_tol
            )));
        }
        if !(self.envelope_floor > 0.0 && self.envelope_floor < 1.0) {
            return Err(Error::InvalidQuadrature(format!(
                "envelope_floor must lie in (0, 1), got {}",
                self.envelope_floor
            )));
        }
        if self.max_nodes < 4 * PANEL_POINTS {
            return Err(Error::InvalidQuadrature(format!(
                "max_nodes must be at least {}",
                4 * PANEL_POINTS
            )));
        }
        Ok(())
    }
}
