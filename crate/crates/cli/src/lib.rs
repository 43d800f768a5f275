//! `insider` command-line front end: simulate, drift, optimize, decompose,
//! verify and report stages over a single TOML run configuration.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use insider_core::drift::COMPENSATOR_TOL;
use insider_core::optimizer::resolve_controls;
use insider_core::stats::summarize;
use insider_core::{
    decompose, drift_field, expected_log_wealth, simulate, validate_model, verify_suite,
    ControlPolicy, DriftField, Ensemble, Mode, PolicyValue, SamplePath, ValidatedModel,
};
use serde::Serialize;
use serde_json::json;

pub use config::RunConfig;
use output::{write_csv, write_json};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "INSIDER_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "insider",
    version,
    about = "Insider information drift pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Artifact directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,

    /// `section.key=value`, applied after the file; repeatable.
    #[arg(
        long = "override",
        visible_alias = "overrides",
        global = true,
        value_name = "KEY=VALUE"
    )]
    pub overrides: Vec<String>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the configuration and write model.json.
    Validate,
    /// Simulate paths; writes paths.csv and simulate.json.
    Simulate,
    /// Information drift and compensators; writes drift.csv and drift.json.
    Drift,
    /// Insider and honest controls and values; writes controls.csv and optimize.json.
    Optimize,
    /// Enlarged-filtration martingale parts; writes decomposed.csv and decompose.json.
    Decompose,
    /// Statistical verification suite; writes verify.json.
    Verify,
    /// Aggregates the JSON artifacts into summary.json.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Drift => "drift",
            Command::Optimize => "optimize",
            Command::Decompose => "decompose",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }
}

/// Outcome of a stage: `ok` is false when a positive check failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub ok: bool,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().context("building worker pool")?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    if cli.command == Command::Report {
        return report(&cli.out);
    }
    let path = cli
        .config
        .as_deref()
        .context("--config is required for this subcommand")?;
    let mut cfg = RunConfig::load(path, &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    cfg.quadrature.check()?;
    let model = validate_model(&cfg.model_spec())?;
    let stage = Stage {
        cfg: &cfg,
        model: &model,
        out: &cli.out,
    };
    match cli.command {
        Command::Validate => stage.validate(),
        Command::Simulate => stage.simulate(),
        Command::Drift => stage.drift(),
        Command::Optimize => stage.optimize(),
        Command::Decompose => stage.decompose(),
        Command::Verify => stage.verify(),
        Command::Report => unreachable!(),
    }
}

struct Stage<'a> {
    cfg: &'a RunConfig,
    model: &'a ValidatedModel,
    out: &'a Path,
}

/// Shortest round-trip form; exponents for very small or large values.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}

impl<'a> Stage<'a> {
    fn ensemble(&self) -> Ensemble<'a> {
        simulate(self.model, self.cfg.mc.n_paths, self.cfg.mc.seed)
    }

    fn dump_count(&self) -> usize {
        self.cfg.mc.dump_paths.min(self.cfg.mc.n_paths)
    }

    fn dumped_paths(&self) -> Vec<SamplePath> {
        let e = self.ensemble();
        (0..self.dump_count() as u64).map(|id| e.path(id)).collect()
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn validate(&self) -> Result<Outcome> {
        let m = self.model;
        write_json(
            &self.artifact("model.json"),
            &json!({
                "mode": m.mode(),
                "horizon_steps": m.horizon_steps(),
                "dt": m.grid().dt(),
                "lattice_offset": (m.mode() == Mode::PureLattice).then(|| m.lattice_offset()),
                "model": m.to_spec(),
                "quadrature": self.cfg.quadrature,
                "mc": self.cfg.mc,
                "ok": true,
            }),
        )?;
        Ok(Outcome { ok: true })
    }

    fn simulate(&self) -> Result<Outcome> {
        let m = self.model;
        let marks = m.n_marks();
        let mut header = vec!["path_id".to_string(), "t".into(), "B".into()];
        header.extend((1..=marks).map(|j| format!("count_{j}")));
        header.push("Y".into());
        let mut rows = Vec::new();
        for p in self.dumped_paths() {
            for i in 0..=m.grid().n_steps {
                let mut r = vec![
                    p.path_id.to_string(),
                    fmt(m.grid().node(i)),
                    fmt(p.brownian(i)),
                ];
                r.extend((0..marks).map(|j| p.cumulative_count(j, i).to_string()));
                r.push(fmt(p.running_signal(i)));
                rows.push(r);
            }
        }
        write_csv(&self.artifact("paths.csv"), &header, &rows)?;
        let ys = self.ensemble().map(|p| p.signal());
        let s = summarize(&ys);
        write_json(
            &self.artifact("simulate.json"),
            &json!({
                "n_paths": self.cfg.mc.n_paths,
                "seed": self.cfg.mc.seed,
                "signal_mean": s.mean,
                "signal_stderr": s.stderr,
                "dumped_paths": self.dump_count(),
                "ok": true,
            }),
        )?;
        Ok(Outcome { ok: true })
    }

    fn drift_fields(&self) -> Result<Vec<DriftField>> {
        let (m, q) = (self.model, &self.cfg.quadrature);
        self.ensemble()
            .map(|p| drift_field(m, &p, q))
            .into_iter()
            .collect::<insider_core::Result<Vec<_>>>()
            .map_err(Into::into)
    }

    fn drift(&self) -> Result<Outcome> {
        let m = self.model;
        let marks = m.n_marks();
        let fields = self.drift_fields()?;
        let mut header = vec!["path_id".to_string(), "t".into(), "phi".into()];
        header.extend((1..=marks).map(|j| format!("psi_{j}")));
        header.extend((1..=marks).map(|j| format!("compensator_{j}")));
        header.extend(["im_residual".to_string(), "denom".into()]);
        let mut rows = Vec::new();
        for f in fields.iter().take(self.dump_count()) {
            for (i, pt) in f.points.iter().enumerate() {
                let mut r = vec![f.path_id.to_string(), fmt(pt.t), fmt(pt.phi)];
                r.extend(pt.psi.iter().map(|&v| fmt(v)));
                r.extend((0..marks).map(|j| fmt(f.compensator(i, j))));
                r.extend([fmt(pt.im_residual), fmt(pt.denom)]);
                rows.push(r);
            }
        }
        write_csv(&self.artifact("drift.csv"), &header, &rows)?;
        let min_comp = fields
            .iter()
            .map(DriftField::min_compensator)
            .fold(f64::INFINITY, f64::min);
        let max_im = fields
            .iter()
            .map(DriftField::max_im_residual)
            .fold(0.0, f64::max);
        let ok = marks == 0 || min_comp >= -COMPENSATOR_TOL;
        write_json(
            &self.artifact("drift.json"),
            &json!({
                "n_paths": fields.len(),
                "cells": m.horizon_steps(),
                "min_compensator": if marks == 0 { None } else { Some(min_comp) },
                "max_im_residual": max_im,
                "ok": ok,
            }),
        )?;
        Ok(Outcome { ok })
    }

    fn optimize(&self) -> Result<Outcome> {
        let m = self.model;
        let q = &self.cfg.quadrature;
        let policies = [ControlPolicy::InsiderOptimal, ControlPolicy::HonestOptimal];
        let values = expected_log_wealth(&self.ensemble(), &policies, q)?;

        let header = ["path_id", "t", "u_star", "residual"].map(String::from);
        let mut rows = Vec::new();
        for p in self.dumped_paths() {
            let field = drift_field(m, &p, q)?;
            let c = resolve_controls(m, &ControlPolicy::InsiderOptimal, p.path_id, Some(&field))?;
            for (i, (&u, &r)) in c.u.iter().zip(&c.residual).enumerate() {
                rows.push(vec![
                    p.path_id.to_string(),
                    fmt(m.grid().node(i)),
                    fmt(u),
                    fmt(r),
                ]);
            }
        }
        write_csv(&self.artifact("controls.csv"), &header, &rows)?;

        let report = OptimizeReport::new(&values);
        write_json(&self.artifact("optimize.json"), &report)?;
        Ok(Outcome { ok: report.ok })
    }

    fn decompose(&self) -> Result<Outcome> {
        let (m, q) = (self.model, &self.cfg.quadrature);
        let header = ["path_id", "t", "B", "b_hat", "N", "M"].map(String::from);
        let mut rows = Vec::new();
        for p in self.dumped_paths() {
            let d = decompose(m, &p, &drift_field(m, &p, q)?)?;
            for i in 0..d.n_nodes() {
                rows.push(vec![
                    d.path_id.to_string(),
                    fmt(m.grid().node(i)),
                    fmt(d.brownian[i]),
                    fmt(d.b_hat[i]),
                    fmt(d.compensated[i]),
                    fmt(d.m_jump[i]),
                ]);
            }
        }
        write_csv(&self.artifact("decomposed.csv"), &header, &rows)?;
        let qv = self
            .ensemble()
            .map(|p| -> insider_core::Result<f64> {
                Ok(decompose(m, &p, &drift_field(m, &p, q)?)?.qv_b_hat())
            })
            .into_iter()
            .collect::<insider_core::Result<Vec<f64>>>()?;
        let s = summarize(&qv);
        write_json(
            &self.artifact("decompose.json"),
            &json!({
                "n_paths": s.n,
                "horizon": m.market().horizon,
                "qv_b_hat_mean": s.mean,
                "qv_b_hat_stderr": s.stderr,
                "ok": true,
            }),
        )?;
        Ok(Outcome { ok: true })
    }

    fn verify(&self) -> Result<Outcome> {
        let r = verify_suite(
            self.model,
            self.cfg.mc.n_paths,
            self.cfg.mc.seed,
            &self.cfg.quadrature,
            &self.cfg.verify.settings(),
        )?;
        write_json(&self.artifact("verify.json"), &r)?;
        Ok(Outcome { ok: r.ok })
    }
}

/// JSON summary of the optimize stage.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub values: Vec<ValueEntry>,
    pub max_foc_residual: f64,
    pub checks: Vec<NamedCheck>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueEntry {
    pub policy: String,
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub estimator: insider_core::Estimator,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedCheck {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl OptimizeReport {
    pub fn new(values: &[PolicyValue]) -> Self {
        let mut entries = Vec::new();
        for v in values {
            for e in [v.pathwise, v.drift_formula] {
                entries.push(ValueEntry {
                    policy: v.policy.clone(),
                    mean: e.mean,
                    stderr: e.stderr,
                    n_paths: e.n_paths,
                    estimator: e.estimator,
                });
            }
        }
        let max_res = values
            .iter()
            .map(|v| v.max_foc_residual)
            .fold(0.0, f64::max);
        let mut checks = vec![NamedCheck {
            name: "foc-plug-back".into(),
            statistic: max_res,
            threshold: insider_core::optimizer::FOC_TOL,
            passed: max_res <= insider_core::optimizer::FOC_TOL,
        }];
        for v in values {
            let gap = v.estimator_gap();
            checks.push(NamedCheck {
                name: format!("estimator-agreement:{}", v.policy),
                statistic: gap,
                threshold: 3.0,
                passed: gap <= 3.0,
            });
        }
        let find = |name: &str| values.iter().find(|v| v.policy == name);
        if let (Some(ins), Some(hon)) = (find("insider-optimal"), find("honest-optimal")) {
            let se = ins.pathwise.stderr.hypot(hon.pathwise.stderr);
            let margin = ins.pathwise.mean - hon.pathwise.mean;
            checks.push(NamedCheck {
                name: "dominance".into(),
                statistic: margin,
                threshold: -3.0 * se,
                passed: margin >= -3.0 * se,
            });
        }
        let ok = checks.iter().all(|c| c.passed);
        Self {
            values: entries,
            max_foc_residual: max_res,
            checks,
            ok,
        }
    }
}

/// Artifacts collected by `report`, in pipeline order.
pub const REPORT_INPUTS: [&str; 6] = [
    "model.json",
    "simulate.json",
    "drift.json",
    "optimize.json",
    "decompose.json",
    "verify.json",
];

fn report(out: &Path) -> Result<Outcome> {
    let mut artifacts = serde_json::Map::new();
    let mut ok = true;
    for name in REPORT_INPUTS {
        let p = out.join(name);
        if !p.exists() {
            continue;
        }
        let text =
            std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        ok &= v
            .get("ok")
            .and_then(serde_json::Value::as_bool)
            .unwrap_or(false);
        artifacts.insert(name.trim_end_matches(".json").to_string(), v);
    }
    anyhow::ensure!(
        !artifacts.is_empty(),
        "no artifacts found in {}",
        out.display()
    );
    let stages: Vec<&String> = artifacts.keys().collect();
    let summary = json!({ "stages": stages, "ok": ok, "artifacts": artifacts });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(Outcome { ok })
}
