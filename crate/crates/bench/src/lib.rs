//! Reference models shared by the benchmarks.

use insider_core::{
    validate_model, LevyConfig, Mark, MarketConfig, ModelSpec, SignalConfig, TimeGrid,
    ValidatedModel,
};

/// `Y = B(1)`, 100 cells, horizon 0.5.
pub fn brownian() -> ValidatedModel {
    build(1.0, &[], None)
}

/// `Y = Ñ(1)` with unit jumps at rate 1.
pub fn poisson() -> ValidatedModel {
    build(0.0, &[(1.0, 1.0)], Some(0.3))
}

/// `Y = 0.8 B(1) + Ñ(1)`.
pub fn mixed() -> ValidatedModel {
    build(0.8, &[(1.0, 1.0)], Some(0.1))
}

fn build(sigma_y: f64, marks: &[(f64, f64)], gamma: Option<f64>) -> ValidatedModel {
    validate_model(&ModelSpec {
        grid: TimeGrid {
            t_end: 1.0,
            n_steps: 100,
        },
        signal: SignalConfig {
            sigma: sigma_y.into(),
            theta: None,
            enlarge: true,
        },
        levy: LevyConfig {
            marks: marks
                .iter()
                .map(|&(size, intensity)| Mark { size, intensity })
                .collect(),
        },
        market: MarketConfig {
            b: 0.05.into(),
            sigma: 1.0.into(),
            gamma: gamma.map(|g| vec![g.into()]),
            horizon: 0.5,
            eps_adm: 1e-9,
        },
    })
    .expect("reference model is valid")
}

/// All three reference models with their names.
pub fn all() -> Vec<(&'static str, ValidatedModel)> {
    vec![
        ("brownian", brownian()),
        ("poisson", poisson()),
        ("mixed", mixed()),
    ]
}
