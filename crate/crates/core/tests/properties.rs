use insider_core::verify::normalization;
use insider_core::{
    closed_form_phi_brownian, decompose, drift_field, expected_log_wealth, psi_poisson_bridge,
    simulate, validate_model, ControlPolicy, FourierState, LevyConfig, Mark, MarketConfig,
    ModelSpec, QuadratureSpec, SignalConfig, StepSpec, TimeGrid, ValidatedModel,
};
use proptest::prelude::*;

const N: usize = 20;

fn model(sigma_y: StepSpec, marks: &[(f64, f64)], enlarge: bool, gamma: f64) -> ValidatedModel {
    validate_model(&ModelSpec {
        grid: TimeGrid {
            t_end: 1.0,
            n_steps: N,
        },
        signal: SignalConfig {
            sigma: sigma_y,
            theta: None,
            enlarge,
        },
        levy: LevyConfig {
            marks: marks
                .iter()
                .map(|&(size, intensity)| Mark { size, intensity })
                .collect(),
        },
        market: MarketConfig {
            b: 0.05.into(),
            sigma: 0.8.into(),
            gamma: (!marks.is_empty()).then(|| vec![gamma.into(); marks.len()]),
            horizon: 0.5,
            eps_adm: 1e-9,
        },
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn brownian_drift_matches_bridge_for_step_coefficients(
        beta in proptest::collection::vec(0.2f64..2.0, N),
        seed in any::<u64>(),
        id in 0u64..1000,
    ) {
        let m = model(StepSpec::Cells(beta), &[], true, 0.0);
        let p = simulate(&m, 1000, seed).path(id);
        let f = drift_field(&m, &p, &QuadratureSpec::default()).unwrap();
        for i in 0..m.horizon_steps() {
            let exact = closed_form_phi_brownian(&m, &p, i).unwrap();
            prop_assert!((f.alpha1(i) - exact).abs() <= 1e-8 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn mixed_compensator_satisfies_the_bridge_identity(
        theta in 0.3f64..1.5,
        lambda in 0.5f64..2.0,
        seed in any::<u64>(),
    ) {
        let m = model(theta.into(), &[(1.0, lambda)], true, 0.2);
        let p = simulate(&m, 1, seed).path(0);
        let f = drift_field(&m, &p, &QuadratureSpec::default()).unwrap();
        for i in 0..m.horizon_steps() {
            let bridge = psi_poisson_bridge(
                p.signal(),
                p.brownian(i),
                p.compensated(&m, 0, i),
                theta,
                lambda,
                m.time_to_end(i),
                f.alpha1(i),
            );
            prop_assert!((f.psi(i, 0) - bridge).abs() <= 1e-7 * (1.0 + bridge.abs()));
            prop_assert!(f.compensator(i, 0) >= 0.0);
        }
    }

    #[test]
    fn lattice_densities_sum_to_one(lambda in 0.2f64..3.0, seed in any::<u64>(), node in 0usize..N) {
        let m = model(0.0.into(), &[(1.0, lambda)], true, 0.3);
        let p = simulate(&m, 1, seed).path(0);
        let total = normalization(&FourierState::new(&m, &p, node), &QuadratureSpec::default()).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}

#[test]
fn paths_do_not_depend_on_ensemble_size() {
    let m = model(0.7.into(), &[(1.0, 1.0), (-0.5, 0.4)], true, 0.1);
    let small = simulate(&m, 5, 11);
    let large = simulate(&m, 5000, 11);
    for id in 0..5 {
        assert_eq!(small.path(id), large.path(id));
    }
    let mapped = small.map(|p| p.signal());
    let direct: Vec<f64> = (0..5).map(|id| small.path(id).signal()).collect();
    assert_eq!(mapped, direct);
    assert_ne!(small.path(0), simulate(&m, 5, 12).path(0));
}

#[test]
fn decomposition_reconstructs_the_drivers() {
    let m = model(0.7.into(), &[(1.0, 1.0), (-0.5, 0.4)], true, 0.1);
    let q = QuadratureSpec::default();
    for id in 0..5 {
        let p = simulate(&m, 5, 3).path(id);
        let d = decompose(&m, &p, &drift_field(&m, &p, &q).unwrap()).unwrap();
        for i in 0..=m.horizon_steps() {
            assert!((d.reconstruct_brownian(i) - p.brownian(i)).abs() < 1e-12);
            let n: f64 = (0..2).map(|j| p.compensated(&m, j, i)).sum();
            assert!((d.reconstruct_compensated(i) - n).abs() < 1e-12);
        }
    }
}

#[test]
fn without_enlargement_insider_and_honest_coincide() {
    let m = model(0.7.into(), &[(1.0, 1.0)], false, 0.2);
    let e = simulate(&m, 200, 5);
    let v = expected_log_wealth(
        &e,
        &[ControlPolicy::InsiderOptimal, ControlPolicy::HonestOptimal],
        &QuadratureSpec::default(),
    )
    .unwrap();
    assert_eq!(v[0].pathwise.mean, v[1].pathwise.mean);
    assert_eq!(v[0].drift_formula.mean, v[1].drift_formula.mean);
    assert!(v[0].max_foc_residual <= 1e-12);
}

#[test]
fn insider_gains_on_a_jump_signal() {
    let m = model(0.0.into(), &[(1.0, 1.0)], true, 0.3);
    let e = simulate(&m, 2000, 9);
    let v = expected_log_wealth(
        &e,
        &[
            ControlPolicy::InsiderOptimal,
            ControlPolicy::HonestOptimal,
            ControlPolicy::Zero,
        ],
        &QuadratureSpec::default(),
    )
    .unwrap();
    let (ins, hon, zero) = (&v[0], &v[1], &v[2]);
    assert_eq!(zero.pathwise.mean, 0.0);
    assert!(
        ins.pathwise.mean
            > hon.pathwise.mean + 3.0 * ins.pathwise.stderr.hypot(hon.pathwise.stderr)
    );
    for pv in &v {
        assert!(
            pv.estimator_gap() <= 4.0,
            "{}: gap {}",
            pv.policy,
            pv.estimator_gap()
        );
    }
}
