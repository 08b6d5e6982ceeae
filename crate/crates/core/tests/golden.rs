//! Hand-derived values on uniform types with `v = 2√q` and `c = 1`, frozen
//! from an independent closed-form computation.

mod common;

use approx::assert_abs_diff_eq;
use mechd_core::analysis;
use mechd_core::env::{Correlation, Weight};
use mechd_core::mech::{self, RegionKind};
use mechd_core::solver;

fn at(env: &mechd_core::EnvironmentF64, q: &[f64], theta: f64) -> f64 {
    q[env.node_at_or_below(theta)]
}

#[test]
fn falling_weight_subsidizes_the_bottom_half() {
    let env = common::e2();
    let (m, d) = solver::solve(&env).unwrap();
    assert_eq!(d.mu_star, 0.0);
    assert_abs_diff_eq!(d.theta_h_star.unwrap(), 1.5, epsilon = 1e-9);
    assert_abs_diff_eq!(d.u_floor, 1.020_833_333_333_333_5, epsilon = 1e-8);
    assert_abs_diff_eq!(at(&env, &m.q, 1.25), 1.485_351_562_5, epsilon = 1e-9);
    assert_eq!(d.regions.kinds(), vec![RegionKind::Subsidy, RegionKind::PrivateMarket]);
    assert_abs_diff_eq!(d.welfare_lf, 3.0, epsilon = 1e-12);
}

#[test]
fn rising_weight_subsidizes_the_top_half() {
    let env = common::e4();
    let (m, d) = solver::solve(&env).unwrap();
    assert_eq!(d.mu_star, 0.0);
    assert_abs_diff_eq!(d.theta_l_star.unwrap(), 1.5, epsilon = 1e-9);
    assert_abs_diff_eq!(at(&env, &m.q, 1.75), 3.172_851_562_5, epsilon = 1e-9);
    assert_eq!(d.regions.kinds(), vec![RegionKind::PrivateMarket, RegionKind::Subsidy]);
}

#[test]
fn low_profit_weight_pools_everyone_into_the_public_option() {
    let env = common::e1();
    let (m, d) = solver::solve(&env).unwrap();
    assert_abs_diff_eq!(d.mu_star, 0.5, epsilon = 1e-10);
    let pooled = 625.0 / 144.0;
    assert!(m.q.iter().all(|&q| (q - pooled).abs() < 1e-7));
    assert_abs_diff_eq!(d.welfare_opt, 4.340_277_777_777_778, epsilon = 1e-8);
    assert_abs_diff_eq!(d.welfare_gain, 1.340_277_777_777_778, epsilon = 1e-8);
    assert_eq!(d.regions.kinds(), vec![RegionKind::PublicOption]);
    assert!(m.t[0].abs() < 1e-12);
}

#[test]
fn subsidy_probe_matches_closed_form() {
    assert_abs_diff_eq!(
        analysis::subsidy_deviation_gain(&common::e1(), 1.05, 0.01).unwrap(),
        0.001_275,
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(
        analysis::subsidy_deviation_gain(&common::e2(), 1.05, 0.01).unwrap(),
        -0.000_225,
        epsilon = 1e-12
    );
    let flat = common::boundary(Correlation::Negative);
    assert_abs_diff_eq!(
        analysis::subsidy_deviation_gain(&flat, 1.05, 0.01).unwrap(),
        -0.000_666_666_666_666_7,
        epsilon = 1e-12
    );
}

fn wide(weight: Weight<f64>, correlation: Correlation, alpha: f64) -> mechd_core::EnvironmentF64 {
    use mechd_core::env::{Distribution, EnvSpec, Environment, Utility};
    Environment::new(EnvSpec {
        theta_min: 0.2,
        theta_max: 2.0,
        dist: Distribution::Uniform,
        util: Utility::Sqrt,
        cap: None,
        cost: 1.0,
        alpha,
        weight,
        correlation,
        grid_n: 10001,
    })
    .unwrap()
}

#[test]
fn full_control_crossing_types() {
    let pos = wide(Weight::Linear { intercept: -0.3, slope: 1.5 }, Correlation::Positive, 1.6);
    let r = analysis::counterfactual_compare(&pos).unwrap();
    assert_eq!(r.case, analysis::CounterfactualCase::PositiveLow);
    assert_abs_diff_eq!(r.theta_hat.unwrap(), 1.015_140, epsilon = 1e-4);
    assert_eq!(r.theta_l_below_hat, Some(true));

    let neg = wide(Weight::Linear { intercept: 3.9, slope: -1.8 }, Correlation::Negative, 1.8);
    let r = analysis::counterfactual_compare(&neg).unwrap();
    assert_eq!(r.case, analysis::CounterfactualCase::NegativeHigh);
    assert_abs_diff_eq!(r.theta_hat.unwrap(), 0.870_748, epsilon = 1e-4);
}

#[test]
fn laissez_faire_weighted_surplus() {
    let env = common::e2();
    let w = mech::welfare(&env.laissez_faire(), &env);
    assert_abs_diff_eq!(w.weighted_consumer_surplus, 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(w.weighted_profit, 0.0, epsilon = 1e-12);
}
