mod common;

use mechd_core::analysis;
use mechd_core::env::{Correlation, Weight};
use mechd_core::mech::{self, MechError};
use mechd_core::quad;
use mechd_core::solver;
use proptest::prelude::*;

#[test]
fn laissez_faire_satisfies_the_envelope_identity() {
    for case in common::battery() {
        let env = &case.env;
        let nodes = env.nodes();
        let mut integral = 0.0;
        for k in 1..nodes.len() {
            integral += quad::gauss_legendre(nodes[k - 1], nodes[k], |s| env.nu_lf(s));
            let lhs = env.u_lf(nodes[k]) - env.u_lf(nodes[0]);
            assert!((lhs - integral).abs() <= 1e-8, "{} at node {k}: {lhs} vs {integral}", case.label);
        }
        let lf = env.laissez_faire();
        let r = mech::verify_feasibility(&lf, env, 1e-6);
        assert!(r.passes(1e-6), "{}: {r:?}", case.label);
        for (t, q) in lf.t.iter().zip(&lf.q) {
            assert!((t - env.cost() * q).abs() <= 1e-8);
        }
    }
}

#[test]
fn demand_falls_in_price_and_rises_in_type() {
    for case in common::battery().iter().take(12) {
        let env = &case.env;
        let (a, b) = (env.theta_min(), env.theta_max());
        let c = env.cost();
        for k in 0..20 {
            let th = a + (b - a) * k as f64 / 19.0;
            assert!(env.demand(1.1 * c, th) <= env.demand(c, th) + 1e-14);
            if k > 0 {
                let prev = a + (b - a) * (k - 1) as f64 / 19.0;
                assert!(env.demand(c, th) >= env.demand(c, prev) - 1e-14);
            }
        }
    }
}

#[test]
fn csv_round_trip_preserves_the_mechanism() {
    let env = common::e2();
    let (m, d) = solver::solve(&env).unwrap();
    let mut buf = Vec::new();
    mech::write_csv(&m, &env, &d.regions, &mut buf).unwrap();
    let back: mechd_core::MechanismF64 = mech::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), m.len());
    for i in 0..m.len() {
        assert!((back.q[i] - m.q[i]).abs() <= 1e-11 * (1.0 + m.q[i].abs()));
        assert!((back.u[i] - m.u[i]).abs() <= 1e-11 * (1.0 + m.u[i].abs()));
    }
    let r = mech::verify_feasibility(&back, &env, 1e-6);
    assert!(r.passes(1e-6), "{r:?}");
}

#[test]
fn csv_reader_rejects_wrong_columns() {
    let text = "theta,q,t\n1,2,3\n";
    let err = mech::read_csv::<f64, _>(text.as_bytes()).unwrap_err();
    assert!(matches!(err, MechError::Schema(_)));
}

#[test]
fn laissez_faire_is_exact_without_scope() {
    for case in common::battery().into_iter().filter(|c| c.regime == common::Regime::AboveMax) {
        let (m, d) = solver::solve(&case.env).unwrap();
        assert!(!d.intervene);
        assert_eq!(d.welfare_gain, 0.0);
        assert_eq!(m, case.env.laissez_faire(), "{}", case.label);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_output_is_feasible_and_stationary(
        top in 1.5f64..4.0,
        drop in 0.2f64..3.0,
        alpha_frac in 0.05f64..0.95,
        negative in any::<bool>(),
    ) {
        let (hi_w, lo_w) = (top, (top - drop).max(0.1));
        let (weight, corr) = if negative {
            (Weight::Linear { intercept: 2.0 * hi_w - lo_w, slope: lo_w - hi_w }, Correlation::Negative)
        } else {
            (Weight::Linear { intercept: 2.0 * lo_w - hi_w, slope: hi_w - lo_w }, Correlation::Positive)
        };
        let alpha = lo_w + alpha_frac * (hi_w - lo_w);
        let env = common::uniform_sqrt(weight, corr, alpha, 2001);
        let (m, d) = solver::solve(&env).unwrap();
        let r = mech::verify_feasibility(&m, &env, 1e-6);
        prop_assert!(r.passes(1e-6), "{:?}", r);
        prop_assert!(analysis::kkt_verify(&m, &d, &env) <= 1e-6);
        prop_assert!(d.welfare_gain >= -1e-12);
    }
}

#[test]
fn regions_are_stable_on_coarse_grids() {
    for n in [101, 1001, 10001] {
        let env = common::e2().with_grid(n).unwrap();
        let (_, d) = solver::solve(&env).unwrap();
        assert_eq!(d.regions.kinds(), vec![mech::RegionKind::Subsidy, mech::RegionKind::PrivateMarket], "n = {n}");
        let market = d.regions.find(mech::RegionKind::PrivateMarket).unwrap();
        assert!((market.lo - 1.5).abs() <= 1.0 / (n - 1) as f64);
    }
}

#[test]
fn scope_is_the_negation_of_all_constraints_binding() {
    for case in common::battery() {
        assert_eq!(solver::scope_test(&case.env), !solver::all_ir_bind_check(&case.env), "{}", case.label);
    }
}

#[test]
fn negative_allocation_crosses_the_market_once_below_the_ceiling() {
    let mut checked = 0;
    for case in common::battery() {
        let env = &case.env;
        if env.correlation() != Correlation::Negative || env.weight_exceeds_alpha() || !solver::scope_test(env) {
            continue;
        }
        let (m, d) = solver::solve(env).unwrap();
        let top = env.node_at_or_below(d.theta_h_star.unwrap());
        let diff: Vec<f64> = (0..=top).map(|i| m.q[i] - env.q_lf(m.theta[i])).collect();
        let tol = 1e-9;
        let first_below = diff.iter().position(|&x| x < -tol).unwrap_or(diff.len());
        assert!(diff[first_below..].iter().all(|&x| x <= tol), "{}", case.label);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn full_control_examples() {
    let flat = common::boundary(Correlation::Negative);
    let (m, _) = solver::solve_full_control(&flat).unwrap();
    for (i, &t) in m.theta.iter().enumerate() {
        assert!((m.q[i] - flat.q_lf(t)).abs() <= 1e-9);
    }

    let env = common::e2();
    let (m, _) = solver::solve_full_control(&env).unwrap();
    let n = m.len();
    for i in 0..n - 1 {
        assert!(m.q[i] < env.q_lf(m.theta[i]), "node {i}");
    }

    let env = common::e1();
    let (m, _) = solver::solve_full_control(&env).unwrap();
    // Pooled across the whole support here: J averages above J(θ̄) once the atom is added.
    let flat_end = m.q.iter().position(|&q| (q - m.q[0]).abs() > 1e-12).unwrap_or(m.len());
    assert!(flat_end > 1);
    assert!(m.t[..flat_end].iter().all(|t| t.abs() <= 1e-9));

    let env = common::e4().with_alpha(1.4).unwrap();
    let (m, _) = solver::solve_full_control(&env).unwrap();
    let flat_end = m.q.iter().position(|&q| (q - m.q[0]).abs() > 1e-12).unwrap();
    assert!(flat_end > 1 && flat_end < m.len() - 1);
    assert!(m.t[..flat_end].iter().all(|t| t.abs() <= 1e-9));
}

#[test]
fn full_control_weakly_dominates_the_constrained_optimum() {
    let mut envs: Vec<_> = common::battery().into_iter().map(|c| c.env).collect();
    envs.extend([common::e1(), common::e2(), common::e4()]);
    for env in envs {
        let (m, _) = solver::solve(&env).unwrap();
        let (fc, _) = solver::solve_full_control(&env).unwrap();
        let w = mech::welfare(&m, &env).total;
        let wf = mech::welfare(&fc, &env).total;
        assert!(wf >= w - 1e-9 * (1.0 + w.abs()), "{wf} < {w}");
    }
}
