//! Executable checks on solved mechanisms: public option and topping-up
//! predictions, comparative statics in `α`, the small cash-subsidy probe,
//! multiplier verification and the full-control comparison.

use std::io::Write;

use thiserror::Error;

use crate::env::{Correlation, EnvError, Environment};
use crate::ironing;
use crate::mech::{self, fmt_sig, FeasibilityReport, Interval, Mechanism, RegionKind};
use crate::quad;
use crate::scalar::{lit, to_f64, Scalar};
use crate::solver::{self, Program, SolverDiagnostics, SolverError};

/// Slack used when comparing sweep values for monotonicity.
pub const MONOTONE_TOL: f64 = 1e-9;
/// Utility gap below which a type counts as indifferent to the private market.
pub const OUTCOME_TOL: f64 = 1e-9;
/// Gauss-Legendre panels per piece of the subsidy probe.
const PROBE_PANELS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("kappa = {kappa} outside ({lo}, {hi}]")]
    KappaOutOfRange { kappa: f64, lo: f64, hi: f64 },
    #[error("delta must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("probe requires negative correlation")]
    WrongCorrelation,
    #[error("sweep needs at least two strictly increasing positive values")]
    BadSweep,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// `true` when the optimum hands out a free baseline quality, i.e. the
/// no-lump-sum constraint carries a positive multiplier.
pub fn public_option_test<T: Scalar>(env: &Environment<T>) -> bool {
    if !solver::scope_test(env) {
        return false;
    }
    if env.weight_exceeds_alpha() {
        return true;
    }
    match env.correlation() {
        Correlation::Positive => false,
        Correlation::Negative => match solver::q_mu_negative(env, T::zero()) {
            Ok(c) => {
                let slack = lit::<T>(1e-12) * (T::one() + env.u_lf(c.theta_h).abs());
                c.residual < -slack
            }
            Err(_) => false,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToppingUpReport<T> {
    /// Textbook prediction: negative correlation with `max ω > α`.
    pub predicted: bool,
    /// `max (q^LF − q*)₊`.
    pub violation: T,
    /// Type where the violation peaks, if any.
    pub at: Option<T>,
    /// Whether banning top-ups matters for the solved mechanism.
    pub benefits: bool,
    pub feasibility: FeasibilityReport<T>,
}

/// Measures how far the optimum pushes allocations below the private market.
pub fn topping_up_test<T: Scalar>(env: &Environment<T>) -> Result<ToppingUpReport<T>, SolverError> {
    let (m, _) = solver::solve(env)?;
    Ok(topping_up_report(env, &m))
}

pub fn topping_up_report<T: Scalar>(env: &Environment<T>, m: &Mechanism<T>) -> ToppingUpReport<T> {
    let mut violation = T::zero();
    let mut at = None;
    for (&th, &q) in m.theta.iter().zip(&m.q) {
        let gap = env.q_lf(th) - q;
        if gap > violation {
            violation = gap;
            at = Some(th);
        }
    }
    let predicted = env.correlation() == Correlation::Negative && solver::scope_test(env);
    let tol = lit::<T>(1e-9) * (T::one() + env.q_lf(env.theta_max()));
    ToppingUpReport {
        predicted,
        violation,
        at,
        benefits: violation > tol,
        feasibility: mech::verify_feasibility(m, env, T::zero()),
    }
}

/// Verdicts on how the boundary type and `μ*` move with `α`. Both the
/// directions that hold for the model and the opposite ones are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepVerdicts {
    pub mu_nonincreasing: bool,
    pub theta_h_nonincreasing: bool,
    pub theta_h_nondecreasing: bool,
    pub theta_l_nondecreasing: bool,
    pub theta_l_nonincreasing: bool,
    pub gain_nonincreasing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T> {
    pub alpha: Vec<T>,
    pub mu_star: Vec<T>,
    pub theta_h_star: Vec<Option<T>>,
    pub theta_l_star: Vec<Option<T>>,
    pub welfare_gain: Vec<T>,
    /// Interior boundaries between consecutive regions.
    pub region_boundaries: Vec<Vec<T>>,
    pub region_kinds: Vec<Vec<RegionKind>>,
    pub verdicts: SweepVerdicts,
}

fn monotone<T: Scalar>(xs: &[T], up: bool, tol: T) -> bool {
    xs.windows(2).all(|w| if up { w[1] >= w[0] - tol } else { w[1] <= w[0] + tol })
}

fn monotone_opt<T: Scalar>(xs: &[Option<T>], up: bool, tol: T) -> bool {
    let v: Vec<T> = xs.iter().flatten().copied().collect();
    v.len() == xs.len() && monotone(&v, up, tol)
}

/// `n` evenly spaced values from `from` to `to` inclusive.
pub fn linspace<T: Scalar>(from: T, to: T, n: usize) -> Vec<T> {
    if n < 2 {
        return vec![from; n];
    }
    let step = (to - from) / lit((n - 1) as f64);
    (0..n)
        .map(|k| if k + 1 == n { to } else { from + step * lit(k as f64) })
        .collect()
}

/// Re-solves `env` for each profit weight in `alphas`.
pub fn alpha_sweep<T: Scalar>(env: &Environment<T>, alphas: &[T]) -> Result<SweepResult<T>, AnalysisError> {
    if alphas.len() < 2 || alphas.windows(2).any(|w| w[1] <= w[0]) || alphas[0] <= T::zero() {
        return Err(AnalysisError::BadSweep);
    }
    let mut out = SweepResult {
        alpha: alphas.to_vec(),
        mu_star: Vec::with_capacity(alphas.len()),
        theta_h_star: Vec::with_capacity(alphas.len()),
        theta_l_star: Vec::with_capacity(alphas.len()),
        welfare_gain: Vec::with_capacity(alphas.len()),
        region_boundaries: Vec::with_capacity(alphas.len()),
        region_kinds: Vec::with_capacity(alphas.len()),
        verdicts: SweepVerdicts::default(),
    };
    for &a in alphas {
        let e = env.with_alpha(a)?;
        let (_, d) = solver::solve(&e)?;
        out.mu_star.push(d.mu_star);
        out.theta_h_star.push(d.theta_h_star);
        out.theta_l_star.push(d.theta_l_star);
        out.welfare_gain.push(d.welfare_gain);
        out.region_boundaries
            .push(d.regions.regions.iter().skip(1).map(|r| r.lo).collect());
        out.region_kinds.push(d.regions.kinds());
    }
    let tol = lit::<T>(MONOTONE_TOL);
    let gain_tol = tol * (T::one() + out.welfare_gain.iter().fold(T::zero(), |m, g| m.max(g.abs())));
    out.verdicts = SweepVerdicts {
        mu_nonincreasing: monotone(&out.mu_star, false, tol),
        theta_h_nonincreasing: monotone_opt(&out.theta_h_star, false, tol),
        theta_h_nondecreasing: monotone_opt(&out.theta_h_star, true, tol),
        theta_l_nondecreasing: monotone_opt(&out.theta_l_star, true, tol),
        theta_l_nonincreasing: monotone_opt(&out.theta_l_star, false, tol),
        gain_nonincreasing: monotone(&out.welfare_gain, false, gain_tol),
    };
    Ok(out)
}

pub const SWEEP_COLUMNS: [&str; 6] = [
    "alpha",
    "mu_star",
    "theta_H_star",
    "theta_L_star",
    "welfare_gain",
    "region_boundaries",
];

/// Writes one row per sweep point; boundaries are `;`-separated.
pub fn write_sweep_csv<T: Scalar, W: Write>(s: &SweepResult<T>, out: W) -> Result<(), csv::Error> {
    let opt = |x: Option<T>| x.map(|v| fmt_sig(to_f64(v))).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for i in 0..s.alpha.len() {
        let bounds: Vec<String> = s.region_boundaries[i].iter().map(|&b| fmt_sig(to_f64(b))).collect();
        w.write_record([
            fmt_sig(to_f64(s.alpha[i])),
            fmt_sig(to_f64(s.mu_star[i])),
            opt(s.theta_h_star[i]),
            opt(s.theta_l_star[i]),
            fmt_sig(to_f64(s.welfare_gain[i])),
            bounds.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Welfare change from raising utility by `delta` for types below `kappa`
/// and tilting it back to the private market linearly above.
///
/// Below `κ` the allocation is unchanged and the payment falls by `δ`; on
/// `[κ, θ_m]` everyone receives `q^LF(κ)`, where `θ_m` is where the tilted
/// line meets `U^LF`; above `θ_m` the market is untouched.
pub fn subsidy_deviation_gain<T: Scalar>(env: &Environment<T>, kappa: T, delta: T) -> Result<T, AnalysisError> {
    if env.correlation() != Correlation::Negative {
        return Err(AnalysisError::WrongCorrelation);
    }
    let (a, b) = (env.theta_min(), env.theta_max());
    if !(kappa > a && kappa <= b) {
        return Err(AnalysisError::KappaOutOfRange { kappa: to_f64(kappa), lo: to_f64(a), hi: to_f64(b) });
    }
    if !(delta.is_finite() && delta > T::zero()) {
        return Err(AnalysisError::InvalidDelta(to_f64(delta)));
    }
    let alpha = env.alpha();
    let cost = env.cost();
    let q_k = env.q_lf(kappa);
    let nu_k = env.util().v(q_k);
    let line = |t: T| env.u_lf(kappa) + delta + nu_k * (t - kappa);
    let gap = |t: T| env.u_lf(t) - line(t);
    let theta_m = if gap(b) >= T::zero() {
        quad::bisect_first(kappa, b, lit::<T>(1e-14) * (b - a), |t| gap(t) >= T::zero())
    } else {
        b
    };

    let below = quad::gauss_legendre_composite(a, kappa, PROBE_PANELS, |t| (env.weight(t) - alpha) * delta * env.pdf(t));
    let tilted = quad::gauss_legendre_composite(kappa, theta_m, PROBE_PANELS, |t| {
        let du = line(t) - env.u_lf(t);
        let q_lf = env.q_lf(t);
        let ds = t * (nu_k - env.util().v(q_lf)) - cost * (q_k - q_lf);
        ((env.weight(t) - alpha) * du + alpha * ds) * env.pdf(t)
    });
    Ok(below + tilted)
}

fn ironed_transform<T: Scalar>(env: &Environment<T>, diag: &SolverDiagnostics<T>) -> Vec<T> {
    let n = env.len();
    let alpha = env.alpha();
    let lam = &diag.multiplier.lambda;
    let lam_b = lam[n - 1];
    let base: Vec<T> = (0..n)
        .map(|i| {
            let left = if i + 1 == n { lam_b - diag.multiplier.top_jump } else { lam[i] };
            env.nodes()[i] + (-env.phi_top()[i] + lam_b - left) / (alpha * env.density()[i])
        })
        .collect();
    let atom = diag.multiplier.mu * env.theta_min() / alpha;

    // The program and the untouched market are ironed separately.
    let seam = match diag.program {
        Program::Negative => diag.theta_h_star.map(|th| env.node_at_or_below(th) + 1).unwrap_or(n),
        Program::Positive => match diag.theta_l_star {
            Some(tl) if tl > env.theta_min() => env.nodes().partition_point(|&t| t < tl).min(n - 1),
            _ => 0,
        },
        Program::FullControl => n,
    };
    let mut out = Vec::with_capacity(n);
    for (range, with_atom) in [(0..seam, true), (seam..n, seam == 0)] {
        if range.is_empty() {
            continue;
        }
        let z = &env.quantiles()[range.clone()];
        let th = &env.nodes()[range.clone()];
        let atom = if with_atom { atom } else { T::zero() };
        let t = ironing::ScreeningTransform::new(base[range].to_vec(), atom);
        out.extend(ironing::iron_on(&t, z, th).ironed);
    }
    out
}

/// Largest violation among the stationarity condition for `ν`, slackness of
/// the no-lump-sum constraint and slackness of the participation constraints.
pub fn kkt_verify<T: Scalar>(m: &Mechanism<T>, diag: &SolverDiagnostics<T>, env: &Environment<T>) -> T {
    let n = env.len();
    let k = ironed_transform(env, diag);
    let util = env.util();

    // Stationarity in allocation space; the clamp in `quality_for_index`
    // handles the bounds on `q`.
    let stationarity = (0..n)
        .map(|i| (m.q[i] - env.quality_for_index(k[i])).abs())
        .fold(T::zero(), T::max);

    let nu0 = util.v(m.q[0]);
    let ls = diag.multiplier.mu.abs() * (env.theta_min() * nu0 - m.u_floor).abs();

    let lam = &diag.multiplier.lambda;
    let mut ir = T::zero();
    let mut dual = T::zero();
    for i in 1..n {
        let d = lam[i] - lam[i - 1];
        let slack = (m.u[i] - env.u_lf(env.nodes()[i])).abs();
        ir = ir + slack * d.abs();
        dual = dual.max(-d);
    }
    let top_slack = (m.u[n - 1] - env.u_lf(env.theta_max())).abs();
    ir = ir + diag.multiplier.top_jump.abs() * top_slack;
    dual = dual.max(-diag.multiplier.top_jump);

    stationarity.max(ls).max(ir).max(dual)
}

/// Which comparison the full-control benchmark falls under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterfactualCase {
    /// Negative correlation, `E[ω] ≤ α`: the benchmark hurts everyone.
    NegativeLow,
    /// Negative correlation, `E[ω] > α`: low types gain, high types may lose.
    NegativeHigh,
    /// Positive correlation, `E[ω] ≤ α`: low types lose, high types may gain.
    PositiveLow,
    /// Positive correlation, `E[ω] > α`: everyone gains.
    PositiveHigh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualReport<T> {
    pub case: CounterfactualCase,
    /// Type where the benchmark utility crosses `U^LF`, when it does.
    pub theta_hat: Option<T>,
    pub counterfactual_beneficiaries: Vec<Interval<T>>,
    pub counterfactual_worse_off: Vec<Interval<T>>,
    pub optimal_beneficiaries: Vec<Interval<T>>,
    pub optimal_worse_off: Vec<Interval<T>>,
    pub theta_h_star: Option<T>,
    pub theta_l_star: Option<T>,
    /// `θ_L* < θ̂` in the positive, low-weight case. When the benchmark hurts
    /// every type there is no crossing and `θ̄` stands in for `θ̂`.
    pub theta_l_below_hat: Option<bool>,
    pub counterfactual_gain: T,
    pub optimal_gain: T,
}

fn crossing<T: Scalar>(env: &Environment<T>, m: &Mechanism<T>, sign: T) -> Option<T> {
    let d: Vec<T> = m
        .theta
        .iter()
        .zip(&m.u)
        .map(|(&t, &u)| sign * (u - env.u_lf(t)))
        .collect();
    // Smallest type with `sign · (U − U^LF) ≤ 0`.
    let i = d.iter().position(|&x| x <= T::zero())?;
    if i == 0 {
        return Some(m.theta[0]);
    }
    let (t0, t1) = (m.theta[i - 1], m.theta[i]);
    let f = |t: T| quad::interp(&m.theta, &d, t);
    Some(quad::bisect_first(t0, t1, lit::<T>(1e-15) * (T::one() + t1.abs()), |t| f(t) <= T::zero()))
}

/// Compares the constrained optimum with the optimum of a planner who also
/// runs the market.
pub fn counterfactual_compare<T: Scalar>(env: &Environment<T>) -> Result<CounterfactualReport<T>, SolverError> {
    let (opt, od) = solver::solve(env)?;
    let (cf, cd) = solver::solve_full_control(env)?;
    let high = env.weight_exceeds_alpha();
    let case = match (env.correlation(), high) {
        (Correlation::Negative, false) => CounterfactualCase::NegativeLow,
        (Correlation::Negative, true) => CounterfactualCase::NegativeHigh,
        (Correlation::Positive, false) => CounterfactualCase::PositiveLow,
        (Correlation::Positive, true) => CounterfactualCase::PositiveHigh,
    };
    let theta_hat = match case {
        CounterfactualCase::NegativeHigh => crossing(env, &cf, T::one()),
        CounterfactualCase::PositiveLow => crossing(env, &cf, -T::one()),
        _ => None,
    };
    let theta_l_below_hat = match (case, theta_hat, od.theta_l_star) {
        (CounterfactualCase::PositiveLow, h, Some(l)) => Some(l < h.unwrap_or(env.theta_max())),
        _ => None,
    };
    let tol = lit::<T>(OUTCOME_TOL);
    Ok(CounterfactualReport {
        case,
        theta_hat,
        counterfactual_beneficiaries: mech::beneficiaries(&cf, env, tol),
        counterfactual_worse_off: mech::worse_off(&cf, env, tol),
        optimal_beneficiaries: mech::beneficiaries(&opt, env, tol),
        optimal_worse_off: mech::worse_off(&opt, env, tol),
        theta_h_star: od.theta_h_star,
        theta_l_star: od.theta_l_star,
        theta_l_below_hat,
        counterfactual_gain: cd.welfare_gain,
        optimal_gain: od.welfare_gain,
    })
}
