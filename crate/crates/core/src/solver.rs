//! Closed-form optimal mechanisms.
//!
//! Under negative correlation the planner irons
//! `H_μ(θ) = θ + (μ + Φ(θ̲, θ)) / (αf(θ))` below `θ_H(μ)` and leaves the rest of
//! the market alone; under positive correlation it irons
//! `J_μ(θ) = θ − Φ(θ, θ̄) / (αf(θ))` above `θ_L*`. Here
//! `Φ(a, b) = ∫_a^b [α − ω] dF` and `μ` prices the no-lump-sum constraint,
//! entering as a point mass `μθ̲/α` at the bottom type.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Correlation, Environment, WEIGHT_TIE_TOL};
use crate::ironing::{self, IroningResult, ScreeningTransform};
use crate::mech::{self, MechError, Mechanism, RegionSegmentation, CLASSIFY_TOL};
use crate::quad;
use crate::scalar::{lit, Scalar};

/// Absolute bisection tolerance on `μ`, scaled by `max(1, μ_max)`.
pub const MU_TOL: f64 = 1e-13;
/// Bisection tolerance on types, scaled by the support width.
pub const THETA_TOL: f64 = 1e-13;
/// Points in the fallback scan for `μ*`.
pub const MU_SCAN_POINTS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("solver expects {expected:?} correlation")]
    WrongCorrelation { expected: Correlation },
    #[error("mu = {mu} outside [0, mu_max = {mu_max}]")]
    MuOutOfRange { mu: f64, mu_max: f64 },
    #[error("no feasible multiplier in [{lo}, {hi}]")]
    NoFeasibleMu { lo: f64, hi: f64 },
    #[error("allocation decreases where the program meets the private market (theta = {theta})")]
    Stitching { theta: f64 },
    #[error(transparent)]
    Mech(#[from] MechError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Program {
    Negative,
    Positive,
    FullControl,
}

/// Multiplier `Λ` of the participation constraints on the grid.
///
/// `top_jump` is an extra mass of `dΛ` at `θ̄` beyond the last grid step,
/// used when the top type's constraint carries weight of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierProfile<T> {
    pub lambda: Vec<T>,
    pub mu: T,
    pub top_jump: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics<T> {
    pub program: Program,
    pub intervene: bool,
    pub mu_star: T,
    pub mu_max: Option<T>,
    pub theta_h_star: Option<T>,
    pub theta_l_star: Option<T>,
    pub u_floor: T,
    pub multiplier: MultiplierProfile<T>,
    pub regions: RegionSegmentation<T>,
    pub welfare_lf: T,
    pub welfare_opt: T,
    pub welfare_gain: T,
}

/// `max ω > α` on the grid.
pub fn scope_test<T: Scalar>(env: &Environment<T>) -> bool {
    let alpha = env.alpha();
    env.omega().iter().any(|&w| w > alpha)
}

/// Every participation constraint binds at the optimum.
pub fn all_ir_bind_check<T: Scalar>(env: &Environment<T>) -> bool {
    let eps = lit::<T>(WEIGHT_TIE_TOL);
    if env.excess_weight() > eps {
        return false;
    }
    let phi = match env.correlation() {
        Correlation::Negative => env.phi_bottom(),
        Correlation::Positive => env.phi_top(),
    };
    phi.iter().all(|&p| p >= -eps)
}

fn theta_tol<T: Scalar>(env: &Environment<T>) -> T {
    lit::<T>(THETA_TOL) * (env.theta_max() - env.theta_min())
}

/// Type where `ω` crosses `α`: the minimizer of `Φ(θ̲, ·)` under negative
/// correlation and of `Φ(·, θ̄)` under positive correlation.
pub fn weight_crossing<T: Scalar>(env: &Environment<T>) -> T {
    let (a, b, alpha) = (env.theta_min(), env.theta_max(), env.alpha());
    let tol = theta_tol(env);
    match env.correlation() {
        Correlation::Negative => {
            if env.weight(a) < alpha {
                a
            } else {
                quad::bisect_last(a, b, tol, |t| env.weight(t) >= alpha)
            }
        }
        Correlation::Positive => {
            if env.weight(b) < alpha {
                b
            } else {
                quad::bisect_first(a, b, tol, |t| env.weight(t) >= alpha)
            }
        }
    }
}

/// `μ_max = −min_θ Φ(θ̲, θ)`.
pub fn mu_max<T: Scalar>(env: &Environment<T>) -> T {
    let lowest = env.phi_from_bottom(weight_crossing(env));
    let grid_min = env.phi_bottom().iter().fold(T::zero(), |m, &p| m.min(p));
    (-lowest.min(grid_min)).max(T::zero())
}

fn check_negative<T: Scalar>(env: &Environment<T>) -> Result<(), SolverError> {
    if env.correlation() != Correlation::Negative {
        return Err(SolverError::WrongCorrelation { expected: Correlation::Negative });
    }
    Ok(())
}

fn check_positive<T: Scalar>(env: &Environment<T>) -> Result<(), SolverError> {
    if env.correlation() != Correlation::Positive {
        return Err(SolverError::WrongCorrelation { expected: Correlation::Positive });
    }
    Ok(())
}

/// Upper end of the subsidized range for multiplier `μ`.
pub fn theta_h<T: Scalar>(env: &Environment<T>, mu: T) -> Result<T, SolverError> {
    check_negative(env)?;
    let mmax = mu_max(env);
    let slack = lit::<T>(1e-12) * (T::one() + mmax);
    if mu < -slack || mu > mmax + slack {
        return Err(SolverError::MuOutOfRange {
            mu: crate::scalar::to_f64(mu),
            mu_max: crate::scalar::to_f64(mmax),
        });
    }
    let b = env.theta_max();
    if env.weight_exceeds_alpha() {
        return Ok(b);
    }
    let eps = lit::<T>(WEIGHT_TIE_TOL);
    let start = weight_crossing(env);
    Ok(quad::bisect_last(start, b, theta_tol(env), |t| env.phi_from_bottom(t) + mu <= eps))
}

/// Ironed allocation below `θ_H(μ)` for a candidate multiplier.
#[derive(Debug, Clone)]
pub struct NegativeCandidate<T> {
    pub mu: T,
    pub theta_h: T,
    /// Last grid node not above `θ_H(μ)`.
    pub top: usize,
    pub q: Vec<T>,
    pub nu: Vec<T>,
    pub ironing: IroningResult<T>,
    /// `∫_{θ̲}^{θ_H} ν_μ + θ̲ν_μ(θ̲) − U^LF(θ_H)`.
    pub residual: T,
}

/// The transform `H_μ` on nodes `0..=top`.
pub fn transform_negative<T: Scalar>(env: &Environment<T>, mu: T, top: usize) -> ScreeningTransform<T> {
    let alpha = env.alpha();
    let base = (0..=top)
        .map(|i| env.nodes()[i] + (mu + env.phi_bottom()[i]) / (alpha * env.density()[i]))
        .collect();
    ScreeningTransform::new(base, mu * env.theta_min() / alpha)
}

/// `q_μ = D(c, H̄_μ)` on `[θ̲, θ_H(μ)]`.
pub fn q_mu_negative<T: Scalar>(env: &Environment<T>, mu: T) -> Result<NegativeCandidate<T>, SolverError> {
    let th = theta_h(env, mu)?;
    let top = env.node_at_or_below(th);
    let tr = transform_negative(env, mu, top);
    let ironing = ironing::iron_range(&tr, env, 0..=top);
    let q: Vec<T> = ironing.ironed.iter().map(|&h| env.quality_for_index(h)).collect();
    let nu: Vec<T> = q.iter().map(|&x| env.util().v(x)).collect();

    let nodes = &env.nodes()[..=top];
    let mut integral = quad::cumulative_quadratic(nodes, &nu)[top];
    let gap = th - nodes[top];
    if gap > T::zero() {
        integral = integral + gap * (nu[top] + env.nu_lf(th)) * lit(0.5);
    }
    let residual = integral + env.theta_min() * nu[0] - env.u_lf(th);
    Ok(NegativeCandidate { mu, theta_h: th, top, q, nu, ironing, residual })
}

/// Participation residual at `μ`; feasible when nonnegative.
pub fn participation_residual<T: Scalar>(env: &Environment<T>, mu: T) -> Result<T, SolverError> {
    Ok(q_mu_negative(env, mu)?.residual)
}

/// Smallest feasible `μ` in `[(E[ω] − α)₊, μ_max]`.
pub fn mu_star_negative<T: Scalar>(env: &Environment<T>) -> Result<T, SolverError> {
    check_negative(env)?;
    let lo0 = if env.weight_exceeds_alpha() { env.excess_weight() } else { T::zero() };
    let hi0 = mu_max(env).max(lo0);
    let feasible = |mu: T| -> Result<bool, SolverError> {
        let c = q_mu_negative(env, mu)?;
        let slack = lit::<T>(1e-12) * (T::one() + env.u_lf(c.theta_h).abs());
        Ok(c.residual >= -slack)
    };
    if feasible(lo0)? {
        return Ok(lo0);
    }
    let (mut lo, mut hi) = (lo0, hi0);
    if !feasible(hi)? {
        let step = (hi0 - lo0) / lit((MU_SCAN_POINTS - 1) as f64);
        let mut bracket = None;
        for k in 1..MU_SCAN_POINTS {
            let mu = if k + 1 == MU_SCAN_POINTS { hi0 } else { lo0 + step * lit(k as f64) };
            if feasible(mu)? {
                bracket = Some((mu - step, mu));
                break;
            }
        }
        match bracket {
            Some((l, h)) => {
                lo = l;
                hi = h;
            }
            None => {
                return Err(SolverError::NoFeasibleMu {
                    lo: crate::scalar::to_f64(lo0),
                    hi: crate::scalar::to_f64(hi0),
                })
            }
        }
    }
    let tol = lit::<T>(MU_TOL) * hi0.max(T::one());
    while hi - lo > tol {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Lowest type above which `Φ(θ, θ̄) ≤ 0`.
pub fn theta_l_star<T: Scalar>(env: &Environment<T>) -> Result<T, SolverError> {
    check_positive(env)?;
    let a = env.theta_min();
    if env.excess_weight() >= -lit::<T>(WEIGHT_TIE_TOL) {
        return Ok(a);
    }
    let eps = lit::<T>(WEIGHT_TIE_TOL);
    let end = weight_crossing(env);
    Ok(quad::bisect_first(a, end, theta_tol(env), |t| env.phi_to_top(t) <= eps))
}

/// The transform `J_μ` on nodes `from..n` (atom only when `from == 0`).
pub fn transform_positive<T: Scalar>(env: &Environment<T>, mu: T, from: usize) -> ScreeningTransform<T> {
    let alpha = env.alpha();
    let base = (from..env.len())
        .map(|i| env.nodes()[i] - env.phi_top()[i] / (alpha * env.density()[i]))
        .collect();
    let atom = if from == 0 { mu * env.theta_min() / alpha } else { T::zero() };
    ScreeningTransform::new(base, atom)
}

fn welfare_pair<T: Scalar>(env: &Environment<T>, m: &Mechanism<T>) -> (T, T) {
    let lf = mech::welfare(&env.laissez_faire(), env).total;
    let opt = mech::welfare(m, env).total;
    (lf, opt)
}

fn enforce_monotone<T: Scalar>(env: &Environment<T>, q: &mut [T], seam: usize) -> Result<(), SolverError> {
    if seam > 0 && seam < q.len() {
        let (l, r) = (q[seam - 1], q[seam]);
        if l > r + lit::<T>(1e-9) * (T::one() + r.abs()) {
            return Err(SolverError::Stitching { theta: crate::scalar::to_f64(env.nodes()[seam]) });
        }
    }
    for i in 1..q.len() {
        if q[i] < q[i - 1] {
            q[i] = q[i - 1];
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    env: &Environment<T>,
    program: Program,
    m: Mechanism<T>,
    mu_star: T,
    mu_max: Option<T>,
    theta_h_star: Option<T>,
    theta_l_star: Option<T>,
    multiplier: MultiplierProfile<T>,
    intervene: bool,
) -> (Mechanism<T>, SolverDiagnostics<T>) {
    let (welfare_lf, welfare_opt) = if intervene {
        welfare_pair(env, &m)
    } else {
        let w = mech::welfare(&m, env).total;
        (w, w)
    };
    let regions = mech::classify_regions(&m, env, lit(CLASSIFY_TOL));
    let u_floor = m.u_floor;
    let diag = SolverDiagnostics {
        program,
        intervene,
        mu_star,
        mu_max,
        theta_h_star,
        theta_l_star,
        u_floor,
        multiplier,
        regions,
        welfare_lf,
        welfare_opt,
        welfare_gain: welfare_opt - welfare_lf,
    };
    (m, diag)
}

/// Optimal mechanism under negative correlation.
pub fn solve_negative<T: Scalar>(env: &Environment<T>) -> Result<(Mechanism<T>, SolverDiagnostics<T>), SolverError> {
    check_negative(env)?;
    let n = env.len();
    let mmax = mu_max(env);

    if !scope_test(env) {
        let th = theta_h(env, T::zero())?;
        let top = env.node_at_or_below(th);
        let lambda = negative_lambda(env, T::zero(), top);
        let m = env.laissez_faire();
        let multiplier = MultiplierProfile { lambda, mu: T::zero(), top_jump: T::zero() };
        return Ok(finish(env, Program::Negative, m, T::zero(), Some(mmax), Some(th), None, multiplier, false));
    }

    let mu = mu_star_negative(env)?;
    let cand = q_mu_negative(env, mu)?;
    let top = cand.top;
    let mut q: Vec<T> = (0..n)
        .map(|i| if i <= top { cand.q[i] } else { env.q_lf(env.nodes()[i]) })
        .collect();
    enforce_monotone(env, &mut q, top + 1)?;

    let a = env.theta_min();
    let u_floor = if mu > T::zero() || env.weight_ties_alpha() {
        a * cand.nu[0]
    } else {
        a * cand.nu[0] - cand.residual
    };
    let m = mech::transfers_from_allocation(env, &q, u_floor)?;

    let mut lambda = negative_lambda(env, mu, top);
    let mut top_jump = T::zero();
    if top == n - 1 {
        let end = -env.excess_weight();
        top_jump = (end - lambda[n - 1]).max(T::zero());
        lambda[n - 1] = end;
    }
    let multiplier = MultiplierProfile { lambda, mu, top_jump };
    Ok(finish(env, Program::Negative, m, mu, Some(mmax), Some(cand.theta_h), None, multiplier, true))
}

fn negative_lambda<T: Scalar>(env: &Environment<T>, mu: T, top: usize) -> Vec<T> {
    (0..env.len())
        .map(|i| if i <= top { -mu } else { env.phi_bottom()[i] })
        .collect()
}

/// Optimal mechanism under positive correlation.
pub fn solve_positive<T: Scalar>(env: &Environment<T>) -> Result<(Mechanism<T>, SolverDiagnostics<T>), SolverError> {
    check_positive(env)?;
    let n = env.len();
    let tl = theta_l_star(env)?;

    if !scope_test(env) {
        let lambda = positive_lambda(env, tl);
        let m = env.laissez_faire();
        let multiplier = MultiplierProfile { lambda, mu: T::zero(), top_jump: T::zero() };
        return Ok(finish(env, Program::Positive, m, T::zero(), None, None, Some(tl), multiplier, false));
    }

    let mu = if env.weight_exceeds_alpha() { env.excess_weight() } else { T::zero() };
    let from = if tl <= env.theta_min() {
        0
    } else {
        env.nodes().partition_point(|&t| t < tl).min(n - 1)
    };
    let tr = transform_positive(env, mu, from);
    let iron = ironing::iron_range(&tr, env, from..=n - 1);
    let mut q: Vec<T> = (0..n)
        .map(|i| {
            if i < from {
                env.q_lf(env.nodes()[i])
            } else {
                env.quality_for_index(iron.ironed[i - from])
            }
        })
        .collect();
    enforce_monotone(env, &mut q, from)?;

    let a = env.theta_min();
    let u_floor = if env.excess_weight() < -lit::<T>(WEIGHT_TIE_TOL) {
        env.u_lf(a)
    } else {
        a * env.util().v(q[0])
    };
    let m = mech::transfers_from_allocation(env, &q, u_floor)?;
    let lambda = if env.weight_exceeds_alpha() {
        vec![T::zero(); n]
    } else {
        positive_lambda(env, tl)
    };
    let multiplier = MultiplierProfile { lambda, mu, top_jump: T::zero() };
    Ok(finish(env, Program::Positive, m, mu, None, None, Some(tl), multiplier, true))
}

fn positive_lambda<T: Scalar>(env: &Environment<T>, tl: T) -> Vec<T> {
    let end = -env.excess_weight();
    env.nodes()
        .iter()
        .zip(env.phi_bottom())
        .map(|(&t, &p)| if t < tl { p.min(end) } else { end })
        .collect()
}

/// Optimum when the planner also controls the market, so the only
/// participation constraint is `U ≥ 0`.
pub fn solve_full_control<T: Scalar>(env: &Environment<T>) -> Result<(Mechanism<T>, SolverDiagnostics<T>), SolverError> {
    let n = env.len();
    let mu = if env.weight_exceeds_alpha() { env.excess_weight() } else { T::zero() };
    let tr = transform_positive(env, mu, 0);
    let iron = ironing::iron(&tr, env);
    let mut q: Vec<T> = iron.ironed.iter().map(|&h| env.quality_for_index(h)).collect();
    enforce_monotone(env, &mut q, 0)?;
    let a = env.theta_min();
    let u_floor = if env.weight_exceeds_alpha() { a * env.util().v(q[0]) } else { T::zero() };
    let m = mech::transfers_from_allocation(env, &q, u_floor)?;
    let multiplier = MultiplierProfile { lambda: vec![T::zero(); n], mu, top_jump: T::zero() };
    let (m, mut diag) = finish(env, Program::FullControl, m, mu, None, None, None, multiplier, true);
    diag.intervene = diag.welfare_gain > T::zero();
    Ok((m, diag))
}

/// Dispatches on the declared correlation.
pub fn solve<T: Scalar>(env: &Environment<T>) -> Result<(Mechanism<T>, SolverDiagnostics<T>), SolverError> {
    match env.correlation() {
        Correlation::Negative => solve_negative(env),
        Correlation::Positive => solve_positive(env),
    }
}
