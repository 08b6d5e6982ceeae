//! Brute-force check of the closed form: the planner's problem on a finite
//! grid as a concave program, solved by a primal log-barrier method.
//!
//! Unknowns are the utilities `U₀ … U_{N−1}` at the nodes; subutility is
//! constant on each cell, `ν_k = (U_{k+1} − U_k) / d_k`. The objective is the
//! exact integral of `(ω − α)U + αθν − αcΨ(ν)` against `dF` for such profiles.
//! Constraints: participation at every node, `ν` nondecreasing, `ν` inside
//! `[v(0), v(A)]`, and `θ̲ν₀ ≥ U₀`. Every one of them involves at most three
//! adjacent unknowns, so Newton systems are pentadiagonal.

use thiserror::Error;

use crate::env::{EnvError, Environment};
use crate::mech::{self, Mechanism};
use crate::quad;
use crate::scalar::{lit, Scalar};

pub const DEFAULT_ORACLE_N: usize = 2000;
pub const MIN_ORACLE_N: usize = 16;
pub const DEFAULT_ORACLE_TOL: f64 = 1e-9;
pub const MAX_NEWTON_STEPS: usize = 5000;

const CENTERING_TOL: f64 = 1e-10;
const BARRIER_GROWTH: f64 = 10.0;
const STALL_DEC: f64 = 1.0;
const STALL_WINDOW: usize = 8;
const CENTERING_REL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum OracleError<T: Scalar> {
    #[error("oracle grid needs at least {MIN_ORACLE_N} nodes, got {0}")]
    GridTooSmall(usize),
    #[error("no strictly feasible starting point")]
    InfeasibleStart,
    #[error("oracle stopped after {} Newton steps, gap bound {}", .best.iterations, .best.kkt_residual)]
    MaxIterations { best: Box<OracleSolution<T>> },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// How the starting profile is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleStart {
    LaissezFaire,
    /// `ν ≡ v(A)/2` before the repair step.
    HalfCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<T> {
    pub theta: Vec<T>,
    /// Subutility on each cell.
    pub nu: Vec<T>,
    pub u: Vec<T>,
    pub u_floor: T,
    pub objective: T,
    /// Duality-gap bound `m / t` at exit.
    pub kkt_residual: T,
    pub iterations: usize,
    /// Objective at the end of each centering pass.
    pub trace: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> OracleSolution<T> {
    pub fn cell_midpoints(&self) -> Vec<T> {
        self.theta.windows(2).map(|w| (w[0] + w[1]) * lit(0.5)).collect()
    }
}

/// A linear constraint `Σ coef·U[idx] − rhs ≥ 0` on up to three adjacent unknowns.
#[derive(Debug, Clone, Copy)]
struct Con<T> {
    start: usize,
    coef: [T; 3],
    len: usize,
    rhs: T,
}

impl<T: Scalar> Con<T> {
    fn slack(&self, u: &[T]) -> T {
        let mut s = -self.rhs;
        for j in 0..self.len {
            s = s + self.coef[j] * u[self.start + j];
        }
        s
    }
}

/// Discretized planner's problem.
#[derive(Debug, Clone)]
pub struct DiscreteProgram<T> {
    pub theta: Vec<T>,
    /// Cell widths `d_k`.
    pub width: Vec<T>,
    /// `F`-mass of each cell.
    pub cell_mass: Vec<T>,
    /// `F`-mass attached to each node (trapezoid in quantiles).
    pub weights: Vec<T>,
    /// Gradient of the linear part of the objective in `U`.
    pub linear: Vec<T>,
    pub u_lf: Vec<T>,
    pub nu_lo: T,
    pub nu_hi: T,
    alpha: T,
    cost: T,
    cons: Vec<Con<T>>,
}

impl<T: Scalar> DiscreteProgram<T> {
    pub fn new(env: &Environment<T>) -> Self {
        let theta = env.nodes().to_vec();
        let n = theta.len();
        let alpha = env.alpha();
        let width: Vec<T> = theta.windows(2).map(|w| w[1] - w[0]).collect();
        let mut linear = vec![T::zero(); n];
        let mut cell_mass = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let (lo, hi) = (theta[k], theta[k + 1]);
            let mut excess = T::zero();
            let mut excess_lever = T::zero();
            let mut first_moment = T::zero();
            let mut pieces = vec![lo];
            pieces.extend(env.weight_fn().kinks().iter().copied().filter(|&x| x > lo && x < hi));
            pieces.push(hi);
            for p in pieces.windows(2) {
                excess = excess
                    + quad::gauss_legendre(p[0], p[1], |s| (env.weight(s) - alpha) * env.pdf(s));
                excess_lever = excess_lever
                    + quad::gauss_legendre(p[0], p[1], |s| (env.weight(s) - alpha) * env.pdf(s) * (s - lo));
                first_moment = first_moment + quad::gauss_legendre(p[0], p[1], |s| s * env.pdf(s));
            }
            cell_mass.push(env.quantiles()[k + 1] - env.quantiles()[k]);
            let per_nu = (excess_lever + alpha * first_moment) / width[k];
            linear[k] = linear[k] + excess - per_nu;
            linear[k + 1] = linear[k + 1] + per_nu;
        }
        let u_lf: Vec<T> = theta.iter().map(|&t| env.u_lf(t)).collect();
        let nu_lo = env.util().v(T::zero());
        let nu_hi = env.util().v(env.cap());

        let mut cons = Vec::with_capacity(2 * n + 2);
        for (i, &ul) in u_lf.iter().enumerate() {
            cons.push(Con { start: i, coef: [T::one(), T::zero(), T::zero()], len: 1, rhs: ul });
        }
        for k in 0..n.saturating_sub(2) {
            let (a, b) = (T::one() / width[k], T::one() / width[k + 1]);
            cons.push(Con { start: k, coef: [a, -a - b, b], len: 3, rhs: T::zero() });
        }
        let d0 = T::one() / width[0];
        let dl = T::one() / width[n - 2];
        cons.push(Con { start: 0, coef: [-d0, d0, T::zero()], len: 2, rhs: nu_lo });
        cons.push(Con { start: n - 2, coef: [dl, -dl, T::zero()], len: 2, rhs: -nu_hi });
        let th0 = theta[0];
        cons.push(Con { start: 0, coef: [-th0 * d0 - T::one(), th0 * d0, T::zero()], len: 2, rhs: T::zero() });

        let weights = quad::trapezoid_weights(env.quantiles());
        Self {
            theta,
            width,
            cell_mass,
            weights,
            linear,
            u_lf,
            nu_lo,
            nu_hi,
            alpha,
            cost: env.cost(),
            cons,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn constraint_count(&self) -> usize {
        self.cons.len()
    }

    pub fn cell_nu(&self, u: &[T]) -> Vec<T> {
        (0..self.len() - 1).map(|k| (u[k + 1] - u[k]) / self.width[k]).collect()
    }

    pub fn objective(&self, env: &Environment<T>, u: &[T]) -> T {
        let util = env.util();
        let lin: T = self.linear.iter().zip(u).map(|(&a, &b)| a * b).sum();
        let pen: T = self
            .cell_nu(u)
            .iter()
            .zip(&self.cell_mass)
            .map(|(&nu, &m)| m * util.v_inv(nu))
            .sum();
        lin - self.alpha * self.cost * pen
    }

    /// Largest constraint violation at `u` (zero when feasible).
    pub fn max_violation(&self, u: &[T]) -> T {
        self.cons.iter().fold(T::zero(), |acc, c| acc.max(-c.slack(u)))
    }

    fn min_slack(&self, u: &[T]) -> T {
        self.cons.iter().fold(T::infinity(), |acc, c| acc.min(c.slack(u)))
    }
}

/// Weighted isotonic regression by pool-adjacent-violators.
pub fn pava<T: Scalar>(y: &[T], w: &[T]) -> Vec<T> {
    let mut level: Vec<T> = Vec::with_capacity(y.len());
    let mut weight: Vec<T> = Vec::with_capacity(y.len());
    let mut count: Vec<usize> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        level.push(yi);
        weight.push(wi);
        count.push(1);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (l2, w2, c2) = (level.pop().unwrap(), weight.pop().unwrap(), count.pop().unwrap());
            let j = level.len() - 1;
            let wt = weight[j] + w2;
            level[j] = (level[j] * weight[j] + l2 * w2) / wt;
            weight[j] = wt;
            count[j] += c2;
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (l, c) in level.iter().zip(&count) {
        out.extend(std::iter::repeat_n(*l, *c));
    }
    out
}

fn initial_point<T: Scalar>(prog: &DiscreteProgram<T>, env: &Environment<T>, start: OracleStart) -> Result<Vec<T>, OracleError<T>> {
    let n = prog.len();
    let raw: Vec<T> = match start {
        OracleStart::LaissezFaire => (0..n - 1)
            .map(|k| (prog.u_lf[k + 1] - prog.u_lf[k]) / prog.width[k])
            .collect(),
        OracleStart::HalfCap => vec![env.util().v(env.cap()) * lit(0.5); n - 1],
    };
    let range = prog.nu_hi - prog.nu_lo;
    let delta = range * lit(1e-3);
    let mut nu = pava(&raw, &prog.width);
    let last = lit::<T>((n - 2).max(1) as f64);
    for (k, x) in nu.iter_mut().enumerate() {
        let clipped = x.max(prog.nu_lo + delta).min(prog.nu_hi - delta * lit(2.0));
        *x = clipped + delta * lit::<T>(k as f64) / last;
    }
    let mut integral = vec![T::zero(); n];
    for k in 0..n - 1 {
        integral[k + 1] = integral[k] + nu[k] * prog.width[k];
    }
    let lower = (0..n).fold(T::neg_infinity(), |m, i| m.max(prog.u_lf[i] - integral[i]));
    let upper = prog.theta[0] * nu[0];
    if lower >= upper {
        return Err(OracleError::InfeasibleStart);
    }
    let floor = (lower + upper) * lit(0.5);
    Ok(integral.into_iter().map(|i| floor + i).collect())
}

/// Solves `M x = g` for a symmetric positive-definite pentadiagonal `M`
/// stored as `band[i] = [M(i,i), M(i,i+1), M(i,i+2)]`.
fn solve_banded<T: Scalar>(band: &[[T; 3]], g: &[T]) -> Option<Vec<T>> {
    let n = band.len();
    // LDLᵀ with unit lower factor of bandwidth two.
    let mut d = vec![T::zero(); n];
    let mut l1 = vec![T::zero(); n];
    let mut l2 = vec![T::zero(); n];
    for i in 0..n {
        let mut di = band[i][0];
        if i >= 1 {
            di = di - l1[i - 1] * l1[i - 1] * d[i - 1];
        }
        if i >= 2 {
            di = di - l2[i - 2] * l2[i - 2] * d[i - 2];
        }
        if !di.is_finite() || di <= T::zero() {
            return None;
        }
        d[i] = di;
        if i + 1 < n {
            let mut m = band[i][1];
            if i >= 1 {
                m = m - l1[i - 1] * l2[i - 1] * d[i - 1];
            }
            l1[i] = m / di;
        }
        if i + 2 < n {
            l2[i] = band[i][2] / di;
        }
    }
    let mut y = g.to_vec();
    for i in 0..n {
        if i >= 1 {
            y[i] = y[i] - l1[i - 1] * y[i - 1];
        }
        if i >= 2 {
            y[i] = y[i] - l2[i - 2] * y[i - 2];
        }
    }
    for i in 0..n {
        y[i] = y[i] / d[i];
    }
    for i in (0..n).rev() {
        if i + 1 < n {
            y[i] = y[i] - l1[i] * y[i + 1];
        }
        if i + 2 < n {
            y[i] = y[i] - l2[i] * y[i + 2];
        }
    }
    Some(y)
}

struct Barrier<'a, T> {
    prog: &'a DiscreteProgram<T>,
    env: &'a Environment<T>,
}

impl<T: Scalar> Barrier<'_, T> {
    /// `t·f(u) + Σ ln s_j(u)`, or `None` outside the interior.
    fn value(&self, u: &[T], t: T) -> Option<T> {
        let mut acc = t * self.prog.objective(self.env, u);
        for c in &self.prog.cons {
            let s = c.slack(u);
            if s.is_nan() || s <= T::zero() {
                return None;
            }
            acc = acc + s.ln();
        }
        Some(acc)
    }

    /// Gradient and the band of minus the Hessian.
    fn derivatives(&self, u: &[T], t: T) -> (Vec<T>, Vec<[T; 3]>) {
        let prog = self.prog;
        let n = prog.len();
        let util = self.env.util();
        let scale = prog.alpha * prog.cost;
        let mut g: Vec<T> = prog.linear.iter().map(|&x| x * t).collect();
        let mut band = vec![[T::zero(); 3]; n];
        for k in 0..n - 1 {
            let d = prog.width[k];
            let nu = (u[k + 1] - u[k]) / d;
            let m = prog.cell_mass[k];
            let dnu = t * scale * m * util.psi(nu) / d;
            g[k] = g[k] + dnu;
            g[k + 1] = g[k + 1] - dnu;
            let h = t * scale * m * util.psi_prime(nu) / (d * d);
            band[k][0] = band[k][0] + h;
            band[k + 1][0] = band[k + 1][0] + h;
            band[k][1] = band[k][1] - h;
        }
        for c in &prog.cons {
            let s = c.slack(u);
            let inv = T::one() / s;
            let inv2 = inv * inv;
            for a in 0..c.len {
                g[c.start + a] = g[c.start + a] + c.coef[a] * inv;
                for b in a..c.len {
                    band[c.start + a][b - a] = band[c.start + a][b - a] + c.coef[a] * c.coef[b] * inv2;
                }
            }
        }
        (g, band)
    }
}

/// Maximizes the discretized objective on an `n`-node grid.
pub fn oracle_solve<T: Scalar>(env: &Environment<T>, n: usize, tol: T) -> Result<OracleSolution<T>, OracleError<T>> {
    oracle_solve_from(env, n, tol, OracleStart::LaissezFaire)
}

pub fn oracle_solve_from<T: Scalar>(
    env: &Environment<T>,
    n: usize,
    tol: T,
    start: OracleStart,
) -> Result<OracleSolution<T>, OracleError<T>> {
    if n < MIN_ORACLE_N {
        return Err(OracleError::GridTooSmall(n));
    }
    let grid_env = if env.len() == n { env.clone() } else { env.with_grid(n)? };
    let prog = DiscreteProgram::new(&grid_env);
    let barrier = Barrier { prog: &prog, env: &grid_env };
    let mut u = initial_point(&prog, &grid_env, start)?;
    let m_cons = lit::<T>(prog.constraint_count() as f64);

    let mut t = T::one();
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let centering_tol = lit::<T>(CENTERING_TOL);
    let pack = |u: &[T], t: T, iterations: usize, trace: &[T], converged: bool| {
        let nu = prog.cell_nu(u);
        OracleSolution {
            theta: prog.theta.clone(),
            nu,
            u: u.to_vec(),
            u_floor: u[0],
            objective: prog.objective(&grid_env, u),
            kkt_residual: m_cons / t,
            iterations,
            trace: trace.to_vec(),
            converged,
        }
    };

    loop {
        let scale = prog.objective(&grid_env, &u).abs().max(T::one());
        let mut best_dec = T::infinity();
        let mut since_best = 0usize;
        loop {
            let (g, band) = barrier.derivatives(&u, t);
            let Some(dir) = solve_banded(&band, &g) else { break };
            let dec: T = g.iter().zip(&dir).map(|(&a, &b)| a * b).sum();
            // Incomplete centering costs about dec / 2t in the objective.
            let centered = dec * lit(0.5) <= centering_tol || dec / t <= lit::<T>(CENTERING_REL) * tol * scale;
            if dec < best_dec * lit(0.5) {
                best_dec = dec;
                since_best = 0;
            } else {
                since_best += 1;
            }
            // Past the roundoff floor the decrement stops shrinking.
            let stalled = dec < lit(STALL_DEC) && since_best >= STALL_WINDOW;
            if centered || stalled {
                break;
            }
            let trial = |s: T| -> Vec<T> { u.iter().zip(&dir).map(|(&x, &d)| x + s * d).collect() };
            let mut s = T::one();
            let mut next = trial(s);
            while prog.min_slack(&next) <= T::zero() {
                s = s * lit(0.5);
                if s < lit(1e-30) {
                    break;
                }
                next = trial(s);
            }
            if dec > lit(0.1) {
                let base = barrier.value(&u, t).unwrap_or(T::neg_infinity());
                while barrier.value(&next, t).is_none_or(|v| v < base + lit::<T>(0.25) * s * dec) {
                    s = s * lit(0.5);
                    if s < lit(1e-30) {
                        break;
                    }
                    next = trial(s);
                }
            }
            if s < lit(1e-30) {
                break;
            }
            u = next;
            iterations += 1;
            if iterations >= MAX_NEWTON_STEPS {
                return Err(OracleError::MaxIterations {
                    best: Box::new(pack(&u, t, iterations, &trace, false)),
                });
            }
        }
        let f = prog.objective(&grid_env, &u);
        trace.push(f);
        if m_cons / t <= tol * f.abs().max(T::one()) {
            return Ok(pack(&u, t, iterations, &trace, true));
        }
        t = t * lit(BARRIER_GROWTH);
    }
}

/// Distance between the oracle and a closed-form mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGap<T> {
    /// Sup-norm gap in `ν` over oracle cell midpoints.
    pub nu_gap: T,
    /// `(oracle − closed) / |closed|`.
    pub objective_gap: T,
    pub oracle_objective: T,
    pub closed_objective: T,
    pub solution: OracleSolution<T>,
}

pub fn oracle_gap<T: Scalar>(env: &Environment<T>, closed_form: &Mechanism<T>, n: usize) -> Result<OracleGap<T>, OracleError<T>> {
    let sol = oracle_solve(env, n, lit(DEFAULT_ORACLE_TOL))?;
    Ok(compare(env, closed_form, sol))
}

/// Compares an oracle solution with a closed-form mechanism.
pub fn compare<T: Scalar>(env: &Environment<T>, closed_form: &Mechanism<T>, sol: OracleSolution<T>) -> OracleGap<T> {
    let nu_closed = closed_form.nu(env);
    let nu_gap = sol
        .cell_midpoints()
        .iter()
        .zip(&sol.nu)
        .fold(T::zero(), |acc, (&x, &nu)| acc.max((nu - quad::interp(&closed_form.theta, &nu_closed, x)).abs()));
    let closed = mech::welfare(closed_form, env).total;
    let objective_gap = (sol.objective - closed) / closed.abs().max(lit(1e-300));
    OracleGap {
        nu_gap,
        objective_gap,
        oracle_objective: sol.objective,
        closed_objective: closed,
        solution: sol,
    }
}
