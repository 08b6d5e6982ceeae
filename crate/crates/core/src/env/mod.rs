//! Market primitives, the type grid and the laissez-faire benchmark.

mod config;
mod primitives;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{EnvConfig, FamilySpec, UtilitySpec};
pub use primitives::{Distribution, Utility, Weight};

use crate::mech::Mechanism;
use crate::quad;
use crate::scalar::{lit, Scalar};
use primitives::BoundDistribution;

/// Default number of grid nodes.
pub const DEFAULT_GRID_N: usize = 10001;

/// Gap below which `E[ω]` and `α` are treated as equal.
pub const WEIGHT_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid support: need 0 < theta_min < theta_max, got [{lo}, {hi}]")]
    InvalidSupport { lo: f64, hi: f64 },
    #[error("density not positive at theta = {theta}")]
    DensityNotPositive { theta: f64 },
    #[error("utility is not strictly increasing and concave near q = {q}")]
    NonConcaveUtility { q: f64 },
    #[error("welfare weight is not monotone in the declared direction near theta = {theta}")]
    NonMonotoneWeight { theta: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Direction in which the welfare weight moves with the type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correlation {
    /// `ω` nonincreasing.
    Negative,
    /// `ω` nondecreasing.
    Positive,
}

/// Quantile-uniform grid on the type support.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeGrid<T> {
    pub nodes: Vec<T>,
    pub quantiles: Vec<T>,
}

impl<T: Scalar> TypeGrid<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Unvalidated primitives.
#[derive(Debug, Clone)]
pub struct EnvSpec<T> {
    pub theta_min: T,
    pub theta_max: T,
    pub dist: Distribution<T>,
    pub util: Utility<T>,
    pub cap: Option<T>,
    pub cost: T,
    pub alpha: T,
    pub weight: Weight<T>,
    pub correlation: Correlation,
    pub grid_n: usize,
}

/// Validated primitives sampled on a [`TypeGrid`].
#[derive(Debug, Clone)]
pub struct Environment<T> {
    spec: EnvSpec<T>,
    cap: T,
    dist: BoundDistribution<T>,
    grid: TypeGrid<T>,
    density: Vec<T>,
    omega: Vec<T>,
    phi_bottom: Vec<T>,
    phi_top: Vec<T>,
}

/// Builds and validates an environment from a parsed config.
pub fn build_environment<T: Scalar>(config: &EnvConfig) -> Result<Environment<T>, EnvError> {
    let spec = EnvSpec {
        theta_min: lit(config.theta_min),
        theta_max: lit(config.theta_max),
        dist: config::parse_distribution(&config.distribution)?,
        util: config::parse_utility(&config.utility)?,
        cap: config.utility.cap.map(lit),
        cost: lit(config.cost),
        alpha: lit(config.alpha),
        weight: config::parse_weight(&config.welfare_weight)?,
        correlation: config.correlation,
        grid_n: config.grid_n.unwrap_or(DEFAULT_GRID_N),
    };
    Environment::new(spec)
}

fn check_params<T: Scalar>(spec: &EnvSpec<T>) -> Result<(), EnvError> {
    let (lo, hi) = (spec.theta_min, spec.theta_max);
    if !(lo.is_finite() && hi.is_finite()) || lo <= T::zero() || hi <= lo {
        return Err(EnvError::InvalidSupport {
            lo: crate::scalar::to_f64(lo),
            hi: crate::scalar::to_f64(hi),
        });
    }
    let bad = |msg: &str| Err(EnvError::InvalidParameter(msg.to_string()));
    if !(spec.cost.is_finite() && spec.cost > T::zero()) {
        return bad("cost must be positive");
    }
    if !(spec.alpha.is_finite() && spec.alpha > T::zero()) {
        return bad("alpha must be positive");
    }
    if spec.grid_n < 2 {
        return bad("grid_n must be at least 2");
    }
    if let Some(a) = spec.cap {
        if !(a.is_finite() && a > T::zero()) {
            return bad("utility cap A must be positive");
        }
    }
    match &spec.dist {
        Distribution::Uniform => {}
        Distribution::TruncatedNormal { mean, sd } => {
            if !(mean.is_finite() && sd.is_finite() && *sd > T::zero()) {
                return bad("truncated-normal needs finite mean and sd > 0");
            }
        }
        Distribution::ScaledBeta { a, b, pad } => {
            if !(*a > T::zero() && *b > T::zero() && *pad >= T::zero()) {
                return bad("scaled-beta needs a > 0, b > 0, pad >= 0");
            }
        }
    }
    if let Utility::Crra { gamma } = spec.util {
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(EnvError::NonConcaveUtility { q: 0.0 });
        }
    }
    if let Weight::Tabulated { theta, omega } = &spec.weight {
        if theta.len() < 2 || theta.len() != omega.len() {
            return bad("tabulated weight needs two or more (theta, omega) pairs of equal length");
        }
        if theta.windows(2).any(|w| w[1] <= w[0]) {
            return bad("tabulated weight theta must be strictly increasing");
        }
    }
    Ok(())
}

impl<T: Scalar> Environment<T> {
    pub fn new(spec: EnvSpec<T>) -> Result<Self, EnvError> {
        check_params(&spec)?;
        let (lo, hi) = (spec.theta_min, spec.theta_max);
        let dist = BoundDistribution::new(spec.dist.clone(), lo, hi);

        let n = spec.grid_n;
        let last = lit::<T>((n - 1) as f64);
        let quantiles: Vec<T> = (0..n).map(|i| lit::<T>(i as f64) / last).collect();
        let mut nodes: Vec<T> = quantiles.iter().map(|&z| dist.quantile(z)).collect();
        nodes[0] = lo;
        nodes[n - 1] = hi;
        if let Some(i) = (1..n).find(|&i| nodes[i] <= nodes[i - 1]) {
            return Err(EnvError::DensityNotPositive {
                theta: crate::scalar::to_f64(nodes[i]),
            });
        }

        let density: Vec<T> = nodes.iter().map(|&t| dist.pdf(t)).collect();
        if let Some(i) = density.iter().position(|d| !(d.is_finite() && *d > T::zero())) {
            return Err(EnvError::DensityNotPositive {
                theta: crate::scalar::to_f64(nodes[i]),
            });
        }

        let omega: Vec<T> = nodes.iter().map(|&t| spec.weight.eval(t)).collect();
        check_weight(&spec, &nodes, &omega)?;

        let q_top = spec
            .util
            .v_prime_inv_uncapped(spec.cost / hi);
        let cap = spec.cap.unwrap_or_else(|| {
            if q_top > T::zero() && q_top.is_finite() {
                q_top * lit(100.0)
            } else {
                lit(100.0)
            }
        });
        check_utility(&spec.util, cap)?;

        let mut env = Self {
            spec,
            cap,
            dist,
            grid: TypeGrid { nodes, quantiles },
            density,
            omega,
            phi_bottom: Vec::new(),
            phi_top: Vec::new(),
        };
        env.refresh_phi();
        Ok(env)
    }

    fn refresh_phi(&mut self) {
        let n = self.grid.len();
        let cells: Vec<T> = (0..n - 1)
            .map(|i| self.cell_phi(self.grid.nodes[i], self.grid.nodes[i + 1]))
            .collect();
        let mut bottom = vec![T::zero(); n];
        for i in 1..n {
            bottom[i] = bottom[i - 1] + cells[i - 1];
        }
        let mut top = vec![T::zero(); n];
        for i in (0..n - 1).rev() {
            top[i] = top[i + 1] + cells[i];
        }
        self.phi_bottom = bottom;
        self.phi_top = top;
    }

    /// `∫_a^b [α − ω] dF` for `a ≤ b` inside one grid cell or any short span.
    fn cell_phi(&self, a: T, b: T) -> T {
        let alpha = self.spec.alpha;
        let integrand = |t: T| (alpha - self.spec.weight.eval(t)) * self.dist.pdf(t);
        let mut acc = T::zero();
        let mut lo = a;
        for &k in self.spec.weight.kinks() {
            if k > lo && k < b {
                acc = acc + quad::gauss_legendre(lo, k, integrand);
                lo = k;
            }
        }
        acc + quad::gauss_legendre(lo, b, integrand)
    }

    pub fn spec(&self) -> &EnvSpec<T> {
        &self.spec
    }

    pub fn theta_min(&self) -> T {
        self.spec.theta_min
    }

    pub fn theta_max(&self) -> T {
        self.spec.theta_max
    }

    pub fn cost(&self) -> T {
        self.spec.cost
    }

    pub fn alpha(&self) -> T {
        self.spec.alpha
    }

    /// Quality cap `A`.
    pub fn cap(&self) -> T {
        self.cap
    }

    pub fn util(&self) -> &Utility<T> {
        &self.spec.util
    }

    pub fn weight_fn(&self) -> &Weight<T> {
        &self.spec.weight
    }

    pub fn correlation(&self) -> Correlation {
        self.spec.correlation
    }

    pub fn grid(&self) -> &TypeGrid<T> {
        &self.grid
    }

    pub fn nodes(&self) -> &[T] {
        &self.grid.nodes
    }

    pub fn quantiles(&self) -> &[T] {
        &self.grid.quantiles
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Density `f` at the grid nodes.
    pub fn density(&self) -> &[T] {
        &self.density
    }

    /// `ω` at the grid nodes.
    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    /// `Φ(θ̲, θᵢ)` at the grid nodes.
    pub fn phi_bottom(&self) -> &[T] {
        &self.phi_bottom
    }

    /// `Φ(θᵢ, θ̄)` at the grid nodes.
    pub fn phi_top(&self) -> &[T] {
        &self.phi_top
    }

    pub fn cdf(&self, theta: T) -> T {
        self.dist.cdf(theta)
    }

    pub fn pdf(&self, theta: T) -> T {
        self.dist.pdf(theta)
    }

    pub fn quantile(&self, z: T) -> T {
        self.dist.quantile(z)
    }

    pub fn weight(&self, theta: T) -> T {
        self.spec.weight.eval(theta)
    }

    /// Index of the last node not above `theta`.
    pub fn node_at_or_below(&self, theta: T) -> usize {
        let k = self.grid.nodes.partition_point(|&x| x <= theta);
        k.saturating_sub(1)
    }

    /// `Φ(θ̲, θ) = ∫_{θ̲}^{θ} [α − ω] dF`.
    pub fn phi_from_bottom(&self, theta: T) -> T {
        let theta = theta.max(self.theta_min()).min(self.theta_max());
        let i = self.node_at_or_below(theta);
        if self.grid.nodes[i] == theta {
            return self.phi_bottom[i];
        }
        self.phi_bottom[i] + self.cell_phi(self.grid.nodes[i], theta)
    }

    /// `Φ(θ, θ̄) = ∫_{θ}^{θ̄} [α − ω] dF`.
    pub fn phi_to_top(&self, theta: T) -> T {
        let theta = theta.max(self.theta_min()).min(self.theta_max());
        let i = self.node_at_or_below(theta);
        if self.grid.nodes[i] == theta {
            return self.phi_top[i];
        }
        self.phi_top[i] - self.cell_phi(self.grid.nodes[i], theta)
    }

    /// `Φ(a, b) = ∫_a^b [α − ω(s)] dF(s)`.
    pub fn weight_integral(&self, a: T, b: T) -> T {
        if b <= a {
            return T::zero();
        }
        self.phi_from_bottom(b) - self.phi_from_bottom(a)
    }

    /// `E[ω]`.
    pub fn mean_weight(&self) -> T {
        self.spec.alpha - self.phi_bottom[self.len() - 1]
    }

    /// `E[ω] − α`.
    pub fn excess_weight(&self) -> T {
        -self.phi_bottom[self.len() - 1]
    }

    /// `E[ω] > α` beyond the tie tolerance.
    pub fn weight_exceeds_alpha(&self) -> bool {
        self.excess_weight() > lit(WEIGHT_TIE_TOL)
    }

    /// `E[ω] = α` within the tie tolerance.
    pub fn weight_ties_alpha(&self) -> bool {
        self.excess_weight().abs() <= lit(WEIGHT_TIE_TOL)
    }

    /// `(v′)⁻¹` clamped to `[0, A]`.
    pub fn v_prime_inv(&self, y: T) -> T {
        self.spec.util.v_prime_inv_uncapped(y).max(T::zero()).min(self.cap)
    }

    /// Demand `D(p, θ) = (v′)⁻¹(p/θ)`.
    pub fn demand(&self, p: T, theta: T) -> T {
        if theta <= T::zero() {
            return T::zero();
        }
        self.v_prime_inv(p / theta)
    }

    /// Quality chosen at price `c` by a consumer whose marginal value index is `h`;
    /// zero for `h ≤ 0`.
    pub fn quality_for_index(&self, h: T) -> T {
        if h <= T::zero() {
            T::zero()
        } else {
            self.demand(self.spec.cost, h)
        }
    }

    pub fn q_lf(&self, theta: T) -> T {
        self.demand(self.spec.cost, theta)
    }

    pub fn nu_lf(&self, theta: T) -> T {
        self.spec.util.v(self.q_lf(theta))
    }

    pub fn u_lf(&self, theta: T) -> T {
        let q = self.q_lf(theta);
        theta * self.spec.util.v(q) - self.spec.cost * q
    }

    /// Competitive benchmark: everyone buys `q^LF` at unit price `c`.
    pub fn laissez_faire(&self) -> Mechanism<T> {
        let theta = self.grid.nodes.clone();
        let q: Vec<T> = theta.iter().map(|&t| self.q_lf(t)).collect();
        let t: Vec<T> = q.iter().map(|&x| self.spec.cost * x).collect();
        let u: Vec<T> = theta.iter().map(|&t| self.u_lf(t)).collect();
        let u_floor = u[0];
        Mechanism { theta, q, t, u, u_floor }
    }

    /// Same primitives with a different profit weight.
    pub fn with_alpha(&self, alpha: T) -> Result<Self, EnvError> {
        if !(alpha.is_finite() && alpha > T::zero()) {
            return Err(EnvError::InvalidParameter("alpha must be positive".into()));
        }
        let mut env = self.clone();
        env.spec.alpha = alpha;
        env.refresh_phi();
        Ok(env)
    }

    /// Same primitives on a grid of `n` nodes.
    pub fn with_grid(&self, n: usize) -> Result<Self, EnvError> {
        let mut spec = self.spec.clone();
        spec.grid_n = n;
        spec.cap = Some(self.cap);
        Self::new(spec)
    }
}

fn check_weight<T: Scalar>(spec: &EnvSpec<T>, nodes: &[T], omega: &[T]) -> Result<(), EnvError> {
    if let Some(i) = omega.iter().position(|w| !w.is_finite()) {
        return Err(EnvError::NonMonotoneWeight {
            theta: crate::scalar::to_f64(nodes[i]),
        });
    }
    let slack = |w: T| lit::<T>(1e-12) * (T::one() + w.abs());
    for i in 1..omega.len() {
        let bad = match spec.correlation {
            Correlation::Negative => omega[i] > omega[i - 1] + slack(omega[i - 1]),
            Correlation::Positive => omega[i] < omega[i - 1] - slack(omega[i - 1]),
        };
        if bad {
            return Err(EnvError::NonMonotoneWeight {
                theta: crate::scalar::to_f64(nodes[i]),
            });
        }
    }
    Ok(())
}

fn check_utility<T: Scalar>(util: &Utility<T>, cap: T) -> Result<(), EnvError> {
    let m = 200;
    let mut prev: Option<T> = None;
    for k in 0..=m {
        let q = cap * lit::<T>(10f64.powf(-8.0 + 8.0 * k as f64 / m as f64));
        let d = util.v_prime(q);
        let ok = d.is_finite() && d > T::zero() && prev.is_none_or(|p| d < p);
        if !ok {
            return Err(EnvError::NonConcaveUtility {
                q: crate::scalar::to_f64(q),
            });
        }
        prev = Some(d);
    }
    Ok(())
}
