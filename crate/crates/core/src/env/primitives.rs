use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::erfc;

use crate::scalar::{lit, to_f64, Scalar};

/// Type distribution on `[theta_min, theta_max]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution<T> {
    Uniform,
    /// Normal law with the given mean and standard deviation, truncated to the support.
    TruncatedNormal { mean: T, sd: T },
    /// Beta(a, b) law stretched over the support widened by `pad` widths on
    /// each side, then truncated back to the support.
    ScaledBeta { a: T, b: T, pad: T },
}

/// Distribution bound to a support; evaluates `F`, `f` and `F⁻¹`.
#[derive(Debug, Clone)]
pub(crate) struct BoundDistribution<T> {
    pub kind: Distribution<T>,
    lo: T,
    hi: T,
    mass_lo: f64,
    mass: f64,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

impl<T: Scalar> BoundDistribution<T> {
    pub fn new(kind: Distribution<T>, lo: T, hi: T) -> Self {
        let (mass_lo, mass) = match &kind {
            Distribution::Uniform => (0.0, 1.0),
            Distribution::TruncatedNormal { mean, sd } => {
                let (m, s) = (to_f64(*mean), to_f64(*sd));
                let a = std_normal_cdf((to_f64(lo) - m) / s);
                let b = std_normal_cdf((to_f64(hi) - m) / s);
                (a, b - a)
            }
            Distribution::ScaledBeta { a, b, pad } => {
                let (xl, xh) = beta_window(to_f64(lo), to_f64(hi), to_f64(*pad));
                let (a, b) = (to_f64(*a), to_f64(*b));
                let cl = beta_reg(a, b, xl);
                let ch = beta_reg(a, b, xh);
                (cl, ch - cl)
            }
        };
        Self { kind, lo, hi, mass_lo, mass }
    }

    pub fn cdf(&self, theta: T) -> T {
        if theta <= self.lo {
            return T::zero();
        }
        if theta >= self.hi {
            return T::one();
        }
        match &self.kind {
            Distribution::Uniform => (theta - self.lo) / (self.hi - self.lo),
            Distribution::TruncatedNormal { mean, sd } => {
                let x = (to_f64(theta) - to_f64(*mean)) / to_f64(*sd);
                lit(((std_normal_cdf(x) - self.mass_lo) / self.mass).clamp(0.0, 1.0))
            }
            Distribution::ScaledBeta { a, b, pad } => {
                let x = beta_coord(to_f64(self.lo), to_f64(self.hi), to_f64(*pad), to_f64(theta));
                let c = beta_reg(to_f64(*a), to_f64(*b), x);
                lit(((c - self.mass_lo) / self.mass).clamp(0.0, 1.0))
            }
        }
    }

    pub fn pdf(&self, theta: T) -> T {
        match &self.kind {
            Distribution::Uniform => T::one() / (self.hi - self.lo),
            Distribution::TruncatedNormal { mean, sd } => {
                let s = to_f64(*sd);
                let x = (to_f64(theta) - to_f64(*mean)) / s;
                let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                lit(phi / (s * self.mass))
            }
            Distribution::ScaledBeta { a, b, pad } => {
                let (lo, hi, pad) = (to_f64(self.lo), to_f64(self.hi), to_f64(*pad));
                let (a, b) = (to_f64(*a), to_f64(*b));
                let x = beta_coord(lo, hi, pad, to_f64(theta));
                let span = (hi - lo) * (1.0 + 2.0 * pad);
                let log_pdf = (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b);
                lit(log_pdf.exp() / (span * self.mass))
            }
        }
    }

    /// Inverse cdf by safeguarded Newton iteration.
    pub fn quantile(&self, z: T) -> T {
        if z <= T::zero() {
            return self.lo;
        }
        if z >= T::one() {
            return self.hi;
        }
        if let Distribution::Uniform = self.kind {
            return self.lo + z * (self.hi - self.lo);
        }
        let (mut a, mut b) = (self.lo, self.hi);
        let mut x = self.lo + z * (self.hi - self.lo);
        let eps = T::epsilon() * lit(4.0);
        for _ in 0..200 {
            let r = self.cdf(x) - z;
            if r.abs() <= eps {
                break;
            }
            if r > T::zero() {
                b = x;
            } else {
                a = x;
            }
            if b - a <= eps * (T::one() + b.abs()) {
                break;
            }
            let d = self.pdf(x);
            let newton = x - r / d;
            x = if d > T::zero() && newton > a && newton < b {
                newton
            } else {
                (a + b) * lit(0.5)
            };
        }
        x
    }
}

fn beta_window(_lo: f64, _hi: f64, pad: f64) -> (f64, f64) {
    let span = 1.0 + 2.0 * pad;
    (pad / span, (1.0 + pad) / span)
}

fn beta_coord(lo: f64, hi: f64, pad: f64, theta: f64) -> f64 {
    let w = hi - lo;
    ((theta - (lo - pad * w)) / (w * (1.0 + 2.0 * pad))).clamp(0.0, 1.0)
}

/// Utility of quality `v(q)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Utility<T> {
    /// `v(q) = 2√q`
    Sqrt,
    /// `v(q) = ln(1 + q)`
    Log,
    /// `v(q) = q^(1-γ) / (1-γ)` with `γ ∈ (0, 1)`
    Crra { gamma: T },
}

impl<T: Scalar> Utility<T> {
    pub fn v(&self, q: T) -> T {
        let q = q.max(T::zero());
        match self {
            Utility::Sqrt => lit::<T>(2.0) * q.sqrt(),
            Utility::Log => q.ln_1p(),
            Utility::Crra { gamma } => {
                let e = T::one() - *gamma;
                q.powf(e) / e
            }
        }
    }

    pub fn v_prime(&self, q: T) -> T {
        let q = q.max(T::zero());
        match self {
            Utility::Sqrt => T::one() / q.sqrt(),
            Utility::Log => T::one() / (T::one() + q),
            Utility::Crra { gamma } => q.powf(-*gamma),
        }
    }

    /// `(v′)⁻¹(y)` without the quality cap; zero when `y ≥ v′(0)`.
    pub fn v_prime_inv_uncapped(&self, y: T) -> T {
        if y <= T::zero() {
            return T::infinity();
        }
        match self {
            Utility::Sqrt => T::one() / (y * y),
            Utility::Log => (T::one() / y - T::one()).max(T::zero()),
            Utility::Crra { gamma } => y.powf(-T::one() / *gamma),
        }
    }

    /// `Ψ = v⁻¹`, the quality needed to deliver subutility `nu`.
    pub fn v_inv(&self, nu: T) -> T {
        let nu = nu.max(T::zero());
        match self {
            Utility::Sqrt => nu * nu * lit(0.25),
            Utility::Log => nu.exp_m1(),
            Utility::Crra { gamma } => {
                let e = T::one() - *gamma;
                (e * nu).powf(T::one() / e)
            }
        }
    }

    /// `ψ = Ψ′` expressed through quality: `1 / v′(Ψ(ν))`.
    pub fn psi(&self, nu: T) -> T {
        T::one() / self.v_prime(self.v_inv(nu))
    }

    /// `ψ′ = Ψ″`.
    pub fn psi_prime(&self, nu: T) -> T {
        let nu = nu.max(T::zero());
        match self {
            Utility::Sqrt => lit(0.5),
            Utility::Log => nu.exp(),
            Utility::Crra { gamma } => {
                let e = T::one() - *gamma;
                *gamma * (e * nu).powf((lit::<T>(2.0) * *gamma - T::one()) / e)
            }
        }
    }
}

/// Welfare weight `ω(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight<T> {
    /// `ω(θ) = intercept + slope·θ`
    Linear { intercept: T, slope: T },
    /// `ω(θ) = scale·exp(rate·θ)`
    Exponential { scale: T, rate: T },
    /// Piecewise-linear interpolation of a table, flat beyond its ends.
    Tabulated { theta: Vec<T>, omega: Vec<T> },
}

impl<T: Scalar> Weight<T> {
    pub fn eval(&self, theta: T) -> T {
        match self {
            Weight::Linear { intercept, slope } => *intercept + *slope * theta,
            Weight::Exponential { scale, rate } => *scale * (*rate * theta).exp(),
            Weight::Tabulated { theta: xs, omega } => crate::quad::interp(xs, omega, theta),
        }
    }

    /// Interior kinks of the weight, used to split quadrature panels.
    pub fn kinks(&self) -> &[T] {
        match self {
            Weight::Tabulated { theta, .. } => theta,
            _ => &[],
        }
    }
}
