#![allow(dead_code)]

use mechd_core::env::{Correlation, Distribution, EnvSpec, Environment, Utility, Weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BATTERY_SEED: u64 = 0x5eed_2024;
pub const BATTERY_PER_SIGN: usize = 20;
pub const BATTERY_GRID: usize = 10001;

pub fn uniform_sqrt(weight: Weight<f64>, correlation: Correlation, alpha: f64, grid_n: usize) -> Environment<f64> {
    Environment::new(EnvSpec {
        theta_min: 1.0,
        theta_max: 2.0,
        dist: Distribution::Uniform,
        util: Utility::Sqrt,
        cap: None,
        cost: 1.0,
        alpha,
        weight,
        correlation,
        grid_n,
    })
    .unwrap()
}

pub fn falling() -> Weight<f64> {
    Weight::Linear { intercept: 4.5, slope: -2.0 }
}

pub fn rising() -> Weight<f64> {
    Weight::Linear { intercept: -1.5, slope: 2.0 }
}

pub fn e1() -> Environment<f64> {
    uniform_sqrt(falling(), Correlation::Negative, 1.0, 10001)
}

pub fn e2() -> Environment<f64> {
    uniform_sqrt(falling(), Correlation::Negative, 2.0, 10001)
}

pub fn e4() -> Environment<f64> {
    uniform_sqrt(rising(), Correlation::Positive, 2.0, 10001)
}

/// `ω ≡ α`.
pub fn boundary(correlation: Correlation) -> Environment<f64> {
    uniform_sqrt(Weight::Linear { intercept: 2.0, slope: 0.0 }, correlation, 2.0, 10001)
}

/// Where `α` sits relative to the range of `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    AboveMax,
    Inside,
    BelowMin,
}

#[derive(Debug, Clone)]
pub struct BatteryCase {
    pub label: String,
    pub regime: Regime,
    pub env: Environment<f64>,
}

fn random_weight(rng: &mut ChaCha8Rng, lo: f64, hi: f64, w_lo: f64, w_hi: f64, rising: bool) -> Weight<f64> {
    let (start, end) = if rising { (w_lo, w_hi) } else { (w_hi, w_lo) };
    match rng.gen_range(0..3) {
        0 => {
            let slope = (end - start) / (hi - lo);
            Weight::Linear { intercept: start - slope * lo, slope }
        }
        1 => {
            let rate = (end / start).ln() / (hi - lo);
            Weight::Exponential { scale: start * (-rate * lo).exp(), rate }
        }
        _ => {
            let k = rng.gen_range(3..7);
            let mut cuts: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
            cuts.sort_by(f64::total_cmp);
            let mut theta = vec![lo];
            let mut omega = vec![start];
            for (j, c) in cuts.iter().enumerate() {
                theta.push(lo + (hi - lo) * (j as f64 + 1.0) / (k as f64 + 1.0));
                omega.push(start + (end - start) * c);
            }
            theta.push(hi);
            omega.push(end);
            Weight::Tabulated { theta, omega }
        }
    }
}

fn random_env(rng: &mut ChaCha8Rng, correlation: Correlation, regime: Regime) -> Environment<f64> {
    let lo = rng.gen_range(0.5..1.5);
    let hi = lo + rng.gen_range(0.5..1.5);
    let dist = match rng.gen_range(0..3) {
        0 => Distribution::Uniform,
        1 => Distribution::TruncatedNormal {
            mean: rng.gen_range(lo..hi),
            sd: (hi - lo) * rng.gen_range(0.3..1.0),
        },
        _ => Distribution::ScaledBeta { a: rng.gen_range(1.5..4.0), b: rng.gen_range(1.5..4.0), pad: 0.05 },
    };
    let (util, cost) = match rng.gen_range(0..3) {
        0 => (Utility::Sqrt, rng.gen_range(0.5..1.5)),
        1 => (Utility::Log, lo * rng.gen_range(0.3..0.8)),
        _ => (Utility::Crra { gamma: rng.gen_range(0.3..0.7) }, rng.gen_range(0.5..1.5)),
    };
    let w_lo = rng.gen_range(0.3..1.0);
    let w_hi = w_lo + rng.gen_range(0.5..2.0);
    let weight = random_weight(rng, lo, hi, w_lo, w_hi, correlation == Correlation::Positive);
    let alpha = match regime {
        Regime::AboveMax => w_hi * rng.gen_range(1.05..1.5),
        Regime::Inside => rng.gen_range(w_lo + 0.05 * (w_hi - w_lo)..w_hi - 0.05 * (w_hi - w_lo)),
        Regime::BelowMin => w_lo * rng.gen_range(0.5..0.95),
    };
    Environment::new(EnvSpec {
        theta_min: lo,
        theta_max: hi,
        dist,
        util,
        cap: None,
        cost,
        alpha,
        weight,
        correlation,
        grid_n: BATTERY_GRID,
    })
    .unwrap()
}

/// Twenty seeded environments per correlation sign, cycling through the
/// three placements of `α`.
pub fn battery() -> Vec<BatteryCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(BATTERY_SEED);
    let regimes = [Regime::AboveMax, Regime::Inside, Regime::BelowMin];
    let mut out = Vec::with_capacity(2 * BATTERY_PER_SIGN);
    for correlation in [Correlation::Negative, Correlation::Positive] {
        for i in 0..BATTERY_PER_SIGN {
            let regime = regimes[i % regimes.len()];
            let env = random_env(&mut rng, correlation, regime);
            out.push(BatteryCase { label: format!("{correlation:?}#{i} {regime:?}"), regime, env });
        }
    }
    out
}

pub fn max_omega(env: &Environment<f64>) -> f64 {
    env.omega().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_omega(env: &Environment<f64>) -> f64 {
    env.omega().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Prints one acceptance line and returns the verdict. Writes to the raw
/// stdout handle so the line survives output capture.
pub fn report(id: usize, name: &str, pass: bool, detail: &str) -> bool {
    use std::io::Write;
    let line = format!("[{}] criterion {id:>2} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    pass
}
