//! Mechanisms on a type grid: envelope transfers, feasibility, welfare,
//! region classification and CSV exchange.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Correlation, Environment};
use crate::quad;
use crate::scalar::{lit, to_f64, Scalar};

/// Default tolerance of the reporting layer.
pub const CLASSIFY_TOL: f64 = 1e-6;

/// Columns of the mechanism CSV, in order.
pub const CSV_COLUMNS: [&str; 7] = ["theta", "q", "t", "U", "q_lf", "U_lf", "region"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechError {
    #[error("allocation decreases at node {index}")]
    NonMonotoneAllocation { index: usize },
    #[error("array length {got} does not match grid length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mechanism csv: {0}")]
    Schema(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Allocation `q`, transfers `t` and utilities `U` at the nodes `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism<T> {
    pub theta: Vec<T>,
    pub q: Vec<T>,
    pub t: Vec<T>,
    pub u: Vec<T>,
    pub u_floor: T,
}

impl<T: Scalar> Mechanism<T> {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Subutility `ν = v(q)`.
    pub fn nu(&self, env: &Environment<T>) -> Vec<T> {
        self.q.iter().map(|&q| env.util().v(q)).collect()
    }

    /// Builds `U = U̲ + ∫ v(q)` (see [`quad::cumulative_quadratic`]) and `t = θv(q) − U`.
    pub fn from_allocation(env: &Environment<T>, theta: Vec<T>, q: Vec<T>, u_floor: T) -> Result<Self, MechError> {
        if q.len() != theta.len() {
            return Err(MechError::LengthMismatch { expected: theta.len(), got: q.len() });
        }
        if let Some(index) = first_decrease(&q) {
            return Err(MechError::NonMonotoneAllocation { index });
        }
        let nu: Vec<T> = q.iter().map(|&x| env.util().v(x)).collect();
        let u: Vec<T> = quad::cumulative_quadratic(&theta, &nu)
            .into_iter()
            .map(|i| u_floor + i)
            .collect();
        let t = theta
            .iter()
            .zip(&nu)
            .zip(&u)
            .map(|((&th, &n), &uu)| th * n - uu)
            .collect();
        Ok(Self { theta, q, t, u, u_floor })
    }
}

fn first_decrease<T: Scalar>(q: &[T]) -> Option<usize> {
    (1..q.len()).find(|&i| q[i] < q[i - 1] - lit::<T>(1e-12) * (T::one() + q[i - 1].abs()))
}

/// Envelope-consistent mechanism for allocation `q` on the environment grid.
pub fn transfers_from_allocation<T: Scalar>(env: &Environment<T>, q: &[T], u_floor: T) -> Result<Mechanism<T>, MechError> {
    if q.len() != env.len() {
        return Err(MechError::LengthMismatch { expected: env.len(), got: q.len() });
    }
    Mechanism::from_allocation(env, env.nodes().to_vec(), q.to_vec(), u_floor)
}

/// Worst violation of each constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport<T> {
    pub ic_violation: T,
    pub envelope_violation: T,
    pub ir_violation: T,
    pub ls_violation: T,
}

impl<T: Scalar> FeasibilityReport<T> {
    pub fn worst(&self) -> T {
        self.ic_violation
            .max(self.envelope_violation)
            .max(self.ir_violation)
            .max(self.ls_violation)
    }

    pub fn passes(&self, tol: T) -> bool {
        self.worst() <= tol
    }
}

/// Checks monotonicity, the envelope identity, participation and
/// nonnegative payments. `tol` is accepted for interface symmetry; use
/// [`FeasibilityReport::passes`] to compare.
pub fn verify_feasibility<T: Scalar>(m: &Mechanism<T>, env: &Environment<T>, _tol: T) -> FeasibilityReport<T> {
    let n = m.len();
    let mut ic = T::zero();
    for i in 1..n {
        ic = ic.max(m.q[i - 1] - m.q[i]);
    }
    let nu = m.nu(env);
    let integral = quad::cumulative_quadratic(&m.theta, &nu);
    let mut envelope = T::zero();
    let mut ir = T::zero();
    let mut ls = T::zero();
    for i in 0..n {
        envelope = envelope
            .max((m.u[i] - (m.u_floor + integral[i])).abs())
            .max((m.t[i] - (m.theta[i] * nu[i] - m.u[i])).abs());
        ir = ir.max(env.u_lf(m.theta[i]) - m.u[i]);
        ls = ls.max(-m.t[i]);
    }
    FeasibilityReport {
        ic_violation: ic,
        envelope_violation: envelope,
        ir_violation: ir,
        ls_violation: ls,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareBreakdown<T> {
    pub weighted_consumer_surplus: T,
    pub weighted_profit: T,
    pub total: T,
}

/// Quantile-space quadrature weights for the nodes of `m`.
pub(crate) fn mass_weights<T: Scalar>(theta: &[T], env: &Environment<T>) -> Vec<T> {
    if theta == env.nodes() {
        quad::weights(env.quantiles())
    } else {
        let z: Vec<T> = theta.iter().map(|&t| env.cdf(t)).collect();
        quad::weights(&z)
    }
}

/// `∫ ω U dF` and `α ∫ (t − c q) dF`.
pub fn welfare<T: Scalar>(m: &Mechanism<T>, env: &Environment<T>) -> WelfareBreakdown<T> {
    let w = mass_weights(&m.theta, env);
    let mut cs = T::zero();
    let mut profit = T::zero();
    for (i, &wi) in w.iter().enumerate() {
        cs = cs + wi * env.weight(m.theta[i]) * m.u[i];
        profit = profit + wi * (m.t[i] - env.cost() * m.q[i]);
    }
    let profit = profit * env.alpha();
    WelfareBreakdown {
        weighted_consumer_surplus: cs,
        weighted_profit: profit,
        total: cs + profit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    PublicOption,
    Subsidy,
    PrivateMarket,
}

impl RegionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionKind::PublicOption => "public_option",
            RegionKind::Subsidy => "subsidy",
            RegionKind::PrivateMarket => "private_market",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region<T> {
    pub lo: T,
    pub hi: T,
    pub kind: RegionKind,
    #[serde(skip)]
    pub first: usize,
    #[serde(skip)]
    pub last: usize,
}

/// Consecutive regions covering the type support.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSegmentation<T> {
    pub regions: Vec<Region<T>>,
}

impl<T: Scalar> RegionSegmentation<T> {
    pub fn kinds(&self) -> Vec<RegionKind> {
        self.regions.iter().map(|r| r.kind).collect()
    }

    pub fn find(&self, kind: RegionKind) -> Option<&Region<T>> {
        self.regions.iter().find(|r| r.kind == kind)
    }

    /// Region of node `i`.
    pub fn kind_at(&self, i: usize) -> Option<RegionKind> {
        self.regions.iter().find(|r| r.first <= i && i <= r.last).map(|r| r.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
    #[serde(skip)]
    pub first: usize,
    #[serde(skip)]
    pub last: usize,
}

fn span<T: Scalar>(theta: &[T], first: usize, last: usize) -> (T, T) {
    let hi = if last + 1 < theta.len() { theta[last + 1] } else { theta[last] };
    (theta[first], hi)
}

/// Largest local departure of `ν` from linear extrapolation, times the cell
/// width. Bounds how far the envelope integral of `ν` can drift at kinks.
fn envelope_resolution<T: Scalar>(theta: &[T], nu: &[T]) -> T {
    let mut res = T::zero();
    for k in 1..nu.len().saturating_sub(1) {
        let (w0, w1) = (theta[k] - theta[k - 1], theta[k + 1] - theta[k]);
        let d = (nu[k + 1] - nu[k]) - (nu[k] - nu[k - 1]) * (w1 / w0);
        res = res.max((w1 * d).abs());
    }
    res
}

/// Splits the grid into a public option at the bottom, the private market
/// and subsidized types. The private market is a single suffix under
/// negative correlation and a single prefix under positive correlation.
pub fn classify_regions<T: Scalar>(m: &Mechanism<T>, env: &Environment<T>, tol: T) -> RegionSegmentation<T> {
    let n = m.len();
    if n == 0 {
        return RegionSegmentation { regions: Vec::new() };
    }
    let mut po_end = 0;
    while po_end < n && (m.q[po_end] - m.q[0]).abs() <= tol && m.t[po_end] <= tol {
        po_end += 1;
    }
    if po_end < 2 {
        po_end = 0;
    }
    let u_tol = tol + envelope_resolution(&m.theta, &m.nu(env));
    let market: Vec<bool> = (0..n)
        .map(|i| {
            let th = m.theta[i];
            (m.q[i] - env.q_lf(th)).abs() <= tol && (m.u[i] - env.u_lf(th)).abs() <= u_tol
        })
        .collect();

    let mut runs: Vec<(usize, usize, RegionKind)> = Vec::new();
    if po_end > 0 {
        runs.push((0, po_end - 1, RegionKind::PublicOption));
    }
    if po_end < n {
        match env.correlation() {
            Correlation::Negative => {
                let mut s = n;
                while s > po_end && market[s - 1] {
                    s -= 1;
                }
                if s > po_end {
                    runs.push((po_end, s - 1, RegionKind::Subsidy));
                }
                if s < n {
                    runs.push((s, n - 1, RegionKind::PrivateMarket));
                }
            }
            Correlation::Positive => {
                let mut e = po_end;
                while e < n && market[e] {
                    e += 1;
                }
                if e > po_end {
                    runs.push((po_end, e - 1, RegionKind::PrivateMarket));
                }
                if e < n {
                    runs.push((e, n - 1, RegionKind::Subsidy));
                }
            }
        }
    }
    let regions = runs
        .into_iter()
        .map(|(first, last, kind)| {
            let (lo, hi) = span(&m.theta, first, last);
            Region { lo, hi, kind, first, last }
        })
        .collect();
    RegionSegmentation { regions }
}

/// How a node fares against the private market.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Better,
    Binding,
    Worse,
}

pub fn outcomes<T: Scalar>(m: &Mechanism<T>, env: &Environment<T>, tol: T) -> Vec<Outcome> {
    m.theta
        .iter()
        .zip(&m.u)
        .map(|(&th, &u)| {
            let d = u - env.u_lf(th);
            if d > tol {
                Outcome::Better
            } else if d < -tol {
                Outcome::Worse
            } else {
                Outcome::Binding
            }
        })
        .collect()
}

/// Maximal runs of nodes satisfying `keep`, reported as half-open intervals.
pub(crate) fn runs_where<T: Scalar>(theta: &[T], keep: impl Fn(usize) -> bool) -> Vec<Interval<T>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < theta.len() {
        if !keep(i) {
            i += 1;
            continue;
        }
        let first = i;
        while i < theta.len() && keep(i) {
            i += 1;
        }
        let (lo, hi) = span(theta, first, i - 1);
        out.push(Interval { lo, hi, first, last: i - 1 });
    }
    out
}

/// Types strictly better off than in the private market.
pub fn beneficiaries<T: Scalar>(m: &Mechanism<T>, env: &Environment<T>, tol: T) -> Vec<Interval<T>> {
    let o = outcomes(m, env, tol);
    runs_where(&m.theta, |i| o[i] == Outcome::Better)
}

/// Types strictly worse off than in the private market.
pub fn worse_off<T: Scalar>(m: &Mechanism<T>, env: &Environment<T>, tol: T) -> Vec<Interval<T>> {
    let o = outcomes(m, env, tol);
    runs_where(&m.theta, |i| o[i] == Outcome::Worse)
}

/// Twelve significant digits in scientific notation.
pub fn fmt_sig(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

/// Rounds to twelve significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    fmt_sig(x).parse().unwrap_or(x)
}

/// Writes the mechanism CSV. Rows follow grid order.
pub fn write_csv<T: Scalar, W: Write>(
    m: &Mechanism<T>,
    env: &Environment<T>,
    regions: &RegionSegmentation<T>,
    out: W,
) -> Result<(), MechError> {
    let io = |e: csv::Error| MechError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for i in 0..m.len() {
        let th = m.theta[i];
        let kind = regions.kind_at(i).map(|k| k.as_str()).unwrap_or("");
        w.write_record([
            fmt_sig(to_f64(th)),
            fmt_sig(to_f64(m.q[i])),
            fmt_sig(to_f64(m.t[i])),
            fmt_sig(to_f64(m.u[i])),
            fmt_sig(to_f64(env.q_lf(th))),
            fmt_sig(to_f64(env.u_lf(th))),
            kind.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| MechError::Io(e.to_string()))
}

/// Reads a mechanism CSV; `U̲` is taken from the first row.
pub fn read_csv<T: Scalar, R: Read>(input: R) -> Result<Mechanism<T>, MechError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| MechError::Schema(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != CSV_COLUMNS {
        return Err(MechError::Schema(format!(
            "expected columns {}, found {}",
            CSV_COLUMNS.join(","),
            names.join(",")
        )));
    }
    let (mut theta, mut q, mut t, mut u) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| MechError::Schema(e.to_string()))?;
        let cell = |col: usize| -> Result<T, MechError> {
            rec.get(col)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|x| x.is_finite())
                .map(lit)
                .ok_or_else(|| MechError::Schema(format!("row {}: bad value in column {}", row + 1, CSV_COLUMNS[col])))
        };
        theta.push(cell(0)?);
        q.push(cell(1)?);
        t.push(cell(2)?);
        u.push(cell(3)?);
    }
    if theta.len() < 2 {
        return Err(MechError::Schema("need at least two rows".into()));
    }
    if theta.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MechError::Schema("theta must be strictly increasing".into()));
    }
    let u_floor = u[0];
    Ok(Mechanism { theta, q, t, u, u_floor })
}
