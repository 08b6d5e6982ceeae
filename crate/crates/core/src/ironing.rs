//! Quantile-space ironing with an optional point mass at the bottom type.
//!
//! Node `i` of the grid owns a cell of quantile mass `wᵢ` (trapezoid weights
//! in `z = F(θ)`), so the cumulative from the top is piecewise linear with
//! breakpoints `0 = B₀ < B₁ < … < Bₙ = 1` and slope `−hᵢ` on cell `i`. The
//! atom adds a jump at `z = 0`. The ironed value of node `i` is minus the
//! slope of the upper hull over its cell, which makes nondecreasing inputs
//! pass through unchanged and keeps the weighted mass of every pool exact.

use std::ops::RangeInclusive;

use crate::env::Environment;
use crate::quad;
use crate::scalar::{lit, Scalar};

/// Relative deviation below which a hull segment is not reported as a pool.
pub const POOL_TOL: f64 = 1e-9;

/// A grid-sampled transform `h` plus a point mass at the lowest node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningTransform<T> {
    pub base: Vec<T>,
    /// Jump contributed to `∫ h dF` at the lowest node.
    pub atom_mass: T,
}

impl<T: Scalar> ScreeningTransform<T> {
    pub fn new(base: Vec<T>, atom_mass: T) -> Self {
        Self { base, atom_mass }
    }

    pub fn is_valid(&self) -> bool {
        self.base.iter().all(|h| h.is_finite()) && self.atom_mass >= T::zero()
    }
}

/// Maximal run of nodes sharing one ironed value that differs from the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pool<T> {
    pub lo: T,
    pub hi: T,
    pub first: usize,
    pub last: usize,
}

/// Cumulative `G` at the cell breakpoints `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cumulative<T> {
    pub z: Vec<T>,
    pub g: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IroningResult<T> {
    pub ironed: Vec<T>,
    pub pools: Vec<Pool<T>>,
    /// Cell breakpoints in quantile space, one more than the node count.
    pub breakpoints: Vec<T>,
    pub cumulative: Vec<T>,
    /// Concave majorant of `cumulative` at the breakpoints.
    pub hull: Vec<T>,
    /// Breakpoint indices of the hull vertices.
    pub vertices: Vec<usize>,
}

fn breakpoints<T: Scalar>(w: &[T]) -> Vec<T> {
    let mut b = Vec::with_capacity(w.len() + 1);
    let mut acc = T::zero();
    b.push(acc);
    for &wi in w {
        acc = acc + wi;
        b.push(acc);
    }
    b
}

fn cumulative_weighted<T: Scalar>(base: &[T], atom: T, w: &[T]) -> Vec<T> {
    let n = base.len();
    let mut g = vec![T::zero(); n + 1];
    for k in (0..n).rev() {
        g[k] = g[k + 1] + base[k] * w[k];
    }
    g[0] = g[0] + atom;
    g
}

/// `G(z) = ∫_{F⁻¹(z)}^{θ̄} h dF` at the cell breakpoints of the quantile grid `z`,
/// with the atom included at `z = 0`.
pub fn cumulative_on<T: Scalar>(t: &ScreeningTransform<T>, z: &[T]) -> Cumulative<T> {
    let w = quad::trapezoid_weights(z);
    Cumulative {
        z: breakpoints(&w),
        g: cumulative_weighted(&t.base, t.atom_mass, &w),
    }
}

/// [`cumulative_on`] over the environment's quantile grid.
pub fn cumulative_from_top<T: Scalar>(t: &ScreeningTransform<T>, env: &Environment<T>) -> Cumulative<T> {
    cumulative_on(t, env.quantiles())
}

/// Indices of the upper-hull vertices of `(x, g)` by a monotone-chain scan.
/// Collinear points are dropped. `x` must be strictly increasing.
pub fn hull_vertices<T: Scalar>(x: &[T], g: &[T]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(x.len());
    for p in 0..x.len() {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (x[a] - x[o]) * (g[p] - g[o]) - (g[a] - g[o]) * (x[p] - x[o]);
            if cross >= T::zero() {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Values of the concave majorant of `(x, g)` at every `x`.
pub fn concave_majorant<T: Scalar>(x: &[T], g: &[T]) -> Vec<T> {
    let v = hull_vertices(x, g);
    majorant_from_vertices(x, g, &v)
}

fn majorant_from_vertices<T: Scalar>(x: &[T], g: &[T], v: &[usize]) -> Vec<T> {
    let mut out = g.to_vec();
    for s in v.windows(2) {
        let (i, j) = (s[0], s[1]);
        let slope = (g[j] - g[i]) / (x[j] - x[i]);
        for k in i + 1..j {
            out[k] = g[i] + slope * (x[k] - x[i]);
        }
    }
    out
}

/// Irons `base` (with `atom` at its first entry) given per-node quantile
/// masses `w`; `theta` labels the nodes for pool reporting.
pub fn iron_weighted<T: Scalar>(base: &[T], atom: T, w: &[T], theta: &[T]) -> IroningResult<T> {
    let n = base.len();
    let b = breakpoints(w);
    let g = cumulative_weighted(base, atom, w);
    let vertices = hull_vertices(&b, &g);
    let hull = majorant_from_vertices(&b, &g, &vertices);

    let mut ironed = base.to_vec();
    let mut pools = Vec::new();
    for s in vertices.windows(2) {
        let (i, j) = (s[0], s[1]);
        if j - i == 1 {
            if i == 0 && atom > T::zero() {
                ironed[0] = base[0] + atom / w[0];
                pools.push(Pool { lo: theta[0], hi: theta[0], first: 0, last: 0 });
            }
            continue;
        }
        let level = (g[i] - g[j]) / (b[j] - b[i]);
        let mut deviates = false;
        for k in i..j {
            ironed[k] = level;
            if (level - base[k]).abs() > lit::<T>(POOL_TOL) * (T::one() + level.abs()) {
                deviates = true;
            }
        }
        if deviates || (i == 0 && atom > T::zero()) {
            pools.push(Pool { lo: theta[i], hi: theta[j - 1], first: i, last: j - 1 });
        }
    }
    debug_assert_eq!(ironed.len(), n);
    IroningResult { ironed, pools, breakpoints: b, cumulative: g, hull, vertices }
}

/// Irons over an arbitrary quantile grid `z` labelled by `theta`.
pub fn iron_on<T: Scalar>(t: &ScreeningTransform<T>, z: &[T], theta: &[T]) -> IroningResult<T> {
    let w = quad::trapezoid_weights(z);
    iron_weighted(&t.base, t.atom_mass, &w, theta)
}

/// Irons a transform sampled on the full environment grid.
pub fn iron<T: Scalar>(t: &ScreeningTransform<T>, env: &Environment<T>) -> IroningResult<T> {
    iron_on(t, env.quantiles(), env.nodes())
}

/// Irons a transform sampled on the nodes in `range` only; the cumulative is
/// taken over that sub-interval.
pub fn iron_range<T: Scalar>(
    t: &ScreeningTransform<T>,
    env: &Environment<T>,
    range: RangeInclusive<usize>,
) -> IroningResult<T> {
    let z = &env.quantiles()[range.clone()];
    let theta = &env.nodes()[range];
    iron_on(t, z, theta)
}
