//! Quadrature and one-dimensional root helpers shared by the modules.

use crate::scalar::{lit, Scalar};

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre<T: Scalar>(a: T, b: T, mut f: impl FnMut(T) -> T) -> T {
    if b == a {
        return T::zero();
    }
    let half = (b - a) * lit(0.5);
    let mid = (a + b) * lit(0.5);
    let mut acc = T::zero();
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
        acc = acc + lit::<T>(*w) * f(mid + half * lit(*x));
    }
    acc * half
}

/// Composite Gauss-Legendre with `panels` equal panels.
pub fn gauss_legendre_composite<T: Scalar>(
    a: T,
    b: T,
    panels: usize,
    mut f: impl FnMut(T) -> T,
) -> T {
    let panels = panels.max(1);
    let h = (b - a) / lit(panels as f64);
    let mut acc = T::zero();
    for k in 0..panels {
        let lo = a + h * lit(k as f64);
        let hi = if k + 1 == panels { b } else { lo + h };
        acc = acc + gauss_legendre(lo, hi, &mut f);
    }
    acc
}

/// Quadrature weights for nodes `z`: Simpson (trapezoid plus one Richardson
/// step) when the spacing is uniform with an even number of intervals,
/// trapezoid otherwise.
pub fn weights<T: Scalar>(z: &[T]) -> Vec<T> {
    let n = z.len();
    if n < 2 {
        return vec![T::zero(); n];
    }
    let h = (z[n - 1] - z[0]) / lit((n - 1) as f64);
    let uniform = z
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= lit::<T>(1e-9) * h.abs());
    if uniform && (n - 1).is_multiple_of(2) && n >= 3 {
        let third = h / lit(3.0);
        (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    third
                } else if i % 2 == 1 {
                    third * lit(4.0)
                } else {
                    third * lit(2.0)
                }
            })
            .collect()
    } else {
        trapezoid_weights(z)
    }
}

/// Trapezoid weights for nodes `z`.
pub fn trapezoid_weights<T: Scalar>(z: &[T]) -> Vec<T> {
    let n = z.len();
    let mut w = vec![T::zero(); n];
    for i in 0..n.saturating_sub(1) {
        let half = (z[i + 1] - z[i]) * lit(0.5);
        w[i] = w[i] + half;
        w[i + 1] = w[i + 1] + half;
    }
    w
}

/// Running trapezoid integral of `y` over `x`, starting at zero.
pub fn cumulative_trapezoid<T: Scalar>(x: &[T], y: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = T::zero();
    out.push(acc);
    for i in 1..x.len() {
        acc = acc + (x[i] - x[i - 1]) * (y[i] + y[i - 1]) * lit(0.5);
        out.push(acc);
    }
    out
}

/// `∫` over `[x[p], x[p+1]]` of the quadratic through nodes `j..j+3`.
fn quadratic_cell<T: Scalar>(x: &[T], y: &[T], j: usize, p: usize) -> T {
    let a = x[p];
    let h = x[p + 1] - a;
    let u = [x[j] - a, x[j + 1] - a, x[j + 2] - a];
    let third = lit::<T>(1.0 / 3.0);
    let half = lit::<T>(0.5);
    let mut acc = T::zero();
    for k in 0..3 {
        let (m, l) = ((k + 1) % 3, (k + 2) % 3);
        let moment = h * h * h * third - (u[m] + u[l]) * h * h * half + u[m] * u[l] * h;
        acc = acc + y[j + k] * moment / ((u[k] - u[m]) * (u[k] - u[l]));
    }
    acc
}

/// Running integral of `y` over `x`. Each cell averages the two local
/// quadratic fits that contain it (one at the ends), which is fourth-order on
/// uniform grids. Falls back to the trapezoid rule below three nodes.
pub fn cumulative_quadratic<T: Scalar>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    if n < 3 {
        return cumulative_trapezoid(x, y);
    }
    let mut out = Vec::with_capacity(n);
    let mut acc = T::zero();
    out.push(acc);
    for p in 0..n - 1 {
        let left = (p >= 1).then(|| quadratic_cell(x, y, p - 1, p));
        let right = (p + 2 < n).then(|| quadratic_cell(x, y, p, p));
        let cell = match (left, right) {
            (Some(l), Some(r)) => (l + r) * lit(0.5),
            (Some(v), None) | (None, Some(v)) => v,
            (None, None) => unreachable!("n >= 3"),
        };
        acc = acc + cell;
        out.push(acc);
    }
    out
}

/// Largest `x` in `[lo, hi]` with `pred(x)` true, assuming `pred` holds on a
/// prefix of the interval and `pred(lo)` is true.
pub fn bisect_last<T: Scalar>(mut lo: T, mut hi: T, tol: T, mut pred: impl FnMut(T) -> bool) -> T {
    if pred(hi) {
        return hi;
    }
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest `x` in `[lo, hi]` with `pred(x)` true, assuming `pred` holds on a
/// suffix of the interval and `pred(hi)` is true.
pub fn bisect_first<T: Scalar>(mut lo: T, mut hi: T, tol: T, mut pred: impl FnMut(T) -> bool) -> T {
    if pred(lo) {
        return lo;
    }
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Linear interpolation of `(xs, ys)` at `x`, flat outside the table.
pub fn interp<T: Scalar>(xs: &[T], ys: &[T], x: T) -> T {
    let n = xs.len();
    if n == 0 {
        return T::nan();
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let s = (x - x0) / (x1 - x0);
    ys[k - 1] + (ys[k] - ys[k - 1]) * s
}
