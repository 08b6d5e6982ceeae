use mechd_core::ironing::{concave_majorant, cumulative_on, iron_on, iron_weighted, ScreeningTransform};
use mechd_core::quad::trapezoid_weights;
use proptest::prelude::*;

fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Upper concave majorant by its definition: the best chord over every
/// pair of points straddling `x[k]`.
fn brute_force_hull(x: &[f64], g: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut best = g[k];
            for i in 0..=k {
                for j in k..n {
                    if i == j {
                        continue;
                    }
                    let s = (x[k] - x[i]) / (x[j] - x[i]);
                    best = best.max(g[i] + s * (g[j] - g[i]));
                }
            }
            best
        })
        .collect()
}

fn weighted_sum(h: &[f64], w: &[f64]) -> f64 {
    h.iter().zip(w).map(|(a, b)| a * b).sum()
}

#[test]
fn chord_example_irons_to_one_half() {
    let z = unit_grid(2001);
    let t = ScreeningTransform::new(z.iter().map(|x| 1.0 - x).collect(), 0.0);
    let r = iron_on(&t, &z, &z);
    assert!(r.ironed.iter().all(|h| (h - 0.5).abs() < 1e-12));
    assert_eq!(r.pools.len(), 1);
    assert_eq!((r.pools[0].first, r.pools[0].last), (0, 2000));
}

#[test]
fn atom_at_bottom_forms_a_pool() {
    let z = unit_grid(101);
    let t = ScreeningTransform::new(z.clone(), 0.2);
    let r = iron_on(&t, &z, &z);
    let w = trapezoid_weights(&z);
    assert!((weighted_sum(&r.ironed, &w) - (weighted_sum(&t.base, &w) + 0.2)).abs() < 1e-12);
    let pool = r.pools[0];
    assert_eq!(pool.first, 0);
    assert!(pool.last > 0);
    let level = r.ironed[0];
    assert!(r.ironed[pool.last + 1] >= level);
}

#[test]
fn cumulative_carries_atom_at_zero() {
    let z = unit_grid(11);
    let t = ScreeningTransform::new(vec![1.0; 11], 0.3);
    let c = cumulative_on(&t, &z);
    assert!((c.g[0] - 1.3).abs() < 1e-14);
    assert_eq!(*c.g.last().unwrap(), 0.0);
}

fn grid_and_weights(gaps: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = gaps.iter().sum();
    let mut z = vec![0.0];
    let mut acc = 0.0;
    for g in gaps {
        acc += g / total;
        z.push(acc);
    }
    *z.last_mut().unwrap() = 1.0;
    let w = trapezoid_weights(&z);
    (z, w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nondecreasing_input_passes_through(mut h in prop::collection::vec(-5.0f64..5.0, 2..200),
                                          gaps in prop::collection::vec(0.1f64..1.0, 199)) {
        h.sort_by(f64::total_cmp);
        let (z, w) = grid_and_weights(&gaps[..h.len() - 1]);
        let r = iron_weighted(&h, 0.0, &w, &z);
        for (a, b) in r.ironed.iter().zip(&h) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn ironing_is_monotone_mass_preserving_and_idempotent(
        h in prop::collection::vec(-5.0f64..5.0, 2..200),
        gaps in prop::collection::vec(0.1f64..1.0, 199),
        atom in prop_oneof![Just(0.0), 0.0f64..2.0],
    ) {
        let (z, w) = grid_and_weights(&gaps[..h.len() - 1]);
        let r = iron_weighted(&h, atom, &w, &z);
        for k in 1..h.len() {
            prop_assert!(r.ironed[k] >= r.ironed[k - 1] - 1e-9);
        }
        let total = weighted_sum(&h, &w) + atom;
        prop_assert!((weighted_sum(&r.ironed, &w) - total).abs() <= 1e-9 * (1.0 + total.abs()));

        for p in &r.pools {
            let lhs: f64 = (p.first..=p.last).map(|k| r.ironed[k] * w[k]).sum();
            let mut rhs: f64 = (p.first..=p.last).map(|k| h[k] * w[k]).sum();
            if p.first == 0 {
                rhs += atom;
            }
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
        let mut covered = vec![false; h.len()];
        for p in &r.pools {
            for c in covered.iter_mut().take(p.last + 1).skip(p.first) {
                *c = true;
            }
        }
        for k in 0..h.len() {
            if !covered[k] {
                prop_assert!((r.ironed[k] - h[k]).abs() <= 1e-9 * (1.0 + h[k].abs()));
            }
        }

        let again = iron_weighted(&r.ironed, 0.0, &w, &z);
        for (a, b) in again.ironed.iter().zip(&r.ironed) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn monotone_chain_matches_pairwise_chords(
        g in prop::collection::vec(-3.0f64..3.0, 2..200),
        gaps in prop::collection::vec(0.1f64..1.0, 199),
    ) {
        let (x, _) = grid_and_weights(&gaps[..g.len() - 1]);
        let fast = concave_majorant(&x, &g);
        let slow = brute_force_hull(&x, &g);
        for k in 0..g.len() {
            prop_assert!((fast[k] - slow[k]).abs() <= 1e-12 * (1.0 + slow[k].abs()),
                "k = {}: {} vs {}", k, fast[k], slow[k]);
            prop_assert!(fast[k] >= g[k] - 1e-12);
        }
    }
}
