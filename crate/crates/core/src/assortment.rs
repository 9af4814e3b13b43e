//! Capacity-constrained assortment optimization under MNL.
//!
//! [`static_mnl`] sweeps the intersection points of the lines
//! `λ ↦ w_i (r_i − λ)` (with preference weights `w_i = exp(v_i)`), collecting
//! `O(N²)` candidate assortments, and returns the best one. [`brute_force_best`]
//! enumerates every subset and serves as its oracle.

use std::cmp::Ordering;

use crate::choice::{revenue_unchecked, Assortment};
use crate::error::{ensure_dim, ensure_finite, Error, Result};

/// Pre-exponential utilities, revenues and a capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationInstance {
    utilities: Vec<f64>,
    revenues: Vec<f64>,
    capacity: usize,
}

impl OptimizationInstance {
    pub fn new(utilities: Vec<f64>, revenues: Vec<f64>, capacity: usize) -> Result<Self> {
        ensure_dim("revenues", utilities.len(), revenues.len())?;
        ensure_finite("utilities", &utilities)?;
        ensure_finite("revenues", &revenues)?;
        if revenues.iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidArgument("revenues must be nonnegative".into()));
        }
        if capacity == 0 || capacity > utilities.len() {
            return Err(Error::InvalidArgument(format!(
                "capacity {capacity} outside 1..={}",
                utilities.len()
            )));
        }
        Ok(Self {
            utilities,
            revenues,
            capacity,
        })
    }

    pub fn n_items(&self) -> usize {
        self.utilities.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn revenues(&self) -> &[f64] {
        &self.revenues
    }

    /// Expected revenue of offering `items` (catalog indices).
    pub fn revenue_of(&self, items: &[usize]) -> f64 {
        let u: Vec<f64> = items.iter().map(|&i| self.utilities[i]).collect();
        let r: Vec<f64> = items.iter().map(|&i| self.revenues[i]).collect();
        revenue_unchecked(&u, &r)
    }
}

/// Revenue gaps below this count as ties, which fall to the
/// lexicographically smaller index list.
const TIE_TOLERANCE: f64 = 1e-12;

fn better(rev: f64, items: &[usize], best_rev: f64, best_items: &[usize]) -> bool {
    if rev > best_rev + TIE_TOLERANCE {
        return true;
    }
    rev >= best_rev - TIE_TOLERANCE && items < best_items
}

struct Event {
    value: f64,
    i: usize,
    j: usize,
}

/// Exact optimum of `max_{|S| ≤ K} R(S)` via the StaticMNL candidate sweep.
pub fn static_mnl(instance: &OptimizationInstance) -> (Assortment, f64) {
    let n = instance.n_items();
    let k = instance.capacity;
    let r = &instance.revenues;
    // Weights relative to the largest utility; intersection points are
    // invariant to a common scaling of the weights.
    let shift = instance.utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = instance.utilities.iter().map(|v| (v - shift).exp()).collect();

    // Pairs use 1-based item labels; label 0 is the no-purchase line w = 0.
    let mut events = Vec::with_capacity(n * (n + 1) / 2);
    for j in 1..=n {
        events.push(Event {
            value: r[j - 1],
            i: 0,
            j,
        });
    }
    for i in 1..=n {
        for j in (i + 1)..=n {
            let (wi, wj) = (w[i - 1], w[j - 1]);
            if wi == wj {
                // Parallel lines never swap order.
                continue;
            }
            events.push(Event {
                value: (wi * r[i - 1] - wj * r[j - 1]) / (wi - wj),
                i,
                j,
            });
        }
    }
    events.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });

    // σ⁰: items by weight, descending; index order breaks ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut position = vec![0usize; n];
    for (pos, &item) in order.iter().enumerate() {
        position[item] = pos;
    }
    let mut dropped = vec![false; n];

    let mut best_items: Vec<usize> = Vec::new();
    let mut best_rev = 0.0;
    let mut consider = |order: &[usize], dropped: &[bool]| {
        let mut cand: Vec<usize> = order[..k].iter().copied().filter(|&i| !dropped[i]).collect();
        cand.sort_unstable();
        let rev = instance.revenue_of(&cand);
        if better(rev, &cand, best_rev, &best_items) {
            best_rev = rev;
            best_items = cand;
        }
    };
    consider(&order, &dropped);

    for ev in &events {
        if ev.i == 0 {
            dropped[ev.j - 1] = true;
        } else {
            let (a, b) = (ev.i - 1, ev.j - 1);
            // Past the crossing the lighter item ranks first; transpose only
            // if the heavier one is still ahead.
            let (light, heavy) = match w[a].partial_cmp(&w[b]) {
                Some(Ordering::Less) => (a, b),
                _ => (b, a),
            };
            if position[heavy] < position[light] {
                let (ph, pl) = (position[heavy], position[light]);
                order.swap(ph, pl);
                position[heavy] = pl;
                position[light] = ph;
            }
        }
        consider(&order, &dropped);
    }

    let assortment = Assortment::new(best_items, n, k).expect("candidates are valid assortments");
    (assortment, best_rev)
}

/// Largest enumeration accepted by [`brute_force_best`].
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exhaustive search over all subsets of size ≤ K, including the empty set.
pub fn brute_force_best(instance: &OptimizationInstance) -> Result<(Assortment, f64)> {
    let n = instance.n_items();
    let k = instance.capacity;
    let subsets: u128 = (0..=k).map(|s| binomial(n, s)).sum();
    if subsets > BRUTE_FORCE_LIMIT {
        return Err(Error::EnumerationTooLarge {
            subsets,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut best_items: Vec<usize> = Vec::new();
    let mut best_rev = 0.0;
    let mut current = Vec::with_capacity(k);
    enumerate(instance, 0, &mut current, &mut best_items, &mut best_rev);
    let assortment = Assortment::new(best_items, n, k).expect("enumerated subsets are valid");
    Ok((assortment, best_rev))
}

fn enumerate(
    instance: &OptimizationInstance,
    start: usize,
    current: &mut Vec<usize>,
    best_items: &mut Vec<usize>,
    best_rev: &mut f64,
) {
    let rev = instance.revenue_of(current);
    if better(rev, current, *best_rev, best_items) {
        *best_rev = rev;
        *best_items = current.clone();
    }
    if current.len() == instance.capacity {
        return;
    }
    for i in start..instance.n_items() {
        current.push(i);
        enumerate(instance, i + 1, current, best_items, best_rev);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inst(u: &[f64], r: &[f64], k: usize) -> OptimizationInstance {
        OptimizationInstance::new(u.to_vec(), r.to_vec(), k).unwrap()
    }

    #[test]
    fn singleton_with_positive_revenue_is_offered() {
        let (s, rev) = static_mnl(&inst(&[-3.0], &[0.5], 1));
        assert_eq!(s.items(), &[0]);
        assert!(rev > 0.0);
    }

    #[test]
    fn unit_revenues_pick_top_k_by_utility() {
        let u = [0.2, 1.5, -0.3, 0.9, 2.2, -1.0];
        let (s, _) = static_mnl(&inst(&u, &[1.0; 6], 3));
        assert_eq!(s.items(), &[1, 3, 4]);
    }

    #[test]
    fn brute_force_small_cases() {
        let (s, rev) = brute_force_best(&inst(&[0.0, 0.0], &[1.0, 1.0], 2)).unwrap();
        assert_eq!(s.items(), &[0, 1]);
        assert!((rev - 2.0 / 3.0).abs() < 1e-15);
        let (s, rev) = brute_force_best(&inst(&[0.3, -0.2, 1.0], &[0.0; 3], 2)).unwrap();
        assert!(s.is_empty());
        assert_eq!(rev, 0.0);
        let (s, _) = static_mnl(&inst(&[0.3, -0.2, 1.0], &[0.0; 3], 2));
        assert!(s.is_empty());
    }

    #[test]
    fn brute_force_guard() {
        let big = inst(&vec![0.0; 60], &vec![1.0; 60], 10);
        assert!(matches!(brute_force_best(&big), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn instance_validation() {
        assert!(OptimizationInstance::new(vec![0.0], vec![1.0], 2).is_err());
        assert!(OptimizationInstance::new(vec![0.0], vec![-1.0], 1).is_err());
        assert!(OptimizationInstance::new(vec![f64::NAN], vec![1.0], 1).is_err());
    }

    #[test]
    fn agrees_with_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..300 {
            let n = rng.random_range(1..=8);
            let k = rng.random_range(1..=n.min(4));
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            let i = inst(&u, &r, k);
            let (a, ra) = static_mnl(&i);
            let (b, rb) = brute_force_best(&i).unwrap();
            assert!((ra - rb).abs() < 1e-9, "{u:?} {r:?} {k}");
            assert_eq!(a, b);
        }
    }

    #[test]
    fn large_clamped_utilities_stay_exact() {
        let u = [50.0, 49.0, -50.0, 10.0, 50.0];
        let r = [0.3, 1.0, 2.0, 0.7, 0.1];
        let i = inst(&u, &r, 2);
        let (_, ra) = static_mnl(&i);
        let (_, rb) = brute_force_best(&i).unwrap();
        assert!((ra - rb).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn scaling_revenues_scales_optimum(
            pairs in prop::collection::vec((-2.0f64..2.0, 0.0f64..2.0), 1..7),
            k_seed in 0usize..4,
            lambda in 0.1f64..5.0,
        ) {
            let (u, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let k = 1 + k_seed % u.len();
            let base = inst(&u, &r, k);
            let scaled_r: Vec<f64> = r.iter().map(|x| x * lambda).collect();
            let scaled = inst(&u, &scaled_r, k);
            let (s1, v1) = static_mnl(&base);
            let (s2, v2) = static_mnl(&scaled);
            prop_assert!((v2 - lambda * v1).abs() < 1e-9);
            prop_assert_eq!(s1, s2);
        }

        #[test]
        fn duplicating_an_item_never_hurts(
            pairs in prop::collection::vec((-2.0f64..2.0, 0.0f64..2.0), 1..6),
            dup in 0usize..6,
            k_seed in 0usize..4,
        ) {
            let (mut u, mut r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let k = 1 + k_seed % u.len();
            let (_, before) = static_mnl(&inst(&u, &r, k));
            let d = dup % u.len();
            u.push(u[d]);
            r.push(r[d]);
            let (s, after) = static_mnl(&inst(&u, &r, k));
            prop_assert!(after >= before - 1e-12);
            prop_assert!(s.len() <= k);
        }
    }
}
