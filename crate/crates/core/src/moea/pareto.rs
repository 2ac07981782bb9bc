//! Pareto dominance, fast non-dominated sorting and crowding distance.
//! All objectives are maximized.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `a` dominates `b`: no worse on every objective, strictly better on one.
pub fn dominates<S: PartialOrd>(a: &[S], b: &[S]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
pub(crate) fn dominates_unchecked<S: PartialOrd>(a: &[S], b: &[S]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Splits `scores` into fronts of indices; front 0 is non-dominated.
pub fn fast_nondominated_sort<S: PartialOrd, V: AsRef<[S]>>(scores: &[V]) -> Vec<Vec<usize>> {
    let n = scores.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (scores[i].as_ref(), scores[j].as_ref());
            if dominates_unchecked(a, b) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates_unchecked(b, a) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of one front. Extremes of every
/// objective get `+∞`; an objective with zero range contributes nothing.
pub fn crowding_distance<S: Scalar, V: AsRef<[S]>>(front: &[V]) -> Vec<S> {
    let n = front.len();
    if n == 0 {
        return Vec::new();
    }
    if n <= 2 {
        return vec![S::infinity(); n];
    }
    let m = front[0].as_ref().len();
    let mut distance = vec![S::zero(); n];
    let mut order: Vec<usize> = (0..n).collect();
    for obj in 0..m {
        let value = |i: usize| front[i].as_ref()[obj];
        order.sort_by(|&a, &b| value(a).partial_cmp(&value(b)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let lo = value(order[0]);
        let hi = value(order[n - 1]);
        distance[order[0]] = S::infinity();
        distance[order[n - 1]] = S::infinity();
        let range = hi - lo;
        if range <= S::zero() {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if distance[i].is_infinite() {
                continue;
            }
            distance[i] = distance[i] + (value(order[w + 1]) - value(order[w - 1])) / range;
        }
    }
    distance
}
