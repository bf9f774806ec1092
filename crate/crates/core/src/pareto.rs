//! Dominance on (fewer parameters, higher accuracy).

use alloc::vec::Vec;

/// `a` dominates `b` when it is no larger, no less accurate, and strictly better in one.
pub fn dominates(a: (u64, f64), b: (u64, f64)) -> bool {
    a.0 <= b.0 && a.1 >= b.1 && (a.0 < b.0 || a.1 > b.1)
}

/// Indices of non-dominated points, in input order. Exact ties are all kept.
pub fn pareto_front(points: &[(u64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|&p| dominates(p, points[i])))
        .collect()
}
