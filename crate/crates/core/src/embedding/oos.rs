use alloc::vec::Vec;

use crate::math;

const MAX_ITERATIONS: usize = 500;
const GRADIENT_TOLERANCE: f64 = 1e-10;
const RING_STARTS: usize = 8;

/// Raw stress `sum_i (|y - x_i| - delta_i)^2`.
pub fn stress(y: [f64; 2], base: &[[f64; 2]], delta: &[f64]) -> f64 {
    base.iter()
        .zip(delta)
        .map(|(x, &d)| {
            let r = math::hypot(y[0] - x[0], y[1] - x[1]) - d;
            r * r
        })
        .sum()
}

fn gradient(y: [f64; 2], base: &[[f64; 2]], delta: &[f64]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (x, &d) in base.iter().zip(delta) {
        let (dx, dy) = (y[0] - x[0], y[1] - x[1]);
        let dist = math::hypot(dx, dy);
        if dist > 0.0 {
            let r = dist - d;
            g[0] += 2.0 * r * dx / dist;
            g[1] += 2.0 * r * dy / dist;
        }
    }
    g
}

/// Levenberg-damped Gauss-Newton from `start`.
fn descend(start: [f64; 2], base: &[[f64; 2]], delta: &[f64]) -> [f64; 2] {
    let mut y = start;
    let mut current = stress(y, base, delta);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let g = gradient(y, base, delta);
        if math::hypot(g[0], g[1]) <= GRADIENT_TOLERANCE {
            break;
        }
        // J^T J and J^T r
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for x in base {
            let (dx, dy) = (y[0] - x[0], y[1] - x[1]);
            let dist = math::hypot(dx, dy);
            if dist > 0.0 {
                let (jx, jy) = (dx / dist, dy / dist);
                a += jx * jx;
                b += jx * jy;
                c += jy * jy;
            }
        }
        let (gx, gy) = (0.5 * g[0], 0.5 * g[1]);
        let mut improved = false;
        for _ in 0..60 {
            let (a2, c2) = (a + lambda * (1.0 + a), c + lambda * (1.0 + c));
            let det = a2 * c2 - b * b;
            if det <= 0.0 || !det.is_finite() {
                lambda *= 4.0;
                continue;
            }
            let step = [-(c2 * gx - b * gy) / det, -(a2 * gy - b * gx) / det];
            let cand = [y[0] + step[0], y[1] + step[1]];
            let s = stress(cand, base, delta);
            if s < current {
                y = cand;
                current = s;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    y
}

/// Weighted centroid with weights `delta^-2`; exact matches dominate.
pub fn weighted_centroid(base: &[[f64; 2]], delta: &[f64]) -> [f64; 2] {
    let zeros: Vec<&[f64; 2]> = base.iter().zip(delta).filter(|(_, &d)| d == 0.0).map(|(x, _)| x).collect();
    if !zeros.is_empty() {
        let n = zeros.len() as f64;
        return [zeros.iter().map(|x| x[0]).sum::<f64>() / n, zeros.iter().map(|x| x[1]).sum::<f64>() / n];
    }
    let mut acc = [0.0; 2];
    let mut total = 0.0;
    for (x, &d) in base.iter().zip(delta) {
        let w = 1.0 / (d * d);
        acc[0] += w * x[0];
        acc[1] += w * x[1];
        total += w;
    }
    [acc[0] / total, acc[1] / total]
}

/// Minimizes raw stress over several deterministic starts. Ties between
/// equally good minima go to larger `y`, then larger `x`.
pub fn place(base: &[[f64; 2]], delta: &[f64]) -> [f64; 2] {
    let centroid = weighted_centroid(base, delta);
    let mean_delta = delta.iter().sum::<f64>() / delta.len().max(1) as f64;
    let radius = if mean_delta > 0.0 { mean_delta } else { 1.0 };
    let mut starts = Vec::with_capacity(RING_STARTS + 1);
    starts.push(centroid);
    for k in 0..RING_STARTS {
        let angle = (k as f64 + 0.5) * 2.0 * core::f64::consts::PI / RING_STARTS as f64;
        starts.push([centroid[0] + radius * libm::cos(angle), centroid[1] + radius * libm::sin(angle)]);
    }
    let mut best: Option<([f64; 2], f64)> = None;
    for s in starts {
        let y = descend(s, base, delta);
        let sy = stress(y, base, delta);
        best = Some(match best {
            None => (y, sy),
            Some((b, sb)) => {
                let tol = 1e-9 * (1.0 + sb.abs());
                if sy < sb - tol || (sy <= sb + tol && prefer(y, b)) {
                    (y, sy)
                } else {
                    (b, sb)
                }
            }
        });
    }
    best.map(|(y, _)| y).unwrap_or(centroid)
}

fn prefer(a: [f64; 2], b: [f64; 2]) -> bool {
    const SAME: f64 = 1e-7;
    if (a[1] - b[1]).abs() > SAME {
        a[1] > b[1]
    } else {
        a[0] > b[0] + SAME
    }
}
