use alloc::vec;
use alloc::vec::Vec;

use crate::math;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric row-major matrix by cyclic Jacobi
/// rotations. Returns eigenvalues in descending order with matching
/// eigenvectors (each as a column, returned as `vectors[k]`).
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm: f64 = m.iter().map(|x| x * x).sum::<f64>();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i * n + j] * m[i * n + j]).sum();
        if off <= 1e-30 * norm.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    (values, vectors)
}

/// Double-centered Gram matrix `B = -1/2 J D^2 J`.
pub fn double_center(d: &[f64], n: usize) -> Vec<f64> {
    let mut sq: Vec<f64> = d.iter().map(|x| x * x).collect();
    let row_means: Vec<f64> = (0..n).map(|i| sq[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            sq[i * n + j] = -0.5 * (sq[i * n + j] - row_means[i] - row_means[j] + grand);
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (sq[i * n + j] + sq[j * n + i]);
            sq[i * n + j] = avg;
            sq[j * n + i] = avg;
        }
    }
    sq
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonalizes_small_matrix() {
        // eigenvalues of [[2,1],[1,2]] are 3 and 1
        let (vals, vecs) = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        let v = &vecs[0];
        assert!((v[0].abs() - v[1].abs()).abs() < 1e-14);
        assert!((v[0] * v[0] + v[1] * v[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let n = 6;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let x = ((i * 7 + j * 13) % 11) as f64 / 3.0 - 1.5;
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        let (vals, vecs) = symmetric_eigen(&a, n);
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| vals[k] * vecs[k][i] * vecs[k][j]).sum();
                assert!((r - a[i * n + j]).abs() < 1e-12);
            }
        }
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }
}
