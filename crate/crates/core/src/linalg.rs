//! Small fixed-size dense linear algebra.
//!
//! Everything here is deterministic: cyclic Jacobi sweeps in a fixed pivot
//! order, no data-dependent reordering beyond the final sort. The solvers are
//! sized for two-view geometry (3×3 SVD, 9×9 symmetric eigenproblems).

#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

const MAX_SWEEPS: usize = 80;

#[inline]
pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn normalize3(a: &Vec3) -> Vec3 {
    let n = norm3(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

pub fn scale3(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
        }
    }
    out
}

pub fn mat3_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [dot3(&a[0], v), dot3(&a[1], v), dot3(&a[2], v)]
}

pub fn transpose3(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            out[c][r] = *v;
        }
    }
    out
}

pub fn det3(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Inverse by cofactors; `None` when the determinant vanishes.
pub fn inverse3(a: &Mat3) -> Option<Mat3> {
    let det = det3(a);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    out[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * inv_det;
    out[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv_det;
    out[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv_det;
    out[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * inv_det;
    out[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv_det;
    out[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv_det;
    out[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * inv_det;
    out[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv_det;
    out[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv_det;
    Some(out)
}

pub fn frobenius3(a: &Mat3) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn scale_mat3(a: &Mat3, s: f64) -> Mat3 {
    let mut out = *a;
    out.iter_mut().flatten().for_each(|v| *v *= s);
    out
}

/// Cross-product matrix `[t]_×`, so that `skew(t)·v == t × v`.
pub fn skew(t: &Vec3) -> Mat3 {
    [[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]]
}

/// Rotation about a unit axis by `angle` radians (Rodrigues).
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let a = normalize3(axis);
    let (s, c) = (angle.sin(), angle.cos());
    let k = skew(&a);
    let k2 = mat3_mul(&k, &k);
    let mut r = IDENTITY3;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += s * k[i][j] + (1.0 - c) * k2[i][j];
        }
    }
    r
}

pub fn flatten3(a: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = a[r][c];
        }
    }
    out
}

pub fn unflatten3(v: &[f64]) -> Mat3 {
    [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]
}

/// Eigen-decomposition of a symmetric `N×N` matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as *columns* of the second array (`vectors[row][k]` is row
/// `row` of eigenvector `k`). Only the upper triangle is read.
pub fn symmetric_eigen<const N: usize>(input: &[[f64; N]; N]) -> ([f64; N], [[f64; N]; N]) {
    let mut a = *input;
    for i in 0..N {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
    }
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p][p];
                let aqq = a[q][q];
                if apq.abs() <= f64::EPSILON * 0.5 * (app.abs() * aqq.abs()).sqrt() {
                    a[p][q] = 0.0;
                    a[q][p] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..N {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order = [0usize; N];
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    // insertion sort keeps equal eigenvalues in pivot order
    for i in 1..N {
        let mut j = i;
        while j > 0 && a[order[j - 1]][order[j - 1]] > a[order[j]][order[j]] {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut values = [0.0; N];
    let mut vectors = [[0.0; N]; N];
    for (k, &src) in order.iter().enumerate() {
        values[k] = a[src][src];
        for r in 0..N {
            vectors[r][k] = v[r][src];
        }
    }
    (values, vectors)
}

/// Singular value decomposition of a 3×3 matrix, `a = u · diag(s) · vᵀ`.
///
/// One-sided (Hestenes) Jacobi; singular values are returned in descending
/// order. `u` and `v` are orthogonal but their determinants are not fixed.
#[derive(Debug, Clone, Copy)]
pub struct Svd3 {
    pub u: Mat3,
    pub s: Vec3,
    pub v: Mat3,
}

pub fn svd3(a: &Mat3) -> Svd3 {
    // columns of `w` converge to u_j * s_j
    let mut w = *a;
    let mut v = IDENTITY3;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..3 {
            for q in (p + 1)..3 {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for row in w.iter() {
                    alpha += row[p] * row[p];
                    beta += row[q] * row[q];
                    gamma += row[p] * row[q];
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * 0.5 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for row in w.iter_mut() {
                    let wp = row[p];
                    let wq = row[q];
                    row[p] = c * wp - s * wq;
                    row[q] = s * wp + c * wq;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sig = [0.0; 3];
    for (j, s) in sig.iter_mut().enumerate() {
        *s = (w[0][j] * w[0][j] + w[1][j] * w[1][j] + w[2][j] * w[2][j]).sqrt();
    }
    let mut order = [0usize, 1, 2];
    for i in 1..3 {
        let mut j = i;
        while j > 0 && sig[order[j - 1]] < sig[order[j]] {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut s = [0.0; 3];
    let mut u_cols = [[0.0; 3]; 3];
    let mut v_out = [[0.0; 3]; 3];
    let tiny = sig[order[0]] * 1e-14;
    let mut valid = [false; 3];
    for (k, &src) in order.iter().enumerate() {
        s[k] = sig[src];
        for r in 0..3 {
            v_out[r][k] = v[r][src];
        }
        if sig[src] > tiny && sig[src] > 0.0 {
            u_cols[k] = [w[0][src] / sig[src], w[1][src] / sig[src], w[2][src] / sig[src]];
            valid[k] = true;
        }
    }
    // complete u to an orthonormal basis where singular values vanish
    if !valid[0] {
        u_cols[0] = [1.0, 0.0, 0.0];
        valid[0] = true;
    }
    if !valid[1] {
        let c = &u_cols[0];
        let pick = if c[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        u_cols[1] = normalize3(&cross3(c, &pick));
        valid[1] = true;
    }
    if !valid[2] {
        u_cols[2] = cross3(&u_cols[0], &u_cols[1]);
    }
    let mut u = [[0.0; 3]; 3];
    for k in 0..3 {
        for r in 0..3 {
            u[r][k] = u_cols[k][r];
        }
    }
    Svd3 { u, s, v: v_out }
}

pub fn from_svd(u: &Mat3, s: &Vec3, v: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, val) in row.iter_mut().enumerate() {
            *val = (0..3).map(|k| u[r][k] * s[k] * v[c][k]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &Mat3, b: &Mat3) -> f64 {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn eigen_reconstructs_symmetric_matrix() {
        let m = [[4.0, 1.0, -2.0], [1.0, 3.0, 0.5], [-2.0, 0.5, 1.0]];
        let (vals, vecs) = symmetric_eigen(&m);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        for k in 0..3 {
            let col = [vecs[0][k], vecs[1][k], vecs[2][k]];
            let mv = mat3_vec(&m, &col);
            for r in 0..3 {
                assert!((mv[r] - vals[k] * col[r]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn eigen_handles_repeated_and_zero_values() {
        let m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
        let (vals, _) = symmetric_eigen(&m);
        assert_eq!(vals, [0.0, 1.0, 1.0]);
    }

    #[test]
    fn svd_reconstructs_and_orders() {
        let a = [[0.3, -1.2, 2.0], [0.7, 0.1, -0.4], [1.5, 2.2, 0.9]];
        let d = svd3(&a);
        assert!(d.s[0] >= d.s[1] && d.s[1] >= d.s[2]);
        assert!(max_abs_diff(&from_svd(&d.u, &d.s, &d.v), &a) < 1e-13);
        let utu = mat3_mul(&transpose3(&d.u), &d.u);
        let vtv = mat3_mul(&transpose3(&d.v), &d.v);
        assert!(max_abs_diff(&utu, &IDENTITY3) < 1e-13);
        assert!(max_abs_diff(&vtv, &IDENTITY3) < 1e-13);
    }

    #[test]
    fn svd_of_rank_two_matrix_completes_basis() {
        let t = [0.2, -0.5, 1.0];
        let r = axis_angle(&[0.1, 1.0, 0.3], 0.4);
        let e = mat3_mul(&skew(&t), &r);
        let d = svd3(&e);
        assert!(d.s[2].abs() < 1e-14);
        assert!((d.s[0] - d.s[1]).abs() < 1e-13);
        let utu = mat3_mul(&transpose3(&d.u), &d.u);
        assert!(max_abs_diff(&utu, &IDENTITY3) < 1e-12);
        assert!(max_abs_diff(&from_svd(&d.u, &d.s, &d.v), &e) < 1e-13);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = [[2.0, 0.1, 0.0], [0.0, 3.0, 1.0], [0.5, 0.0, 1.0]];
        let inv = inverse3(&a).unwrap();
        assert!(max_abs_diff(&mat3_mul(&a, &inv), &IDENTITY3) < 1e-14);
        assert!(inverse3(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_none());
    }
}
