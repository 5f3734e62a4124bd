//! Planar homographies: normalised DLT and corner-warp error.

#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;
use alloc::vec::Vec;

use crate::geometry::{Correspondence, GeometryError};
use crate::linalg::{self, inverse3, mat3_mul, mat3_vec, Mat3};

/// Collinearity tolerance on triangle area (Hartley-normalised units).
pub const COLLINEAR_AREA_TOL: f64 = 1e-10;

/// Nonsingular 3×3 homography, scaled so its largest-magnitude entry is `+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub h: Mat3,
}

impl Homography {
    pub fn new(h: &Mat3) -> Result<Self, GeometryError> {
        let mut best = 0.0f64;
        for v in h.iter().flatten() {
            if v.abs() > best.abs() {
                best = *v;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(GeometryError::Degenerate("zero homography"));
        }
        let h = linalg::scale_mat3(h, 1.0 / best);
        if linalg::det3(&h).abs() < 1e-14 {
            return Err(GeometryError::Degenerate("singular homography"));
        }
        Ok(Self { h })
    }

    pub fn identity() -> Self {
        Self { h: linalg::IDENTITY3 }
    }

    /// Maps a point; `None` if it lands at infinity (`|w| < 1e-12`).
    pub fn apply(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let q = mat3_vec(&self.h, &[p[0], p[1], 1.0]);
        if q[2].abs() < 1e-12 {
            None
        } else {
            Some([q[0] / q[2], q[1] / q[2]])
        }
    }

    /// Forward transfer error `‖H x − x′‖`, `+∞` at infinity.
    pub fn transfer_error(&self, c: &Correspondence) -> f64 {
        match self.apply(c.x) {
            Some(p) => ((p[0] - c.x_prime[0]).powi(2) + (p[1] - c.x_prime[1]).powi(2)).sqrt(),
            None => f64::INFINITY,
        }
    }

    pub fn compose(&self, other: &Homography) -> Result<Homography, GeometryError> {
        Homography::new(&mat3_mul(&self.h, &other.h))
    }

    /// Frobenius distance between unit-norm representatives, minimised over sign.
    pub fn distance(&self, other: &Homography) -> f64 {
        let a = linalg::scale_mat3(&self.h, 1.0 / linalg::frobenius3(&self.h));
        let b = linalg::scale_mat3(&other.h, 1.0 / linalg::frobenius3(&other.h));
        let mut plus = 0.0;
        let mut minus = 0.0;
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            plus += (x - y) * (x - y);
            minus += (x + y) * (x + y);
        }
        plus.min(minus).sqrt()
    }
}

/// Similarity taking the centroid to the origin and the mean distance to √2.
fn hartley_transform(points: &[[f64; 2]]) -> Result<Mat3, GeometryError> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean_dist =
        points.iter().map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()).sum::<f64>() / n;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return Err(GeometryError::Degenerate("coincident points"));
    }
    let s = core::f64::consts::SQRT_2 / mean_dist;
    Ok([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])
}

fn apply_affine(t: &Mat3, p: &[f64; 2]) -> [f64; 2] {
    [t[0][0] * p[0] + t[0][1] * p[1] + t[0][2], t[1][0] * p[0] + t[1][1] * p[1] + t[1][2]]
}

fn triangle_area(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
}

/// Direct linear transform with Hartley normalisation of both point sets.
///
/// Minimal (four-point) inputs are checked triple by triple for
/// collinearity; larger inputs rely on the rank test of the DLT system.
pub fn dlt_homography(corrs: &[Correspondence]) -> Result<Homography, GeometryError> {
    if corrs.len() < 4 {
        return Err(GeometryError::RankDeficient { required: 4, got: corrs.len() });
    }
    if let Some(i) = corrs.iter().position(|c| !c.is_finite()) {
        return Err(GeometryError::NonFinite(i));
    }
    let src: Vec<[f64; 2]> = corrs.iter().map(|c| c.x).collect();
    let dst: Vec<[f64; 2]> = corrs.iter().map(|c| c.x_prime).collect();
    let t1 = hartley_transform(&src)?;
    let t2 = hartley_transform(&dst)?;
    let src_n: Vec<[f64; 2]> = src.iter().map(|p| apply_affine(&t1, p)).collect();
    let dst_n: Vec<[f64; 2]> = dst.iter().map(|p| apply_affine(&t2, p)).collect();

    if src_n.len() == 4 {
        for i in 0..4 {
            for j in (i + 1)..4 {
                for k in (j + 1)..4 {
                    if triangle_area(&src_n[i], &src_n[j], &src_n[k]) < COLLINEAR_AREA_TOL {
                        return Err(GeometryError::Degenerate("collinear source points"));
                    }
                }
            }
        }
    }

    let mut ata = [[0.0; 9]; 9];
    let mut accumulate = |row: &[f64; 9]| {
        for r in 0..9 {
            for k in r..9 {
                ata[r][k] += row[r] * row[k];
            }
        }
    };
    for (p, q) in src_n.iter().zip(&dst_n) {
        let (x, y) = (p[0], p[1]);
        let (u, v) = (q[0], q[1]);
        accumulate(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
        accumulate(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
    }
    let (vals, vecs) = linalg::symmetric_eigen(&ata);
    if vals[1] - vals[0] <= 1e-12 * vals[8].abs() {
        return Err(GeometryError::Degenerate("rank-deficient DLT system"));
    }
    let hn: Vec<f64> = (0..9).map(|r| vecs[r][0]).collect();
    let hn = linalg::unflatten3(&hn);
    let t2_inv = inverse3(&t2).ok_or(GeometryError::Degenerate("normalisation"))?;
    Homography::new(&mat3_mul(&mat3_mul(&t2_inv, &hn), &t1))
}

/// Mean distance between the four image corners warped by `est` and `gt`.
pub fn homography_corner_error(est: &Homography, gt: &Homography, width: f64, height: f64) -> f64 {
    let corners = [[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]];
    let mut total = 0.0;
    for c in corners {
        match (est.apply(c), gt.apply(c)) {
            (Some(a), Some(b)) => total += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
            _ => return f64::INFINITY,
        }
    }
    total / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn warp(h: &Homography, pts: &[[f64; 2]]) -> Vec<Correspondence> {
        pts.iter().map(|p| Correspondence::new(*p, h.apply(*p).unwrap())).collect()
    }

    #[test]
    fn identity_from_unit_square() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let h = dlt_homography(&warp(&Homography::identity(), &sq)).unwrap();
        assert!(h.distance(&Homography::identity()) < 1e-12);
    }

    #[test]
    fn recovers_projective_map() {
        let gt = Homography::new(&[[1.1, 0.05, 3.0], [-0.02, 0.95, -2.0], [1e-3, -2e-3, 1.0]]).unwrap();
        let pts: Vec<[f64; 2]> =
            (0..8).map(|i| [10.0 * (i as f64 * 1.3).sin() + 20.0, 15.0 * (i as f64 * 0.7).cos()]).collect();
        let corrs = warp(&gt, &pts);
        let h = dlt_homography(&corrs).unwrap();
        assert!(h.distance(&gt) < 1e-8);
        for c in &corrs {
            assert!(h.transfer_error(c) < 1e-8);
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let corrs: Vec<_> = pts.iter().map(|p| Correspondence::new(*p, *p)).collect();
        assert!(matches!(dlt_homography(&corrs), Err(GeometryError::Degenerate(_))));
        let three_collinear = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]];
        let corrs: Vec<_> = three_collinear.iter().map(|p| Correspondence::new(*p, *p)).collect();
        assert!(dlt_homography(&corrs).is_err());
    }

    #[test]
    fn corner_error_of_translation() {
        let gt = Homography::new(&[[1.0, 0.1, 5.0], [0.0, 1.2, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(homography_corner_error(&gt, &gt, 128.0, 96.0), 0.0);
        let shift = Homography::new(&[[1.0, 0.0, 3.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let est = shift.compose(&gt).unwrap();
        assert!((homography_corner_error(&est, &gt, 128.0, 96.0) - 3.0).abs() < 1e-12);
    }
}
