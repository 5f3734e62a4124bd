//! Calibrated two-view geometry: normalisation, weighted eight-point
//! estimation, pose recovery and residual metrics.

#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;
use alloc::vec::Vec;
use thiserror::Error;

use crate::linalg::{
    self, cross3, dot3, from_svd, mat3_mul, mat3_vec, norm3, normalize3, skew, svd3, transpose3,
    Mat3, Vec3,
};

/// Weights at or below this floor do not count towards the eight-point rank requirement.
pub const WEIGHT_FLOOR: f64 = 1e-5;
/// Default bound on the magnitude of normalised coordinates.
pub const DEFAULT_FRUSTUM_BOUND: f64 = 10.0;
/// Rays closer than this angle (radians) are not triangulated.
pub const PARALLEL_RAY_ANGLE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("need at least {required} effective correspondences, got {got}")]
    RankDeficient { required: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
    #[error("no pose candidate places any point in front of both cameras")]
    CheiralityFailure,
    #[error("weight vector length {got} does not match {expected} correspondences")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid weight at index {0}")]
    InvalidWeight(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        Self::with_skew(fx, fy, cx, cy, 0.0)
    }

    pub fn with_skew(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, skew };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("fx must be positive"));
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("fy must be positive"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite() && self.skew.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("non-finite entry"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
    }

    /// `K⁻¹·[p;1]`, dehomogenised.
    pub fn normalize(&self, pixel: [f64; 2]) -> [f64; 2] {
        let y = (pixel[1] - self.cy) / self.fy;
        let x = (pixel[0] - self.cx - self.skew * y) / self.fx;
        [x, y]
    }

    /// `K·[p;1]`, dehomogenised.
    pub fn denormalize(&self, p: [f64; 2]) -> [f64; 2] {
        [self.fx * p[0] + self.skew * p[1] + self.cx, self.fy * p[1] + self.cy]
    }
}

/// Maps pixel coordinates to normalised camera coordinates.
pub fn normalize_points(
    pixels: &[[f64; 2]],
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<[f64; 2]>, GeometryError> {
    intrinsics.validate()?;
    pixels
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p[0].is_finite() && p[1].is_finite() {
                Ok(intrinsics.normalize(*p))
            } else {
                Err(GeometryError::NonFinite(i))
            }
        })
        .collect()
}

/// A putative match between normalised coordinates in two views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub x: [f64; 2],
    pub x_prime: [f64; 2],
    pub label: Option<bool>,
}

impl Correspondence {
    pub fn new(x: [f64; 2], x_prime: [f64; 2]) -> Self {
        Self { x, x_prime, label: None }
    }

    pub fn labeled(x: [f64; 2], x_prime: [f64; 2], inlier: bool) -> Self {
        Self { x, x_prime, label: Some(inlier) }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.x_prime.iter()).all(|v| v.is_finite())
    }

    /// Finite and inside the normalised frustum `bound` (Euclidean norm, both views).
    pub fn within(&self, bound: f64) -> bool {
        self.is_finite()
            && (self.x[0] * self.x[0] + self.x[1] * self.x[1]).sqrt() <= bound
            && (self.x_prime[0] * self.x_prime[0] + self.x_prime[1] * self.x_prime[1]).sqrt() <= bound
    }

    pub fn lift(&self) -> (Vec3, Vec3) {
        ([self.x[0], self.x[1], 1.0], [self.x_prime[0], self.x_prime[1], 1.0])
    }
}

/// Anchor point plus displacement between the two views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionVector {
    pub anchor: [f64; 2],
    pub displacement: [f64; 2],
}

impl MotionVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.anchor[0], self.anchor[1], self.displacement[0], self.displacement[1]]
    }
}

pub fn motion_vectors(corrs: &[Correspondence]) -> Vec<MotionVector> {
    corrs
        .iter()
        .map(|c| MotionVector {
            anchor: c.x,
            displacement: [c.x_prime[0] - c.x[0], c.x_prime[1] - c.x[1]],
        })
        .collect()
}

/// Unit-Frobenius essential matrix in canonical sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix {
    pub e: Mat3,
}

impl EssentialMatrix {
    /// Builds `[t]_× R` and brings it to canonical form.
    pub fn from_pose(pose: &RelativePose) -> Self {
        Self { e: canonical_essential(&mat3_mul(&skew(&pose.translation), &pose.rotation)) }
    }

    /// Canonicalises an arbitrary matrix without projecting it.
    pub fn from_raw(e: &Mat3) -> Self {
        Self { e: canonical_essential(e) }
    }

    /// Closest essential matrix in Frobenius norm, canonicalised.
    pub fn project(m: &Mat3) -> Self {
        let d = svd3(m);
        let sigma = 0.5 * (d.s[0] + d.s[1]);
        Self::from_raw(&from_svd(&d.u, &[sigma, sigma, 0.0], &d.v))
    }

    pub fn flat(&self) -> [f64; 9] {
        linalg::flatten3(&self.e)
    }

    /// `x′ᵀ E x` with homogeneous lifts.
    pub fn algebraic_residual(&self, c: &Correspondence) -> f64 {
        let (x, xp) = c.lift();
        dot3(&xp, &mat3_vec(&self.e, &x))
    }

    /// Frobenius distance to `other` modulo the sign ambiguity.
    pub fn distance(&self, other: &EssentialMatrix) -> f64 {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for (a, b) in self.e.iter().flatten().zip(other.e.iter().flatten()) {
            plus += (a - b) * (a - b);
            minus += (a + b) * (a + b);
        }
        plus.min(minus).sqrt()
    }
}

/// Unit Frobenius norm, first entry with `|·| > 1e-9` (row-major) positive.
pub fn canonical_essential(m: &Mat3) -> Mat3 {
    let n = linalg::frobenius3(m);
    if n == 0.0 || !n.is_finite() {
        return *m;
    }
    let mut out = linalg::scale_mat3(m, 1.0 / n);
    if let Some(first) = out.iter().flatten().copied().find(|v| v.abs() > 1e-9) {
        if first < 0.0 {
            out = linalg::scale_mat3(&out, -1.0);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RelativePose {
    /// Normalises the translation to unit length.
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation: normalize3(&translation) }
    }

    pub fn identity_rotation(translation: Vec3) -> Self {
        Self::new(linalg::IDENTITY3, translation)
    }

    /// Maps a camera-1 point into the camera-2 frame.
    pub fn transform(&self, p: &Vec3) -> Vec3 {
        linalg::add3(&mat3_vec(&self.rotation, p), &self.translation)
    }
}

/// Row `kron([x′;1], [x;1])`, so that `row · vec(E) = x′ᵀ E x`.
pub fn epipolar_row(c: &Correspondence) -> [f64; 9] {
    let (x, xp) = c.lift();
    let mut row = [0.0; 9];
    for r in 0..3 {
        for k in 0..3 {
            row[3 * r + k] = xp[r] * x[k];
        }
    }
    row
}

/// Weighted normal matrix `Σ wᵢ aᵢ aᵢᵀ` over epipolar rows (upper triangle filled, then mirrored).
pub fn weighted_normal_matrix(corrs: &[Correspondence], weights: &[f64]) -> [[f64; 9]; 9] {
    let mut m = [[0.0; 9]; 9];
    for (c, &w) in corrs.iter().zip(weights) {
        let a = epipolar_row(c);
        for r in 0..9 {
            let wr = w * a[r];
            for k in r..9 {
                m[r][k] += wr * a[k];
            }
        }
    }
    for r in 0..9 {
        for k in 0..r {
            m[r][k] = m[k][r];
        }
    }
    m
}

fn check_weights(corrs: &[Correspondence], weights: &[f64]) -> Result<usize, GeometryError> {
    if corrs.len() != weights.len() {
        return Err(GeometryError::LengthMismatch { expected: corrs.len(), got: weights.len() });
    }
    let mut effective = 0;
    for (i, (&w, c)) in weights.iter().zip(corrs).enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(GeometryError::InvalidWeight(i));
        }
        if !c.is_finite() {
            return Err(GeometryError::NonFinite(i));
        }
        if w > WEIGHT_FLOOR {
            effective += 1;
        }
    }
    Ok(effective)
}

/// Smallest eigenpair of the weighted normal matrix, before projection.
#[derive(Debug, Clone, Copy)]
pub struct EightPointSystem {
    pub eigenvalues: [f64; 9],
    pub eigenvectors: [[f64; 9]; 9],
}

impl EightPointSystem {
    pub fn solve(corrs: &[Correspondence], weights: &[f64]) -> Result<Self, GeometryError> {
        let effective = check_weights(corrs, weights)?;
        if effective < 8 {
            return Err(GeometryError::RankDeficient { required: 8, got: effective });
        }
        let m = weighted_normal_matrix(corrs, weights);
        let (eigenvalues, eigenvectors) = linalg::symmetric_eigen(&m);
        let scale = eigenvalues[8].abs().max(f64::MIN_POSITIVE);
        if eigenvalues[1] - eigenvalues[0] <= 1e-12 * scale {
            return Err(GeometryError::Degenerate("two smallest eigenvalues coincide"));
        }
        Ok(Self { eigenvalues, eigenvectors })
    }

    pub fn null_vector(&self) -> [f64; 9] {
        let mut v = [0.0; 9];
        for (r, val) in v.iter_mut().enumerate() {
            *val = self.eigenvectors[r][0];
        }
        v
    }
}

/// Least-squares essential matrix from weighted correspondences.
///
/// Minimises `Σ wᵢ (x′ᵢᵀ E xᵢ)²` over unit-norm `E` and projects the
/// minimiser onto the essential manifold with singular values `(σ, σ, 0)`.
pub fn weighted_eight_point(
    corrs: &[Correspondence],
    weights: &[f64],
) -> Result<EssentialMatrix, GeometryError> {
    let system = EightPointSystem::solve(corrs, weights)?;
    Ok(EssentialMatrix::project(&linalg::unflatten3(&system.null_vector())))
}

/// Result of midpoint triangulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub point: Vec3,
    pub depth1: f64,
    pub depth2: f64,
    /// Rays are (near-)parallel; depths are meaningless.
    pub unreliable: bool,
}

/// Midpoint of the closest approach between the two viewing rays (camera-1 frame).
pub fn triangulate_point(corr: &Correspondence, pose: &RelativePose) -> Triangulation {
    let (x, xp) = corr.lift();
    let rt = transpose3(&pose.rotation);
    let d1 = x;
    let d2 = mat3_vec(&rt, &xp);
    let c2 = linalg::scale3(&mat3_vec(&rt, &pose.translation), -1.0);

    let sin_angle = norm3(&cross3(&d1, &d2)) / (norm3(&d1) * norm3(&d2));
    if sin_angle.abs() < PARALLEL_RAY_ANGLE {
        return Triangulation { point: [0.0; 3], depth1: 0.0, depth2: 0.0, unreliable: true };
    }
    // minimise |s·d1 − (c2 + u·d2)|²
    let a11 = dot3(&d1, &d1);
    let a12 = -dot3(&d1, &d2);
    let a22 = dot3(&d2, &d2);
    let b1 = dot3(&d1, &c2);
    let b2 = -dot3(&d2, &c2);
    let det = a11 * a22 - a12 * a12;
    let s = (b1 * a22 - a12 * b2) / det;
    let u = (a11 * b2 - a12 * b1) / det;
    let p1 = linalg::scale3(&d1, s);
    let p2 = linalg::add3(&c2, &linalg::scale3(&d2, u));
    let point = linalg::scale3(&linalg::add3(&p1, &p2), 0.5);
    let in2 = pose.transform(&point);
    Triangulation { point, depth1: point[2], depth2: in2[2], unreliable: false }
}

/// The four `(R, t)` factorisations of an essential matrix.
pub fn pose_candidates(e: &EssentialMatrix) -> [RelativePose; 4] {
    let d = svd3(&e.e);
    let mut u = d.u;
    let mut v = d.v;
    if linalg::det3(&u) < 0.0 {
        u.iter_mut().for_each(|row| row[2] = -row[2]);
    }
    if linalg::det3(&v) < 0.0 {
        v.iter_mut().for_each(|row| row[2] = -row[2]);
    }
    let w = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    let vt = transpose3(&v);
    let r1 = mat3_mul(&mat3_mul(&u, &w), &vt);
    let r2 = mat3_mul(&mat3_mul(&u, &transpose3(&w)), &vt);
    let t = normalize3(&[u[0][2], u[1][2], u[2][2]]);
    let neg = linalg::scale3(&t, -1.0);
    [
        RelativePose { rotation: r1, translation: t },
        RelativePose { rotation: r1, translation: neg },
        RelativePose { rotation: r2, translation: t },
        RelativePose { rotation: r2, translation: neg },
    ]
}

/// Recovers the relative pose by weighted cheirality voting among the four
/// decompositions of `e`. Ties go to the earliest candidate.
pub fn decompose_essential(
    e: &EssentialMatrix,
    corrs: &[Correspondence],
    weights: &[f64],
) -> Result<RelativePose, GeometryError> {
    if corrs.len() != weights.len() {
        return Err(GeometryError::LengthMismatch { expected: corrs.len(), got: weights.len() });
    }
    let candidates = pose_candidates(e);
    let mut best = 0usize;
    let mut best_score = 0.0;
    for (k, cand) in candidates.iter().enumerate() {
        let score: f64 = corrs
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(c, &w)| {
                let tri = triangulate_point(c, cand);
                if !tri.unreliable && tri.depth1 > 0.0 && tri.depth2 > 0.0 {
                    w
                } else {
                    0.0
                }
            })
            .sum();
        if score > best_score {
            best_score = score;
            best = k;
        }
    }
    if best_score <= 0.0 {
        return Err(GeometryError::CheiralityFailure);
    }
    Ok(candidates[best])
}

/// First-order geometric residual, symmetric in the two views.
///
/// Returns `+∞` when a non-zero algebraic residual meets a vanishing
/// epipolar-line gradient, or when both gradients vanish.
pub fn symmetric_epipolar_distance(corr: &Correspondence, e: &Mat3) -> f64 {
    let (x, xp) = corr.lift();
    let ex = mat3_vec(e, &x);
    let etxp = mat3_vec(&transpose3(e), &xp);
    let r = dot3(&xp, &ex);
    let g1 = ex[0] * ex[0] + ex[1] * ex[1];
    let g2 = etxp[0] * etxp[0] + etxp[1] * etxp[1];
    if g1 == 0.0 && g2 == 0.0 {
        return f64::INFINITY;
    }
    let r2 = r * r;
    let term = |g: f64| {
        if g == 0.0 {
            if r2 == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            r2 / g
        }
    };
    term(g1) + term(g2)
}

/// Angular rotation and translation-direction errors in degrees.
pub fn pose_angular_errors(est: &RelativePose, gt: &RelativePose) -> (f64, f64) {
    // atan2 forms of arccos((tr R_gtᵀR − 1)/2) and arccos|t·t_gt|: same angles,
    // but well conditioned near zero.
    let rel = mat3_mul(&transpose3(&gt.rotation), &est.rotation);
    let tr = rel[0][0] + rel[1][1] + rel[2][2];
    let cos_r = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0);
    let axis = [rel[2][1] - rel[1][2], rel[0][2] - rel[2][0], rel[1][0] - rel[0][1]];
    let sin_r = (0.5 * norm3(&axis)).min(1.0);
    let rot = sin_r.atan2(cos_r).to_degrees();
    let a = normalize3(&est.translation);
    let b = normalize3(&gt.translation);
    let cos_t = dot3(&a, &b).abs().clamp(0.0, 1.0);
    let sin_t = norm3(&cross3(&a, &b)).min(1.0);
    let trans = sin_t.atan2(cos_t).to_degrees();
    (rot, trans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::linalg::{axis_angle, IDENTITY3};

    fn project(p: &Vec3) -> [f64; 2] {
        [p[0] / p[2], p[1] / p[2]]
    }

    fn scene(pose: &RelativePose, n: usize) -> Vec<Correspondence> {
        (0..n)
            .map(|i| {
                let f = i as f64;
                let p = [0.3 * (f * 1.7).sin(), 0.25 * (f * 0.9).cos(), 3.0 + (f * 0.37).sin()];
                Correspondence::labeled(project(&p), project(&pose.transform(&p)), true)
            })
            .collect()
    }

    #[test]
    fn principal_point_maps_to_origin() {
        let k = CameraIntrinsics::new(500.0, 480.0, 320.0, 240.0).unwrap();
        let out = normalize_points(&[[320.0, 240.0], [820.0, 240.0]], &k).unwrap();
        assert_eq!(out[0], [0.0, 0.0]);
        assert_eq!(out[1], [1.0, 0.0]);
    }

    #[test]
    fn unit_intrinsics_are_identity() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let pts = [[0.3, -2.0], [5.0, 1.5]];
        assert_eq!(normalize_points(&pts, &k).unwrap(), pts.to_vec());
    }

    #[test]
    fn normalize_roundtrip_with_skew() {
        let k = CameraIntrinsics::with_skew(400.0, 410.0, 300.0, 200.0, 1.5).unwrap();
        let p = [123.4, 456.7];
        let back = k.denormalize(k.normalize(p));
        assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn non_finite_pixel_is_rejected_with_index() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let err = normalize_points(&[[0.0, 0.0], [f64::NAN, 1.0]], &k).unwrap_err();
        assert_eq!(err, GeometryError::NonFinite(1));
        assert!(CameraIntrinsics::new(-1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn motion_vector_arithmetic() {
        let mv = motion_vectors(&[Correspondence::new([1.0, 2.0], [3.0, 5.0])]);
        assert_eq!(mv[0].anchor, [1.0, 2.0]);
        assert_eq!(mv[0].displacement, [2.0, 3.0]);
        assert!(motion_vectors(&[]).is_empty());
        let zero = motion_vectors(&[Correspondence::new([0.0, 0.0], [0.0, 0.0])]);
        assert_eq!(zero[0].displacement, [0.0, 0.0]);
    }

    #[test]
    fn eight_point_recovers_known_essential() {
        let pose = RelativePose::new(axis_angle(&[0.2, 1.0, -0.1], 0.3), [0.8, 0.1, 0.2]);
        let corrs = scene(&pose, 30);
        let w = vec![1.0; corrs.len()];
        let e = weighted_eight_point(&corrs, &w).unwrap();
        let gt = EssentialMatrix::from_pose(&pose);
        assert!(e.distance(&gt) < 1e-6);
        for c in &corrs {
            assert!(e.algebraic_residual(c).abs() < 1e-8);
        }
        let svd = svd3(&e.e);
        assert!((svd.s[0] - svd.s[1]).abs() < 1e-9 && svd.s[2].abs() < 1e-9);
    }

    #[test]
    fn too_few_effective_points() {
        let pose = RelativePose::new(IDENTITY3, [1.0, 0.0, 0.0]);
        let corrs = scene(&pose, 10);
        let mut w = vec![1.0; 10];
        w[0] = 0.0;
        w[1] = 1e-6;
        w[2] = 0.0;
        assert!(matches!(
            weighted_eight_point(&corrs, &w),
            Err(GeometryError::RankDeficient { got: 7, .. })
        ));
    }

    #[test]
    fn decomposition_recovers_pose() {
        let pose = RelativePose::new(axis_angle(&[0.0, 1.0, 0.2], -0.25), [-0.5, 0.2, 0.1]);
        let corrs = scene(&pose, 40);
        let w = vec![1.0; corrs.len()];
        let e = EssentialMatrix::from_pose(&pose);
        let est = decompose_essential(&e, &corrs, &w).unwrap();
        let (r, t) = pose_angular_errors(&est, &pose);
        assert!(r < 1e-6 && t < 1e-6);
        assert!(dot3(&est.translation, &pose.translation) > 0.0);
        let zero = vec![0.0; corrs.len()];
        assert_eq!(decompose_essential(&e, &corrs, &zero), Err(GeometryError::CheiralityFailure));
    }

    #[test]
    fn triangulation_depth_signs() {
        let pose = RelativePose::new(IDENTITY3, [1.0, 0.0, 0.0]);
        // point (0,0,1) seen from camera 2 at x' = (1, 0)
        let c = Correspondence::new([0.0, 0.0], [1.0, 0.0]);
        let tri = triangulate_point(&c, &pose);
        assert!(!tri.unreliable);
        assert!((tri.depth1 - 1.0).abs() < 1e-12 && (tri.depth2 - 1.0).abs() < 1e-12);

        // point (0,0,1) with camera 2 displaced so it sits behind it
        let behind = RelativePose::new(IDENTITY3, [0.0, 0.0, -1.0]);
        let p = [0.2, 0.1, 1.0];
        let q = behind.transform(&linalg::scale3(&p, 0.5));
        let c = Correspondence::new([0.2, 0.1], [q[0] / q[2], q[1] / q[2]]);
        let tri = triangulate_point(&c, &behind);
        assert!(tri.depth1 > 0.0 && tri.depth2 < 0.0);

        let same = Correspondence::new([0.1, 0.1], [0.1, 0.1]);
        assert!(triangulate_point(&same, &RelativePose::new(IDENTITY3, [0.0, 0.0, 1.0])).unreliable);
    }

    #[test]
    fn sampson_style_distance() {
        let e = skew(&[1.0, 0.0, 0.0]);
        let c = Correspondence::new([0.0, 0.0], [0.0, 0.1]);
        // Ex = [0,-1,0]; x'ᵀEx = -0.1; Eᵀx' = [0,-1,0.1]
        let expected = 0.01 * (1.0 / 1.0 + 1.0 / 1.0);
        assert!((symmetric_epipolar_distance(&c, &e) - expected).abs() < 1e-15);
        let e2 = linalg::scale_mat3(&e, 2.0);
        assert!((symmetric_epipolar_distance(&c, &e2) - expected).abs() < 1e-15);
        let on_line = Correspondence::new([0.0, 0.0], [0.3, 0.0]);
        assert!(symmetric_epipolar_distance(&on_line, &e) <= 1e-18);
        let zero = [[0.0; 3]; 3];
        assert!(symmetric_epipolar_distance(&on_line, &zero).is_infinite());
    }

    #[test]
    fn angular_error_conventions() {
        let gt = RelativePose::new(axis_angle(&[1.0, 2.0, 3.0], 0.7), [0.3, -0.4, 0.5]);
        assert_eq!(pose_angular_errors(&gt, &gt), (0.0, 0.0));
        let flipped = RelativePose { translation: linalg::scale3(&gt.translation, -1.0), ..gt };
        assert!(pose_angular_errors(&flipped, &gt).1 < 1e-6);
        let rz = axis_angle(&[0.0, 0.0, 1.0], 10f64.to_radians());
        let est = RelativePose { rotation: mat3_mul(&gt.rotation, &rz), ..gt };
        let (r, _) = pose_angular_errors(&est, &gt);
        assert!((r - 10.0).abs() < 1e-6);
    }
}
