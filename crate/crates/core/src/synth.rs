//! Ground-truth two-view scenes made of several planar structures.
//!
//! Each structure is a plane at its own depth and tilt, so a pair mixes
//! several motion patterns. Second-view points of a chosen subset are
//! replaced by uniform draws to act as outliers; every correspondence is then
//! labelled by thresholding its symmetric epipolar distance to the true
//! essential matrix.

use alloc::vec::Vec;
#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

use crate::geometry::{symmetric_epipolar_distance, Correspondence, EssentialMatrix, RelativePose};
use crate::homography::Homography;
use crate::linalg::{axis_angle, dot3, mat3_vec, normalize3, scale3, Mat3, Vec3};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(&'static str),
    #[error("frustum rejection exhausted {attempts} attempts with {accepted} points accepted")]
    GenerationFailure { attempts: usize, accepted: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub num_structures: usize,
    pub depth_near: f64,
    pub depth_far: f64,
    pub rotation_magnitude_deg: f64,
    pub baseline_min: f64,
    pub baseline_max: f64,
    /// Gaussian noise on second-view inlier coordinates (normalised units).
    pub noise_sigma: f64,
    pub outlier_ratio: f64,
    pub points_per_pair: usize,
    /// Half width of the square normalised image both views must see.
    pub image_half_extent: f64,
    /// Symmetric epipolar distance below which a match is labelled inlier.
    pub label_threshold: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            num_structures: 3,
            depth_near: 2.0,
            depth_far: 8.0,
            rotation_magnitude_deg: 15.0,
            baseline_min: 0.3,
            baseline_max: 1.0,
            noise_sigma: 1e-3,
            outlier_ratio: 0.5,
            points_per_pair: 512,
            image_half_extent: 0.5,
            label_threshold: 1e-4,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m| Err(SynthError::InvalidSpec(m));
        if self.num_structures == 0 {
            return bad("num_structures must be at least 1");
        }
        if !(self.depth_near > 0.0 && self.depth_far > self.depth_near) {
            return bad("depth range needs 0 < near < far");
        }
        if !(0.0..=180.0).contains(&self.rotation_magnitude_deg) {
            return bad("rotation_magnitude_deg must lie in [0, 180]");
        }
        if !(self.baseline_min > 0.0 && self.baseline_max >= self.baseline_min) {
            return bad("baseline range needs 0 < min <= max");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return bad("outlier_ratio must lie in [0, 1)");
        }
        if self.points_per_pair < 16 {
            return bad("points_per_pair must be at least 16");
        }
        if !(self.image_half_extent > 0.0 && self.image_half_extent.is_finite()) {
            return bad("image_half_extent must be positive");
        }
        if !(self.label_threshold > 0.0) {
            return bad("label_threshold must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPair {
    pub correspondences: Vec<Correspondence>,
    pub gt_essential: EssentialMatrix,
    pub gt_pose: RelativePose,
    /// Plane-induced homography, present for single-structure scenes.
    pub gt_homography: Option<Homography>,
    /// Indices whose second-view point was replaced by a uniform draw.
    pub injected_outliers: Vec<usize>,
    pub spec: SceneSpec,
}

impl GeneratedPair {
    pub fn labels(&self) -> Vec<bool> {
        self.correspondences.iter().map(|c| c.label.unwrap_or(false)).collect()
    }

    pub fn inlier_count(&self) -> usize {
        self.correspondences.iter().filter(|c| c.label == Some(true)).count()
    }

    /// Injected points whose residual fell under the label threshold anyway.
    pub fn injected_labelled_inlier(&self) -> usize {
        self.injected_outliers.iter().filter(|&&i| self.correspondences[i].label == Some(true)).count()
    }
}

/// A stored pair: labelled correspondences with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub id: u64,
    pub correspondences: Vec<Correspondence>,
    pub gt_essential: EssentialMatrix,
    pub gt_pose: RelativePose,
    pub gt_homography: Option<Homography>,
}

impl LabeledPair {
    pub fn labels(&self) -> Vec<bool> {
        self.correspondences.iter().map(|c| c.label.unwrap_or(false)).collect()
    }

    pub fn inlier_count(&self) -> usize {
        self.correspondences.iter().filter(|c| c.label == Some(true)).count()
    }
}

impl GeneratedPair {
    pub fn to_labeled(&self, id: u64) -> LabeledPair {
        LabeledPair {
            id,
            correspondences: self.correspondences.clone(),
            gt_essential: self.gt_essential,
            gt_pose: self.gt_pose,
            gt_homography: self.gt_homography,
        }
    }
}

/// Plane `n·X = d` in camera-1 coordinates.
struct Plane {
    normal: Vec3,
    offset: f64,
}

fn random_pose(spec: &SceneSpec, rng: &mut SeededRng) -> (Mat3, Vec3) {
    let axis = rng.unit_vector3();
    let angle = rng.uniform_range(0.0, spec.rotation_magnitude_deg.to_radians());
    let rotation = axis_angle(&axis, angle);
    let norm = rng.uniform_range(spec.baseline_min, spec.baseline_max);
    (rotation, scale3(&rng.unit_vector3(), norm))
}

fn random_plane(spec: &SceneSpec, index: usize, rng: &mut SeededRng) -> Plane {
    // structures spread evenly across the depth range, jittered within their slot
    let slot = (spec.depth_far - spec.depth_near) / spec.num_structures as f64;
    let depth = spec.depth_near + slot * (index as f64 + rng.uniform_range(0.25, 0.75));
    let tilt = rng.uniform_range(0.0, 35f64.to_radians());
    let azimuth = rng.uniform_range(0.0, core::f64::consts::TAU);
    let normal = normalize3(&[tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), tilt.cos()]);
    // plane through (0, 0, depth)
    Plane { normal, offset: normal[2] * depth }
}

fn inside(p: [f64; 2], h: f64) -> bool {
    p[0].abs() <= h && p[1].abs() <= h
}

/// Draws one labelled pair. Deterministic in `spec` (including `spec.seed`).
pub fn generate_pair(spec: &SceneSpec) -> Result<GeneratedPair, SynthError> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let h = spec.image_half_extent;
    let n = spec.points_per_pair;
    let (rotation, translation) = random_pose(spec, &mut rng);
    let planes: Vec<Plane> = (0..spec.num_structures).map(|s| random_plane(spec, s, &mut rng)).collect();

    let budget = 50 * n;
    let mut attempts = 0;
    let mut corrs = Vec::with_capacity(n);
    while corrs.len() < n {
        if attempts >= budget {
            return Err(SynthError::GenerationFailure { attempts, accepted: corrs.len() });
        }
        attempts += 1;
        let plane = &planes[corrs.len() % planes.len()];
        let x = [rng.uniform_range(-h, h), rng.uniform_range(-h, h)];
        let ray = [x[0], x[1], 1.0];
        let denom = dot3(&plane.normal, &ray);
        if denom.abs() < 1e-9 {
            continue;
        }
        let depth = plane.offset / denom;
        if !(depth >= 0.5 * spec.depth_near && depth <= 2.0 * spec.depth_far) {
            continue;
        }
        let p1 = scale3(&ray, depth);
        let p2 = crate::linalg::add3(&mat3_vec(&rotation, &p1), &translation);
        if p2[2] <= 1e-6 {
            continue;
        }
        let xp = [p2[0] / p2[2], p2[1] / p2[2]];
        if !inside(xp, h) {
            continue;
        }
        corrs.push(Correspondence::new(x, xp));
    }

    let gt_pose = RelativePose::new(rotation, translation);
    let gt_essential = EssentialMatrix::from_pose(&gt_pose);
    let gt_homography = if planes.len() == 1 {
        let p = &planes[0];
        let tn = outer(&translation, &scale3(&p.normal, 1.0 / p.offset));
        let mut m = rotation;
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += tn[r][c];
            }
        }
        Homography::new(&m).ok()
    } else {
        None
    };

    if spec.noise_sigma > 0.0 {
        for c in corrs.iter_mut() {
            c.x_prime[0] += spec.noise_sigma * rng.normal();
            c.x_prime[1] += spec.noise_sigma * rng.normal();
        }
    }
    let outliers = (spec.outlier_ratio * n as f64).floor() as usize;
    let mut injected = Vec::with_capacity(outliers);
    rng.sample_distinct(n, outliers, &mut injected);
    injected.sort_unstable();
    for &i in &injected {
        corrs[i].x_prime = [rng.uniform_range(-h, h), rng.uniform_range(-h, h)];
    }
    for c in corrs.iter_mut() {
        let d = symmetric_epipolar_distance(c, &gt_essential.e);
        c.label = Some(d < spec.label_threshold);
    }
    Ok(GeneratedPair { correspondences: corrs, gt_essential, gt_pose, gt_homography, injected_outliers: injected, spec: *spec })
}

fn outer(a: &Vec3, b: &Vec3) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = a[r] * b[c];
        }
    }
    m
}

/// Spec for pair `index` of a dataset seeded with `spec.seed`.
pub fn pair_spec(spec: &SceneSpec, index: u64) -> SceneSpec {
    SceneSpec { seed: crate::rng::mix_seed(spec.seed, index), ..*spec }
}

/// `count` pairs, pair `i` drawn from [`pair_spec`]`(spec, i)`.
pub fn generate_dataset(spec: &SceneSpec, count: usize) -> Result<Vec<LabeledPair>, SynthError> {
    (0..count as u64).map(|i| Ok(generate_pair(&pair_spec(spec, i))?.to_labeled(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(seed: u64) -> SceneSpec {
        SceneSpec { noise_sigma: 0.0, outlier_ratio: 0.0, points_per_pair: 100, seed, ..SceneSpec::default() }
    }

    #[test]
    fn noise_free_pairs_are_exact() {
        for seed in 0..10 {
            let p = generate_pair(&clean(seed)).unwrap();
            assert_eq!(p.inlier_count(), 100);
            for c in &p.correspondences {
                assert!(symmetric_epipolar_distance(c, &p.gt_essential.e) < 1e-12);
            }
        }
    }

    #[test]
    fn outlier_injection_count() {
        let spec = SceneSpec { outlier_ratio: 0.5, points_per_pair: 200, seed: 3, ..SceneSpec::default() };
        let p = generate_pair(&spec).unwrap();
        assert_eq!(p.injected_outliers.len(), 100);
        for c in &p.correspondences {
            let d = symmetric_epipolar_distance(c, &p.gt_essential.e);
            assert_eq!(c.label, Some(d < spec.label_threshold));
        }
    }

    #[test]
    fn single_plane_has_homography() {
        let spec = SceneSpec { num_structures: 1, ..clean(5) };
        let p = generate_pair(&spec).unwrap();
        let h = p.gt_homography.expect("planar scene");
        for c in &p.correspondences {
            let m = h.apply(c.x).unwrap();
            assert!((m[0] - c.x_prime[0]).abs() < 1e-10 && (m[1] - c.x_prime[1]).abs() < 1e-10);
        }
        assert!(generate_pair(&clean(5)).unwrap().gt_homography.is_none());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let s = SceneSpec { outlier_ratio: 1.2, ..SceneSpec::default() };
        assert!(matches!(generate_pair(&s), Err(SynthError::InvalidSpec(_))));
        let s = SceneSpec { depth_near: 0.0, ..SceneSpec::default() };
        assert!(generate_pair(&s).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let s = SceneSpec { seed: 9, ..SceneSpec::default() };
        assert_eq!(generate_pair(&s).unwrap(), generate_pair(&s).unwrap());
    }
}
