//! Seeded RANSAC for essential matrices and homographies.
//!
//! Minimal samples are drawn from a [`SeededRng`], so a run is a pure
//! function of `(correspondences, config)`. Degenerate samples are redrawn
//! without consuming the iteration budget; a global cap of
//! `20 × max_iterations` draws prevents livelock.

#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;
use alloc::vec::Vec;
use thiserror::Error;

use crate::geometry::{
    symmetric_epipolar_distance, weighted_eight_point, Correspondence, EssentialMatrix,
};
use crate::homography::{dlt_homography, Homography};
use crate::rng::SeededRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RansacError {
    #[error("invalid RANSAC configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("need at least {required} correspondences, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("no minimal sample produced a valid model")]
    EstimationFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Symmetric epipolar distance (essential) or transfer error (homography).
    pub inlier_threshold: f64,
    pub confidence: f64,
    pub seed: u64,
}

impl RansacConfig {
    pub fn essential_default() -> Self {
        Self { max_iterations: 10_000, inlier_threshold: 1e-4, confidence: 0.999, seed: 0 }
    }

    pub fn homography_default() -> Self {
        Self { max_iterations: 2_000, inlier_threshold: 1e-2, confidence: 0.999, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), RansacError> {
        if self.max_iterations < 1 {
            return Err(RansacError::InvalidConfig("max_iterations must be at least 1"));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(RansacError::InvalidConfig("inlier_threshold must be positive"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(RansacError::InvalidConfig("confidence must lie in (0, 1)"));
        }
        Ok(())
    }
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self::essential_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult<M> {
    pub model: M,
    pub inlier_mask: Vec<bool>,
    pub iterations_run: usize,
}

impl<M> RansacResult<M> {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

/// A model family RANSAC can hypothesise and score.
trait Hypothesis: Sized + Copy {
    const SAMPLE_SIZE: usize;
    fn fit(corrs: &[Correspondence]) -> Option<Self>;
    fn refit(corrs: &[Correspondence], mask: &[bool]) -> Option<Self>;
    fn residual(&self, c: &Correspondence) -> f64;
}

impl Hypothesis for EssentialMatrix {
    const SAMPLE_SIZE: usize = 8;

    fn fit(corrs: &[Correspondence]) -> Option<Self> {
        weighted_eight_point(corrs, &[1.0; 8][..corrs.len()]).ok()
    }

    fn refit(corrs: &[Correspondence], mask: &[bool]) -> Option<Self> {
        let w: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        weighted_eight_point(corrs, &w).ok()
    }

    fn residual(&self, c: &Correspondence) -> f64 {
        symmetric_epipolar_distance(c, &self.e)
    }
}

impl Hypothesis for Homography {
    const SAMPLE_SIZE: usize = 4;

    fn fit(corrs: &[Correspondence]) -> Option<Self> {
        dlt_homography(corrs).ok()
    }

    fn refit(corrs: &[Correspondence], mask: &[bool]) -> Option<Self> {
        let subset: Vec<Correspondence> =
            corrs.iter().zip(mask).filter(|(_, &m)| m).map(|(c, _)| *c).collect();
        dlt_homography(&subset).ok()
    }

    fn residual(&self, c: &Correspondence) -> f64 {
        self.transfer_error(c)
    }
}

fn consensus<M: Hypothesis>(model: &M, corrs: &[Correspondence], threshold: f64, mask: &mut Vec<bool>) -> usize {
    mask.clear();
    mask.extend(corrs.iter().map(|c| model.residual(c) < threshold));
    mask.iter().filter(|&&b| b).count()
}

/// Iterations needed to draw one all-inlier sample with probability `confidence`.
pub fn adaptive_iterations(confidence: f64, inlier_ratio: f64, sample_size: usize) -> f64 {
    let p_good = inlier_ratio.powi(sample_size as i32);
    if p_good >= 1.0 {
        return 1.0;
    }
    if p_good <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / (1.0 - p_good).ln()).ceil()
}

fn run<M: Hypothesis>(corrs: &[Correspondence], config: &RansacConfig) -> Result<RansacResult<M>, RansacError> {
    config.validate()?;
    let n = corrs.len();
    if n < M::SAMPLE_SIZE {
        return Err(RansacError::TooFewPoints { required: M::SAMPLE_SIZE, got: n });
    }
    let mut rng = SeededRng::new(config.seed);
    let mut indices = Vec::with_capacity(M::SAMPLE_SIZE);
    let mut sample = Vec::with_capacity(M::SAMPLE_SIZE);
    let mut mask = Vec::with_capacity(n);

    let mut best: Option<(M, usize, Vec<bool>)> = None;
    let mut iterations = 0usize;
    let mut attempts = 0usize;
    let mut budget = config.max_iterations as f64;
    let attempt_cap = config.max_iterations.saturating_mul(20);

    while (iterations as f64) < budget && iterations < config.max_iterations && attempts < attempt_cap {
        attempts += 1;
        rng.sample_distinct(n, M::SAMPLE_SIZE, &mut indices);
        sample.clear();
        sample.extend(indices.iter().map(|&i| corrs[i]));
        let Some(model) = M::fit(&sample) else {
            continue;
        };
        iterations += 1;
        let count = consensus(&model, corrs, config.inlier_threshold, &mut mask);
        // strict improvement: the earliest hypothesis wins ties
        if best.as_ref().is_none_or(|(_, c, _)| count > *c) {
            best = Some((model, count, mask.clone()));
            let ratio = count as f64 / n as f64;
            budget = adaptive_iterations(config.confidence, ratio, M::SAMPLE_SIZE)
                .min(config.max_iterations as f64);
        }
    }

    let (model, count, best_mask) = best.ok_or(RansacError::EstimationFailure)?;
    if count >= M::SAMPLE_SIZE {
        if let Some(refit) = M::refit(corrs, &best_mask) {
            let refit_count = consensus(&refit, corrs, config.inlier_threshold, &mut mask);
            if refit_count >= count {
                return Ok(RansacResult { model: refit, inlier_mask: mask, iterations_run: iterations });
            }
        }
    }
    Ok(RansacResult { model, inlier_mask: best_mask, iterations_run: iterations })
}

/// RANSAC over eight-point samples, refit on the consensus with indicator weights.
pub fn ransac_essential(
    corrs: &[Correspondence],
    config: &RansacConfig,
) -> Result<RansacResult<EssentialMatrix>, RansacError> {
    run(corrs, config)
}

/// RANSAC over four-point DLT samples, refit on the consensus.
pub fn ransac_homography(
    corrs: &[Correspondence],
    config: &RansacConfig,
) -> Result<RansacResult<Homography>, RansacError> {
    run(corrs, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::geometry::RelativePose;
    use crate::linalg::axis_angle;

    fn exact_scene(n: usize) -> (Vec<Correspondence>, RelativePose) {
        let pose = RelativePose::new(axis_angle(&[0.1, 1.0, 0.0], 0.2), [1.0, 0.1, 0.05]);
        let corrs = (0..n)
            .map(|i| {
                let f = i as f64;
                let p = [0.4 * (f * 2.1).sin(), 0.3 * (f * 1.3).cos(), 2.5 + 1.5 * (f * 0.77).sin().abs()];
                let q = pose.transform(&p);
                Correspondence::new([p[0] / p[2], p[1] / p[2]], [q[0] / q[2], q[1] / q[2]])
            })
            .collect();
        (corrs, pose)
    }

    #[test]
    fn outlier_free_consensus_is_everything() {
        let (corrs, _) = exact_scene(100);
        let cfg = RansacConfig { inlier_threshold: 1e-6, ..RansacConfig::essential_default() };
        let res = ransac_essential(&corrs, &cfg).unwrap();
        assert!(res.inlier_mask.iter().all(|&b| b));
        let direct = weighted_eight_point(&corrs, &vec![1.0; 100]).unwrap();
        assert!(res.model.distance(&direct) < 1e-10);
    }

    #[test]
    fn seven_points_fail() {
        let (corrs, _) = exact_scene(7);
        assert_eq!(
            ransac_essential(&corrs, &RansacConfig::default()),
            Err(RansacError::TooFewPoints { required: 8, got: 7 })
        );
    }

    #[test]
    fn deterministic_and_mask_consistent() {
        let (mut corrs, _) = exact_scene(60);
        let mut rng = SeededRng::new(5);
        for c in corrs.iter_mut().take(20) {
            c.x_prime = [rng.uniform_range(-0.5, 0.5), rng.uniform_range(-0.5, 0.5)];
        }
        let cfg = RansacConfig { seed: 11, ..RansacConfig::default() };
        let a = ransac_essential(&corrs, &cfg).unwrap();
        let b = ransac_essential(&corrs, &cfg).unwrap();
        assert_eq!(a, b);
        for (c, &m) in corrs.iter().zip(&a.inlier_mask) {
            assert_eq!(symmetric_epipolar_distance(c, &a.model.e) < cfg.inlier_threshold, m);
        }
    }

    #[test]
    fn collinear_homography_input_fails() {
        let corrs: Vec<_> =
            (0..10).map(|i| Correspondence::new([i as f64, 2.0 * i as f64], [i as f64, 1.0])).collect();
        assert_eq!(
            ransac_homography(&corrs, &RansacConfig::homography_default()),
            Err(RansacError::EstimationFailure)
        );
    }

    #[test]
    fn adaptive_bound() {
        assert_eq!(adaptive_iterations(0.99, 1.0, 8), 1.0);
        let n = adaptive_iterations(0.99, 0.5, 4);
        // log(0.01)/log(1-1/16) = 71.36
        assert_eq!(n, 72.0);
    }
}
