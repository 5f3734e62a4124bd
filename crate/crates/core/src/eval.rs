//! Pose AUC, classification and homography metrics, and per-pair estimator arms.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

use crate::geometry::{decompose_essential, pose_angular_errors, weighted_eight_point, Correspondence, RelativePose};
use crate::homography::{dlt_homography, homography_corner_error, Homography};
use crate::linalg::{inverse3, mat3_mul, Mat3};
use crate::rng::mix_seed;
use crate::robust::{ransac_essential, ransac_homography, RansacConfig};
use crate::synth::LabeledPair;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no errors to summarise")]
    Empty,
    #[error("invalid metric specification: {0}")]
    InvalidSpec(&'static str),
    #[error("unknown arm `{0}`")]
    UnknownArm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AucMethod {
    /// Mean of the cumulative fraction over fixed-width bins.
    #[default]
    Histogram,
    /// Exact area under the recall curve of the sorted errors.
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AucSpec {
    pub thresholds_deg: Vec<f64>,
    pub bin_width_deg: f64,
    pub method: AucMethod,
}

impl Default for AucSpec {
    fn default() -> Self {
        Self { thresholds_deg: vec![5.0, 10.0, 20.0], bin_width_deg: 1.0, method: AucMethod::Histogram }
    }
}

impl AucSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.thresholds_deg.is_empty() {
            return Err(EvalError::InvalidSpec("at least one threshold is required"));
        }
        if self.thresholds_deg.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(EvalError::InvalidSpec("thresholds must be positive"));
        }
        if self.thresholds_deg.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::InvalidSpec("thresholds must be strictly ascending"));
        }
        if !(self.bin_width_deg.is_finite() && self.bin_width_deg > 0.0) {
            return Err(EvalError::InvalidSpec("bin width must be positive"));
        }
        Ok(())
    }
}

/// AUC of the cumulative error curve at each threshold, in percent.
///
/// Failed estimates enter as `+∞`. With the histogram method the cumulative
/// value of bin `b` is the fraction of errors strictly below `(b + 1)·width`.
pub fn pose_auc(errors_deg: &[f64], spec: &AucSpec) -> Result<Vec<f64>, EvalError> {
    spec.validate()?;
    if errors_deg.is_empty() {
        return Err(EvalError::Empty);
    }
    if errors_deg.iter().any(|e| e.is_nan() || *e < 0.0) {
        return Err(EvalError::InvalidSpec("errors must be non-negative or +inf"));
    }
    let n = errors_deg.len() as f64;
    let mut sorted = errors_deg.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let below = |x: f64| sorted.partition_point(|&e| e < x) as f64 / n;
    Ok(spec
        .thresholds_deg
        .iter()
        .map(|&t| match spec.method {
            AucMethod::Histogram => {
                let bins = (t / spec.bin_width_deg).ceil().max(1.0) as usize;
                let sum: f64 = (1..=bins).map(|b| below(b as f64 * spec.bin_width_deg)).sum();
                100.0 * sum / bins as f64
            }
            AucMethod::Trapezoid => 100.0 * trapezoid_auc(&sorted, t),
        })
        .collect())
}

fn trapezoid_auc(sorted: &[f64], threshold: f64) -> f64 {
    let n = sorted.len() as f64;
    let (mut area, mut prev_e, mut prev_r) = (0.0, 0.0, 0.0);
    for (i, &e) in sorted.iter().enumerate() {
        if e >= threshold {
            break;
        }
        let r = (i + 1) as f64 / n;
        area += (e - prev_e) * prev_r;
        prev_e = e;
        prev_r = r;
    }
    area += (threshold - prev_e) * prev_r;
    area / threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassificationMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No predicted positives; precision reported as 0.
    pub precision_undefined: bool,
    /// No labelled positives; recall reported as 0.
    pub recall_undefined: bool,
}

impl ClassificationMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
            precision,
            recall,
            f1,
            precision_undefined: tp + fp == 0,
            recall_undefined: tp + fn_ == 0,
        }
    }

    pub fn counts(&self) -> [usize; 4] {
        [self.true_positives, self.false_positives, self.false_negatives, self.true_negatives]
    }
}

/// Precision, recall and F1 of `predicted ≥ threshold` against `labels`.
pub fn classification_metrics(predicted: &[f64], labels: &[bool], threshold: f64) -> ClassificationMetrics {
    let mask: Vec<bool> = predicted.iter().map(|&p| p >= threshold).collect();
    mask_metrics(&mask, labels)
}

pub fn mask_metrics(mask: &[bool], labels: &[bool]) -> ClassificationMetrics {
    let mut c = [0usize; 4];
    for (&p, &l) in mask.iter().zip(labels) {
        let slot = match (p, l) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        c[slot] += 1;
    }
    ClassificationMetrics::from_counts(c[0], c[1], c[2], c[3])
}

/// Percentage of corner errors strictly below each threshold.
pub fn homography_accuracy(corner_errors: &[f64], thresholds: &[f64]) -> Result<Vec<f64>, EvalError> {
    if corner_errors.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = corner_errors.len() as f64;
    Ok(thresholds.iter().map(|&t| 100.0 * corner_errors.iter().filter(|&&e| e < t).count() as f64 / n).collect())
}

/// An estimator configuration evaluated by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    /// Uniform weights, weighted eight-point.
    Raw,
    /// RANSAC on all correspondences.
    Ransac,
    /// Network weights, weighted eight-point.
    GeoMoE,
    /// RANSAC on correspondences the network keeps.
    GeoMoERansac,
    /// Ground-truth indicator weights, weighted eight-point.
    Oracle,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::Raw, Arm::Ransac, Arm::GeoMoE, Arm::GeoMoERansac, Arm::Oracle];

    pub fn name(&self) -> &'static str {
        match self {
            Arm::Raw => "raw",
            Arm::Ransac => "ransac",
            Arm::GeoMoE => "geomoe",
            Arm::GeoMoERansac => "geomoe-ransac",
            Arm::Oracle => "oracle",
        }
    }

    pub fn parse(name: &str) -> Result<Self, EvalError> {
        Self::ALL.iter().copied().find(|a| a.name() == name).ok_or_else(|| EvalError::UnknownArm(name.into()))
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, Arm::GeoMoE | Arm::GeoMoERansac)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Virtual camera mapping normalised coordinates to pixels for corner errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelFrame {
    pub focal_px: f64,
    /// Half-width of the square image in normalised units.
    pub half_extent: f64,
}

impl Default for PixelFrame {
    fn default() -> Self {
        Self { focal_px: 512.0, half_extent: 0.5 }
    }
}

impl PixelFrame {
    pub fn size_px(&self) -> f64 {
        2.0 * self.half_extent * self.focal_px
    }

    fn k(&self) -> Mat3 {
        let c = self.half_extent * self.focal_px;
        [[self.focal_px, 0.0, c], [0.0, self.focal_px, c], [0.0, 0.0, 1.0]]
    }

    /// `K H K⁻¹`.
    pub fn to_pixels(&self, h: &Homography) -> Option<Homography> {
        let k = self.k();
        let kinv = inverse3(&k)?;
        Homography::new(&mat3_mul(&mat3_mul(&k, &h.h), &kinv)).ok()
    }

    /// Mean corner displacement in pixels.
    pub fn corner_error(&self, est: &Homography, gt: &Homography) -> f64 {
        match (self.to_pixels(est), self.to_pixels(gt)) {
            (Some(a), Some(b)) => homography_corner_error(&a, &b, self.size_px(), self.size_px()),
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub essential_ransac: RansacConfig,
    pub homography_ransac: RansacConfig,
    /// Network weight at or above which a correspondence counts as kept.
    pub weight_threshold: f64,
    pub pixel_frame: PixelFrame,
    /// Mixed with each pair id to seed its RANSAC runs.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            essential_ransac: RansacConfig::essential_default(),
            homography_ransac: RansacConfig::homography_default(),
            weight_threshold: 0.5,
            pixel_frame: PixelFrame::default(),
            seed: 0,
        }
    }
}

/// Everything the report needs from one (pair, arm) evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTrace {
    pub pair_id: u64,
    pub arm: Arm,
    /// `+∞` when estimation failed.
    pub rotation_error_deg: f64,
    pub translation_error_deg: f64,
    /// Corner error in pixels; present for planar pairs.
    pub corner_error_px: Option<f64>,
    /// Contingency counts of the arm's inlier mask, when it produces one.
    pub counts: Option<[usize; 4]>,
}

impl PairTrace {
    pub fn pose_error_deg(&self) -> f64 {
        self.rotation_error_deg.max(self.translation_error_deg)
    }
}

fn subset(corrs: &[Correspondence], keep: &[bool]) -> Vec<Correspondence> {
    corrs.iter().zip(keep).filter(|(_, &k)| k).map(|(c, _)| *c).collect()
}

fn pose_from_weights(corrs: &[Correspondence], w: &[f64]) -> Option<RelativePose> {
    let e = weighted_eight_point(corrs, w).ok()?;
    decompose_essential(&e, corrs, w).ok()
}

fn pose_from_ransac(corrs: &[Correspondence], cfg: &RansacConfig) -> (Option<RelativePose>, Option<Vec<bool>>) {
    match ransac_essential(corrs, cfg) {
        Ok(r) => {
            let w: Vec<f64> = r.inlier_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            (decompose_essential(&r.model, corrs, &w).ok(), Some(r.inlier_mask))
        }
        Err(_) => (None, None),
    }
}

/// Evaluates one arm on one pair. `weights` are the network's final-layer
/// probabilities and are required by the learned arms.
pub fn evaluate_pair(pair: &LabeledPair, arm: Arm, weights: Option<&[f64]>, cfg: &EvalConfig) -> PairTrace {
    let corrs = &pair.correspondences;
    let n = corrs.len();
    let labels = pair.labels();
    let mut ess = cfg.essential_ransac;
    ess.seed = mix_seed(cfg.seed, pair.id);
    let mut hom = cfg.homography_ransac;
    hom.seed = mix_seed(cfg.seed, pair.id ^ 0x4000_0000_0000_0000);

    let kept: Option<Vec<bool>> = weights.map(|w| w.iter().map(|&v| v >= cfg.weight_threshold).collect());
    let (pose, mask): (Option<RelativePose>, Option<Vec<bool>>) = match arm {
        Arm::Raw => (pose_from_weights(corrs, &vec![1.0; n]), None),
        Arm::Oracle => {
            let w: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
            (pose_from_weights(corrs, &w), None)
        }
        Arm::Ransac => pose_from_ransac(corrs, &ess),
        Arm::GeoMoE => match weights {
            Some(w) => (pose_from_weights(corrs, w), kept.clone()),
            None => (None, None),
        },
        Arm::GeoMoERansac => match &kept {
            Some(k) => {
                let sub = subset(corrs, k);
                let (pose, sub_mask) = pose_from_ransac(&sub, &ess);
                let mask = sub_mask.map(|sm| {
                    let mut it = sm.into_iter();
                    k.iter().map(|&kk| kk && it.next().unwrap_or(false)).collect()
                });
                (pose, Some(mask.unwrap_or_else(|| vec![false; n])))
            }
            None => (None, None),
        },
    };
    let (rot, trans) = match pose {
        Some(p) => pose_angular_errors(&p, &pair.gt_pose),
        None => (f64::INFINITY, f64::INFINITY),
    };

    let corner_error_px = pair.gt_homography.map(|gt| {
        let est = match arm {
            Arm::Raw => dlt_homography(corrs).ok(),
            Arm::Oracle => {
                // epipolar labels admit off-plane points near their epipolar line
                let planar: Vec<bool> = corrs
                    .iter()
                    .zip(&labels)
                    .map(|(c, &l)| l && gt.transfer_error(c) < hom.inlier_threshold)
                    .collect();
                dlt_homography(&subset(corrs, &planar)).ok()
            }
            Arm::Ransac => ransac_homography(corrs, &hom).ok().map(|r| r.model),
            Arm::GeoMoE => kept.as_ref().and_then(|k| dlt_homography(&subset(corrs, k)).ok()),
            Arm::GeoMoERansac => {
                kept.as_ref().and_then(|k| ransac_homography(&subset(corrs, k), &hom).ok().map(|r| r.model))
            }
        };
        est.map_or(f64::INFINITY, |h| cfg.pixel_frame.corner_error(&h, &gt))
    });

    PairTrace {
        pair_id: pair.id,
        arm,
        rotation_error_deg: rot,
        translation_error_deg: trans,
        corner_error_px,
        counts: mask.map(|m| mask_metrics(&m, &labels).counts()),
    }
}

/// Aggregated metrics of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: Arm,
    pub pairs: usize,
    /// AUC per threshold, percent.
    pub auc: Vec<f64>,
    /// Mean and median of `max(rotation, translation)` error; `+∞` if any/most failed.
    pub mean_error_deg: f64,
    pub median_error_deg: f64,
    pub failures: usize,
    /// Accuracy per pixel threshold over planar pairs.
    pub homography_accuracy: Option<Vec<f64>>,
    /// Pooled over pairs.
    pub classification: Option<ClassificationMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub pairs: usize,
    pub thresholds_deg: Vec<f64>,
    pub homography_thresholds_px: Vec<f64>,
    pub arms: Vec<ArmSummary>,
    /// Per MoE instance, mean router probability per expert over the evaluated pairs.
    pub expert_utilization: Vec<Vec<f64>>,
}

impl BenchmarkReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

pub const HOMOGRAPHY_THRESHOLDS_PX: [f64; 3] = [3.0, 5.0, 10.0];

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Aggregates traces into a report. Arms appear in order of first occurrence.
pub fn summarize(
    traces: &[PairTrace],
    spec: &AucSpec,
    expert_utilization: Vec<Vec<f64>>,
) -> Result<BenchmarkReport, EvalError> {
    let mut arms: Vec<Arm> = Vec::new();
    for t in traces {
        if !arms.contains(&t.arm) {
            arms.push(t.arm);
        }
    }
    let mut summaries = Vec::with_capacity(arms.len());
    let mut pairs = 0;
    for arm in arms {
        let mine: Vec<&PairTrace> = traces.iter().filter(|t| t.arm == arm).collect();
        pairs = pairs.max(mine.len());
        let errors: Vec<f64> = mine.iter().map(|t| t.pose_error_deg()).collect();
        let auc = pose_auc(&errors, spec)?;
        let mut sorted = errors.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        let failures = errors.iter().filter(|e| !e.is_finite()).count();
        let mean_error_deg = errors.iter().sum::<f64>() / errors.len() as f64;
        let corners: Vec<f64> = mine.iter().filter_map(|t| t.corner_error_px).collect();
        let homography_accuracy =
            if corners.is_empty() { None } else { Some(homography_accuracy(&corners, &HOMOGRAPHY_THRESHOLDS_PX)?) };
        let mut counts = [0usize; 4];
        let mut any = false;
        for c in mine.iter().filter_map(|t| t.counts) {
            any = true;
            for (a, b) in counts.iter_mut().zip(c) {
                *a += b;
            }
        }
        let classification = any.then(|| ClassificationMetrics::from_counts(counts[0], counts[1], counts[2], counts[3]));
        summaries.push(ArmSummary {
            arm,
            pairs: mine.len(),
            auc,
            mean_error_deg,
            median_error_deg: median(&sorted),
            failures,
            homography_accuracy,
            classification,
        });
    }
    Ok(BenchmarkReport {
        pairs,
        thresholds_deg: spec.thresholds_deg.clone(),
        homography_thresholds_px: HOMOGRAPHY_THRESHOLDS_PX.to_vec(),
        arms: summaries,
        expert_utilization,
    })
}
