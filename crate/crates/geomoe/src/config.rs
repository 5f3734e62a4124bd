//! The run configuration file.
//!
//! A TOML document with one section per subsystem. Every key is optional;
//! missing keys take the defaults of the corresponding `geomoe-core` type and
//! unknown keys are rejected. [`key_table`] flattens the defaults into the
//! listing printed by `--help`.

use std::path::{Path, PathBuf};

use geomoe_core::eval::{AucMethod, AucSpec, EvalConfig, PixelFrame};
use geomoe_core::model::GeoMoEConfig;
use geomoe_core::robust::RansacConfig;
use geomoe_core::synth::SceneSpec;
use geomoe_core::train::{AdamConfig, LossWeights, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for generation, initialisation, shuffling and RANSAC.
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
    pub data: DataSection,
    pub scene: SceneSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub optimizer: OptimizerSection,
    pub train: TrainSection,
    pub ransac_essential: EssentialRansacSection,
    pub ransac_homography: HomographyRansacSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub num_structures: usize,
    pub depth_near: f64,
    pub depth_far: f64,
    pub rotation_magnitude_deg: f64,
    pub baseline_min: f64,
    pub baseline_max: f64,
    pub noise_sigma: f64,
    pub outlier_ratio: f64,
    pub points_per_pair: usize,
    pub image_half_extent: f64,
    pub label_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layers: usize,
    pub channels: usize,
    pub sub_fields: usize,
    pub experts: usize,
    pub top_k: usize,
    pub loc_k: usize,
    pub attention_heads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub mu_initial: f64,
    pub mu_target: f64,
    pub ramp_iteration: usize,
    pub beta: f64,
    /// Move the ramp to 20% of runs shorter than five ramp lengths.
    pub rescale_mu: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay_onset: usize,
    pub decay_rate: f64,
    pub decay_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EssentialRansacSection {
    pub max_iterations: usize,
    pub inlier_threshold: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomographyRansacSection {
    pub max_iterations: usize,
    pub inlier_threshold: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub weight_threshold: f64,
    pub focal_px: f64,
    pub thresholds_deg: Vec<f64>,
    pub bin_width_deg: f64,
    /// `histogram` or `trapezoid`.
    pub auc_method: String,
}

/// Default file locations; empty means "must be given on the command line".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub dataset: String,
    pub checkpoint: String,
    pub metrics: String,
    pub report: String,
    pub trace: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            threads: 0,
            data: DataSection::default(),
            scene: SceneSpec::default().into(),
            model: GeoMoEConfig::default().into(),
            loss: LossSection::from_core(&train.loss, train.rescale_mu),
            optimizer: train.adam.into(),
            train: TrainSection { iterations: train.iterations, batch_size: train.batch_size },
            ransac_essential: EssentialRansacSection::default(),
            ransac_homography: HomographyRansacSection::default(),
            eval: EvalSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self { pairs: 2000 }
    }
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSpec::default().into()
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        GeoMoEConfig::default().into()
    }
}

impl Default for LossSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self::from_core(&t.loss, t.rescale_mu)
    }
}

impl Default for OptimizerSection {
    fn default() -> Self {
        AdamConfig::default().into()
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { iterations: t.iterations, batch_size: t.batch_size }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        let auc = AucSpec::default();
        Self {
            weight_threshold: e.weight_threshold,
            focal_px: e.pixel_frame.focal_px,
            thresholds_deg: auc.thresholds_deg,
            bin_width_deg: auc.bin_width_deg,
            auc_method: method_name(auc.method).into(),
        }
    }
}

fn method_name(m: AucMethod) -> &'static str {
    match m {
        AucMethod::Histogram => "histogram",
        AucMethod::Trapezoid => "trapezoid",
    }
}

impl From<SceneSpec> for SceneSection {
    fn from(s: SceneSpec) -> Self {
        Self {
            num_structures: s.num_structures,
            depth_near: s.depth_near,
            depth_far: s.depth_far,
            rotation_magnitude_deg: s.rotation_magnitude_deg,
            baseline_min: s.baseline_min,
            baseline_max: s.baseline_max,
            noise_sigma: s.noise_sigma,
            outlier_ratio: s.outlier_ratio,
            points_per_pair: s.points_per_pair,
            image_half_extent: s.image_half_extent,
            label_threshold: s.label_threshold,
        }
    }
}

impl From<GeoMoEConfig> for ModelSection {
    fn from(c: GeoMoEConfig) -> Self {
        Self {
            layers: c.layers,
            channels: c.channels,
            sub_fields: c.sub_fields,
            experts: c.experts,
            top_k: c.top_k,
            loc_k: c.loc_k,
            attention_heads: c.attention_heads,
        }
    }
}

impl ModelSection {
    pub fn to_core(&self) -> GeoMoEConfig {
        GeoMoEConfig {
            layers: self.layers,
            channels: self.channels,
            sub_fields: self.sub_fields,
            experts: self.experts,
            top_k: self.top_k,
            loc_k: self.loc_k,
            attention_heads: self.attention_heads,
        }
    }
}

impl LossSection {
    fn from_core(l: &LossWeights, rescale_mu: bool) -> Self {
        Self { mu_initial: l.mu_initial, mu_target: l.mu_target, ramp_iteration: l.ramp_iteration, beta: l.beta, rescale_mu }
    }
}

impl From<AdamConfig> for OptimizerSection {
    fn from(a: AdamConfig) -> Self {
        Self {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            decay_onset: a.decay_onset,
            decay_rate: a.decay_rate,
            decay_steps: a.decay_steps,
        }
    }
}

impl Default for EssentialRansacSection {
    fn default() -> Self {
        let r = RansacConfig::essential_default();
        Self { max_iterations: r.max_iterations, inlier_threshold: r.inlier_threshold, confidence: r.confidence }
    }
}

impl Default for HomographyRansacSection {
    fn default() -> Self {
        let r = RansacConfig::homography_default();
        Self { max_iterations: r.max_iterations, inlier_threshold: r.inlier_threshold, confidence: r.confidence }
    }
}

fn ransac(max_iterations: usize, inlier_threshold: f64, confidence: f64, seed: u64) -> RansacConfig {
    RansacConfig { max_iterations, inlier_threshold, confidence, seed }
}

impl RunConfig {
    /// Parses a config document; validation is separate.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Canonical TOML text of the full effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable")
    }

    pub fn scene_spec(&self) -> SceneSpec {
        let s = &self.scene;
        SceneSpec {
            num_structures: s.num_structures,
            depth_near: s.depth_near,
            depth_far: s.depth_far,
            rotation_magnitude_deg: s.rotation_magnitude_deg,
            baseline_min: s.baseline_min,
            baseline_max: s.baseline_max,
            noise_sigma: s.noise_sigma,
            outlier_ratio: s.outlier_ratio,
            points_per_pair: s.points_per_pair,
            image_half_extent: s.image_half_extent,
            label_threshold: s.label_threshold,
            seed: self.seed,
        }
    }

    pub fn model_config(&self) -> GeoMoEConfig {
        self.model.to_core()
    }

    pub fn train_config(&self) -> TrainConfig {
        let o = &self.optimizer;
        let l = &self.loss;
        TrainConfig {
            iterations: self.train.iterations,
            batch_size: self.train.batch_size,
            seed: self.seed,
            adam: AdamConfig {
                learning_rate: o.learning_rate,
                beta1: o.beta1,
                beta2: o.beta2,
                epsilon: o.epsilon,
                decay_onset: o.decay_onset,
                decay_rate: o.decay_rate,
                decay_steps: o.decay_steps,
            },
            loss: LossWeights { mu_initial: l.mu_initial, mu_target: l.mu_target, ramp_iteration: l.ramp_iteration, beta: l.beta },
            rescale_mu: l.rescale_mu,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            essential_ransac: {
                let r = &self.ransac_essential;
                ransac(r.max_iterations, r.inlier_threshold, r.confidence, self.seed)
            },
            homography_ransac: {
                let r = &self.ransac_homography;
                ransac(r.max_iterations, r.inlier_threshold, r.confidence, self.seed)
            },
            weight_threshold: self.eval.weight_threshold,
            pixel_frame: PixelFrame { focal_px: self.eval.focal_px, half_extent: self.scene.image_half_extent },
            seed: self.seed,
        }
    }

    pub fn auc_spec(&self) -> Result<AucSpec> {
        let method = match self.eval.auc_method.as_str() {
            "histogram" => AucMethod::Histogram,
            "trapezoid" => AucMethod::Trapezoid,
            other => {
                return Err(Error::Config(format!("[eval] auc_method: expected `histogram` or `trapezoid`, got `{other}`")))
            }
        };
        Ok(AucSpec { thresholds_deg: self.eval.thresholds_deg.clone(), bin_width_deg: self.eval.bin_width_deg, method })
    }

    /// Checks every section, naming the offending section in the message.
    pub fn validate(&self) -> Result<()> {
        let cfg = |section: &str, msg: String| Error::Config(format!("[{section}] {msg}"));
        self.scene_spec().validate().map_err(|e| cfg("scene", e.to_string()))?;
        self.model_config().validate().map_err(|e| cfg("model", e.to_string()))?;
        let t = self.train_config();
        t.loss.validate().map_err(|e| cfg("loss", e.to_string()))?;
        t.adam.validate().map_err(|e| cfg("optimizer", e.to_string()))?;
        t.validate().map_err(|e| cfg("train", e.to_string()))?;
        let e = self.eval_config();
        e.essential_ransac.validate().map_err(|e| cfg("ransac_essential", e.to_string()))?;
        e.homography_ransac.validate().map_err(|e| cfg("ransac_homography", e.to_string()))?;
        self.auc_spec()?.validate().map_err(|e| cfg("eval", e.to_string()))?;
        if !(self.eval.weight_threshold > 0.0 && self.eval.weight_threshold < 1.0) {
            return Err(cfg("eval", "weight_threshold must lie in (0, 1)".into()));
        }
        if !(self.eval.focal_px > 0.0 && self.eval.focal_px.is_finite()) {
            return Err(cfg("eval", "focal_px must be positive".into()));
        }
        Ok(())
    }

    pub fn path(&self, value: &str) -> Option<PathBuf> {
        (!value.is_empty()).then(|| PathBuf::from(value))
    }
}

/// Documentation for every key, in file order.
const KEY_DOCS: &[(&str, &str)] = &[
    ("seed", "master seed for generation, initialisation, shuffling and RANSAC"),
    ("threads", "worker threads, 0 = available parallelism"),
    ("data.pairs", "pairs written by `generate`"),
    ("scene.num_structures", "depth planes / point clusters per scene"),
    ("scene.depth_near", "nearest structure depth"),
    ("scene.depth_far", "farthest structure depth"),
    ("scene.rotation_magnitude_deg", "maximum relative rotation"),
    ("scene.baseline_min", "smallest translation norm"),
    ("scene.baseline_max", "largest translation norm"),
    ("scene.noise_sigma", "second-view inlier noise, normalised units"),
    ("scene.outlier_ratio", "fraction of injected outliers, in [0, 1)"),
    ("scene.points_per_pair", "correspondences per pair (>= 16)"),
    ("scene.image_half_extent", "half width of the normalised image"),
    ("scene.label_threshold", "symmetric epipolar distance separating inliers"),
    ("model.layers", "unrolled GeoMoE layers L"),
    ("model.channels", "feature channels D"),
    ("model.sub_fields", "motion sub-fields M"),
    ("model.experts", "experts per F-MoE T"),
    ("model.top_k", "experts selected per token k"),
    ("model.loc_k", "neighbours of the local orthogonal context"),
    ("model.attention_heads", "heads of every attention block"),
    ("loss.mu_initial", "regression weight before the ramp"),
    ("loss.mu_target", "regression weight from the ramp on"),
    ("loss.ramp_iteration", "iteration of the regression-weight step"),
    ("loss.beta", "load-balance weight"),
    ("loss.rescale_mu", "move the ramp to 20% of short runs"),
    ("optimizer.learning_rate", "initial Adam step size"),
    ("optimizer.beta1", "first-moment decay"),
    ("optimizer.beta2", "second-moment decay"),
    ("optimizer.epsilon", "Adam denominator guard"),
    ("optimizer.decay_onset", "iteration where learning-rate decay starts"),
    ("optimizer.decay_rate", "learning-rate factor per decay_steps"),
    ("optimizer.decay_steps", "iterations per decay_rate factor"),
    ("train.iterations", "total optimiser steps"),
    ("train.batch_size", "pairs per step"),
    ("ransac_essential.max_iterations", "hypothesis budget"),
    ("ransac_essential.inlier_threshold", "symmetric epipolar distance threshold"),
    ("ransac_essential.confidence", "adaptive early-exit confidence"),
    ("ransac_homography.max_iterations", "hypothesis budget"),
    ("ransac_homography.inlier_threshold", "transfer error threshold, normalised units"),
    ("ransac_homography.confidence", "adaptive early-exit confidence"),
    ("eval.weight_threshold", "network weight counted as a kept correspondence"),
    ("eval.focal_px", "focal length of the pixel frame for corner errors"),
    ("eval.thresholds_deg", "pose AUC thresholds"),
    ("eval.bin_width_deg", "histogram bin width"),
    ("eval.auc_method", "`histogram` or `trapezoid`"),
    ("paths.dataset", "default dataset file"),
    ("paths.checkpoint", "default checkpoint file"),
    ("paths.metrics", "default training metrics log"),
    ("paths.report", "default benchmark report (JSON)"),
    ("paths.trace", "default per-pair trace file"),
];

/// `(key, default, description)` for every configuration key.
pub fn key_table() -> Vec<(String, String, &'static str)> {
    let value = toml::Value::try_from(RunConfig::default()).expect("defaults serialise");
    let mut flat = Vec::new();
    flatten("", &value, &mut flat);
    flat.into_iter()
        .map(|(k, v)| {
            let doc = KEY_DOCS.iter().find(|(name, _)| *name == k).map(|(_, d)| *d).unwrap_or("");
            (k, v, doc)
        })
        .collect()
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// The `--help` appendix listing every key with its default.
pub fn help_text() -> String {
    let rows = key_table();
    let width = rows.iter().map(|(k, v, _)| k.len() + v.len() + 3).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (TOML `[section] key = value`) and defaults:\n");
    for (k, v, doc) in rows {
        let kv = format!("{k} = {v}");
        s.push_str(&format!("  {kv:<width$}  {doc}\n"));
    }
    s
}

/// All documented keys, for consistency checks.
pub fn documented_keys() -> impl Iterator<Item = &'static str> {
    KEY_DOCS.iter().map(|(k, _)| *k)
}
