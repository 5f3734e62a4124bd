//! The GeoMoE correspondence filter.
//!
//! A motion embedding lifts each correspondence's motion vector to `D`
//! channels; `L` unrolled [`GeoMoELayer`]s then refine the field and each
//! predicts per-correspondence inlier probabilities.

mod layer;
mod moe;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use layer::{pool_sub_fields, pool_sub_fields_backward, sigmoid, GeoMoELayer, LayerCache, SubFieldPooling, MASS_FLOOR};
pub use moe::{decide, top_k_indices, FMoE, FMoECache, RoutingDecision};

use crate::geometry::{motion_vectors, Correspondence};
use crate::nn::{context_norm, context_norm_backward, ContextNormCache, FeatureGrid, Linear, NnError, ParamLayout, PatternHasher};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {required} correspondences, got {got}")]
    TooFewCorrespondences { required: usize, got: usize },
    #[error("non-finite input at correspondence {0}")]
    NonFiniteInput(usize),
    #[error("parameter vector has {got} entries, layout needs {expected}")]
    ParameterCount { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeoMoEConfig {
    pub layers: usize,
    pub channels: usize,
    pub sub_fields: usize,
    pub experts: usize,
    pub top_k: usize,
    pub loc_k: usize,
    pub attention_heads: usize,
}

impl Default for GeoMoEConfig {
    fn default() -> Self {
        Self { layers: 8, channels: 128, sub_fields: 48, experts: 4, top_k: 2, loc_k: 8, attention_heads: 1 }
    }
}

impl GeoMoEConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.layers == 0 {
            return bad("layers must be at least 1");
        }
        if self.channels == 0 || self.channels % 4 != 0 {
            return bad("channels must be a positive multiple of 4");
        }
        if self.sub_fields == 0 {
            return bad("sub_fields must be at least 1");
        }
        if self.top_k == 0 || self.top_k > self.experts {
            return bad("top_k must lie in 1..=experts");
        }
        if self.loc_k == 0 {
            return bad("loc_k must be at least 1");
        }
        if self.attention_heads == 0 || self.channels % self.attention_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "channels ({}) must be divisible by attention_heads ({})",
                self.channels, self.attention_heads
            )));
        }
        Ok(())
    }

    /// Smallest correspondence count the network accepts.
    pub fn min_correspondences(&self) -> usize {
        8.max(self.loc_k + 1)
    }

    /// Number of F-MoE instances (two per layer).
    pub fn moe_count(&self) -> usize {
        2 * self.layers
    }
}

/// Per-pass statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Expert forward evaluations over all F-MoEs.
    pub expert_evaluations: usize,
    /// Per F-MoE instance, tokens routed to each expert.
    pub routing_histograms: Vec<Vec<usize>>,
    /// Per layer, column mass of the assignment divided by N.
    pub occupancy: Vec<Vec<f64>>,
    /// Per layer, sub-fields that used the unnormalised-sum fallback.
    pub fallback_sub_fields: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// `w^ℓ` for every layer.
    pub layer_weights: Vec<Vec<f64>>,
    /// Routing of every F-MoE, ordered (layer 0 decomposition, layer 0 rectifier, layer 1 …).
    pub routing: Vec<RoutingDecision>,
    pub diagnostics: Diagnostics,
}

impl ModelOutput {
    pub fn final_weights(&self) -> &[f64] {
        self.layer_weights.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    motions: FeatureGrid,
    norm: ContextNormCache,
    layers: Vec<LayerCache>,
}

impl ModelCache {
    pub fn layers(&self) -> &[LayerCache] {
        &self.layers
    }

    pub fn pattern(&self) -> u64 {
        let mut h = PatternHasher::default();
        for l in &self.layers {
            l.pattern(&mut h);
        }
        h.finish()
    }
}

/// Network structure; parameters live in a separate flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoMoE {
    pub config: GeoMoEConfig,
    layout: ParamLayout,
    pub motion_lift: Linear,
    pub layers: Vec<GeoMoELayer>,
}

impl GeoMoE {
    pub fn new(config: GeoMoEConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut layout = ParamLayout::new();
        let d = config.channels;
        let motion_lift = Linear::new(&mut layout, "init.lift", 4, d);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            layers.push(GeoMoELayer::new(
                &mut layout,
                &format!("layer{l}"),
                d,
                config.sub_fields,
                config.experts,
                config.top_k,
                config.loc_k,
                config.attention_heads,
            )?);
        }
        Ok(Self { config, layout, motion_lift, layers })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        self.layout.initialize(seed)
    }

    fn check_params(&self, params: &[f64]) -> Result<(), ModelError> {
        if params.len() != self.layout.len() {
            return Err(ModelError::ParameterCount { expected: self.layout.len(), got: params.len() });
        }
        Ok(())
    }

    /// Affine lift of `(x, x′ − x)` followed by context normalisation.
    pub fn motion_init(&self, params: &[f64], motions: &FeatureGrid) -> Result<(FeatureGrid, FeatureGrid, ContextNormCache), NnError> {
        let lift = self.motion_lift.forward(params, motions)?;
        let (features, norm) = context_norm(&lift)?;
        Ok((features, lift, norm))
    }

    pub fn forward(&self, params: &[f64], corrs: &[Correspondence]) -> Result<(ModelOutput, ModelCache), ModelError> {
        for (i, c) in corrs.iter().enumerate() {
            if !c.is_finite() {
                return Err(ModelError::NonFiniteInput(i));
            }
        }
        let rows: Vec<f64> = motion_vectors(corrs).iter().flat_map(|m| m.as_array()).collect();
        let motions = FeatureGrid::from_vec(corrs.len(), 4, rows)?;
        self.forward_motions(params, &motions)
    }

    /// Forward pass on an `N × 4` grid of motion vectors.
    pub fn forward_motions(&self, params: &[f64], motions: &FeatureGrid) -> Result<(ModelOutput, ModelCache), ModelError> {
        self.check_params(params)?;
        let n = motions.rows();
        let required = self.config.min_correspondences();
        if n < required {
            return Err(ModelError::TooFewCorrespondences { required, got: n });
        }
        let (mut features, _, norm) = self.motion_init(params, motions)?;
        let mut mask = vec![1.0; n];
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut out = ModelOutput { layer_weights: Vec::new(), routing: Vec::new(), diagnostics: Diagnostics::default() };
        for layer in &self.layers {
            let (next, weights, cache) = layer.forward(params, &features, &mask)?;
            let diag = &mut out.diagnostics;
            for moe in [&cache.decompose, &cache.rectify] {
                diag.expert_evaluations += moe.expert_evaluations();
                diag.routing_histograms.push(moe.decision.histogram());
                out.routing.push(moe.decision.clone());
            }
            diag.occupancy.push(cache.pooling.mass.iter().map(|m| m / n as f64).collect());
            diag.fallback_sub_fields.push(cache.pooling.fallback.iter().filter(|&&f| f).count());
            out.layer_weights.push(weights.clone());
            features = next;
            mask = weights;
            caches.push(cache);
        }
        Ok((out, ModelCache { motions: motions.clone(), norm, layers: caches }))
    }

    /// Accumulates parameter gradients given cotangents on every layer's
    /// weights and optional cotangents on every F-MoE's router probabilities
    /// (same order as [`ModelOutput::routing`]). Returns `∂/∂motions`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &ModelCache,
        dweights: &[Vec<f64>],
        dprobs: &[Option<FeatureGrid>],
        grads: &mut [f64],
    ) -> FeatureGrid {
        let n = cache.motions.rows();
        let d = self.config.channels;
        let mut dfeatures = FeatureGrid::zeros(n, d);
        let mut dw_carry = vec![0.0; n];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let mut dw = dweights[l].clone();
            for (a, b) in dw.iter_mut().zip(&dw_carry) {
                *a += b;
            }
            let probs = [
                dprobs.get(2 * l).and_then(Option::as_ref),
                dprobs.get(2 * l + 1).and_then(Option::as_ref),
            ];
            let (dprev, dmask) = layer.backward(params, &cache.layers[l], &dfeatures, &dw, probs, grads);
            dfeatures = dprev;
            // the first layer's mask is the constant all-ones vector
            dw_carry = dmask;
        }
        let dlift = context_norm_backward(&cache.norm, &dfeatures);
        self.motion_lift.backward(params, &cache.motions, &dlift, grads, true).expect("requested")
    }
}
