//! One unrolled GeoMoE layer: LOC → decomposition → bi-path rectification →
//! reconstruction → inlier head.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

use super::moe::{FMoE, FMoECache};
use crate::nn::{
    avg_pool_rows, avg_pool_rows_backward, softmax_rows, softmax_rows_backward, AttentionCache, CrossAttention,
    FeatureGrid, LocBlock, LocCache, Mlp, MlpCache, NnError, ParamLayout, PatternHasher,
};

/// Column mass below which a sub-field falls back to the unnormalised sum.
pub const MASS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GeoMoELayer {
    pub loc: LocBlock,
    pub score: Mlp,
    pub decompose: FMoE,
    pub prior_attention: CrossAttention,
    pub spatial_attention: CrossAttention,
    pub channel_gate: Mlp,
    pub fuse: Mlp,
    pub rectify: FMoE,
    pub reconstruct: CrossAttention,
    pub head: Mlp,
    pub dim: usize,
    pub sub_fields: usize,
}

/// Soft-assignment pooling `Z = diag(1/mass) · Sᵀ F`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubFieldPooling {
    pub tokens: FeatureGrid,
    /// Column sums of `S`.
    pub mass: Vec<f64>,
    /// Sub-fields whose mass fell below [`MASS_FLOOR`].
    pub fallback: Vec<bool>,
}

pub fn pool_sub_fields(assignment: &FeatureGrid, field: &FeatureGrid) -> SubFieldPooling {
    let (n, m) = assignment.shape();
    let d = field.cols();
    let mut tokens = FeatureGrid::zeros(m, d);
    let mut mass = vec![0.0; m];
    for i in 0..n {
        let f = field.row(i);
        for (s, &a) in assignment.row(i).iter().enumerate() {
            mass[s] += a;
            for (z, v) in tokens.row_mut(s).iter_mut().zip(f) {
                *z += a * v;
            }
        }
    }
    let fallback: Vec<bool> = mass.iter().map(|&c| c < MASS_FLOOR).collect();
    for s in 0..m {
        if !fallback[s] {
            let inv = 1.0 / mass[s];
            tokens.row_mut(s).iter_mut().for_each(|v| *v *= inv);
        }
    }
    SubFieldPooling { tokens, mass, fallback }
}

/// Returns `(∂/∂S, ∂/∂F)`.
pub fn pool_sub_fields_backward(
    assignment: &FeatureGrid,
    field: &FeatureGrid,
    pooled: &SubFieldPooling,
    dtokens: &FeatureGrid,
) -> (FeatureGrid, FeatureGrid) {
    let (n, m) = assignment.shape();
    let d = field.cols();
    // per sub-field: scale 1/c and the offset term Z·dZ/c
    let mut scale = vec![1.0; m];
    let mut offset = vec![0.0; m];
    for s in 0..m {
        if !pooled.fallback[s] {
            scale[s] = 1.0 / pooled.mass[s];
            offset[s] = crate::nn::dot(pooled.tokens.row(s), dtokens.row(s)) * scale[s];
        }
    }
    let mut ds = FeatureGrid::zeros(n, m);
    let mut df = FeatureGrid::zeros(n, d);
    for i in 0..n {
        let f = field.row(i);
        for s in 0..m {
            let dz = dtokens.row(s);
            ds.set(i, s, crate::nn::dot(f, dz) * scale[s] - offset[s]);
            let a = assignment.get(i, s) * scale[s];
            for (o, g) in df.row_mut(i).iter_mut().zip(dz) {
                *o += a * g;
            }
        }
    }
    (ds, df)
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    loc: LocCache,
    field: FeatureGrid,
    score: MlpCache,
    pub assignment: FeatureGrid,
    pub pooling: SubFieldPooling,
    pub decompose: FMoECache,
    mask: Vec<f64>,
    prior: AttentionCache,
    refined: FeatureGrid,
    spatial: AttentionCache,
    gate_cache: MlpCache,
    gate: FeatureGrid,
    fuse: MlpCache,
    pub rectify: FMoECache,
    reconstruct: AttentionCache,
    head: MlpCache,
    pub weights: Vec<f64>,
}

impl LayerCache {
    pub fn pattern(&self, h: &mut PatternHasher) {
        self.loc.pattern(h);
        self.score.pattern(h);
        self.decompose.pattern(h);
        self.gate_cache.pattern(h);
        self.fuse.pattern(h);
        self.rectify.pattern(h);
        self.head.pattern(h);
    }

    /// Sub-field tokens after masked cross-attention.
    pub fn refined_tokens(&self) -> &FeatureGrid {
        &self.refined
    }
}

impl GeoMoELayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layout: &mut ParamLayout,
        name: &str,
        dim: usize,
        sub_fields: usize,
        experts: usize,
        top_k: usize,
        loc_k: usize,
        heads: usize,
    ) -> Result<Self, NnError> {
        Ok(Self {
            loc: LocBlock::new(layout, &format!("{name}.loc"), dim, loc_k),
            score: Mlp::new(layout, &format!("{name}.score"), dim, dim, sub_fields),
            decompose: FMoE::new(layout, &format!("{name}.decompose_moe"), dim, experts, top_k),
            prior_attention: CrossAttention::new(layout, &format!("{name}.prior_gat"), dim, heads)?,
            spatial_attention: CrossAttention::new(layout, &format!("{name}.spatial_gat"), dim, heads)?,
            channel_gate: Mlp::new(layout, &format!("{name}.channel_gate"), dim, dim, dim),
            fuse: Mlp::new(layout, &format!("{name}.fuse"), 2 * dim, dim, dim),
            rectify: FMoE::new(layout, &format!("{name}.rectify_moe"), dim, experts, top_k),
            reconstruct: CrossAttention::new(layout, &format!("{name}.reconstruct_gat"), dim, heads)?,
            head: Mlp::new(layout, &format!("{name}.head"), dim, dim, 1),
            dim,
            sub_fields,
        })
    }

    /// Cross-attention from sub-field tokens to the field with every row
    /// scaled by its previous-layer weight, keys and values alike.
    pub fn refine_tokens(
        &self,
        params: &[f64],
        tokens: &FeatureGrid,
        field: &FeatureGrid,
        mask: &[f64],
    ) -> Result<(FeatureGrid, AttentionCache), NnError> {
        let mut masked = field.clone();
        for (i, &w) in mask.iter().enumerate() {
            masked.row_mut(i).iter_mut().for_each(|v| *v *= w);
        }
        self.prior_attention.forward(params, tokens, &masked)
    }

    /// `(F^{ℓ+1}, w^ℓ, cache)` from `F^ℓ` and the previous layer's weights.
    pub fn forward(
        &self,
        params: &[f64],
        features: &FeatureGrid,
        mask: &[f64],
    ) -> Result<(FeatureGrid, Vec<f64>, LayerCache), NnError> {
        let n = features.rows();
        if mask.len() != n {
            return Err(NnError::Shape { expected: (n, 1), got: (mask.len(), 1) });
        }
        let (field, loc) = self.loc.forward(params, features)?;

        // decomposition
        let (scores, score) = self.score.forward(params, &field)?;
        let assignment = softmax_rows(&scores);
        let pooling = pool_sub_fields(&assignment, &field);
        let (decomposed, decompose) = self.decompose.forward(params, &pooling.tokens)?;
        let (refined, prior) = self.refine_tokens(params, &decomposed, &field, mask)?;

        // bi-path enhancement
        let (spatial_out, spatial) = self.spatial_attention.forward(params, &refined, &refined)?;
        let pooled = avg_pool_rows(&refined)?;
        let (gate, gate_cache) = self.channel_gate.forward(params, &pooled)?;
        let mut channel_out = refined.clone();
        for i in 0..channel_out.rows() {
            for (v, g) in channel_out.row_mut(i).iter_mut().zip(gate.row(0)) {
                *v *= g;
            }
        }
        let (fused, fuse) = self.fuse.forward(params, &channel_out.concat_cols(&spatial_out))?;

        // rectification and reconstruction
        let (rectified, rectify) = self.rectify.forward(params, &fused)?;
        let (next, reconstruct) = self.reconstruct.forward(params, &field, &rectified)?;

        let (logits, head) = self.head.forward(params, &next)?;
        let weights: Vec<f64> = logits.as_slice().iter().map(|&l| sigmoid(l)).collect();

        let cache = LayerCache {
            loc,
            field,
            score,
            assignment,
            pooling,
            decompose,
            mask: mask.to_vec(),
            prior,
            refined,
            spatial,
            gate_cache,
            gate,
            fuse,
            rectify,
            reconstruct,
            head,
            weights: weights.clone(),
        };
        Ok((next, weights, cache))
    }

    /// Reverse pass. `dprobs` are extra cotangents on the full router
    /// probabilities of the decomposition and rectifier MoEs.
    /// Returns `(∂/∂F^ℓ, ∂/∂mask)`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &LayerCache,
        dnext: &FeatureGrid,
        dweights: &[f64],
        dprobs: [Option<&FeatureGrid>; 2],
        grads: &mut [f64],
    ) -> (FeatureGrid, Vec<f64>) {
        let n = cache.field.rows();
        let d = self.dim;

        let mut dlogits = FeatureGrid::zeros(n, 1);
        for (i, (&w, &g)) in cache.weights.iter().zip(dweights).enumerate() {
            dlogits.set(i, 0, g * w * (1.0 - w));
        }
        let mut dnext_total = self.head.backward(params, &cache.head, &dlogits, grads, true).expect("requested");
        dnext_total.add_assign(dnext);

        let (mut dfield, drectified) = self.reconstruct.backward(params, &cache.reconstruct, &dnext_total, grads);
        let dfused = self.rectify.backward(params, &cache.rectify, &drectified, dprobs[1], grads);
        let dcat = self.fuse.backward(params, &cache.fuse, &dfused, grads, true).expect("requested");
        let (dchannel, dspatial) = dcat.split_cols(d);

        let refined = &cache.refined;
        let m = refined.rows();
        let mut drefined = FeatureGrid::zeros(m, d);
        let mut dgate = FeatureGrid::zeros(1, d);
        for i in 0..m {
            for c in 0..d {
                let g = dchannel.get(i, c);
                dgate.set(0, c, dgate.get(0, c) + g * refined.get(i, c));
                drefined.set(i, c, g * cache.gate.get(0, c));
            }
        }
        let dpooled = self.channel_gate.backward(params, &cache.gate_cache, &dgate, grads, true).expect("requested");
        drefined.add_assign(&avg_pool_rows_backward(m, &dpooled));
        let (dq, dk) = self.spatial_attention.backward(params, &cache.spatial, &dspatial, grads);
        drefined.add_assign(&dq);
        drefined.add_assign(&dk);

        let (ddecomposed, dmasked) = self.prior_attention.backward(params, &cache.prior, &drefined, grads);
        let mut dmask = vec![0.0; n];
        for i in 0..n {
            let w = cache.mask[i];
            dmask[i] = crate::nn::dot(cache.field.row(i), dmasked.row(i));
            for (o, g) in dfield.row_mut(i).iter_mut().zip(dmasked.row(i)) {
                *o += w * g;
            }
        }
        let dtokens = self.decompose.backward(params, &cache.decompose, &ddecomposed, dprobs[0], grads);
        let (dassign, dfield_pool) = pool_sub_fields_backward(&cache.assignment, &cache.field, &cache.pooling, &dtokens);
        dfield.add_assign(&dfield_pool);
        let dscores = softmax_rows_backward(&cache.assignment, &dassign);
        let dfield_score = self.score.backward(params, &cache.score, &dscores, grads, true).expect("requested");
        dfield.add_assign(&dfield_score);

        let dinput = self.loc.backward(params, &cache.loc, &dfield, grads);
        (dinput, dmask)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_assignment_pools_group_means() {
        // rows 0..3 go to sub-field 0, rows 3..6 to sub-field 1
        let mut s = FeatureGrid::zeros(6, 2);
        for i in 0..6 {
            s.set(i, usize::from(i >= 3), 1.0);
        }
        let f = FeatureGrid::from_vec(6, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, -1.0, 0.0, -2.0, 0.0, -3.0, 3.0]).unwrap();
        let p = pool_sub_fields(&s, &f);
        assert_eq!(p.tokens.row(0), &[3.0, 4.0]);
        assert_eq!(p.tokens.row(1), &[-2.0, 1.0]);
        assert_eq!(p.mass, vec![3.0, 3.0]);
    }

    #[test]
    fn empty_sub_field_falls_back() {
        let mut s = FeatureGrid::zeros(3, 2);
        for i in 0..3 {
            s.set(i, 0, 1.0);
        }
        let f = FeatureGrid::filled(3, 2, 1.0);
        let p = pool_sub_fields(&s, &f);
        assert_eq!(p.fallback, vec![false, true]);
        assert_eq!(p.tokens.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn sigmoid_saturates() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(20.0) >= 1.0 - 1e-8);
        assert!(sigmoid(-800.0) >= 0.0);
    }
}
