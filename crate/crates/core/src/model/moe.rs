//! Sparse mixture of residual feed-forward experts.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{softmax_rows, softmax_rows_backward, FeatureGrid, Mlp, MlpCache, NnError, ParamLayout, PatternHasher};

/// Router probabilities and the sparse selection made from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    /// `M × T` full softmax of the router.
    pub probs: FeatureGrid,
    /// `M × k` selected experts per token, in descending probability.
    pub selected: Vec<usize>,
    /// `M × k` selected probabilities renormalised to sum to one per token.
    pub mix_weights: Vec<f64>,
    pub top_k: usize,
}

impl RoutingDecision {
    pub fn tokens(&self) -> usize {
        self.probs.rows()
    }

    pub fn selected_for(&self, token: usize) -> &[usize] {
        &self.selected[token * self.top_k..(token + 1) * self.top_k]
    }

    pub fn mix_for(&self, token: usize) -> &[f64] {
        &self.mix_weights[token * self.top_k..(token + 1) * self.top_k]
    }

    /// Number of tokens routed to each expert.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.probs.cols()];
        for &e in &self.selected {
            h[e] += 1;
        }
        h
    }

    /// Mean full-softmax probability per expert.
    pub fn mean_mass(&self) -> Vec<f64> {
        let (m, t) = self.probs.shape();
        let mut out = vec![0.0; t];
        for i in 0..m {
            for (o, p) in out.iter_mut().zip(self.probs.row(i)) {
                *o += p;
            }
        }
        out.iter_mut().for_each(|v| *v /= m as f64);
        out
    }
}

/// Indices of the `k` largest entries, descending, ties to the lowest index.
pub fn top_k_indices(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Router plus `T` experts; expert `t` maps `x ↦ x + MLP_t(x)` with hidden width `D/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FMoE {
    pub router: Mlp,
    pub experts: Vec<Mlp>,
    pub top_k: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct FMoECache {
    input: FeatureGrid,
    router: MlpCache,
    pub decision: RoutingDecision,
    /// Per expert: the tokens it processed, its cache and its outputs.
    expert_rows: Vec<Vec<usize>>,
    expert_caches: Vec<Option<MlpCache>>,
    expert_outputs: Vec<Option<FeatureGrid>>,
}

impl FMoECache {
    pub fn pattern(&self, h: &mut PatternHasher) {
        self.router.pattern(h);
        h.write_usizes(&self.decision.selected);
        for c in self.expert_caches.iter().flatten() {
            c.pattern(h);
        }
    }

    /// Expert forward evaluations performed (token, expert) pairs.
    pub fn expert_evaluations(&self) -> usize {
        self.expert_rows.iter().map(|r| r.len()).sum()
    }
}

impl FMoE {
    pub fn new(layout: &mut ParamLayout, name: &str, dim: usize, experts: usize, top_k: usize) -> Self {
        let router = Mlp::new(layout, &format!("{name}.router"), dim, dim, experts);
        let hidden = (dim / 2).max(1);
        let experts = (0..experts)
            .map(|t| Mlp::new(layout, &format!("{name}.expert{t}"), dim, hidden, dim))
            .collect();
        Self { router, experts, top_k, dim }
    }

    pub fn route(&self, params: &[f64], tokens: &FeatureGrid) -> Result<(RoutingDecision, MlpCache), NnError> {
        let (logits, cache) = self.router.forward(params, tokens)?;
        let probs = softmax_rows(&logits);
        Ok((decide(probs, self.top_k), cache))
    }

    /// Evaluates only the selected experts of every token.
    pub fn forward(&self, params: &[f64], tokens: &FeatureGrid) -> Result<(FeatureGrid, FMoECache), NnError> {
        let (decision, router) = self.route(params, tokens)?;
        let (out, expert_rows, expert_caches, expert_outputs) = self.mix(params, tokens, &decision)?;
        Ok((out, FMoECache { input: tokens.clone(), router, decision, expert_rows, expert_caches, expert_outputs }))
    }

    #[allow(clippy::type_complexity)]
    fn mix(
        &self,
        params: &[f64],
        tokens: &FeatureGrid,
        decision: &RoutingDecision,
    ) -> Result<(FeatureGrid, Vec<Vec<usize>>, Vec<Option<MlpCache>>, Vec<Option<FeatureGrid>>), NnError> {
        let (m, d) = tokens.shape();
        let t = self.experts.len();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); t];
        for i in 0..m {
            for &e in decision.selected_for(i) {
                rows[e].push(i);
            }
        }
        let mut caches = Vec::with_capacity(t);
        let mut outputs = Vec::with_capacity(t);
        let mut out = FeatureGrid::zeros(m, d);
        for (e, expert) in self.experts.iter().enumerate() {
            if rows[e].is_empty() {
                caches.push(None);
                outputs.push(None);
                continue;
            }
            let x = tokens.permute_rows(&rows[e]);
            let (mut y, cache) = expert.forward(params, &x)?;
            y.add_assign(&x);
            for (r, &i) in rows[e].iter().enumerate() {
                let slot = decision.selected_for(i).iter().position(|&s| s == e).expect("routed");
                let w = decision.mix_for(i)[slot];
                for (o, v) in out.row_mut(i).iter_mut().zip(y.row(r)) {
                    *o += w * v;
                }
            }
            caches.push(Some(cache));
            outputs.push(Some(y));
        }
        Ok((out, rows, caches, outputs))
    }

    /// Mixture output under an externally supplied decision.
    pub fn forward_with(&self, params: &[f64], tokens: &FeatureGrid, decision: &RoutingDecision) -> Result<FeatureGrid, NnError> {
        Ok(self.mix(params, tokens, decision)?.0)
    }

    /// Reverse pass. `dprobs` is an extra cotangent on the full router
    /// probabilities (load balancing). Selections are held fixed.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &FMoECache,
        dout: &FeatureGrid,
        dprobs: Option<&FeatureGrid>,
        grads: &mut [f64],
    ) -> FeatureGrid {
        let (m, d) = cache.input.shape();
        let k = self.top_k;
        let decision = &cache.decision;
        let mut dx = FeatureGrid::zeros(m, d);
        let mut dmix = vec![0.0; m * k];

        for (e, expert) in self.experts.iter().enumerate() {
            let (Some(ecache), Some(y)) = (&cache.expert_caches[e], &cache.expert_outputs[e]) else {
                continue;
            };
            let rows = &cache.expert_rows[e];
            let mut dy = FeatureGrid::zeros(rows.len(), d);
            for (r, &i) in rows.iter().enumerate() {
                let slot = decision.selected_for(i).iter().position(|&s| s == e).expect("routed");
                let w = decision.mix_for(i)[slot];
                let g = dout.row(i);
                dmix[i * k + slot] = crate::nn::dot(g, y.row(r));
                for (o, v) in dy.row_mut(r).iter_mut().zip(g) {
                    *o = w * v;
                }
            }
            let dxe = expert.backward(params, ecache, &dy, grads, true).expect("requested");
            for (r, &i) in rows.iter().enumerate() {
                let resid = dy.row(r);
                for ((o, a), b) in dx.row_mut(i).iter_mut().zip(dxe.row(r)).zip(resid) {
                    *o += a + b;
                }
            }
        }

        // mix_j = p_j / Σ_sel p  ⇒  ∂/∂p_j = (dmix_j − Σ_l mix_l dmix_l) / Σ_sel p
        let t = self.experts.len();
        let mut dp = match dprobs {
            Some(g) => g.clone(),
            None => FeatureGrid::zeros(m, t),
        };
        for i in 0..m {
            let sel = decision.selected_for(i);
            let mix = decision.mix_for(i);
            let total: f64 = sel.iter().map(|&e| decision.probs.get(i, e)).sum();
            let inner: f64 = (0..k).map(|s| mix[s] * dmix[i * k + s]).sum();
            for s in 0..k {
                let e = sel[s];
                dp.set(i, e, dp.get(i, e) + (dmix[i * k + s] - inner) / total);
            }
        }
        let dlogits = softmax_rows_backward(&decision.probs, &dp);
        let dr = self.router.backward(params, &cache.router, &dlogits, grads, true).expect("requested");
        dx.add_assign(&dr);
        dx
    }
}

/// Top-k selection and renormalised mixing weights from full probabilities.
pub fn decide(probs: FeatureGrid, top_k: usize) -> RoutingDecision {
    let m = probs.rows();
    let mut selected = Vec::with_capacity(m * top_k);
    let mut mix_weights = Vec::with_capacity(m * top_k);
    for i in 0..m {
        let row = probs.row(i);
        let sel = top_k_indices(row, top_k);
        let total: f64 = sel.iter().map(|&e| row[e]).sum();
        mix_weights.extend(sel.iter().map(|&e| row[e] / total));
        selected.extend(sel);
    }
    RoutingDecision { probs, selected, mix_weights, top_k }
}
