use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

use super::grid::{matmul, matmul_nt, matmul_tn_acc};
use super::layers::{softmax_in_place, softmax_rows_backward};
use super::{FeatureGrid, Init, NnError, ParamLayout, Slot};

/// Residual scaled dot-product attention from a query set to a key set over
/// the complete bipartite graph:
/// `out = q + concat_h(softmax(q W_q,h (k W_k,h)ᵀ / √d_h) · k W_v,h) · W_o`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossAttention {
    pub w_q: Slot,
    pub w_k: Slot,
    pub w_v: Slot,
    pub w_o: Slot,
    pub dim: usize,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    queries: FeatureGrid,
    keys: FeatureGrid,
    q_proj: FeatureGrid,
    k_proj: FeatureGrid,
    v_proj: FeatureGrid,
    /// One `Q × K` attention matrix per head.
    alpha: Vec<FeatureGrid>,
    mixed: FeatureGrid,
}

impl AttentionCache {
    pub fn attention(&self, head: usize) -> &FeatureGrid {
        &self.alpha[head]
    }
}

impl CrossAttention {
    pub fn new(layout: &mut ParamLayout, name: &str, dim: usize, heads: usize) -> Result<Self, NnError> {
        if heads == 0 || dim % heads != 0 {
            return Err(NnError::Heads { channels: dim, heads });
        }
        let init = Init::Uniform { fan_in: dim };
        Ok(Self {
            w_q: layout.alloc(format!("{name}.w_q"), &[dim, dim], init),
            w_k: layout.alloc(format!("{name}.w_k"), &[dim, dim], init),
            w_v: layout.alloc(format!("{name}.w_v"), &[dim, dim], init),
            w_o: layout.alloc(format!("{name}.w_o"), &[dim, dim], init),
            dim,
            heads,
        })
    }

    fn project(&self, x: &FeatureGrid, w: Slot, params: &[f64]) -> FeatureGrid {
        let mut out = FeatureGrid::zeros(x.rows(), self.dim);
        matmul(x.as_slice(), w.get(params), x.rows(), self.dim, self.dim, out.as_mut_slice());
        out
    }

    pub fn forward(
        &self,
        params: &[f64],
        queries: &FeatureGrid,
        keys: &FeatureGrid,
    ) -> Result<(FeatureGrid, AttentionCache), NnError> {
        let d = self.dim;
        if queries.cols() != d {
            return Err(NnError::Shape { expected: (queries.rows(), d), got: queries.shape() });
        }
        if keys.cols() != d {
            return Err(NnError::Shape { expected: (keys.rows(), d), got: keys.shape() });
        }
        if keys.rows() == 0 {
            return Err(NnError::EmptyKeys);
        }
        let (nq, nk) = (queries.rows(), keys.rows());
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q_proj = self.project(queries, self.w_q, params);
        let k_proj = self.project(keys, self.w_k, params);
        let v_proj = self.project(keys, self.w_v, params);

        let mut mixed = FeatureGrid::zeros(nq, d);
        let mut alpha = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let mut a = FeatureGrid::zeros(nq, nk);
            for i in 0..nq {
                let qi = &q_proj.row(i)[cols.clone()];
                let row = a.row_mut(i);
                for (j, s) in row.iter_mut().enumerate() {
                    *s = super::dot(qi, &k_proj.row(j)[cols.clone()]) * scale;
                }
                softmax_in_place(row);
            }
            for i in 0..nq {
                let out = &mut mixed.row_mut(i)[cols.clone()];
                for (j, &w) in a.row(i).iter().enumerate() {
                    for (o, v) in out.iter_mut().zip(&v_proj.row(j)[cols.clone()]) {
                        *o += w * v;
                    }
                }
            }
            alpha.push(a);
        }
        let mut out = self.project(&mixed, self.w_o, params);
        out.add_assign(queries);
        let cache = AttentionCache {
            queries: queries.clone(),
            keys: keys.clone(),
            q_proj,
            k_proj,
            v_proj,
            alpha,
            mixed,
        };
        Ok((out, cache))
    }

    /// Returns `(∂/∂queries, ∂/∂keys)`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &AttentionCache,
        dout: &FeatureGrid,
        grads: &mut [f64],
    ) -> (FeatureGrid, FeatureGrid) {
        let d = self.dim;
        let (nq, nk) = (cache.queries.rows(), cache.keys.rows());
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        matmul_tn_acc(cache.mixed.as_slice(), dout.as_slice(), nq, d, d, self.w_o.get_mut(grads));
        let mut dmixed = FeatureGrid::zeros(nq, d);
        matmul_nt(dout.as_slice(), self.w_o.get(params), nq, d, d, dmixed.as_mut_slice());

        let mut dq_proj = FeatureGrid::zeros(nq, d);
        let mut dk_proj = FeatureGrid::zeros(nk, d);
        let mut dv_proj = FeatureGrid::zeros(nk, d);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let a = &cache.alpha[h];
            let mut da = FeatureGrid::zeros(nq, nk);
            for i in 0..nq {
                let dm = &dmixed.row(i)[cols.clone()];
                for j in 0..nk {
                    da.set(i, j, super::dot(dm, &cache.v_proj.row(j)[cols.clone()]));
                    let w = a.get(i, j);
                    for (g, x) in dv_proj.row_mut(j)[cols.clone()].iter_mut().zip(dm) {
                        *g += w * x;
                    }
                }
            }
            let ds = softmax_rows_backward(a, &da);
            for i in 0..nq {
                for j in 0..nk {
                    let s = ds.get(i, j) * scale;
                    if s == 0.0 {
                        continue;
                    }
                    let kj = &cache.k_proj.row(j)[cols.clone()];
                    let qi = &cache.q_proj.row(i)[cols.clone()];
                    for (g, x) in dq_proj.row_mut(i)[cols.clone()].iter_mut().zip(kj) {
                        *g += s * x;
                    }
                    for (g, x) in dk_proj.row_mut(j)[cols.clone()].iter_mut().zip(qi) {
                        *g += s * x;
                    }
                }
            }
        }

        matmul_tn_acc(cache.queries.as_slice(), dq_proj.as_slice(), nq, d, d, self.w_q.get_mut(grads));
        matmul_tn_acc(cache.keys.as_slice(), dk_proj.as_slice(), nk, d, d, self.w_k.get_mut(grads));
        matmul_tn_acc(cache.keys.as_slice(), dv_proj.as_slice(), nk, d, d, self.w_v.get_mut(grads));

        let mut dq = dout.clone();
        let mut tmp = FeatureGrid::zeros(nq, d);
        matmul_nt(dq_proj.as_slice(), self.w_q.get(params), nq, d, d, tmp.as_mut_slice());
        dq.add_assign(&tmp);

        let mut dk = FeatureGrid::zeros(nk, d);
        matmul_nt(dk_proj.as_slice(), self.w_k.get(params), nk, d, d, dk.as_mut_slice());
        let mut tmp = FeatureGrid::zeros(nk, d);
        matmul_nt(dv_proj.as_slice(), self.w_v.get(params), nk, d, d, tmp.as_mut_slice());
        dk.add_assign(&tmp);
        (dq, dk)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random_grid(rng: &mut SeededRng, r: usize, c: usize) -> FeatureGrid {
        FeatureGrid::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn single_key_gets_full_weight() {
        let mut layout = ParamLayout::new();
        let att = CrossAttention::new(&mut layout, "g", 4, 2).unwrap();
        let p = layout.initialize(3);
        let mut rng = SeededRng::new(5);
        let q = random_grid(&mut rng, 3, 4);
        let k = random_grid(&mut rng, 1, 4);
        let (out, _) = att.forward(&p, &q, &k).unwrap();
        // q + k W_v W_o, identical update for every query
        let mut kv = [0.0; 4];
        matmul(k.as_slice(), att.w_v.get(&p), 1, 4, 4, &mut kv);
        let mut upd = [0.0; 4];
        matmul(&kv, att.w_o.get(&p), 1, 4, 4, &mut upd);
        for i in 0..3 {
            for c in 0..4 {
                assert!((out.get(i, c) - q.get(i, c) - upd[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dead_output_projection_keeps_queries() {
        let mut layout = ParamLayout::new();
        let att = CrossAttention::new(&mut layout, "g", 4, 1).unwrap();
        let mut p = layout.initialize(3);
        att.w_o.get_mut(&mut p).iter_mut().for_each(|v| *v = 0.0);
        let mut rng = SeededRng::new(6);
        let q = random_grid(&mut rng, 3, 4);
        let k = random_grid(&mut rng, 5, 4);
        assert_eq!(att.forward(&p, &q, &k).unwrap().0, q);
        assert_eq!(att.forward(&p, &q, &FeatureGrid::zeros(0, 4)).unwrap_err(), NnError::EmptyKeys);
    }

    #[test]
    fn rows_of_attention_are_stochastic() {
        let mut layout = ParamLayout::new();
        let att = CrossAttention::new(&mut layout, "g", 6, 3).unwrap();
        let p = layout.initialize(9);
        let mut rng = SeededRng::new(7);
        let (_, cache) = att.forward(&p, &random_grid(&mut rng, 4, 6), &random_grid(&mut rng, 7, 6)).unwrap();
        for h in 0..3 {
            for i in 0..4 {
                let s: f64 = cache.attention(h).row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
