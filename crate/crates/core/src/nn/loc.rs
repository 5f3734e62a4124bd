use alloc::format;
use alloc::vec::Vec;

use super::knn::knn_neighborhoods;
use super::{FeatureGrid, Linear, Mlp, MlpCache, NnError, ParamLayout, PatternHasher};

/// Local orthogonal context: neighbourhood differences in a reduced channel
/// space, mixed first across channels and then across neighbours, collapsed
/// to one vector per row and added back to the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocBlock {
    pub reduce: Linear,
    pub channel_mlp: Mlp,
    pub neighbor_mlp: Mlp,
    pub collapse: Mlp,
    pub expand: Linear,
    pub k: usize,
    pub dim: usize,
    pub reduced: usize,
}

#[derive(Debug, Clone)]
pub struct LocCache {
    input: FeatureGrid,
    /// `R × (k+1)` neighbour table.
    pub neighbors: Vec<usize>,
    channel: MlpCache,
    neighbor: MlpCache,
    collapse: MlpCache,
    local: FeatureGrid,
}

impl LocCache {
    pub fn pattern(&self, h: &mut PatternHasher) {
        h.write_usizes(&self.neighbors);
        self.channel.pattern(h);
        self.neighbor.pattern(h);
        self.collapse.pattern(h);
    }
}

impl LocBlock {
    /// `dim` must be divisible by 4; the reduced width is `dim / 4`.
    pub fn new(layout: &mut ParamLayout, name: &str, dim: usize, k: usize) -> Self {
        let reduced = (dim / 4).max(1);
        let width = k + 1;
        Self {
            reduce: Linear::new(layout, &format!("{name}.reduce"), dim, reduced),
            channel_mlp: Mlp::new(layout, &format!("{name}.channel"), reduced, reduced, reduced),
            neighbor_mlp: Mlp::new(layout, &format!("{name}.neighbor"), width, width, width),
            collapse: Mlp::new(layout, &format!("{name}.collapse"), width, width, 1),
            expand: Linear::new(layout, &format!("{name}.expand"), reduced, dim),
            k,
            dim,
            reduced,
        }
    }

    pub fn forward(&self, params: &[f64], field: &FeatureGrid) -> Result<(FeatureGrid, LocCache), NnError> {
        let n = field.rows();
        if self.k >= n {
            return Err(NnError::KTooLarge { k: self.k, rows: n });
        }
        let (dr, w) = (self.reduced, self.k + 1);
        let g = self.reduce.forward(params, field)?;
        let neighbors = knn_neighborhoods(&g, self.k)?;

        let mut h = FeatureGrid::zeros(n * w, dr);
        for i in 0..n {
            for j in 0..w {
                let src = neighbors[i * w + j];
                for c in 0..dr {
                    h.set(i * w + j, c, g.get(i, c) - g.get(src, c));
                }
            }
        }
        let (mut hf, channel) = self.channel_mlp.forward(params, &h)?;
        hf.add_assign(&h);

        let ht = transpose_blocks(&hf, n, w, dr);
        let (mut t2, neighbor) = self.neighbor_mlp.forward(params, &ht)?;
        t2.add_assign(&ht);
        let (collapsed, collapse) = self.collapse.forward(params, &t2)?;
        let local = FeatureGrid::from_vec(n, dr, collapsed.into_vec())?;

        let mut out = self.expand.forward(params, &local)?;
        out.add_assign(field);
        Ok((
            out,
            LocCache { input: field.clone(), neighbors, channel, neighbor, collapse, local },
        ))
    }

    pub fn backward(&self, params: &[f64], cache: &LocCache, dout: &FeatureGrid, grads: &mut [f64]) -> FeatureGrid {
        let n = cache.input.rows();
        let (dr, w) = (self.reduced, self.k + 1);
        let dlocal = self.expand.backward(params, &cache.local, dout, grads, true).expect("requested");
        let dcollapsed = FeatureGrid::from_vec(n * dr, 1, dlocal.into_vec()).expect("same size");
        let mut dt2 = self.collapse.backward(params, &cache.collapse, &dcollapsed, grads, true).expect("requested");
        let dht_branch = self.neighbor_mlp.backward(params, &cache.neighbor, &dt2, grads, true).expect("requested");
        dt2.add_assign(&dht_branch);

        let mut dhf = untranspose_blocks(&dt2, n, w, dr);
        let dh_branch = self.channel_mlp.backward(params, &cache.channel, &dhf, grads, true).expect("requested");
        dhf.add_assign(&dh_branch);

        let mut dg = FeatureGrid::zeros(n, dr);
        for i in 0..n {
            for j in 0..w {
                let src = cache.neighbors[i * w + j];
                for c in 0..dr {
                    let v = dhf.get(i * w + j, c);
                    dg.set(i, c, dg.get(i, c) + v);
                    dg.set(src, c, dg.get(src, c) - v);
                }
            }
        }
        let mut dx = self.reduce.backward(params, &cache.input, &dg, grads, true).expect("requested");
        dx.add_assign(dout);
        dx
    }
}

/// `(n·w) × c` → `(n·c) × w`, transposing each row's `w × c` block.
fn transpose_blocks(x: &FeatureGrid, n: usize, w: usize, c: usize) -> FeatureGrid {
    let mut out = FeatureGrid::zeros(n * c, w);
    for i in 0..n {
        for j in 0..w {
            for ch in 0..c {
                out.set(i * c + ch, j, x.get(i * w + j, ch));
            }
        }
    }
    out
}

fn untranspose_blocks(x: &FeatureGrid, n: usize, w: usize, c: usize) -> FeatureGrid {
    let mut out = FeatureGrid::zeros(n * w, c);
    for i in 0..n {
        for j in 0..w {
            for ch in 0..c {
                out.set(i * w + j, ch, x.get(i * c + ch, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn identical_rows_get_identical_offsets() {
        let mut layout = ParamLayout::new();
        let loc = LocBlock::new(&mut layout, "loc", 8, 3);
        let p = layout.initialize(11);
        let row: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let f = FeatureGrid::from_rows(&alloc::vec![row.clone(); 6]).unwrap();
        let (out, _) = loc.forward(&p, &f).unwrap();
        for i in 1..6 {
            assert_eq!(out.row(i), out.row(0));
        }
    }

    #[test]
    fn permutation_equivariant_in_general_position() {
        let mut layout = ParamLayout::new();
        let loc = LocBlock::new(&mut layout, "loc", 8, 3);
        let p = layout.initialize(12);
        let mut rng = SeededRng::new(13);
        let f = FeatureGrid::from_vec(10, 8, (0..80).map(|_| rng.normal()).collect()).unwrap();
        let mut perm: Vec<usize> = (0..10).collect();
        rng.shuffle(&mut perm);
        let (out, _) = loc.forward(&p, &f).unwrap();
        let (out_p, _) = loc.forward(&p, &f.permute_rows(&perm)).unwrap();
        assert!(out.permute_rows(&perm).max_abs_diff(&out_p) < 1e-12);
    }

    #[test]
    fn rejects_small_sets() {
        let mut layout = ParamLayout::new();
        let loc = LocBlock::new(&mut layout, "loc", 8, 3);
        let p = layout.initialize(1);
        assert!(matches!(loc.forward(&p, &FeatureGrid::zeros(3, 8)), Err(NnError::KTooLarge { .. })));
    }
}
