//! Finite-difference adapters for every differentiable block and a seeded
//! gradient suite built on them.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

use crate::model::GeoMoELayer;
use crate::nn::*;
use crate::rng::SeededRng;
use crate::synth::{generate_pair, SceneSpec};
use crate::train::essential_regression_loss;

fn grid(rows: usize, cols: usize, data: &[f64]) -> Result<FeatureGrid, NnError> {
    FeatureGrid::from_vec(rows, cols, data.to_vec())
}

pub struct LinearOp {
    pub lin: Linear,
    pub rows: usize,
}

impl GradOp for LinearOp {
    fn forward(&self, p: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        Ok((self.lin.forward(p, &grid(self.rows, self.lin.fan_in, x)?)?.into_vec(), 0))
    }
    fn backward(&self, p: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let mut g = vec![0.0; p.len()];
        let dx = self.lin.backward(p, &grid(self.rows, self.lin.fan_in, x)?, &grid(self.rows, self.lin.fan_out, d)?, &mut g, true);
        Ok((g, dx.ok_or(NnError::Empty)?.into_vec()))
    }
}

pub struct MlpOp {
    pub mlp: Mlp,
    pub rows: usize,
}

impl GradOp for MlpOp {
    fn forward(&self, p: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        let (y, cache) = self.mlp.forward(p, &grid(self.rows, self.mlp.fan_in(), x)?)?;
        let mut h = PatternHasher::default();
        cache.pattern(&mut h);
        Ok((y.into_vec(), h.finish()))
    }
    fn backward(&self, p: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let (_, cache) = self.mlp.forward(p, &grid(self.rows, self.mlp.fan_in(), x)?)?;
        let mut g = vec![0.0; p.len()];
        let dx = self.mlp.backward(p, &cache, &grid(self.rows, self.mlp.fan_out(), d)?, &mut g, true);
        Ok((g, dx.ok_or(NnError::Empty)?.into_vec()))
    }
}

pub struct NormOp {
    pub rows: usize,
    pub cols: usize,
}

impl GradOp for NormOp {
    fn forward(&self, _: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        Ok((context_norm(&grid(self.rows, self.cols, x)?)?.0.into_vec(), 0))
    }
    fn backward(&self, _: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let (_, cache) = context_norm(&grid(self.rows, self.cols, x)?)?;
        Ok((vec![], context_norm_backward(&cache, &grid(self.rows, self.cols, d)?).into_vec()))
    }
}

pub struct SoftmaxOp {
    pub rows: usize,
    pub cols: usize,
}

impl GradOp for SoftmaxOp {
    fn forward(&self, _: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        Ok((softmax_rows(&grid(self.rows, self.cols, x)?).into_vec(), 0))
    }
    fn backward(&self, _: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let y = softmax_rows(&grid(self.rows, self.cols, x)?);
        Ok((vec![], softmax_rows_backward(&y, &grid(self.rows, self.cols, d)?).into_vec()))
    }
}

pub struct PoolOp {
    pub rows: usize,
    pub cols: usize,
}

impl GradOp for PoolOp {
    fn forward(&self, _: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        Ok((avg_pool_rows(&grid(self.rows, self.cols, x)?)?.into_vec(), 0))
    }
    fn backward(&self, _: &[f64], _: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        Ok((vec![], avg_pool_rows_backward(self.rows, &grid(1, self.cols, d)?).into_vec()))
    }
}

/// Cross attention with input `[queries ‖ keys]`.
pub struct AttentionOp {
    pub att: CrossAttention,
    pub nq: usize,
    pub nk: usize,
}

impl AttentionOp {
    fn split(&self, x: &[f64]) -> Result<(FeatureGrid, FeatureGrid), NnError> {
        let d = self.att.dim;
        Ok((grid(self.nq, d, &x[..self.nq * d])?, grid(self.nk, d, &x[self.nq * d..])?))
    }
}

impl GradOp for AttentionOp {
    fn forward(&self, p: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        let (q, k) = self.split(x)?;
        Ok((self.att.forward(p, &q, &k)?.0.into_vec(), 0))
    }
    fn backward(&self, p: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let (q, k) = self.split(x)?;
        let (_, cache) = self.att.forward(p, &q, &k)?;
        let mut g = vec![0.0; p.len()];
        let (dq, dk) = self.att.backward(p, &cache, &grid(self.nq, self.att.dim, d)?, &mut g);
        let mut dx = dq.into_vec();
        dx.extend(dk.into_vec());
        Ok((g, dx))
    }
}

pub struct LocOp {
    pub loc: LocBlock,
    pub rows: usize,
}

impl GradOp for LocOp {
    fn forward(&self, p: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        let (y, cache) = self.loc.forward(p, &grid(self.rows, self.loc.dim, x)?)?;
        let mut h = PatternHasher::default();
        cache.pattern(&mut h);
        Ok((y.into_vec(), h.finish()))
    }
    fn backward(&self, p: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let (_, cache) = self.loc.forward(p, &grid(self.rows, self.loc.dim, x)?)?;
        let mut g = vec![0.0; p.len()];
        let dx = self.loc.backward(p, &cache, &grid(self.rows, self.loc.dim, d)?, &mut g);
        Ok((g, dx.into_vec()))
    }
}

/// Composed layer with input `[features ‖ mask]` and output
/// `[next features ‖ weights ‖ decomposition probs ‖ rectifier probs]`.
///
/// Routing is held fixed by the pattern fingerprint: perturbations that
/// change a top-k choice are skipped by the harness.
pub struct LayerOp {
    pub layer: GeoMoELayer,
    pub n: usize,
}

impl LayerOp {
    fn split<'a>(&self, x: &'a [f64]) -> Result<(FeatureGrid, &'a [f64]), NnError> {
        let d = self.layer.dim;
        Ok((grid(self.n, d, &x[..self.n * d])?, &x[self.n * d..]))
    }
}

impl GradOp for LayerOp {
    fn forward(&self, p: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        let (f, mask) = self.split(x)?;
        let (next, w, cache) = self.layer.forward(p, &f, mask)?;
        let mut out = next.into_vec();
        out.extend(w);
        out.extend_from_slice(cache.decompose.decision.probs.as_slice());
        out.extend_from_slice(cache.rectify.decision.probs.as_slice());
        let mut h = PatternHasher::default();
        cache.pattern(&mut h);
        Ok((out, h.finish()))
    }

    fn backward(&self, p: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let (f, mask) = self.split(x)?;
        let (_, _, cache) = self.layer.forward(p, &f, mask)?;
        let (n, dim, m) = (self.n, self.layer.dim, self.layer.sub_fields);
        let t = self.layer.decompose.experts.len();
        let dnext = grid(n, dim, &d[..n * dim])?;
        let mut at = n * dim;
        let dw = &d[at..at + n];
        at += n;
        let dp0 = grid(m, t, &d[at..at + m * t])?;
        at += m * t;
        let dp1 = grid(m, t, &d[at..at + m * t])?;
        let mut g = vec![0.0; p.len()];
        let (df, dmask) = self.layer.backward(p, &cache, &dnext, dw, [Some(&dp0), Some(&dp1)], &mut g);
        let mut dx = df.into_vec();
        dx.extend(dmask);
        Ok((g, dx))
    }
}

/// Worst relative error of the regression loss gradient with respect to the
/// weights, by central differences. `None` when the loss is skipped.
pub fn regression_gradient_error(weights: &[f64], corrs: &[crate::geometry::Correspondence], step: f64) -> Option<f64> {
    let r = essential_regression_loss(weights, corrs).ok()?;
    let scale = r.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = (1e-4 * scale).max(1e-12);
    let mut worst = 0.0f64;
    let mut work = weights.to_vec();
    for i in 0..weights.len() {
        work[i] = weights[i] + step;
        let a = essential_regression_loss(&work, corrs);
        work[i] = weights[i] - step;
        let b = essential_regression_loss(&work, corrs);
        work[i] = weights[i];
        let (Ok(a), Ok(b)) = (a, b) else { continue };
        let num = (a.value - b.value) / (2.0 * step);
        worst = worst.max((num - r.grad[i]).abs() / num.abs().max(r.grad[i].abs()).max(floor));
    }
    Some(worst)
}

/// Outcome of one check family over all of its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub tolerance: f64,
    pub seeds: usize,
    pub worst: f64,
    pub checked: usize,
    pub skipped: usize,
    pub failures: Vec<String>,
}

impl SuiteEntry {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, tolerance, seeds: 0, worst: 0.0, checked: 0, skipped: 0, failures: Vec::new() }
    }

    fn absorb(&mut self, seed: u64, report: &GradCheckReport) {
        self.seeds += 1;
        self.worst = self.worst.max(report.max_error());
        self.checked += report.checked();
        self.skipped += report.skipped();
        if !report.passed() || report.checked() == 0 {
            self.failures.push(format!("seed {seed}: {:?} {:?}", report.failing(), report.non_finite));
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.worst < self.tolerance && self.checked > 0
    }
}

fn random_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

fn opts(seed: u64, tolerance: f64) -> GradCheckOptions {
    GradCheckOptions { seed, tolerance, ..GradCheckOptions::default() }
}

/// Runs every block, the composed layer and the regression loss over
/// `seeds` random shapes and inputs each.
pub fn gradient_suite(seeds: u64) -> Vec<SuiteEntry> {
    const BLOCK: f64 = 1e-5;
    const COMPOSED: f64 = 1e-4;
    let mut out = Vec::new();

    let mut e = SuiteEntry::new("linear", BLOCK);
    for seed in 0..seeds {
        let mut rng = SeededRng::new(seed);
        let (rows, fi, fo) = (3 + rng.below(3), 1 + rng.below(5), 1 + rng.below(5));
        let mut layout = ParamLayout::new();
        let lin = Linear::new(&mut layout, "linear", fi, fo);
        let mut p = layout.initialize(seed + 100);
        p[lin.bias.range()].iter_mut().for_each(|v| *v = rng.normal());
        let x = random_vec(&mut rng, rows * fi);
        e.absorb(seed, &finite_difference_check(&LinearOp { lin, rows }, &layout, &p, &x, &opts(seed, BLOCK)));
    }
    out.push(e);

    let mut e = SuiteEntry::new("mlp", BLOCK);
    for seed in 0..seeds {
        let mut rng = SeededRng::new(seed + 1000);
        let (rows, fi, hid, fo) = (3 + rng.below(3), 1 + rng.below(5), 1 + rng.below(6), 1 + rng.below(4));
        let mut layout = ParamLayout::new();
        let mlp = Mlp::new(&mut layout, "mlp", fi, hid, fo);
        let p = layout.initialize(seed);
        let x = random_vec(&mut rng, rows * fi);
        e.absorb(seed, &finite_difference_check(&MlpOp { mlp, rows }, &layout, &p, &x, &opts(seed, BLOCK)));
    }
    out.push(e);

    let mut e = SuiteEntry::new("context_norm", BLOCK);
    for seed in 0..seeds {
        let mut rng = SeededRng::new(seed + 2000);
        let (rows, cols) = (3 + rng.below(6), 1 + rng.below(4));
        let x = random_vec(&mut rng, rows * cols);
        e.absorb(seed, &finite_difference_check(&NormOp { rows, cols }, &ParamLayout::new(), &[], &x, &opts(seed, BLOCK)));
    }
    out.push(e);

    let mut e = SuiteEntry::new("softmax", BLOCK);
    for seed in 0..seeds {
        let mut rng = SeededRng::new(seed + 3000);
        let (rows, cols) = (3 + rng.below(3), 1 + rng.below(6));
        let x: Vec<f64> = random_vec(&mut rng, rows * cols).iter().map(|v| 3.0 * v).collect();
        e.absorb(seed, &finite_difference_check(&SoftmaxOp { rows, cols }, &ParamLayout::new(), &[], &x, &opts(seed, BLOCK)));
    }
    out.push(e);

    let mut e = SuiteEntry::new("avg_pool", BLOCK);
    for seed in 0..seeds {
        let mut rng = SeededRng::new(seed + 4000);
        let (rows, cols) = (3 + rng.below(3), 1 + rng.below(5));
        let x = random_vec(&mut rng, rows * cols);
        e.absorb(seed, &finite_difference_check(&PoolOp { rows, cols }, &ParamLayout::new(), &[], &x, &opts(seed, BLOCK)));
    }
    out.push(e);

    let mut e = SuiteEntry::new("gat_cross", BLOCK);
    for seed in 0..seeds {
        let mut rng = SeededRng::new(seed + 5000);
        let heads = 1 + rng.below(2);
        let dim = heads * (1 + rng.below(3));
        let (nq, nk) = (3 + rng.below(3), 3 + rng.below(4));
        let mut layout = ParamLayout::new();
        let Ok(att) = CrossAttention::new(&mut layout, "gat", dim, heads) else {
            e.failures.push(format!("seed {seed}: construction"));
            continue;
        };
        let p = layout.initialize(seed);
        let x = random_vec(&mut rng, (nq + nk) * dim);
        e.absorb(seed, &finite_difference_check(&AttentionOp { att, nq, nk }, &layout, &p, &x, &opts(seed, BLOCK)));
    }
    out.push(e);

    let mut e = SuiteEntry::new("loc", BLOCK);
    for seed in 0..seeds {
        let mut rng = SeededRng::new(seed + 6000);
        let (rows, dim, k) = (4 + rng.below(5), 4 * (1 + rng.below(3)), 1 + rng.below(3));
        let mut layout = ParamLayout::new();
        let loc = LocBlock::new(&mut layout, "loc", dim, k);
        let p = layout.initialize(seed);
        let x = random_vec(&mut rng, rows * dim);
        e.absorb(seed, &finite_difference_check(&LocOp { loc, rows }, &layout, &p, &x, &opts(seed, BLOCK)));
    }
    out.push(e);

    let mut e = SuiteEntry::new("composed_layer", COMPOSED);
    for seed in 0..seeds {
        let mut rng = SeededRng::new(1_000 + seed);
        let n = 10 + (seed as usize % 7);
        let mut layout = ParamLayout::new();
        let Ok(layer) = GeoMoELayer::new(&mut layout, "layer", 32, 4, 4, 2, 4, 1) else {
            e.failures.push(format!("seed {seed}: construction"));
            continue;
        };
        let p = layout.initialize(seed);
        let mut x: Vec<f64> = random_vec(&mut rng, n * 32);
        x.extend((0..n).map(|_| rng.uniform_range(0.05, 0.95)));
        let o = GradCheckOptions { tolerance: COMPOSED, seed, max_coords_per_block: Some(48), ..Default::default() };
        e.absorb(seed, &finite_difference_check(&LayerOp { layer, n }, &layout, &p, &x, &o));
    }
    out.push(e);

    let mut e = SuiteEntry::new("regression_loss", COMPOSED);
    for seed in 0..seeds {
        let spec =
            SceneSpec { points_per_pair: 24, outlier_ratio: 0.3, noise_sigma: 1e-3, seed: 100 + seed, ..Default::default() };
        let Ok(pair) = generate_pair(&spec) else {
            e.failures.push(format!("seed {seed}: generation"));
            continue;
        };
        let mut rng = SeededRng::new(seed);
        let w: Vec<f64> = (0..pair.correspondences.len()).map(|_| rng.uniform_range(0.2, 1.0)).collect();
        e.seeds += 1;
        match regression_gradient_error(&w, &pair.correspondences, 1e-6) {
            Some(err) => {
                e.worst = e.worst.max(err);
                e.checked += w.len();
                if !(err < COMPOSED) {
                    e.failures.push(format!("seed {seed}: {err:e}"));
                }
            }
            None => e.failures.push(format!("seed {seed}: loss skipped")),
        }
    }
    out.push(e);
    out
}
