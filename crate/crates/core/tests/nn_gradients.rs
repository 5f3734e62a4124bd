//! Finite-difference checks of every neural building block.

use geomoe_core::nn::*;
use geomoe_core::rng::SeededRng;
use geomoe_core::verify::*;

const SEEDS: u64 = 20;

fn random_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

fn opts(seed: u64, tolerance: f64) -> GradCheckOptions {
    GradCheckOptions { seed, tolerance, ..GradCheckOptions::default() }
}

fn assert_report(name: &str, seed: u64, report: &GradCheckReport) {
    assert!(
        report.passed(),
        "{name} seed {seed}: failing {:?}, max error {:e}, non-finite {:?}",
        report.failing(),
        report.max_error(),
        report.non_finite
    );
    assert!(report.checked() > 0, "{name} seed {seed}: nothing checked");
}

#[test]
fn linear_matches_central_differences() {
    for seed in 0..SEEDS {
        let mut rng = SeededRng::new(seed);
        let (rows, fi, fo) = (1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(5));
        let (rows, fi, fo) = if seed == 0 { (3, 2, 2) } else { (rows, fi, fo) };
        let mut layout = ParamLayout::new();
        let lin = Linear::new(&mut layout, "linear", fi, fo);
        let mut p = layout.initialize(seed + 100);
        // nonzero biases so that their gradients are exercised off the origin
        p[lin.bias.range()].iter_mut().for_each(|v| *v = rng.normal());
        let x = random_vec(&mut rng, rows * fi);
        let r = finite_difference_check(&LinearOp { lin, rows }, &layout, &p, &x, &opts(seed, 1e-6));
        assert_report("linear", seed, &r);
    }
}

#[test]
fn mlp_matches_central_differences() {
    for seed in 0..SEEDS {
        let mut rng = SeededRng::new(seed + 1000);
        let (rows, fi, hid, fo) = (1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(6), 1 + rng.below(4));
        let mut layout = ParamLayout::new();
        let mlp = Mlp::new(&mut layout, "mlp", fi, hid, fo);
        let p = layout.initialize(seed);
        let x = random_vec(&mut rng, rows * fi);
        let r = finite_difference_check(&MlpOp { mlp, rows }, &layout, &p, &x, &opts(seed, 1e-5));
        assert_report("mlp", seed, &r);
    }
}

#[test]
fn context_norm_matches_central_differences() {
    for seed in 0..SEEDS {
        let mut rng = SeededRng::new(seed + 2000);
        // two rows normalise to a constant ±1 pattern; its gradient is pure rounding noise
        let (rows, cols) = if seed == 0 { (4, 2) } else { (3 + rng.below(6), 1 + rng.below(4)) };
        let x = random_vec(&mut rng, rows * cols);
        let tol = if seed == 0 { 1e-6 } else { 1e-5 };
        let r = finite_difference_check(&NormOp { rows, cols }, &ParamLayout::new(), &[], &x, &opts(seed, tol));
        assert!(r.blocks.is_empty());
        assert_report("context_norm", seed, &r);
    }
}

#[test]
fn softmax_matches_central_differences() {
    for seed in 0..SEEDS {
        let mut rng = SeededRng::new(seed + 3000);
        let (rows, cols) = (1 + rng.below(4), 1 + rng.below(6));
        let x: Vec<f64> = random_vec(&mut rng, rows * cols).iter().map(|v| 3.0 * v).collect();
        let r = finite_difference_check(&SoftmaxOp { rows, cols }, &ParamLayout::new(), &[], &x, &opts(seed, 1e-5));
        // parameter-free: the report covers the input only
        assert!(r.blocks.is_empty() && r.input.is_some());
        assert_report("softmax", seed, &r);
    }
}

#[test]
fn avg_pool_matches_central_differences() {
    for seed in 0..SEEDS {
        let mut rng = SeededRng::new(seed + 4000);
        let (rows, cols) = (1 + rng.below(5), 1 + rng.below(5));
        let x = random_vec(&mut rng, rows * cols);
        let r = finite_difference_check(&PoolOp { rows, cols }, &ParamLayout::new(), &[], &x, &opts(seed, 1e-5));
        assert_report("avg_pool", seed, &r);
    }
}

#[test]
fn attention_matches_central_differences() {
    for seed in 0..SEEDS {
        let mut rng = SeededRng::new(seed + 5000);
        let heads = 1 + rng.below(2);
        let dim = heads * (1 + rng.below(3));
        let (nq, nk) = if seed == 0 { (3, 4) } else { (1 + rng.below(4), 1 + rng.below(5)) };
        let mut layout = ParamLayout::new();
        let att = CrossAttention::new(&mut layout, "gat", dim, heads).unwrap();
        let p = layout.initialize(seed);
        let x = random_vec(&mut rng, (nq + nk) * dim);
        let r = finite_difference_check(&AttentionOp { att, nq, nk }, &layout, &p, &x, &opts(seed, 1e-5));
        assert_report("gat_cross", seed, &r);
    }
}

#[test]
fn loc_matches_central_differences() {
    for seed in 0..SEEDS {
        let mut rng = SeededRng::new(seed + 6000);
        let (rows, dim, k) = if seed == 0 { (6, 8, 3) } else { (4 + rng.below(5), 4 * (1 + rng.below(3)), 1 + rng.below(3)) };
        let mut layout = ParamLayout::new();
        let loc = LocBlock::new(&mut layout, "loc", dim, k);
        let p = layout.initialize(seed);
        let x = random_vec(&mut rng, rows * dim);
        let r = finite_difference_check(&LocOp { loc, rows }, &layout, &p, &x, &opts(seed, 1e-5));
        assert_report("loc", seed, &r);
    }
}

struct Corrupted<O> {
    inner: O,
    index: usize,
}

impl<O: GradOp> GradOp for Corrupted<O> {
    fn forward(&self, p: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        self.inner.forward(p, x)
    }
    fn backward(&self, p: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let (mut g, dx) = self.inner.backward(p, x, d)?;
        g[self.index] *= 1.1;
        Ok((g, dx))
    }
}

#[test]
fn corrupted_gradient_is_reported_by_block() {
    let mut layout = ParamLayout::new();
    let lin = Linear::new(&mut layout, "victim", 3, 2);
    let p = layout.initialize(3);
    let mut rng = SeededRng::new(4);
    let x = random_vec(&mut rng, 3 * 3);
    let clean = finite_difference_check(&LinearOp { lin, rows: 3 }, &layout, &p, &x, &opts(0, 1e-6));
    assert!(clean.passed());
    let op = Corrupted { inner: LinearOp { lin, rows: 3 }, index: lin.weight.offset + 1 };
    let bad = finite_difference_check(&op, &layout, &p, &x, &opts(0, 1e-6));
    assert!(!bad.passed());
    assert_eq!(bad.failing(), vec!["victim.weight"]);
}


#[test]
fn gradient_suite_passes_over_twenty_seeds() {
    for entry in gradient_suite(20) {
        assert!(entry.passed(), "{}: worst {:e}, failures {:?}", entry.name, entry.worst, entry.failures);
        assert_eq!(entry.seeds, 20, "{}", entry.name);
    }
}
