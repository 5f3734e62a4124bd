//! Model-level contracts: sparse routing, composed-layer gradients,
//! masking, permutation equivariance and the solver hand-off.

use geomoe_core::geometry::{weighted_eight_point, Correspondence};
use geomoe_core::model::*;
use geomoe_core::nn::*;
use geomoe_core::rng::SeededRng;
use geomoe_core::synth::{generate_pair, SceneSpec};
use geomoe_core::verify::LayerOp;

fn random_grid(rng: &mut SeededRng, rows: usize, cols: usize) -> FeatureGrid {
    FeatureGrid::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn random_corrs(rng: &mut SeededRng, n: usize) -> Vec<Correspondence> {
    (0..n)
        .map(|_| {
            let x = [rng.uniform_range(-0.5, 0.5), rng.uniform_range(-0.5, 0.5)];
            let xp = [x[0] + 0.1 * rng.normal(), x[1] + 0.1 * rng.normal()];
            Correspondence::new(x, xp)
        })
        .collect()
}

fn small_config(layers: usize, channels: usize, sub_fields: usize) -> GeoMoEConfig {
    GeoMoEConfig { layers, channels, sub_fields, experts: 4, top_k: 2, loc_k: 8, attention_heads: 1 }
}

/// Evaluates every expert on every token and mixes with the routing mask.
fn dense_oracle(moe: &FMoE, params: &[f64], tokens: &FeatureGrid) -> FeatureGrid {
    let (decision, _) = moe.route(params, tokens).unwrap();
    let (m, d) = tokens.shape();
    let mut out = FeatureGrid::zeros(m, d);
    for (t, expert) in moe.experts.iter().enumerate() {
        let (mut y, _) = expert.forward(params, tokens).unwrap();
        y.add_assign(tokens);
        for i in 0..m {
            let weight = decision
                .selected_for(i)
                .iter()
                .position(|&s| s == t)
                .map_or(0.0, |slot| decision.mix_for(i)[slot]);
            for (o, v) in out.row_mut(i).iter_mut().zip(y.row(i)) {
                *o += weight * v;
            }
        }
    }
    out
}

#[test]
fn sparse_moe_matches_dense_oracle() {
    for seed in 0..10 {
        let mut layout = ParamLayout::new();
        let moe = FMoE::new(&mut layout, "moe", 16, 4, 2);
        let p = layout.initialize(seed);
        let mut rng = SeededRng::new(100 + seed);
        let x = random_grid(&mut rng, 12, 16);
        let (sparse, cache) = moe.forward(&p, &x).unwrap();
        assert!(sparse.max_abs_diff(&dense_oracle(&moe, &p, &x)) < 1e-12);
        assert_eq!(cache.expert_evaluations(), 12 * 2);
        for i in 0..12 {
            assert_eq!(cache.decision.selected_for(i).len(), 2);
        }
    }
}

#[test]
fn identical_experts_make_routing_irrelevant() {
    let mut layout = ParamLayout::new();
    let moe = FMoE::new(&mut layout, "moe", 8, 4, 2);
    let mut p = layout.initialize(3);
    let first = layout.find("moe.expert0.0.weight").unwrap().offset;
    let len: usize = ["0.weight", "0.bias", "1.weight", "1.bias"]
        .iter()
        .map(|s| layout.find(&format!("moe.expert0.{s}")).unwrap().len())
        .sum();
    for t in 1..4 {
        let off = layout.find(&format!("moe.expert{t}.0.weight")).unwrap().offset;
        let src: Vec<f64> = p[first..first + len].to_vec();
        p[off..off + len].copy_from_slice(&src);
    }
    let x = random_grid(&mut SeededRng::new(4), 9, 8);
    let (out, _) = moe.forward(&p, &x).unwrap();
    let (mut single, _) = moe.experts[0].forward(&p, &x).unwrap();
    single.add_assign(&x);
    assert!(out.max_abs_diff(&single) < 1e-12);
}

#[test]
fn full_top_k_mixes_with_softmax_probabilities() {
    let mut layout = ParamLayout::new();
    let moe = FMoE::new(&mut layout, "moe", 8, 4, 4);
    let p = layout.initialize(5);
    let x = random_grid(&mut SeededRng::new(6), 7, 8);
    let (out, cache) = moe.forward(&p, &x).unwrap();
    let mut expect = FeatureGrid::zeros(7, 8);
    for (t, e) in moe.experts.iter().enumerate() {
        let (mut y, _) = e.forward(&p, &x).unwrap();
        y.add_assign(&x);
        for i in 0..7 {
            let pr = cache.decision.probs.get(i, t);
            for (o, v) in expect.row_mut(i).iter_mut().zip(y.row(i)) {
                *o += pr * v;
            }
        }
    }
    assert!(out.max_abs_diff(&expect) < 1e-12);
}

#[test]
fn composed_layer_matches_central_differences() {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = SeededRng::new(1_000 + seed);
        let n = 10 + (seed as usize % 7);
        let mut layout = ParamLayout::new();
        let layer = GeoMoELayer::new(&mut layout, "layer", 32, 4, 4, 2, 4, 1).unwrap();
        let p = layout.initialize(seed);
        let mut x: Vec<f64> = (0..n * 32).map(|_| rng.normal()).collect();
        x.extend((0..n).map(|_| rng.uniform_range(0.05, 0.95)));
        let op = LayerOp { layer, n };
        let opts = GradCheckOptions { tolerance: 1e-4, seed, max_coords_per_block: Some(48), ..Default::default() };
        let report = finite_difference_check(&op, &layout, &p, &x, &opts);
        assert!(report.passed(), "seed {seed}: failing {:?}, max {:e}", report.failing(), report.max_error());
        assert!(report.checked() > 10 * report.skipped());
        worst = worst.max(report.max_error());
    }
    assert!(worst < 1e-4);
}

/// Whole network on motion vectors: output is every layer's weights plus every router's probabilities.
struct ModelOp {
    model: GeoMoE,
    n: usize,
}

impl GradOp for ModelOp {
    fn forward(&self, p: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
        let motions = FeatureGrid::from_vec(self.n, 4, x.to_vec())?;
        let (out, cache) = self.model.forward_motions(p, &motions).map_err(|_| NnError::Empty)?;
        let mut v: Vec<f64> = out.layer_weights.concat();
        for r in &out.routing {
            v.extend_from_slice(r.probs.as_slice());
        }
        Ok((v, cache.pattern()))
    }

    fn backward(&self, p: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let motions = FeatureGrid::from_vec(self.n, 4, x.to_vec())?;
        let (out, cache) = self.model.forward_motions(p, &motions).map_err(|_| NnError::Empty)?;
        let mut at = 0;
        let dweights: Vec<Vec<f64>> = out
            .layer_weights
            .iter()
            .map(|w| {
                let s = d[at..at + w.len()].to_vec();
                at += w.len();
                s
            })
            .collect();
        let dprobs: Vec<Option<FeatureGrid>> = out
            .routing
            .iter()
            .map(|r| {
                let (m, t) = r.probs.shape();
                let g = FeatureGrid::from_vec(m, t, d[at..at + m * t].to_vec()).unwrap();
                at += m * t;
                Some(g)
            })
            .collect();
        let mut g = vec![0.0; p.len()];
        let dm = self.model.backward(p, &cache, &dweights, &dprobs, &mut g);
        Ok((g, dm.into_vec()))
    }
}

#[test]
fn full_network_matches_central_differences() {
    for seed in 0..4u64 {
        let model = GeoMoE::new(GeoMoEConfig { layers: 2, channels: 16, sub_fields: 4, loc_k: 4, ..small_config(2, 16, 4) })
            .unwrap();
        let p = model.init_params(seed);
        let mut rng = SeededRng::new(50 + seed);
        let n = 12;
        let x: Vec<f64> = (0..n * 4).map(|_| 0.3 * rng.normal()).collect();
        let layout = model.layout().clone();
        let op = ModelOp { model, n };
        let opts = GradCheckOptions { tolerance: 1e-4, seed, max_coords_per_block: Some(16), ..Default::default() };
        let report = finite_difference_check(&op, &layout, &p, &x, &opts);
        assert!(report.passed(), "seed {seed}: failing {:?}, max {:e}", report.failing(), report.max_error());
    }
}

#[test]
fn motion_init_gradient() {
    struct InitOp(GeoMoE);
    impl GradOp for InitOp {
        fn forward(&self, p: &[f64], x: &[f64]) -> Result<(Vec<f64>, u64), NnError> {
            let m = FeatureGrid::from_vec(8, 4, x.to_vec())?;
            Ok((self.0.motion_init(p, &m)?.0.into_vec(), 0))
        }
        fn backward(&self, p: &[f64], x: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
            let m = FeatureGrid::from_vec(8, 4, x.to_vec())?;
            let (_, lift, norm) = self.0.motion_init(p, &m)?;
            let dlift = context_norm_backward(&norm, &FeatureGrid::from_vec(8, 16, d.to_vec())?);
            let mut g = vec![0.0; p.len()];
            let dx = self.0.motion_lift.backward(p, &m, &dlift, &mut g, true).unwrap();
            let _ = lift;
            Ok((g, dx.into_vec()))
        }
    }
    for seed in 0..20u64 {
        let model = GeoMoE::new(small_config(1, 16, 4)).unwrap();
        let p = model.init_params(seed);
        let mut rng = SeededRng::new(seed + 7);
        let x: Vec<f64> = (0..32).map(|_| rng.normal()).collect();
        let layout = model.layout().clone();
        let opts = GradCheckOptions { seed, ..Default::default() };
        let r = finite_difference_check(&InitOp(model), &layout, &p, &x, &opts);
        // only the lift block is reachable from motion_init
        let lift: Vec<_> = r.blocks.iter().filter(|b| b.name.starts_with("init.")).collect();
        assert!(lift.iter().all(|b| b.max_rel_error < 1e-5), "seed {seed}: {lift:?}");
        assert!(r.input.as_ref().unwrap().max_rel_error < 1e-5);
    }
}

#[test]
fn zero_mask_rows_are_unreachable() {
    let mut layout = ParamLayout::new();
    let layer = GeoMoELayer::new(&mut layout, "layer", 16, 4, 4, 2, 4, 1).unwrap();
    let p = layout.initialize(9);
    let mut rng = SeededRng::new(10);
    let tokens = random_grid(&mut rng, 4, 16);
    let field = random_grid(&mut rng, 20, 16);
    let mut mask: Vec<f64> = (0..20).map(|_| rng.uniform_range(0.1, 1.0)).collect();
    mask[3] = 0.0;
    mask[11] = 0.0;
    let (base, _) = layer.refine_tokens(&p, &tokens, &field, &mask).unwrap();
    let mut perturbed = field.clone();
    for r in [3, 11] {
        perturbed.row_mut(r).iter_mut().for_each(|v| *v += 5.0 * rng.normal());
    }
    let (after, _) = layer.refine_tokens(&p, &tokens, &perturbed, &mask).unwrap();
    assert_eq!(base, after);
    // a nonzero mask row is reachable
    perturbed.row_mut(4).iter_mut().for_each(|v| *v += 1.0);
    let (moved, _) = layer.refine_tokens(&p, &tokens, &perturbed, &mask).unwrap();
    assert!(moved.max_abs_diff(&base) > 1e-6);
}

#[test]
fn model_forward_is_permutation_equivariant() {
    let model = GeoMoE::new(small_config(2, 32, 8)).unwrap();
    let p = model.init_params(21);
    let mut rng = SeededRng::new(22);
    let corrs = random_corrs(&mut rng, 64);
    let (base, _) = model.forward(&p, &corrs).unwrap();
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..64).collect();
        rng.shuffle(&mut perm);
        let permuted: Vec<Correspondence> = perm.iter().map(|&i| corrs[i]).collect();
        let (out, _) = model.forward(&p, &permuted).unwrap();
        for (wl, bl) in out.layer_weights.iter().zip(&base.layer_weights) {
            for (k, &i) in perm.iter().enumerate() {
                assert!((wl[k] - bl[i]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn duplicated_set_gives_duplicated_weights() {
    let model = GeoMoE::new(small_config(2, 32, 8)).unwrap();
    let p = model.init_params(31);
    let mut rng = SeededRng::new(32);
    let corrs = random_corrs(&mut rng, 40);
    let mut doubled = corrs.clone();
    for c in &corrs {
        let mut twin = *c;
        twin.x_prime[0] += 1e-10 * rng.normal();
        doubled.push(twin);
    }
    let (out, _) = model.forward(&p, &doubled).unwrap();
    let w = out.final_weights();
    for i in 0..40 {
        assert!((w[i] - w[i + 40]).abs() < 1e-6, "row {i}: {} vs {}", w[i], w[i + 40]);
    }
}

#[test]
fn untrained_model_feeds_the_solver() {
    let model = GeoMoE::new(small_config(2, 32, 8)).unwrap();
    let p = model.init_params(41);
    let pair = generate_pair(&SceneSpec { points_per_pair: 128, seed: 42, ..Default::default() }).unwrap();
    let (out, _) = model.forward(&p, &pair.correspondences).unwrap();
    assert_eq!(out.layer_weights.len(), 2);
    for w in &out.layer_weights {
        assert_eq!(w.len(), 128);
        assert!(w.iter().all(|&v| v > 0.0 && v < 1.0));
    }
    let e = weighted_eight_point(&pair.correspondences, out.final_weights()).unwrap();
    let s = geomoe_core::linalg::svd3(&e.e).s;
    assert!((s[0] - s[1]).abs() < 1e-9 && s[2].abs() < 1e-9);
}

#[test]
fn diagnostics_count_sparse_expert_work() {
    let cfg = small_config(3, 16, 6);
    let model = GeoMoE::new(cfg).unwrap();
    let p = model.init_params(51);
    let corrs = random_corrs(&mut SeededRng::new(52), 30);
    let (out, cache) = model.forward(&p, &corrs).unwrap();
    assert_eq!(out.diagnostics.expert_evaluations, 2 * cfg.layers * cfg.sub_fields * cfg.top_k);
    assert_eq!(out.routing.len(), cfg.moe_count());
    for r in &out.routing {
        assert_eq!(r.histogram().iter().sum::<usize>(), cfg.sub_fields * cfg.top_k);
        for i in 0..r.tokens() {
            assert!((r.probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    for l in cache.layers() {
        for i in 0..l.assignment.rows() {
            assert!((l.assignment.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    assert_eq!(out.diagnostics.occupancy.len(), 3);
}

#[test]
fn inlier_head_saturates() {
    let model = GeoMoE::new(small_config(1, 16, 4)).unwrap();
    let mut p = model.init_params(61);
    let corrs = random_corrs(&mut SeededRng::new(62), 20);
    let head_last = model.layout().find("layer0.head.1.weight").unwrap().slot();
    let head_bias = model.layout().find("layer0.head.1.bias").unwrap().slot();
    p[head_last.range()].iter_mut().for_each(|v| *v = 0.0);
    let (out, _) = model.forward(&p, &corrs).unwrap();
    assert!(out.final_weights().iter().all(|&w| w == 0.5));
    p[head_bias.range()][0] = 20.0;
    let (out, _) = model.forward(&p, &corrs).unwrap();
    assert!(out.final_weights().iter().all(|&w| w >= 1.0 - 1e-8));
}

#[test]
fn rejects_small_and_non_finite_inputs() {
    let model = GeoMoE::new(small_config(1, 16, 4)).unwrap();
    let p = model.init_params(0);
    let mut corrs = random_corrs(&mut SeededRng::new(1), 8);
    assert!(matches!(model.forward(&p, &corrs), Err(ModelError::TooFewCorrespondences { required: 9, got: 8 })));
    corrs.extend(random_corrs(&mut SeededRng::new(2), 4));
    corrs[5].x[1] = f64::NAN;
    assert_eq!(model.forward(&p, &corrs).unwrap_err(), ModelError::NonFiniteInput(5));
    assert!(GeoMoE::new(GeoMoEConfig { top_k: 5, ..small_config(1, 16, 4) }).is_err());
}
