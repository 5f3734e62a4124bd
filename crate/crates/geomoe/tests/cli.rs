//! Configuration handling and the subcommands, in-process and through the binary.

use std::path::Path;
use std::process::Command;

use geomoe::benchmark::parse_traces;
use geomoe::checkpoint::Checkpoint;
use geomoe::commands::*;
use geomoe::config::{documented_keys, help_text, key_table, RunConfig};
use geomoe::dataset::{format_correspondences, read_dataset};
use geomoe::metrics::read_metrics;
use geomoe::Error;
use geomoe_core::eval::{summarize, Arm, EvalConfig};
use geomoe_core::model::{GeoMoE, GeoMoEConfig};
use geomoe_core::synth::SceneSpec;
use geomoe_core::train::{TrainConfig, TrainState};

const SMALL: &str = r#"
seed = 5
[data]
pairs = 12
[scene]
points_per_pair = 48
[model]
layers = 2
channels = 8
sub_fields = 4
loc_k = 4
[train]
iterations = 6
batch_size = 3
[optimizer]
learning_rate = 0.001
"#;

fn small() -> RunConfig {
    let c = RunConfig::from_toml(SMALL).unwrap();
    c.validate().unwrap();
    c
}

#[test]
fn defaults_mirror_the_core_types() {
    let c = RunConfig::default();
    assert_eq!(c.scene_spec(), SceneSpec::default());
    assert_eq!(c.model_config(), GeoMoEConfig::default());
    assert_eq!(c.train_config(), TrainConfig::default());
    assert_eq!(c.eval_config(), EvalConfig::default());
    assert_eq!(RunConfig::from_toml("").unwrap(), c);
    assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
}

#[test]
fn every_key_is_documented_with_its_default() {
    let table = key_table();
    let mut keys: Vec<&str> = table.iter().map(|(k, _, _)| k.as_str()).collect();
    let mut docs: Vec<&str> = documented_keys().collect();
    keys.sort_unstable();
    docs.sort_unstable();
    assert_eq!(keys, docs);
    let help = help_text();
    for (k, v, _) in &table {
        assert!(help.contains(&format!("{k} = {v}")), "{k}");
    }
    assert!(help.contains("optimizer.learning_rate = 0.0001"));
    assert!(help.contains("loss.mu_target = 0.5"));
}

#[test]
fn unknown_and_invalid_keys_are_rejected() {
    let e = RunConfig::from_toml("[scene]\nouter_ratio = 0.2\n").unwrap_err();
    assert!(matches!(e, Error::Config(_)) && e.to_string().contains("outer_ratio"), "{e}");
    let c = RunConfig::from_toml("[scene]\noutlier_ratio = 1.2\n").unwrap();
    let e = c.validate().unwrap_err().to_string();
    assert!(e.contains("[scene]") && e.contains("outlier_ratio"), "{e}");
    let c = RunConfig::from_toml("[eval]\nauc_method = \"spline\"\n").unwrap();
    assert!(c.validate().unwrap_err().to_string().contains("auc_method"));
    let c = RunConfig::from_toml("[ransac_homography]\nconfidence = 0.9\n").unwrap();
    assert_eq!(c.ransac_homography.max_iterations, 2000);
}

#[test]
fn generate_summary_matches_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.gmds");
    let cfg = small();
    let summary = cmd_generate(&cfg, &path).unwrap();
    let (meta, pairs) = read_dataset(&path).unwrap();
    assert_eq!(meta, cfg.to_toml());
    let reread = GenerateSummary::of_pairs(&pairs);
    assert_eq!(summary.pairs, 12);
    assert_eq!(reread.pairs, summary.pairs);
    assert_eq!(reread.correspondences, summary.correspondences);
    assert_eq!(reread.labelled_outliers, summary.labelled_outliers);
    assert_eq!(summary.injected_outliers, 12 * 24);
    assert!((summary.realized_outlier_ratio() - 0.5).abs() < 0.05);
}

#[test]
fn zero_iterations_write_the_initialisation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmds");
    let out = dir.path().join("m.gmoe");
    let mut cfg = small();
    cmd_generate(&cfg, &data).unwrap();
    cfg.train.iterations = 0;
    cmd_train(&cfg, &data, &out, None, None).unwrap();
    let ck = Checkpoint::load(&out).unwrap();
    let model = GeoMoE::new(cfg.model_config()).unwrap();
    let init = TrainState::initial(&model, &cfg.train_config());
    assert_eq!(ck.state, init);
    assert_eq!(ck.seed, 5);
    assert_eq!(ck.metadata, cfg.to_toml());
}

#[test]
fn resume_restores_counter_and_moments_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmds");
    let cfg = small();
    cmd_generate(&cfg, &data).unwrap();
    let full = dir.path().join("full.gmoe");
    cmd_train(&cfg, &data, &full, None, Some(&dir.path().join("full.tsv"))).unwrap();

    // the first leg runs under the full schedule so the μ ramp and decay match
    let mut half = cfg.clone();
    half.train.iterations = 3;
    half.loss.rescale_mu = false;
    half.loss.ramp_iteration = cfg.train_config().effective_loss().ramp_iteration;
    let leg1 = dir.path().join("leg1.gmoe");
    let log = dir.path().join("legs.tsv");
    cmd_train(&half, &data, &leg1, None, Some(&log)).unwrap();
    let mid = Checkpoint::load(&leg1).unwrap();
    assert_eq!(mid.state.iteration, 3);
    assert_eq!(mid.state.adam.step, 3);

    let mut rest = cfg.clone();
    rest.loss.rescale_mu = false;
    rest.loss.ramp_iteration = half.loss.ramp_iteration;
    let leg2 = dir.path().join("leg2.gmoe");
    let s = cmd_train(&rest, &data, &leg2, Some(&leg1), Some(&log)).unwrap();
    assert_eq!((s.start_iteration, s.iterations), (3, 6));
    let a = Checkpoint::load(&full).unwrap();
    let b = Checkpoint::load(&leg2).unwrap();
    assert_eq!(a.state, b.state);
    let full_rows = read_metrics(&dir.path().join("full.tsv")).unwrap();
    let leg_rows = read_metrics(&log).unwrap();
    assert_eq!(full_rows, leg_rows);
}

#[test]
fn resume_rejects_a_different_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmds");
    let mut cfg = small();
    cmd_generate(&cfg, &data).unwrap();
    cfg.train.iterations = 0;
    let ck = dir.path().join("m.gmoe");
    cmd_train(&cfg, &data, &ck, None, None).unwrap();
    cfg.model.channels = 16;
    let e = cmd_train(&cfg, &data, &dir.path().join("x.gmoe"), Some(&ck), None).unwrap_err();
    assert!(matches!(e, Error::Data(_)), "{e}");
}

fn pipeline(dir: &Path, cfg: &RunConfig) -> Vec<Vec<u8>> {
    let data = dir.join("d.gmds");
    let ck = dir.join("m.gmoe");
    let log = dir.join("m.tsv");
    let report = dir.join("r.json");
    let trace = dir.join("t.tsv");
    let input = dir.join("c.txt");
    let weights = dir.join("w.txt");
    cmd_generate(cfg, &data).unwrap();
    cmd_train(cfg, &data, &ck, None, Some(&log)).unwrap();
    let (_, pairs) = read_dataset(&data).unwrap();
    std::fs::write(&input, format_correspondences(&pairs[0].correspondences)).unwrap();
    cmd_filter(cfg, &ck, &input, &weights, true).unwrap();
    cmd_eval(cfg, &data, Some(&ck), &[], Some(&report), Some(&trace)).unwrap();
    [data, ck, log, report, trace, weights].iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn pipeline_artifacts_are_bit_identical_across_runs() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path(), &cfg);
    let second = pipeline(b.path(), &cfg);
    for (i, (x, y)) in first.iter().zip(&second).enumerate() {
        assert!(x == y, "artifact {i} differs");
    }
    // thread count does not change any artifact
    let c = tempfile::tempdir().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let third = pool.install(|| pipeline(c.path(), &cfg));
    assert_eq!(first, third);
}

#[test]
fn filter_preserves_order_and_appends_pose() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmds");
    let ck = dir.path().join("m.gmoe");
    let mut cfg = small();
    cfg.train.iterations = 0;
    cmd_generate(&cfg, &data).unwrap();
    cmd_train(&cfg, &data, &ck, None, None).unwrap();
    let (_, pairs) = read_dataset(&data).unwrap();
    let corrs = &pairs[3].correspondences;
    let input = dir.path().join("c.txt");
    std::fs::write(&input, format_correspondences(corrs)).unwrap();
    let out = dir.path().join("w.txt");
    let w = cmd_filter(&cfg, &ck, &input, &out, true).unwrap();
    assert_eq!(w.len(), corrs.len());

    let checkpoint = Checkpoint::load(&ck).unwrap();
    let model = checkpoint.model().unwrap();
    let (direct, _) = model.forward(checkpoint.params(), corrs).unwrap();
    assert_eq!(w, direct.final_weights());

    let text = std::fs::read_to_string(&out).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), corrs.len() + 2);
    let parsed: Vec<f64> = body[..corrs.len()].iter().map(|l| l.parse().unwrap()).collect();
    assert_eq!(parsed, w);
    assert_eq!(body[corrs.len()].split_whitespace().count(), 10);
    assert!(body[corrs.len()].starts_with("R "));
    assert_eq!(body[corrs.len() + 1].split_whitespace().count(), 4);
    assert_eq!(geomoe::dataset::read_weights(&out).unwrap(), w);

    // the reversed input gives the reversed weights
    let mut rev = corrs.clone();
    rev.reverse();
    std::fs::write(&input, format_correspondences(&rev)).unwrap();
    let mut wr = cmd_filter(&cfg, &ck, &input, &out, false).unwrap();
    wr.reverse();
    for (a, b) in w.iter().zip(&wr) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn report_is_recomputable_from_the_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmds");
    let mut cfg = small();
    cfg.scene.num_structures = 1;
    cmd_generate(&cfg, &data).unwrap();
    let trace = dir.path().join("t.tsv");
    let arms = [Arm::Raw, Arm::Ransac, Arm::Oracle];
    let out = cmd_eval(&cfg, &data, None, &arms, None, Some(&trace)).unwrap();
    let text = std::fs::read_to_string(&trace).unwrap();
    let traces = parse_traces(&text, &trace).unwrap();
    assert_eq!(traces, out.run.traces);
    let again = summarize(&traces, &cfg.auc_spec().unwrap(), Vec::new()).unwrap();
    assert_eq!(again, out.run.report);
    assert!(out.run.report.arm(Arm::Oracle).unwrap().homography_accuracy.is_some());
    assert!(out.table.contains("oracle"));
}

#[test]
fn learned_arms_need_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmds");
    let cfg = small();
    cmd_generate(&cfg, &data).unwrap();
    let e = cmd_eval(&cfg, &data, None, &[Arm::GeoMoE], None, None).err().unwrap();
    assert!(matches!(e, Error::Config(_)));
    assert_eq!(default_arms(false), vec![Arm::Raw, Arm::Ransac, Arm::Oracle]);
}

#[test]
fn pose_command_recovers_clean_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.gmds");
    let mut cfg = small();
    cfg.scene.outlier_ratio = 0.0;
    cfg.scene.noise_sigma = 0.0;
    cmd_generate(&cfg, &data).unwrap();
    let (_, pairs) = read_dataset(&data).unwrap();
    let input = dir.path().join("c.txt");
    std::fs::write(&input, format_correspondences(&pairs[0].correspondences)).unwrap();
    for ransac in [false, true] {
        let text = cmd_pose(&cfg, &input, None, ransac).unwrap();
        let t_line = text.lines().find(|l| l.starts_with("t ")).unwrap();
        let t: Vec<f64> = t_line.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
        let gt = pairs[0].gt_pose.translation;
        let cos = t.iter().zip(gt).map(|(a, b)| a * b).sum::<f64>().abs();
        assert!(cos > 1.0 - 1e-9, "{text}");
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geomoe"))
}

#[test]
fn binary_exit_codes_and_help() {
    let dir = tempfile::tempdir().unwrap();
    let help = bin().arg("--help").output().unwrap();
    assert!(help.status.success());
    let text = String::from_utf8(help.stdout).unwrap();
    for (k, v, _) in key_table() {
        assert!(text.contains(&format!("{k} = {v}")), "{k}");
    }

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scene]\noutlier_ratio = 1.2\n").unwrap();
    let out = bin().args(["--config", bad.to_str().unwrap(), "generate", "--out"]).arg(dir.path().join("x")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outlier_ratio"));

    let out = bin().args(["eval", "--data"]).arg(dir.path().join("missing.gmds")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("d.gmds");
    let out = bin().args(["--config", cfg.to_str().unwrap(), "--threads", "2", "generate", "--out"]).arg(&data).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("realized outlier ratio"));

    // three collinear-free but too few points for the solver
    let input = dir.path().join("few.txt");
    std::fs::write(&input, "0.1 0.2 0.11 0.2\n0.3 0.1 0.3 0.12\n").unwrap();
    let out = bin().args(["pose", "--input"]).arg(&input).output().unwrap();
    assert_eq!(out.status.code(), Some(4));

    let out = bin().args(["eval", "--arm", "sideways", "--data"]).arg(&data).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
