//! The subcommands, callable without going through the process boundary.

use std::fmt::Write as _;
use std::path::Path;

use geomoe_core::eval::Arm;
use geomoe_core::geometry::{decompose_essential, weighted_eight_point, Correspondence, EssentialMatrix, RelativePose};
use geomoe_core::model::GeoMoE;
use geomoe_core::robust::ransac_essential;
use geomoe_core::synth::{generate_pair, pair_spec, LabeledPair};
use geomoe_core::train::{train_loop, TrainError, TrainState};
use rayon::prelude::*;

use crate::benchmark::{format_traces, render_table, report_json, run_benchmark, BenchmarkRun, LoadedModel, RayonExecutor};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{read_correspondences, read_dataset, read_weights, write_dataset};
use crate::error::{Error, Result};
use crate::metrics::MetricsLog;

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn commented(text: &str) -> String {
    text.lines().map(|l| format!("# {l}\n")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub pairs: usize,
    pub correspondences: usize,
    pub labelled_outliers: usize,
    pub injected_outliers: usize,
    /// Injected points that landed close enough to their epipolar line to be labelled inliers.
    pub injected_labelled_inliers: usize,
    pub planar_pairs: usize,
}

impl GenerateSummary {
    pub fn realized_outlier_ratio(&self) -> f64 {
        self.labelled_outliers as f64 / self.correspondences.max(1) as f64
    }

    /// Counts recomputable from the dataset file alone.
    pub fn of_pairs(pairs: &[LabeledPair]) -> Self {
        let correspondences = pairs.iter().map(|p| p.correspondences.len()).sum();
        let inliers: usize = pairs.iter().map(|p| p.inlier_count()).sum();
        Self {
            pairs: pairs.len(),
            correspondences,
            labelled_outliers: correspondences - inliers,
            injected_outliers: 0,
            injected_labelled_inliers: 0,
            planar_pairs: pairs.iter().filter(|p| p.gt_homography.is_some()).count(),
        }
    }
}

impl std::fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "pairs: {}", self.pairs)?;
        writeln!(f, "correspondences: {}", self.correspondences)?;
        writeln!(f, "labelled outliers: {}", self.labelled_outliers)?;
        writeln!(f, "realized outlier ratio: {:.6}", self.realized_outlier_ratio())?;
        writeln!(f, "injected outliers: {}", self.injected_outliers)?;
        writeln!(f, "injected but labelled inlier: {}", self.injected_labelled_inliers)?;
        write!(f, "planar pairs: {}", self.planar_pairs)
    }
}

/// Generates `config.data.pairs` pairs in parallel and writes them in order.
pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<GenerateSummary> {
    config.validate()?;
    let spec = config.scene_spec();
    let generated = (0..config.data.pairs as u64)
        .into_par_iter()
        .map(|i| generate_pair(&pair_spec(&spec, i)).map_err(|e| Error::Data(format!("pair {i}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<LabeledPair> = generated.iter().enumerate().map(|(i, g)| g.to_labeled(i as u64)).collect();
    write_dataset(out, &config.to_toml(), &pairs)?;
    let mut summary = GenerateSummary::of_pairs(&pairs);
    summary.injected_outliers = generated.iter().map(|g| g.injected_outliers.len()).sum();
    summary.injected_labelled_inliers = generated.iter().map(|g| g.injected_labelled_inlier()).sum();
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub start_iteration: usize,
    pub iterations: usize,
    pub final_classification: Option<f64>,
    pub final_total: Option<f64>,
}

fn model_for(config: &RunConfig) -> Result<GeoMoE> {
    GeoMoE::new(config.model_config()).map_err(|e| Error::Config(format!("[model] {e}")))
}

/// Trains from scratch or from `resume`, writing the checkpoint to `out`.
///
/// On a non-finite loss the last good state is written to `out` and a
/// numerical error is returned.
pub fn cmd_train(
    config: &RunConfig,
    dataset: &Path,
    out: &Path,
    resume: Option<&Path>,
    metrics: Option<&Path>,
) -> Result<TrainSummary> {
    config.validate()?;
    let model = model_for(config)?;
    let tc = config.train_config();
    let (_, pairs) = read_dataset(dataset)?;
    if pairs.is_empty() {
        return Err(Error::Data(format!("{}: dataset is empty", dataset.display())));
    }
    let state = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config != model.config {
                return Err(Error::Data(format!(
                    "{}: checkpoint model {:?} does not match configured model {:?}",
                    path.display(),
                    ck.config,
                    model.config
                )));
            }
            ck.state
        }
        None => TrainState::initial(&model, &tc),
    };
    let start_iteration = state.iteration;
    let echo = config.to_toml();
    let mut log = match metrics {
        Some(p) if resume.is_some() => Some(MetricsLog::append(p, &echo, start_iteration)?),
        Some(p) => Some(MetricsLog::create(p, &echo)?),
        None => None,
    };
    let mut log_error = None;
    let mut last = None;
    let result = train_loop(&model, &pairs, &tc, state, &RayonExecutor, &mut |r| {
        last = Some((r.classification, r.total));
        if let (Some(l), None) = (log.as_mut(), log_error.as_ref()) {
            if let Err(e) = l.record(r) {
                log_error = Some(e);
            }
        }
    });
    if let Some(l) = log {
        l.finish()?;
    }
    if let Some(e) = log_error {
        return Err(e);
    }
    let state = match result {
        Ok(s) => s,
        Err(TrainError::NonFinite { iteration, last_good }) => {
            Checkpoint::new(model.config, *last_good, config.seed, echo).save(out)?;
            return Err(Error::Numerical(format!(
                "non-finite loss at iteration {iteration}; last good state written to {}",
                out.display()
            )));
        }
        Err(TrainError::InvalidConfig(m)) => return Err(Error::Config(m.into())),
        Err(e) => return Err(Error::Data(e.to_string())),
    };
    let iterations = state.iteration;
    Checkpoint::new(model.config, state, config.seed, echo).save(out)?;
    Ok(TrainSummary {
        start_iteration,
        iterations,
        final_classification: last.map(|l| l.0),
        final_total: last.map(|l| l.1),
    })
}

fn pose_lines(pose: &RelativePose) -> String {
    let r: Vec<String> = pose.rotation.iter().flatten().map(|v| v.to_string()).collect();
    let t: Vec<String> = pose.translation.iter().map(|v| v.to_string()).collect();
    format!("R {}\nt {}\n", r.join(" "), t.join(" "))
}

fn solve_pose(corrs: &[Correspondence], weights: &[f64]) -> Result<(EssentialMatrix, RelativePose)> {
    let e = weighted_eight_point(corrs, weights).map_err(|e| Error::Numerical(e.to_string()))?;
    let pose = decompose_essential(&e, corrs, weights).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((e, pose))
}

/// Network probabilities for a text correspondence file, optionally followed
/// by the pose from the weighted eight-point solver.
pub fn cmd_filter(config: &RunConfig, checkpoint: &Path, input: &Path, out: &Path, pose: bool) -> Result<Vec<f64>> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    let corrs = read_correspondences(input)?;
    let (output, _) = model.forward(ck.params(), &corrs).map_err(|e| Error::Data(format!("{}: {e}", input.display())))?;
    let weights = output.final_weights().to_vec();
    let mut text = commented(&config.to_toml());
    text.push_str(&commented(&format!("checkpoint model: {:?}", ck.config)));
    for w in &weights {
        let _ = writeln!(text, "{w}");
    }
    if pose {
        let (_, p) = solve_pose(&corrs, &weights)?;
        text.push_str(&pose_lines(&p));
    }
    write_text(out, &text)?;
    Ok(weights)
}

/// Essential matrix and pose of a text correspondence file, from the weighted
/// eight-point solver (uniform or given weights) or from RANSAC.
pub fn cmd_pose(config: &RunConfig, input: &Path, weights: Option<&Path>, ransac: bool) -> Result<String> {
    config.validate()?;
    let corrs = read_correspondences(input)?;
    let (e, pose, note) = if ransac {
        let cfg = config.eval_config().essential_ransac;
        let r = ransac_essential(&corrs, &cfg).map_err(|e| Error::Numerical(e.to_string()))?;
        let w: Vec<f64> = r.inlier_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let pose = decompose_essential(&r.model, &corrs, &w).map_err(|e| Error::Numerical(e.to_string()))?;
        (r.model, pose, format!("ransac inliers {} of {}", r.inlier_count(), corrs.len()))
    } else {
        let w = match weights {
            Some(p) => read_weights(p)?,
            None => vec![1.0; corrs.len()],
        };
        if w.len() != corrs.len() {
            return Err(Error::Data(format!("{} weights for {} correspondences", w.len(), corrs.len())));
        }
        let (e, pose) = solve_pose(&corrs, &w)?;
        (e, pose, "weighted eight-point".to_string())
    };
    let mut s = format!("# {note}\n");
    let ev: Vec<String> = e.e.iter().flatten().map(|v| v.to_string()).collect();
    let _ = writeln!(s, "E {}", ev.join(" "));
    s.push_str(&pose_lines(&pose));
    Ok(s)
}

/// Arms to run when none are requested.
pub fn default_arms(with_model: bool) -> Vec<Arm> {
    Arm::ALL.into_iter().filter(|a| with_model || !a.needs_model()).collect()
}

pub struct EvalOutput {
    pub run: BenchmarkRun,
    pub table: String,
}

pub fn cmd_eval(
    config: &RunConfig,
    dataset: &Path,
    checkpoint: Option<&Path>,
    arms: &[Arm],
    report: Option<&Path>,
    trace: Option<&Path>,
) -> Result<EvalOutput> {
    config.validate()?;
    let spec = config.auc_spec()?;
    let (_, pairs) = read_dataset(dataset)?;
    let ck = checkpoint.map(Checkpoint::load).transpose()?;
    let model = ck.as_ref().map(Checkpoint::model).transpose()?;
    let arms = if arms.is_empty() { default_arms(ck.is_some()) } else { arms.to_vec() };
    let loaded = match (&model, &ck) {
        (Some(m), Some(c)) => Some(LoadedModel { model: m, params: c.params() }),
        _ => None,
    };
    let run = run_benchmark(&pairs, &arms, loaded, &config.eval_config(), &spec)?;
    let echo = config.to_toml();
    if let Some(p) = report {
        let ck_echo = ck.as_ref().map(|c| c.metadata.as_str());
        let doc = report_json(&run.report, &echo, ck_echo);
        let text = serde_json::to_string_pretty(&doc).expect("report serialises");
        write_text(p, &(text + "\n"))?;
    }
    if let Some(p) = trace {
        write_text(p, &format_traces(&run.traces, &echo))?;
    }
    let table = render_table(&run.report);
    Ok(EvalOutput { run, table })
}
