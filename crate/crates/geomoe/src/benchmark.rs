//! Parallel drivers and the benchmark report formats.

use std::fmt::Write as _;
use std::path::Path;

use geomoe_core::eval::{evaluate_pair, summarize, Arm, AucSpec, BenchmarkReport, EvalConfig, PairTrace};
use geomoe_core::model::GeoMoE;
use geomoe_core::synth::LabeledPair;
use geomoe_core::train::{BatchExecutor, PairOutcome, TrainError};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Computes batch gradients on the current rayon pool; results keep job order
/// so the reduction in `train_step` stays deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl BatchExecutor for RayonExecutor {
    fn run(
        &self,
        jobs: usize,
        job: &(dyn Fn(usize) -> Result<PairOutcome, TrainError> + Sync),
    ) -> Vec<Result<PairOutcome, TrainError>> {
        (0..jobs).into_par_iter().map(job).collect()
    }
}

/// A trained network ready for inference.
pub struct LoadedModel<'a> {
    pub model: &'a GeoMoE,
    pub params: &'a [f64],
}

/// Output of [`run_benchmark`].
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    /// Pair-major, arms in request order.
    pub traces: Vec<PairTrace>,
}

/// Evaluates every arm on every pair in parallel and aggregates the traces.
pub fn run_benchmark(
    pairs: &[LabeledPair],
    arms: &[Arm],
    model: Option<LoadedModel<'_>>,
    cfg: &EvalConfig,
    spec: &AucSpec,
) -> Result<BenchmarkRun> {
    if pairs.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    if arms.iter().any(Arm::needs_model) && model.is_none() {
        return Err(Error::Config("the geomoe arms need a checkpoint".into()));
    }
    let use_model = model.as_ref().filter(|_| arms.iter().any(Arm::needs_model));
    if let Some(m) = use_model {
        let need = m.model.config.min_correspondences();
        if let Some(p) = pairs.iter().find(|p| p.correspondences.len() < need) {
            return Err(Error::Data(format!(
                "pair {} has {} correspondences but the checkpoint's model needs at least {need}",
                p.id,
                p.correspondences.len()
            )));
        }
    }
    let per_pair: Vec<Result<(Vec<PairTrace>, Vec<Vec<f64>>)>> = pairs
        .par_iter()
        .map(|p| {
            let (weights, mass) = match use_model {
                Some(m) => {
                    let (out, _) = m
                        .model
                        .forward(m.params, &p.correspondences)
                        .map_err(|e| Error::Data(format!("pair {}: {e}", p.id)))?;
                    let mass = out.routing.iter().map(|r| r.mean_mass()).collect();
                    (Some(out.final_weights().to_vec()), mass)
                }
                None => (None, Vec::new()),
            };
            let traces = arms.iter().map(|&a| evaluate_pair(p, a, weights.as_deref(), cfg)).collect();
            Ok((traces, mass))
        })
        .collect();
    let mut traces = Vec::with_capacity(pairs.len() * arms.len());
    let mut utilization: Vec<Vec<f64>> = Vec::new();
    let scale = 1.0 / pairs.len() as f64;
    for r in per_pair {
        let (t, mass) = r?;
        traces.extend(t);
        if utilization.is_empty() {
            utilization = mass.iter().map(|m| vec![0.0; m.len()]).collect();
        }
        for (acc, m) in utilization.iter_mut().zip(&mass) {
            for (a, b) in acc.iter_mut().zip(m) {
                *a += scale * b;
            }
        }
    }
    let report = summarize(&traces, spec, utilization).map_err(|e| Error::Data(e.to_string()))?;
    Ok(BenchmarkRun { report, traces })
}

fn pct(v: f64) -> String {
    format!("{v:.2}")
}

/// Fixed-width table of the report.
pub fn render_table(report: &BenchmarkReport) -> String {
    let mut s = String::new();
    let mut head = format!("{:<14}", "arm");
    for t in &report.thresholds_deg {
        head.push_str(&format!(" {:>8}", format!("AUC@{t}")));
    }
    head.push_str(&format!(" {:>9} {:>9} {:>5} {:>6} {:>6} {:>6}", "mean°", "median°", "fail", "P", "R", "F1"));
    for t in &report.homography_thresholds_px {
        head.push_str(&format!(" {:>7}", format!("H@{t}px")));
    }
    let _ = writeln!(s, "{head}");
    for a in &report.arms {
        let mut row = format!("{:<14}", a.arm.name());
        for v in &a.auc {
            row.push_str(&format!(" {:>8}", pct(*v)));
        }
        row.push_str(&format!(" {:>9.3} {:>9.3} {:>5}", a.mean_error_deg, a.median_error_deg, a.failures));
        match &a.classification {
            Some(c) => row.push_str(&format!(" {:>6.3} {:>6.3} {:>6.3}", c.precision, c.recall, c.f1)),
            None => row.push_str(&format!(" {:>6} {:>6} {:>6}", "-", "-", "-")),
        }
        match &a.homography_accuracy {
            Some(h) => h.iter().for_each(|v| row.push_str(&format!(" {:>7}", pct(*v)))),
            None => report.homography_thresholds_px.iter().for_each(|_| row.push_str(&format!(" {:>7}", "-"))),
        }
        let _ = writeln!(s, "{row}");
    }
    let _ = writeln!(s, "pairs: {}", report.pairs);
    for (f, m) in report.expert_utilization.iter().enumerate() {
        let cells: Vec<String> = m.iter().map(|v| format!("{v:.3}")).collect();
        let _ = writeln!(s, "F-MoE {f} expert mass: {}", cells.join(" "));
    }
    s
}

/// Machine-readable report. Non-finite numbers become `null`.
pub fn report_json(report: &BenchmarkReport, config: &str, checkpoint_config: Option<&str>) -> Value {
    let arms: Vec<Value> = report
        .arms
        .iter()
        .map(|a| {
            let mut v = json!({
                "arm": a.arm.name(),
                "pairs": a.pairs,
                "auc": a.auc,
                "mean_error_deg": a.mean_error_deg,
                "median_error_deg": a.median_error_deg,
                "failures": a.failures,
                "homography_accuracy": a.homography_accuracy,
            });
            if let Some(c) = &a.classification {
                v["classification"] = json!({
                    "true_positives": c.true_positives,
                    "false_positives": c.false_positives,
                    "false_negatives": c.false_negatives,
                    "true_negatives": c.true_negatives,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "precision_undefined": c.precision_undefined,
                    "recall_undefined": c.recall_undefined,
                });
            }
            v
        })
        .collect();
    json!({
        "pairs": report.pairs,
        "thresholds_deg": report.thresholds_deg,
        "homography_thresholds_px": report.homography_thresholds_px,
        "arms": arms,
        "expert_utilization": report.expert_utilization,
        "config": config,
        "checkpoint_config": checkpoint_config,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

/// Tab-separated per-pair traces; failures print as `inf`, absent values as `-`.
pub fn format_traces(traces: &[PairTrace], config: &str) -> String {
    let mut s: String = config.lines().map(|l| format!("# {l}\n")).collect();
    s.push_str("pair\tarm\trotation_deg\ttranslation_deg\tcorner_px\ttp\tfp\tfn\ttn\n");
    for t in traces {
        let counts = match t.counts {
            Some(c) => c.map(|v| v.to_string()).join("\t"),
            None => ["-"; 4].join("\t"),
        };
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            t.pair_id,
            t.arm.name(),
            t.rotation_error_deg,
            t.translation_error_deg,
            opt(t.corner_error_px),
            counts
        );
    }
    s
}

pub fn parse_traces(text: &str, path: &Path) -> Result<Vec<PairTrace>> {
    let mut out = Vec::new();
    let mut header = true;
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if header {
            header = false;
            continue;
        }
        let bad = || Error::format(path, format!("line {}: malformed trace", lineno + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let corner = if f[4] == "-" { None } else { Some(num(f[4])?) };
        let counts = if f[5] == "-" {
            None
        } else {
            let mut c = [0usize; 4];
            for (slot, s) in c.iter_mut().zip(&f[5..9]) {
                *slot = s.parse().map_err(|_| bad())?;
            }
            Some(c)
        };
        out.push(PairTrace {
            pair_id: f[0].parse().map_err(|_| bad())?,
            arm: Arm::parse(f[1]).map_err(|_| bad())?,
            rotation_error_deg: num(f[2])?,
            translation_error_deg: num(f[3])?,
            corner_error_px: corner,
            counts,
        });
    }
    Ok(out)
}
