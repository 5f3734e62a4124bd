//! Central finite-difference verification of reverse passes.
//!
//! The harness contracts the operation's output with a fixed random linear
//! functional `c`, so a single reverse pass with cotangent `c` yields the
//! whole gradient of the scalar `c·op(x)`. Coordinates whose ±step
//! perturbation changes the piecewise-constant pattern of the forward pass
//! (ReLU masks, top-k choices, neighbour tables) are skipped and counted.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

use super::{NnError, ParamLayout};
use crate::rng::SeededRng;

/// A differentiable map from `(params, input)` to a flat output.
pub trait GradOp {
    /// Output values and a fingerprint of the forward pass's discrete choices.
    fn forward(&self, params: &[f64], input: &[f64]) -> Result<(Vec<f64>, u64), NnError>;

    /// `(∂/∂params, ∂/∂input)` of `dout · forward(params, input)`.
    fn backward(&self, params: &[f64], input: &[f64], dout: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Coordinates sampled per parameter block; `None` checks all of them.
    pub max_coords_per_block: Option<usize>,
    /// Denominator floor, relative to the largest analytic gradient entry.
    pub relative_floor: f64,
    pub absolute_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-5,
            seed: 0,
            max_coords_per_block: None,
            relative_floor: 1e-4,
            absolute_floor: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a pattern boundary.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub input: Option<BlockCheck>,
    pub tolerance: f64,
    /// Descriptions of evaluations that produced non-finite values.
    pub non_finite: Vec<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.non_finite.is_empty() && self.all().all(|b| b.max_rel_error < self.tolerance)
    }

    pub fn all(&self) -> impl Iterator<Item = &BlockCheck> {
        self.blocks.iter().chain(self.input.iter())
    }

    pub fn failing(&self) -> Vec<&str> {
        self.all().filter(|b| !(b.max_rel_error < self.tolerance)).map(|b| b.name.as_str()).collect()
    }

    pub fn max_error(&self) -> f64 {
        self.all().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.all().map(|b| b.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.all().map(|b| b.skipped).sum()
    }
}

/// Compares the analytic gradient of `op` against central differences for
/// every parameter block of `layout` and for the input.
///
/// Relative error is `|a − n| / max(|a|, |n|, floor)` where
/// `floor = max(absolute_floor, relative_floor · max|a|)`.
pub fn finite_difference_check<O: GradOp + ?Sized>(
    op: &O,
    layout: &ParamLayout,
    params: &[f64],
    input: &[f64],
    opts: &GradCheckOptions,
) -> GradCheckReport {
    let mut report =
        GradCheckReport { blocks: Vec::new(), input: None, tolerance: opts.tolerance, non_finite: Vec::new() };
    let (out, base_pattern) = match op.forward(params, input) {
        Ok(v) => v,
        Err(e) => {
            report.non_finite.push(e.to_string());
            return report;
        }
    };
    if out.iter().any(|v| !v.is_finite()) {
        report.non_finite.push("forward output".to_string());
        return report;
    }
    let mut rng = SeededRng::new(opts.seed);
    let functional: Vec<f64> = (0..out.len()).map(|_| rng.normal()).collect();
    let (gp, gi) = match op.backward(params, input, &functional) {
        Ok(v) => v,
        Err(e) => {
            report.non_finite.push(e.to_string());
            return report;
        }
    };
    if gp.iter().chain(&gi).any(|v| !v.is_finite()) {
        report.non_finite.push("analytic gradient".to_string());
    }
    let scale = gp.iter().chain(&gi).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = opts.absolute_floor.max(opts.relative_floor * scale);

    let contract = |o: &[f64]| -> f64 { o.iter().zip(&functional).map(|(a, b)| a * b).sum() };

    let mut work_p = params.to_vec();
    let mut work_i = input.to_vec();
    let mut coords = Vec::new();

    let mut check_block = |name: &str,
                           range: core::ops::Range<usize>,
                           on_input: bool,
                           analytic: &[f64],
                           rng: &mut SeededRng,
                           non_finite: &mut Vec<String>|
     -> BlockCheck {
        let len = range.len();
        match opts.max_coords_per_block {
            Some(m) if m < len => rng.sample_distinct(len, m, &mut coords),
            _ => {
                coords.clear();
                coords.extend(0..len);
            }
        }
        let mut block = BlockCheck { name: name.to_string(), max_rel_error: 0.0, checked: 0, skipped: 0 };
        for &c in coords.iter() {
            let idx = range.start + c;
            let mut eval = |delta: f64| -> Option<(f64, u64)> {
                let res = if on_input {
                    let orig = work_i[idx];
                    work_i[idx] = orig + delta;
                    let r = op.forward(params, &work_i);
                    work_i[idx] = orig;
                    r
                } else {
                    let orig = work_p[idx];
                    work_p[idx] = orig + delta;
                    let r = op.forward(&work_p, input);
                    work_p[idx] = orig;
                    r
                };
                res.ok().map(|(o, pat)| (contract(&o), pat))
            };
            let (Some((fp, pp)), Some((fm, pm))) = (eval(opts.step), eval(-opts.step)) else {
                non_finite.push(alloc::format!("{name}[{c}]: forward failed"));
                continue;
            };
            if !fp.is_finite() || !fm.is_finite() {
                non_finite.push(alloc::format!("{name}[{c}]"));
                continue;
            }
            if pp != base_pattern || pm != base_pattern {
                block.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * opts.step);
            let a = analytic[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            block.max_rel_error = block.max_rel_error.max(rel);
            block.checked += 1;
        }
        block
    };

    let mut non_finite = Vec::new();
    for b in layout.blocks() {
        let check = check_block(&b.name, b.slot().range(), false, &gp, &mut rng, &mut non_finite);
        report.blocks.push(check);
    }
    if !input.is_empty() {
        report.input = Some(check_block("input", 0..input.len(), true, &gi, &mut rng, &mut non_finite));
    }
    report.non_finite.extend(non_finite);
    report
}
