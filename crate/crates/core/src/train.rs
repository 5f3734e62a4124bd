//! Training objective, Adam and a deterministic optimisation loop.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

use crate::geometry::{epipolar_row, weighted_normal_matrix, Correspondence};
use crate::linalg::{self, Mat3};
use crate::model::{GeoMoE, ModelError, RoutingDecision};
use crate::nn::FeatureGrid;
use crate::rng::{mix_seed, SeededRng};
use crate::synth::LabeledPair;

/// Lower clamp on log arguments.
pub const LOG_CLAMP: f64 = 1e-12;
/// Per-point cap on the symmetric epipolar distance in the regression loss.
pub const REGRESSION_CLAMP: f64 = 0.25;
/// Minimum trace-normalised gap between the two smallest eigenvalues.
pub const EIGEN_GAP_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("pair {pair}: {source}")]
    Model { pair: u64, source: ModelError },
    #[error("non-finite loss or gradient at iteration {iteration}")]
    NonFinite { iteration: usize, last_good: Box<TrainState> },
}

/// Coefficients of the three-term objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub mu_initial: f64,
    pub mu_target: f64,
    pub ramp_iteration: usize,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mu_initial: 0.0, mu_target: 0.5, ramp_iteration: 20_000, beta: 0.01 }
    }
}

impl LossWeights {
    /// Step schedule: `mu_initial` before the ramp iteration, `mu_target` from it on.
    pub fn mu(&self, iteration: usize) -> f64 {
        if iteration < self.ramp_iteration {
            self.mu_initial
        } else {
            self.mu_target
        }
    }

    /// Moves the ramp to 20% of a run shorter than 100k iterations.
    pub fn rescaled(&self, total_iterations: usize) -> Self {
        let full = self.ramp_iteration * 5;
        if total_iterations >= full {
            return *self;
        }
        Self { ramp_iteration: total_iterations / 5, ..*self }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.mu_initial) || !ok(self.mu_target) || !ok(self.beta) {
            return Err(TrainError::InvalidConfig("loss coefficients must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationLoss {
    pub value: f64,
    /// `∂value/∂predicted`.
    pub grad: Vec<f64>,
    /// True when one class had no members and its term was omitted.
    pub missing_class: bool,
}

/// Class-balanced binary cross-entropy.
pub fn classification_loss(predicted: &[f64], labels: &[bool]) -> ClassificationLoss {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    let terms = (pos > 0) as usize + (neg > 0) as usize;
    let mut grad = vec![0.0; predicted.len()];
    if terms == 0 {
        return ClassificationLoss { value: 0.0, grad, missing_class: true };
    }
    let half = 1.0 / terms as f64;
    let mut value = 0.0;
    for (i, (&p, &l)) in predicted.iter().zip(labels).enumerate() {
        if l {
            let arg = p.max(LOG_CLAMP);
            value -= half * arg.ln() / pos as f64;
            if p > LOG_CLAMP {
                grad[i] = -half / (pos as f64 * p);
            }
        } else {
            let arg = (1.0 - p).max(LOG_CLAMP);
            value -= half * arg.ln() / neg as f64;
            if 1.0 - p > LOG_CLAMP {
                grad[i] = half / (neg as f64 * (1.0 - p));
            }
        }
    }
    ClassificationLoss { value, grad, missing_class: terms < 2 }
}

/// Symmetric epipolar distance of `c` under `e` and its gradient with respect to `e` (row-major).
pub fn symmetric_distance_with_grad(c: &Correspondence, e: &Mat3) -> (f64, [f64; 9]) {
    let (x, xp) = c.lift();
    let ex = linalg::mat3_vec(e, &x);
    let etxp = linalg::mat3_vec(&linalg::transpose3(e), &xp);
    let r = linalg::dot3(&xp, &ex);
    let g1 = ex[0] * ex[0] + ex[1] * ex[1];
    let g2 = etxp[0] * etxp[0] + etxp[1] * etxp[1];
    if g1 <= 0.0 || g2 <= 0.0 {
        let d = crate::geometry::symmetric_epipolar_distance(c, e);
        return (d, [0.0; 9]);
    }
    let d = r * r * (1.0 / g1 + 1.0 / g2);
    let dr = 2.0 * r * (1.0 / g1 + 1.0 / g2);
    let dg1 = -r * r / (g1 * g1);
    let dg2 = -r * r / (g2 * g2);
    let mut grad = [0.0; 9];
    for a in 0..3 {
        for b in 0..3 {
            let mut v = dr * xp[a] * x[b];
            if a < 2 {
                v += dg1 * 2.0 * ex[a] * x[b];
            }
            if b < 2 {
                v += dg2 * 2.0 * etxp[b] * xp[a];
            }
            grad[3 * a + b] = v;
        }
    }
    (d, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionLoss {
    pub value: f64,
    /// `∂value/∂w`.
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionSkip {
    /// No correspondence carries a positive label.
    NoInliers,
    /// The two smallest eigenvalues of the normal matrix nearly coincide.
    EigenGap,
    /// Non-finite or zero-trace normal matrix.
    Degenerate,
}

/// Mean clamped symmetric epipolar distance of the labelled inliers under the
/// weighted least-squares essential estimate.
///
/// The estimate is the smallest eigenvector of `Σ wᵢ aᵢ aᵢᵀ` before projection
/// onto the essential manifold; its gradient uses first-order eigenvector
/// perturbation.
pub fn essential_regression_loss(w: &[f64], corrs: &[Correspondence]) -> Result<RegressionLoss, RegressionSkip> {
    let inliers: Vec<usize> = (0..corrs.len()).filter(|&i| corrs[i].label == Some(true)).collect();
    if inliers.is_empty() {
        return Err(RegressionSkip::NoInliers);
    }
    let m = weighted_normal_matrix(corrs, w);
    let trace: f64 = (0..9).map(|i| m[i][i]).sum();
    if !(trace.is_finite() && trace > 0.0) {
        return Err(RegressionSkip::Degenerate);
    }
    let (vals, vecs) = linalg::symmetric_eigen(&m);
    if (vals[1] - vals[0]) / trace < EIGEN_GAP_GUARD {
        return Err(RegressionSkip::EigenGap);
    }
    let e: [f64; 9] = core::array::from_fn(|r| vecs[r][0]);
    let emat = linalg::unflatten3(&e);

    let mut value = 0.0;
    let mut g = [0.0; 9];
    for &i in &inliers {
        let (d, dd) = symmetric_distance_with_grad(&corrs[i], &emat);
        if d < REGRESSION_CLAMP {
            value += d;
            for (a, b) in g.iter_mut().zip(dd) {
                *a += b;
            }
        } else {
            value += REGRESSION_CLAMP;
        }
    }
    let count = inliers.len() as f64;
    value /= count;
    g.iter_mut().for_each(|v| *v /= count);

    // v = Σ_{k≥1} u_k (gᵀu_k) / (λ_k − λ_0);  ∂L/∂w_i = −(aᵢᵀe)(aᵢᵀv)
    let mut v = [0.0; 9];
    for k in 1..9 {
        let proj: f64 = (0..9).map(|r| g[r] * vecs[r][k]).sum();
        let coef = proj / (vals[k] - vals[0]);
        for (r, vr) in v.iter_mut().enumerate() {
            *vr += coef * vecs[r][k];
        }
    }
    let grad = corrs
        .iter()
        .map(|c| {
            let a = epipolar_row(c);
            let ae: f64 = a.iter().zip(&e).map(|(x, y)| x * y).sum();
            let av: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
            -ae * av
        })
        .collect();
    Ok(RegressionLoss { value, grad })
}

/// Load-balance penalty averaged over MoE instances, with `∂/∂probs` for each.
pub fn load_balance_loss(routing_probs: &[&FeatureGrid]) -> (f64, Vec<FeatureGrid>) {
    if routing_probs.is_empty() {
        return (0.0, Vec::new());
    }
    let inst = routing_probs.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(routing_probs.len());
    for probs in routing_probs {
        let (m, t) = probs.shape();
        let mut mean = vec![0.0; t];
        for i in 0..m {
            for (a, b) in mean.iter_mut().zip(probs.row(i)) {
                *a += b;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        total += mean.iter().map(|q| q * q).sum::<f64>() / t as f64 / inst;
        let mut g = FeatureGrid::zeros(m, t);
        for i in 0..m {
            for (o, q) in g.row_mut(i).iter_mut().zip(&mean) {
                *o = 2.0 * q / (t as f64 * m as f64 * inst);
            }
        }
        grads.push(g);
    }
    (total, grads)
}

/// Loss components of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// Σ over layers of the classification loss.
    pub classification: f64,
    /// Σ over layers of the regression loss (unweighted).
    pub regression: f64,
    /// Load-balance loss (unweighted, before `β/L`).
    pub load: f64,
    pub mu: f64,
    pub total: f64,
    /// Layers whose regression term was skipped.
    pub regression_skipped: usize,
    /// Layers that lacked one class.
    pub missing_class: usize,
}

/// Cotangents of the total loss on the model outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGrad {
    pub dweights: Vec<Vec<f64>>,
    pub dprobs: Vec<Option<FeatureGrid>>,
}

/// `Σ_ℓ [cls(w^ℓ) + μ·reg(w^ℓ)] + (β/L)·load`.
pub fn total_loss(
    layer_weights: &[Vec<f64>],
    routing: &[RoutingDecision],
    corrs: &[Correspondence],
    weights: &LossWeights,
    iteration: usize,
) -> (LossBreakdown, ObjectiveGrad) {
    let labels: Vec<bool> = corrs.iter().map(|c| c.label == Some(true)).collect();
    let mu = weights.mu(iteration);
    let layers = layer_weights.len().max(1) as f64;
    let mut out = LossBreakdown { mu, ..Default::default() };
    let mut dweights = Vec::with_capacity(layer_weights.len());
    for w in layer_weights {
        let cls = classification_loss(w, &labels);
        out.classification += cls.value;
        out.missing_class += cls.missing_class as usize;
        let mut dw = cls.grad;
        match essential_regression_loss(w, corrs) {
            Ok(reg) => {
                out.regression += reg.value;
                if mu != 0.0 {
                    for (a, b) in dw.iter_mut().zip(&reg.grad) {
                        *a += mu * b;
                    }
                }
            }
            Err(_) => out.regression_skipped += 1,
        }
        dweights.push(dw);
    }
    let probs: Vec<&FeatureGrid> = routing.iter().map(|r| &r.probs).collect();
    let (load, load_grads) = load_balance_loss(&probs);
    out.load = load;
    let coef = weights.beta / layers;
    out.total = out.classification + mu * out.regression + coef * load;
    let dprobs = if coef == 0.0 {
        vec![None; routing.len()]
    } else {
        load_grads
            .into_iter()
            .map(|mut g| {
                g.as_mut_slice().iter_mut().for_each(|v| *v *= coef);
                Some(g)
            })
            .collect()
    };
    (out, ObjectiveGrad { dweights, dprobs })
}

/// Adam hyper-parameters and learning-rate schedule.
///
/// The rate is constant until `decay_onset`, then multiplied by
/// `decay_rate^((t − onset) / decay_steps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay_onset: usize,
    pub decay_rate: f64,
    pub decay_steps: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_onset: 2_500,
            decay_rate: 0.5,
            decay_steps: 1_000,
        }
    }
}

impl AdamConfig {
    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        if iteration < self.decay_onset {
            return self.learning_rate;
        }
        let steps = self.decay_steps.max(1) as f64;
        self.learning_rate * self.decay_rate.powf((iteration - self.decay_onset) as f64 / steps)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be finite and non-negative"));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(TrainError::InvalidConfig("Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) || !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(TrainError::InvalidConfig("epsilon must be positive and decay_rate in (0, 1]"));
        }
        Ok(())
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            if lr != 0.0 {
                let mh = self.m[i] / c1;
                let vh = self.v[i] / c2;
                params[i] -= lr * mh / (vh.sqrt() + cfg.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: LossWeights,
    /// Compress the μ ramp into short runs (see [`LossWeights::rescaled`]).
    pub rescale_mu: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5_000,
            batch_size: 8,
            seed: 0,
            adam: AdamConfig::default(),
            loss: LossWeights::default(),
            rescale_mu: true,
        }
    }
}

impl TrainConfig {
    pub fn effective_loss(&self) -> LossWeights {
        if self.rescale_mu {
            self.loss.rescaled(self.iterations)
        } else {
            self.loss
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1"));
        }
        self.adam.validate()?;
        self.loss.validate()
    }

    /// Seed used to draw the initial parameters.
    pub fn init_seed(&self) -> u64 {
        mix_seed(self.seed, 0)
    }
}

/// Parameters, optimiser moments and iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Vec<f64>,
    pub adam: Adam,
    pub iteration: usize,
}

impl TrainState {
    pub fn initial(model: &GeoMoE, config: &TrainConfig) -> Self {
        let params = model.init_params(config.init_seed());
        let adam = Adam::new(params.len());
        Self { params, adam, iteration: 0 }
    }
}

/// Gradient and statistics of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub loss: LossBreakdown,
    pub grads: Vec<f64>,
    /// Per MoE instance, mean router probability per expert.
    pub expert_mass: Vec<Vec<f64>>,
}

pub fn pair_gradient(
    model: &GeoMoE,
    params: &[f64],
    pair: &LabeledPair,
    weights: &LossWeights,
    iteration: usize,
) -> Result<PairOutcome, TrainError> {
    let err = |source| TrainError::Model { pair: pair.id, source };
    let (out, cache) = model.forward(params, &pair.correspondences).map_err(err)?;
    let (loss, g) = total_loss(&out.layer_weights, &out.routing, &pair.correspondences, weights, iteration);
    let mut grads = vec![0.0; params.len()];
    model.backward(params, &cache, &g.dweights, &g.dprobs, &mut grads);
    let expert_mass = out.routing.iter().map(RoutingDecision::mean_mass).collect();
    Ok(PairOutcome { loss, grads, expert_mass })
}

/// Runs independent per-pair jobs and returns results in job order.
pub trait BatchExecutor {
    fn run(&self, jobs: usize, job: &(dyn Fn(usize) -> Result<PairOutcome, TrainError> + Sync)) -> Vec<Result<PairOutcome, TrainError>>;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BatchExecutor for Sequential {
    fn run(&self, jobs: usize, job: &(dyn Fn(usize) -> Result<PairOutcome, TrainError> + Sync)) -> Vec<Result<PairOutcome, TrainError>> {
        (0..jobs).map(job).collect()
    }
}

/// Dataset indices of the batch at `iteration`: consecutive slices of a
/// per-epoch permutation seeded from `(seed, epoch)`.
pub fn batch_indices(seed: u64, dataset_len: usize, batch_size: usize, iteration: usize) -> Vec<usize> {
    let start = iteration * batch_size;
    let mut out = Vec::with_capacity(batch_size);
    let mut perm: Option<(usize, Vec<usize>)> = None;
    for k in start..start + batch_size {
        let epoch = k / dataset_len;
        if perm.as_ref().map(|p| p.0) != Some(epoch) {
            let mut p: Vec<usize> = (0..dataset_len).collect();
            SeededRng::new(mix_seed(seed, 1 + epoch as u64)).shuffle(&mut p);
            perm = Some((epoch, p));
        }
        out.push(perm.as_ref().expect("set above").1[k % dataset_len]);
    }
    out
}

/// Statistics of one optimiser iteration, averaged over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub classification: f64,
    pub regression: f64,
    pub load: f64,
    pub total: f64,
    pub learning_rate: f64,
    /// Per MoE instance, mean router probability per expert.
    pub expert_mass: Vec<Vec<f64>>,
}

/// One optimiser step on the given batch. On failure `state` is untouched.
pub fn train_step(
    model: &GeoMoE,
    state: &mut TrainState,
    dataset: &[LabeledPair],
    batch: &[usize],
    config: &TrainConfig,
    executor: &dyn BatchExecutor,
) -> Result<IterationRecord, TrainError> {
    let iteration = state.iteration;
    let weights = config.effective_loss();
    let params = &state.params;
    let job = |j: usize| pair_gradient(model, params, &dataset[batch[j]], &weights, iteration);
    let results = executor.run(batch.len(), &job);

    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; state.params.len()];
    let mut rec = IterationRecord {
        iteration,
        classification: 0.0,
        regression: 0.0,
        load: 0.0,
        total: 0.0,
        learning_rate: config.adam.learning_rate_at(iteration),
        expert_mass: Vec::new(),
    };
    for r in results {
        let o = r?;
        for (a, b) in grads.iter_mut().zip(&o.grads) {
            *a += b;
        }
        rec.classification += scale * o.loss.classification;
        rec.regression += scale * o.loss.regression;
        rec.load += scale * o.loss.load;
        rec.total += scale * o.loss.total;
        if rec.expert_mass.is_empty() {
            rec.expert_mass = o.expert_mass.iter().map(|m| vec![0.0; m.len()]).collect();
        }
        for (acc, m) in rec.expert_mass.iter_mut().zip(&o.expert_mass) {
            for (a, b) in acc.iter_mut().zip(m) {
                *a += scale * b;
            }
        }
    }
    grads.iter_mut().for_each(|g| *g *= scale);
    if !rec.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite { iteration, last_good: Box::new(state.clone()) });
    }
    state.adam.update(&mut state.params, &grads, rec.learning_rate, &config.adam);
    state.iteration += 1;
    Ok(rec)
}

/// Runs `config.iterations − state.iteration` further steps, calling
/// `on_iteration` after each.
pub fn train_loop(
    model: &GeoMoE,
    dataset: &[LabeledPair],
    config: &TrainConfig,
    mut state: TrainState,
    executor: &dyn BatchExecutor,
    on_iteration: &mut dyn FnMut(&IterationRecord),
) -> Result<TrainState, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    config.validate()?;
    while state.iteration < config.iterations {
        let batch = batch_indices(config.seed, dataset.len(), config.batch_size, state.iteration);
        let rec = train_step(model, &mut state, dataset, &batch, config, executor)?;
        on_iteration(&rec);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_bce_hand_value() {
        let l = classification_loss(&[0.9, 0.2], &[true, false]);
        let expect = 0.5 * (-(0.9f64).ln() - (0.8f64).ln());
        assert!((l.value - expect).abs() < 1e-15);
        assert!(!l.missing_class);
        assert!((l.grad[0] + 0.5 / 0.9).abs() < 1e-15);
        assert!((l.grad[1] - 0.5 / 0.8).abs() < 1e-15);
    }

    #[test]
    fn half_predictions_give_ln2() {
        let l = classification_loss(&[0.5; 6], &[true, false, true, true, false, false]);
        assert!((l.value - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn missing_class_is_flagged() {
        let l = classification_loss(&[0.7, 0.8], &[true, true]);
        assert!(l.missing_class);
        let expect = -(0.7f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((l.value - expect).abs() < 1e-15);
    }

    #[test]
    fn mu_steps_at_ramp() {
        let w = LossWeights::default();
        assert_eq!(w.mu(19_999), 0.0);
        assert_eq!(w.mu(20_000), 0.5);
        assert_eq!(w.rescaled(5_000).ramp_iteration, 1_000);
        assert_eq!(w.rescaled(500_000).ramp_iteration, 20_000);
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let mut seen: Vec<usize> = (0..5).flat_map(|it| batch_indices(3, 10, 2, it)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(batch_indices(3, 10, 4, 7), batch_indices(3, 10, 4, 7));
    }

    #[test]
    fn zero_rate_leaves_params_untouched() {
        let mut p = vec![0.3, -0.0, 1e300];
        let before = p.clone();
        let mut adam = Adam::new(3);
        adam.update(&mut p, &[1.0, 2.0, -3.0], 0.0, &AdamConfig::default());
        assert!(p.iter().zip(&before).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
