//! Self-supervised estimation of structured Gaussians for a single image.
//!
//! Each component is fitted by minimizing the level-weighted negative
//! log-likelihood of that component's augmentation batch, with weights
//! w_l = 1/(l+1) favoring milder transforms. Scales have disjoint parameter
//! sets, so the multi-scale objective separates and each component is fitted
//! independently on its own batch. An optional hinge term enforces monotone
//! mean log-probabilities across levels.

use serde::{Deserialize, Serialize};

use crate::augment::{generate_batch, AugmentationPlan};
use crate::error::{Error, Result};
use crate::eval::pearson;
use crate::imaging::{decompose, ComponentId, ImageRgb, Plane, COMPONENT_ORDER};
use crate::supn::{NeighborhoodLayout, ParamGradients, SupnParams, Whitening};
use crate::util::derive_seed;

/// Weight of augmentation level `l` in the objective: 1/(l+1).
///
/// ```
/// use suss_core::fitting::level_weight;
///
/// assert_eq!(level_weight(0), 1.0);
/// assert_eq!(level_weight(3), 0.25);
/// ```
pub fn level_weight(level: usize) -> f64 {
    1.0 / (level as f64 + 1.0)
}

/// Optimization settings for one component fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub steps: usize,
    pub lr_mu: f64,
    pub lr_logdiag: f64,
    pub lr_offdiag: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay_offdiag: f64,
    pub freeze_mu: bool,
    pub rank_margin: f64,
    /// Weight of the level-ranking hinge; 0 disables it.
    pub rank_weight: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            steps: 400,
            lr_mu: 1e-3,
            lr_logdiag: 1e-2,
            lr_offdiag: 1e-2,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
            weight_decay_offdiag: 1e-3,
            freeze_mu: true,
            rank_margin: 1.0,
            rank_weight: 0.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Invalid("steps must be >= 1".into()));
        }
        if self.lr_mu <= 0.0 || self.lr_logdiag <= 0.0 || self.lr_offdiag <= 0.0 {
            return Err(Error::Invalid("learning rates must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Invalid("betas must lie in [0, 1)".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Invalid("epsilon must be > 0".into()));
        }
        if self.weight_decay_offdiag < 0.0 {
            return Err(Error::Invalid("weight decay must be >= 0".into()));
        }
        if self.rank_weight < 0.0 {
            return Err(Error::Invalid("rank weight must be >= 0".into()));
        }
        if !self.rank_margin.is_finite() {
            return Err(Error::Invalid("rank margin must be finite".into()));
        }
        Ok(())
    }
}

/// Objective values per step plus the per-level mean log-probabilities of
/// the returned (best) parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitTrace {
    pub objective: Vec<f64>,
    /// Objective of the returned (best) parameters.
    pub best_objective: f64,
    pub final_level_means: Vec<(usize, f64)>,
    /// True when the divergence guard halved the learning rates and
    /// restarted from the initialization.
    pub restarted: bool,
}

/// Initial parameters: mu set to the component, couplings zero, and a
/// constant log-diagonal from the pooled residual scale of a probe batch,
/// floored at 1e-3.
pub fn init_params(
    component: &Plane,
    layout: &NeighborhoodLayout,
    probe: &[(Plane, usize)],
) -> Result<SupnParams> {
    if component.width() == 0 || component.height() == 0 || component.is_empty() {
        return Err(Error::Invalid("zero-area component".into()));
    }
    if component.channels() != layout.channels() {
        return Err(Error::Shape(format!(
            "component has {} channels, layout wants {}",
            component.channels(),
            layout.channels()
        )));
    }
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut count = 0usize;
    for (plane, _) in probe {
        if !plane.same_shape(component) {
            return Err(Error::Shape(format!(
                "probe item {} does not match component {}",
                plane.shape_str(),
                component.shape_str()
            )));
        }
        for (a, b) in plane.data().iter().zip(component.data()) {
            let r = a - b;
            sum += r;
            sum_sq += r * r;
            count += 1;
        }
    }
    let sigma = if count == 0 {
        0.0
    } else {
        let mean = sum / count as f64;
        (sum_sq / count as f64 - mean * mean).max(0.0).sqrt()
    };
    let log_diag_value = -sigma.max(1e-3).ln();
    let log_diag = Plane::constant(
        component.width(),
        component.height(),
        component.channels(),
        log_diag_value,
    );
    SupnParams::with_zero_couplings(layout.clone(), component.clone(), log_diag)
}

/// Level-weighted negative log-likelihood of a batch:
/// sum over items of w_l * (-log_prob).
pub fn supn_nll(params: &SupnParams, batch: &[(Plane, usize)]) -> Result<f64> {
    let mut total = 0.0;
    for (plane, level) in batch {
        total += level_weight(*level) * (-params.log_prob(plane)?);
    }
    Ok(total)
}

/// Gradient of [`supn_nll`] with respect to the parameters.
pub fn supn_nll_grads(
    params: &SupnParams,
    batch: &[(Plane, usize)],
) -> Result<(f64, ParamGradients)> {
    let mut acc = ParamGradients::zeros_like(params);
    let mut total = 0.0;
    for (plane, level) in batch {
        let wh = params.whitening(plane)?;
        total += level_weight(*level) * (-wh.log_prob);
        params.add_scaled_param_grads(&wh, -level_weight(*level), &mut acc);
    }
    Ok((total, acc))
}

/// Hinge penalty for non-monotone mean log-probabilities across levels:
/// sum over consecutive pairs of max(0, margin + m[l+1] - m[l]). Zero iff
/// the means decrease by at least `margin` per step.
pub fn ranking_loss_r(mean_logp_by_level: &[f64], margin: f64) -> f64 {
    mean_logp_by_level
        .windows(2)
        .map(|w| (margin + w[1] - w[0]).max(0.0))
        .sum()
}

/// Correlation-based ranking penalty: 1 - Pearson(logps, human_scores).
/// Zero when the log-probabilities are perfectly linear in the human scores
/// with positive slope.
pub fn ranking_loss_rh(logps: &[f64], human_scores: &[f64]) -> Result<f64> {
    if logps.len() != human_scores.len() {
        return Err(Error::Shape(format!(
            "{} log-probs vs {} human scores",
            logps.len(),
            human_scores.len()
        )));
    }
    if logps.len() < 3 {
        return Err(Error::Invalid("need at least 3 pairs".into()));
    }
    let r = pearson(logps, human_scores)?;
    Ok(1.0 - r)
}

/// Gradient of [`ranking_loss_rh`] with respect to the log-probabilities.
pub fn ranking_loss_rh_grad(logps: &[f64], human_scores: &[f64]) -> Result<Vec<f64>> {
    ranking_loss_rh(logps, human_scores)?;
    let n = logps.len() as f64;
    let mx = logps.iter().sum::<f64>() / n;
    let my = human_scores.iter().sum::<f64>() / n;
    let xc: Vec<f64> = logps.iter().map(|v| v - mx).collect();
    let yc: Vec<f64> = human_scores.iter().map(|v| v - my).collect();
    let sxx: f64 = xc.iter().map(|v| v * v).sum();
    let syy: f64 = yc.iter().map(|v| v * v).sum();
    let sxy: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    if sxx <= 0.0 {
        return Err(Error::Numeric(
            "correlation gradient undefined at zero variance".into(),
        ));
    }
    let denom = (sxx * syy).sqrt();
    Ok(xc
        .iter()
        .zip(&yc)
        .map(|(x, y)| -(y - (sxy / sxx) * x) / denom)
        .collect())
}

/// One evaluation of the full fitting objective over a batch.
struct BatchPass {
    objective: f64,
    level_means: Vec<(usize, f64)>,
    whitenings: Vec<Whitening>,
}

fn run_batch_pass(
    params: &SupnParams,
    batch: &[(Plane, usize)],
    config: &FitConfig,
) -> Result<BatchPass> {
    let mut whitenings = Vec::with_capacity(batch.len());
    let mut log_probs = Vec::with_capacity(batch.len());
    let mut nll = 0.0;
    for (plane, level) in batch {
        let wh = params.whitening(plane)?;
        nll += level_weight(*level) * (-wh.log_prob);
        log_probs.push(wh.log_prob);
        whitenings.push(wh);
    }
    let level_means = means_by_level(batch, &log_probs);
    let mut objective = nll;
    if config.rank_weight > 0.0 && level_means.len() >= 2 {
        let means: Vec<f64> = level_means.iter().map(|(_, m)| *m).collect();
        objective += config.rank_weight * ranking_loss_r(&means, config.rank_margin);
    }
    if config.weight_decay_offdiag > 0.0 {
        objective += config.weight_decay_offdiag * coupling_sq_norm(params);
    }
    Ok(BatchPass {
        objective,
        level_means,
        whitenings,
    })
}

fn means_by_level(batch: &[(Plane, usize)], log_probs: &[f64]) -> Vec<(usize, f64)> {
    let mut acc: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for ((_, level), lp) in batch.iter().zip(log_probs) {
        let e = acc.entry(*level).or_insert((0.0, 0));
        e.0 += lp;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(l, (sum, n))| (l, sum / n as f64))
        .collect()
}

fn coupling_sq_norm(params: &SupnParams) -> f64 {
    let mut acc = 0.0;
    for plane in params.off_diag() {
        acc += plane.data().iter().map(|v| v * v).sum::<f64>();
    }
    if let Some(intra) = params.intra() {
        acc += intra.data().iter().map(|v| v * v).sum::<f64>();
    }
    acc
}

/// Per-item coefficients d objective / d log_prob_i, combining the level
/// weight of the NLL with the hinge subgradient of the ranking term.
fn logp_coefficients(batch: &[(Plane, usize)], pass: &BatchPass, config: &FitConfig) -> Vec<f64> {
    let mut d_mean: std::collections::BTreeMap<usize, f64> = Default::default();
    if config.rank_weight > 0.0 && pass.level_means.len() >= 2 {
        for w in pass.level_means.windows(2) {
            let (l_lo, m_lo) = w[0];
            let (l_hi, m_hi) = w[1];
            if config.rank_margin + m_hi - m_lo > 0.0 {
                *d_mean.entry(l_hi).or_insert(0.0) += 1.0;
                *d_mean.entry(l_lo).or_insert(0.0) -= 1.0;
            }
        }
    }
    let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
    for (_, level) in batch {
        *counts.entry(*level).or_insert(0) += 1;
    }
    batch
        .iter()
        .map(|(_, level)| {
            let mut coef = -level_weight(*level);
            if let Some(dm) = d_mean.get(level) {
                coef += config.rank_weight * dm / counts[level] as f64;
            }
            coef
        })
        .collect()
}

/// Bias-corrected Adam state for one flat parameter vector, shared by the
/// component fits, weight refinement, and pixel-space reconstruction.
pub(crate) struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub(crate) fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub(crate) fn step_raw(
        &mut self,
        t: i32,
        values: &mut [f64],
        grads: &[f64],
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) {
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((val, g), (m, v)) in values
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *val -= lr * (*m / bc1) / ((*v / bc2).sqrt() + epsilon);
        }
    }

    fn step(&mut self, t: i32, values: &mut [f64], grads: &[f64], lr: f64, config: &FitConfig) {
        self.step_raw(t, values, grads, lr, config.beta1, config.beta2, config.epsilon);
    }
}

struct Optimizer {
    mu: AdamState,
    log_diag: AdamState,
    off_diag: Vec<AdamState>,
    intra: Option<AdamState>,
    t: i32,
}

impl Optimizer {
    fn new(params: &SupnParams) -> Self {
        Optimizer {
            mu: AdamState::new(params.mu().len()),
            log_diag: AdamState::new(params.log_diag().len()),
            off_diag: params
                .off_diag()
                .iter()
                .map(|p| AdamState::new(p.len()))
                .collect(),
            intra: params.intra().map(|p| AdamState::new(p.len())),
            t: 0,
        }
    }

    fn apply(&mut self, params: &mut SupnParams, grads: &ParamGradients, config: &FitConfig) {
        self.t += 1;
        if !config.freeze_mu {
            self.mu.step(
                self.t,
                params.mu.data_mut(),
                grads.mu.data(),
                config.lr_mu,
                config,
            );
        }
        self.log_diag.step(
            self.t,
            params.log_diag.data_mut(),
            grads.log_diag.data(),
            config.lr_logdiag,
            config,
        );
        for ((plane, g), state) in params
            .off_diag
            .iter_mut()
            .zip(&grads.off_diag)
            .zip(self.off_diag.iter_mut())
        {
            state.step(self.t, plane.data_mut(), g.data(), config.lr_offdiag, config);
        }
        if let (Some(plane), Some(g), Some(state)) = (
            params.intra.as_mut(),
            grads.intra.as_ref(),
            self.intra.as_mut(),
        ) {
            state.step(self.t, plane.data_mut(), g.data(), config.lr_offdiag, config);
        }
    }
}

/// Fit one component against its augmentation batch. Returns the
/// best-objective parameters seen during optimization and the trace.
pub fn fit_supn(
    component: &Plane,
    layout: &NeighborhoodLayout,
    batch: &[(Plane, usize)],
    config: &FitConfig,
) -> Result<(SupnParams, FitTrace)> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::Invalid("empty augmentation batch".into()));
    }
    let init = init_params(component, layout, batch)?;

    let mut lr_scale = 1.0;
    let mut restarted = false;
    'attempt: loop {
        let scaled = FitConfig {
            lr_mu: config.lr_mu * lr_scale,
            lr_logdiag: config.lr_logdiag * lr_scale,
            lr_offdiag: config.lr_offdiag * lr_scale,
            ..config.clone()
        };
        let mut params = init.clone();
        let mut opt = Optimizer::new(&params);
        let mut grads = ParamGradients::zeros_like(&params);
        let mut trace = Vec::with_capacity(config.steps);
        let mut best: Option<(f64, SupnParams)> = None;
        let mut guard = f64::INFINITY;

        for step in 0..config.steps {
            let pass = run_batch_pass(&params, batch, &scaled)?;
            if !pass.objective.is_finite() {
                return Err(Error::Numeric(format!(
                    "objective became non-finite at step {step}"
                )));
            }
            if step == 0 {
                // Divergence guard threshold from the initial objective.
                guard = 10.0 * pass.objective.abs() + 10.0;
            } else if pass.objective > guard && !restarted {
                restarted = true;
                lr_scale = 0.5;
                continue 'attempt;
            }
            trace.push(pass.objective);
            if best.as_ref().map_or(true, |(b, _)| pass.objective < *b) {
                best = Some((pass.objective, params.clone()));
            }

            let coefs = logp_coefficients(batch, &pass, &scaled);
            grads.reset();
            for (wh, coef) in pass.whitenings.iter().zip(&coefs) {
                params.add_scaled_param_grads(wh, *coef, &mut grads);
            }
            if scaled.weight_decay_offdiag > 0.0 {
                for (g, p) in grads.off_diag.iter_mut().zip(params.off_diag()) {
                    for (gv, pv) in g.data_mut().iter_mut().zip(p.data()) {
                        *gv += 2.0 * scaled.weight_decay_offdiag * pv;
                    }
                }
                if let (Some(g), Some(p)) = (grads.intra.as_mut(), params.intra()) {
                    for (gv, pv) in g.data_mut().iter_mut().zip(p.data()) {
                        *gv += 2.0 * scaled.weight_decay_offdiag * pv;
                    }
                }
            }
            opt.apply(&mut params, &grads, &scaled);
        }

        // Score the final iterate too; it never entered the loop above.
        let final_pass = run_batch_pass(&params, batch, &scaled)?;
        if final_pass.objective.is_finite()
            && best.as_ref().map_or(true, |(b, _)| final_pass.objective < *b)
        {
            best = Some((final_pass.objective, params));
        }

        let (best_objective, best_params) = best.expect("steps >= 1 records at least one iterate");
        let best_pass = run_batch_pass(&best_params, batch, &scaled)?;
        return Ok((
            best_params,
            FitTrace {
                objective: trace,
                best_objective,
                final_level_means: best_pass.level_means,
                restarted,
            },
        ));
    }
}

/// The four fitted component models of one image, in fixed component order.
#[derive(Debug, Clone)]
pub struct FittedComponents {
    pub y_full: SupnParams,
    pub y_half: SupnParams,
    pub y_quarter: SupnParams,
    pub cbcr_quarter: SupnParams,
}

impl FittedComponents {
    pub fn components(&self) -> [&SupnParams; 4] {
        [
            &self.y_full,
            &self.y_half,
            &self.y_quarter,
            &self.cbcr_quarter,
        ]
    }

    pub fn component(&self, id: ComponentId) -> &SupnParams {
        match id {
            ComponentId::YFull => &self.y_full,
            ComponentId::YHalf => &self.y_half,
            ComponentId::YQuarter => &self.y_quarter,
            ComponentId::CbcrQuarter => &self.cbcr_quarter,
        }
    }
}

/// Augmentation plans feeding the component fits: geometric transforms for
/// the luma scales, color transforms for the chroma component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionPlans {
    pub geometric: AugmentationPlan,
    pub color: AugmentationPlan,
}

impl Default for DecompositionPlans {
    fn default() -> Self {
        DecompositionPlans {
            geometric: AugmentationPlan::geometric_default(),
            color: AugmentationPlan::color_default(),
        }
    }
}

/// Fit all four components of an image: luma at full/half scale with window
/// 8, quarter-scale luma and chroma with window 5.
pub fn fit_decomposition(
    img: &ImageRgb,
    plans: &DecompositionPlans,
    config: &FitConfig,
    seed: u64,
) -> Result<(FittedComponents, [FitTrace; 4])> {
    let source = decompose(img)?;
    let geo = generate_batch(img, &plans.geometric, derive_seed(seed, &[0]))?;
    let col = generate_batch(img, &plans.color, derive_seed(seed, &[1]))?;

    let mut y_batches: [Vec<(Plane, usize)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for item in &geo {
        let d = decompose(&item.image)?;
        y_batches[0].push((d.y_full, item.spec.level));
        y_batches[1].push((d.y_half, item.spec.level));
        y_batches[2].push((d.y_quarter, item.spec.level));
    }
    let mut cbcr_batch: Vec<(Plane, usize)> = Vec::new();
    for item in &col {
        let d = decompose(&item.image)?;
        cbcr_batch.push((d.cbcr_quarter, item.spec.level));
    }

    let w8 = NeighborhoodLayout::new(8, 1)?;
    let w5 = NeighborhoodLayout::new(5, 1)?;
    let w5c = NeighborhoodLayout::new(5, 2)?;

    let (y_full, t0) = fit_supn(&source.y_full, &w8, &y_batches[0], config)?;
    let (y_half, t1) = fit_supn(&source.y_half, &w8, &y_batches[1], config)?;
    let (y_quarter, t2) = fit_supn(&source.y_quarter, &w5, &y_batches[2], config)?;
    let (cbcr_quarter, t3) = fit_supn(&source.cbcr_quarter, &w5c, &cbcr_batch, config)?;

    debug_assert_eq!(COMPONENT_ORDER[0], ComponentId::YFull);
    Ok((
        FittedComponents {
            y_full,
            y_half,
            y_quarter,
            cbcr_quarter,
        },
        [t0, t1, t2, t3],
    ))
}
