//! Score composition: weighted sums of component log-likelihoods, the
//! learned component weights, per-pixel score maps, symmetrization,
//! pixel-space gradients, and reconstruction by projected ascent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{pearson, spearman};
use crate::fitting::{AdamState, FittedComponents};
use crate::imaging::{
    decompose, decompose_adjoint, ImageRgb, PerceptualDecomposition, Plane, COMPONENT_ORDER,
};
use crate::supn::Whitening;

/// Positive component weights stored as logs, in fixed component order
/// [y_full, y_half, y_quarter, cbcr_quarter].
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentWeights {
    pub log_w: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    log_w: [f64; 4],
    component_order: [String; 4],
}

impl ComponentWeights {
    /// All weights one.
    pub fn uniform() -> Self {
        ComponentWeights { log_w: [0.0; 4] }
    }

    pub fn from_weights(w: [f64; 4]) -> Result<Self> {
        if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("weights must be positive and finite".into()));
        }
        Ok(ComponentWeights {
            log_w: [w[0].ln(), w[1].ln(), w[2].ln(), w[3].ln()],
        })
    }

    pub fn weights(&self) -> [f64; 4] {
        [
            self.log_w[0].exp(),
            self.log_w[1].exp(),
            self.log_w[2].exp(),
            self.log_w[3].exp(),
        ]
    }

    pub fn to_json(&self) -> String {
        let file = WeightsFile {
            log_w: self.log_w,
            component_order: COMPONENT_ORDER.map(|c| c.as_str().to_string()),
        };
        serde_json::to_string_pretty(&file).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightsFile =
            serde_json::from_str(text).map_err(|e| Error::Decode(format!("weights json: {e}")))?;
        let expected = COMPONENT_ORDER.map(|c| c.as_str().to_string());
        if file.component_order != expected {
            return Err(Error::Decode(format!(
                "weights component order {:?} does not match {:?}",
                file.component_order, expected
            )));
        }
        if file.log_w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Decode("non-finite log weights".into()));
        }
        Ok(ComponentWeights { log_w: file.log_w })
    }
}

/// A similarity score with its per-component pieces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    /// Weighted sum of component log-likelihoods; higher means more similar.
    pub total: f64,
    pub per_component: [f64; 4],
    pub per_component_weighted: [f64; 4],
}

fn check_resolution(models: &FittedComponents, img: &ImageRgb) -> Result<()> {
    if models.y_full.width() != img.width() || models.y_full.height() != img.height() {
        return Err(Error::Shape(format!(
            "models fitted at {}x{} cannot score a {}x{} image",
            models.y_full.width(),
            models.y_full.height(),
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

fn component_whitenings(
    models: &FittedComponents,
    img: &ImageRgb,
) -> Result<(PerceptualDecomposition, [Whitening; 4])> {
    check_resolution(models, img)?;
    let d = decompose(img)?;
    let wh = [
        models.y_full.whitening(&d.y_full)?,
        models.y_half.whitening(&d.y_half)?,
        models.y_quarter.whitening(&d.y_quarter)?,
        models.cbcr_quarter.whitening(&d.cbcr_quarter)?,
    ];
    Ok((d, wh))
}

/// The similarity score of `candidate` under models fitted around a
/// reference image: sum over components of w_c * log p(candidate_c).
pub fn suss(
    models: &FittedComponents,
    candidate: &ImageRgb,
    weights: &ComponentWeights,
) -> Result<ScoreBreakdown> {
    let (_, wh) = component_whitenings(models, candidate)?;
    let w = weights.weights();
    let per_component = [wh[0].log_prob, wh[1].log_prob, wh[2].log_prob, wh[3].log_prob];
    let per_component_weighted = [
        w[0] * per_component[0],
        w[1] * per_component[1],
        w[2] * per_component[2],
        w[3] * per_component[3],
    ];
    Ok(ScoreBreakdown {
        total: per_component_weighted.iter().sum(),
        per_component,
        per_component_weighted,
    })
}

/// Average of the two scoring directions:
/// (suss(A models, B) + suss(B models, A)) / 2.
pub fn suss_symmetric(
    models_a: &FittedComponents,
    models_b: &FittedComponents,
    img_a: &ImageRgb,
    img_b: &ImageRgb,
    weights: &ComponentWeights,
) -> Result<f64> {
    let ab = suss(models_a, img_b, weights)?.total;
    let ba = suss(models_b, img_a, weights)?.total;
    Ok(0.5 * (ab + ba))
}

/// Directional asymmetry statistics over (forward, backward) score pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub mean_abs_asym: f64,
    pub pearson: f64,
    pub spearman: f64,
}

/// Mean absolute score asymmetry and the correlations between the two
/// direction-wise score vectors.
pub fn asymmetry_report(pairs: &[(f64, f64)]) -> Result<AsymmetryReport> {
    if pairs.len() < 2 {
        return Err(Error::Invalid("need at least 2 scored pairs".into()));
    }
    let forward: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let backward: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mean_abs_asym = pairs.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / pairs.len() as f64;
    // Identical direction vectors correlate perfectly by convention even
    // though the variance-normalized statistic is undefined.
    let (p, s) = if forward == backward {
        (1.0, 1.0)
    } else {
        (pearson(&forward, &backward)?, spearman(&forward, &backward)?)
    };
    Ok(AsymmetryReport {
        mean_abs_asym,
        pearson: p,
        spearman: s,
    })
}

/// Full-resolution map of per-pixel score evidence:
/// map(p) = sqrt(sum_c w_c * up_c(s_c^2)(p)) where up_c replicates each
/// coarse value over its block divided by the squared scale factor. The
/// map's total squared mass equals sum_c w_c ||s_c||^2.
pub fn suss_map(
    models: &FittedComponents,
    candidate: &ImageRgb,
    weights: &ComponentWeights,
) -> Result<Plane> {
    let (_, wh) = component_whitenings(models, candidate)?;
    let w = weights.weights();
    let (fw, fh) = (candidate.width(), candidate.height());
    let mut acc = Plane::zeros(fw, fh, 1);
    for (i, id) in COMPONENT_ORDER.iter().enumerate() {
        let s = &wh[i].whitened;
        let k = id.scale();
        let norm = (k * k) as f64;
        for cy in 0..s.height() {
            for cx in 0..s.width() {
                let mut sq = 0.0;
                for c in 0..s.channels() {
                    let v = s.get(cy, cx, c);
                    sq += v * v;
                }
                let contribution = w[i] * sq / norm;
                for dy in 0..k {
                    for dx in 0..k {
                        let y = cy * k + dy;
                        let x = cx * k + dx;
                        let cur = acc.get(y, x, 0);
                        acc.set(y, x, 0, cur + contribution);
                    }
                }
            }
        }
    }
    for v in acc.data_mut() {
        *v = v.sqrt();
    }
    Ok(acc)
}

/// Gradient of the score with respect to the candidate's RGB samples,
/// routed through the decomposition adjoint. Ascent direction for
/// similarity.
pub fn grad_suss_wrt_candidate(
    models: &FittedComponents,
    candidate: &ImageRgb,
    weights: &ComponentWeights,
) -> Result<Plane> {
    let (_, wh) = component_whitenings(models, candidate)?;
    let w = weights.weights();
    let mut grads = PerceptualDecomposition {
        y_full: models.y_full.grad_obs_from(&wh[0]),
        y_half: models.y_half.grad_obs_from(&wh[1]),
        y_quarter: models.y_quarter.grad_obs_from(&wh[2]),
        cbcr_quarter: models.cbcr_quarter.grad_obs_from(&wh[3]),
    };
    for (i, plane) in [
        &mut grads.y_full,
        &mut grads.y_half,
        &mut grads.y_quarter,
        &mut grads.cbcr_quarter,
    ]
    .into_iter()
    .enumerate()
    {
        for v in plane.data_mut() {
            *v *= w[i];
        }
    }
    decompose_adjoint(&grads)
}

/// Output of [`reconstruct`]: best-scoring iterate, its score, and the
/// per-step score trajectory.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: ImageRgb,
    pub best_score: f64,
    pub trajectory: Vec<f64>,
}

/// Projected Adam ascent on the score over pixel values, clipped to [0, 1]
/// after every step. Returns the best-scoring iterate.
pub fn reconstruct(
    models: &FittedComponents,
    init: &ImageRgb,
    weights: &ComponentWeights,
    steps: usize,
    lr: f64,
) -> Result<Reconstruction> {
    if steps == 0 {
        return Err(Error::Invalid("steps must be >= 1".into()));
    }
    if lr <= 0.0 {
        return Err(Error::Invalid("learning rate must be > 0".into()));
    }
    check_resolution(models, init)?;
    let mut current = init.clone();
    let mut best = current.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut trajectory = Vec::with_capacity(steps);
    let mut adam = AdamState::new(current.data().len());
    for t in 1..=steps as i32 {
        let breakdown = suss(models, &current, weights)?;
        trajectory.push(breakdown.total);
        if breakdown.total > best_score {
            best_score = breakdown.total;
            best = current.clone();
        }
        let grad = grad_suss_wrt_candidate(models, &current, weights)?;
        // Ascent: Adam minimizes, so feed the negated gradient.
        let neg: Vec<f64> = grad.data().iter().map(|v| -v).collect();
        adam.step_raw(t, current.data_mut(), &neg, lr, 0.9, 0.99, 1e-8);
        for v in current.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    let final_score = suss(models, &current, weights)?.total;
    if final_score > best_score {
        best_score = final_score;
        best = current;
    }
    Ok(Reconstruction {
        image: best,
        best_score,
        trajectory,
    })
}

/// Per-triplet component log-likelihood features: the four log-probs of each
/// candidate under the reference's models, plus the human vote proportion
/// for the first candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletFeatures {
    pub logp1: [f64; 4],
    pub logp0: [f64; 4],
    /// Proportion of votes preferring candidate 1.
    pub h: f64,
}

/// Settings for the two-stage weight fit: coarse grid over per-component
/// log10 weights, then Adam refinement from the best grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightFitConfig {
    pub grid_log10: Vec<f64>,
    pub refine_steps: usize,
    pub refine_lr: f64,
}

impl Default for WeightFitConfig {
    fn default() -> Self {
        WeightFitConfig {
            grid_log10: (-9..=-3).map(|e| e as f64).collect(),
            refine_steps: 2000,
            refine_lr: 1e-2,
        }
    }
}

/// Outcome of [`fit_weights`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightFitReport {
    pub grid_bce: f64,
    pub refined_bce: f64,
}

/// Mean binary cross-entropy of sigmoid(score difference) against the vote
/// proportions, for one weight setting.
pub fn weights_bce(weights: &ComponentWeights, triplets: &[TripletFeatures]) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::Invalid("empty triplet set".into()));
    }
    let w = weights.weights();
    let mut total = 0.0;
    for t in triplets {
        let delta: f64 = (0..4).map(|c| w[c] * (t.logp1[c] - t.logp0[c])).sum();
        total += bce(delta, t.h);
    }
    Ok(total / triplets.len() as f64)
}

/// Numerically stable BCE(sigmoid(delta), h) = softplus(-delta) + (1-h) delta.
fn bce(delta: f64, h: f64) -> f64 {
    let softplus_neg = (-delta).max(0.0) + (1.0 + (-delta.abs()).exp()).ln();
    softplus_neg + (1.0 - h) * delta
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Two-stage 2AFC weight learning: coarse grid search over log weights, then
/// Adam refinement from the best grid point with best-iterate selection.
/// The refined BCE never exceeds the grid BCE.
pub fn fit_weights(
    triplets: &[TripletFeatures],
    config: &WeightFitConfig,
) -> Result<(ComponentWeights, WeightFitReport)> {
    if triplets.is_empty() {
        return Err(Error::Invalid("empty triplet set".into()));
    }
    if config.grid_log10.is_empty() {
        return Err(Error::Invalid("empty weight grid".into()));
    }
    for t in triplets {
        if !(0.0..=1.0).contains(&t.h) {
            return Err(Error::Invalid(format!("vote proportion {} outside [0,1]", t.h)));
        }
    }

    // Stage 1: exhaustive grid over per-component exponents.
    let ln10 = std::f64::consts::LN_10;
    let mut best_grid: Option<(f64, [f64; 4])> = None;
    let g = &config.grid_log10;
    for &e0 in g {
        for &e1 in g {
            for &e2 in g {
                for &e3 in g {
                    let log_w = [e0 * ln10, e1 * ln10, e2 * ln10, e3 * ln10];
                    let loss = weights_bce(&ComponentWeights { log_w }, triplets)?;
                    if best_grid.as_ref().map_or(true, |(b, _)| loss < *b) {
                        best_grid = Some((loss, log_w));
                    }
                }
            }
        }
    }
    let (grid_bce, grid_log_w) = best_grid.expect("nonempty grid");

    // Stage 2: Adam on the log weights, keeping the best iterate.
    let mut log_w = grid_log_w;
    let mut best = (grid_bce, grid_log_w);
    let mut adam = AdamState::new(4);
    for t in 1..=config.refine_steps as i32 {
        let w = [log_w[0].exp(), log_w[1].exp(), log_w[2].exp(), log_w[3].exp()];
        let mut grad = [0.0f64; 4];
        let mut loss = 0.0;
        for trip in triplets {
            let deltas = [
                trip.logp1[0] - trip.logp0[0],
                trip.logp1[1] - trip.logp0[1],
                trip.logp1[2] - trip.logp0[2],
                trip.logp1[3] - trip.logp0[3],
            ];
            let delta: f64 = (0..4).map(|c| w[c] * deltas[c]).sum();
            loss += bce(delta, trip.h);
            let dloss_ddelta = sigmoid(delta) - trip.h;
            for c in 0..4 {
                grad[c] += dloss_ddelta * w[c] * deltas[c];
            }
        }
        let n = triplets.len() as f64;
        loss /= n;
        for gv in &mut grad {
            *gv /= n;
        }
        if loss < best.0 {
            best = (loss, log_w);
        }
        adam.step_raw(t, &mut log_w, &grad, config.refine_lr, 0.9, 0.99, 1e-8);
    }
    let final_loss = weights_bce(&ComponentWeights { log_w }, triplets)?;
    if final_loss < best.0 {
        best = (final_loss, log_w);
    }

    let (refined_bce, best_log_w) = best;
    Ok((
        ComponentWeights { log_w: best_log_w },
        WeightFitReport {
            grid_bce,
            refined_bce,
        },
    ))
}

/// Synthetic separable 2AFC fixture: one informative component whose
/// log-prob difference matches the (hard) human label with a large margin;
/// the others carry label-independent noise. Used by the validation suites
/// and the bundled CLI fixture.
pub fn synthetic_separable_triplets(
    count: usize,
    informative: usize,
    margin: f64,
    seed: u64,
) -> Vec<TripletFeatures> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    assert!(informative < 4);
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let h = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let sign = if h > 0.5 { 1.0 } else { -1.0 };
            let mut logp1 = [0.0f64; 4];
            let mut logp0 = [0.0f64; 4];
            for c in 0..4 {
                let base = rng.gen_range(-500.0..500.0);
                if c == informative {
                    logp1[c] = base + sign * margin / 2.0;
                    logp0[c] = base - sign * margin / 2.0;
                } else {
                    // Uninformative: differences uncorrelated with the label.
                    logp1[c] = base + rng.gen_range(-margin / 10.0..margin / 10.0);
                    logp0[c] = base + rng.gen_range(-margin / 10.0..margin / 10.0);
                }
            }
            TripletFeatures { logp1, logp0, h }
        })
        .collect()
}
