//! The eval command: score a manifest with a chosen metric and emit the
//! dataset statistics as a JSON report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use suss_core::eval::{
    auc_separation, kendall, kl_calibration, load_mos_manifest, load_triplet_manifest,
    pearson, psnr, spearman, ssim, twoafc_score, ManifestMode, TwoAfcChoice,
};
use suss_core::fitting::FittedComponents;
use suss_core::score::suss;
use suss_core::util::parallel_map;
use suss_core::{Error, Result};

use crate::args::Args;
use crate::cache::{load_cropped, models_for_reference};
use crate::config::RunConfig;

use super::{emit, load_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Metric {
    Suss,
    Psnr,
    Ssim,
}

impl Metric {
    fn parse(s: &str) -> Result<Metric> {
        match s {
            "suss" => Ok(Metric::Suss),
            "psnr" => Ok(Metric::Psnr),
            "ssim" => Ok(Metric::Ssim),
            other => Err(Error::Invalid(format!("unknown metric '{other}'"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Metric::Suss => "suss",
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
        }
    }
}

/// Higher oriented scores always mean "more similar"; the distance
/// orientation negates raw scores before any statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Orientation {
    Similarity,
    Distance,
}

impl Orientation {
    fn parse(s: &str) -> Result<Orientation> {
        match s {
            "similarity" => Ok(Orientation::Similarity),
            "distance" => Ok(Orientation::Distance),
            other => Err(Error::Invalid(format!("unknown orientation '{other}'"))),
        }
    }

    fn apply(self, score: f64) -> f64 {
        match self {
            Orientation::Similarity => score,
            Orientation::Distance => -score,
        }
    }
}

#[derive(Serialize)]
struct EvalReport {
    mode: String,
    metric: &'static str,
    orientation: &'static str,
    records: usize,
    skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    vote_weighted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hard_majority: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plcc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    srcc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    krcc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kl_by_category: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    auc_top_vs_bottom_quintile: Option<f64>,
    degenerate: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    degenerate_reasons: Vec<String>,
}

/// Score one (reference, candidate) pair with a baseline metric.
fn baseline_pair(metric: Metric, ref_path: &Path, cand_path: &Path) -> Result<f64> {
    let a = load_cropped(ref_path)?;
    let b = load_cropped(cand_path)?;
    match metric {
        Metric::Psnr => psnr(&a, &b),
        Metric::Ssim => ssim(&a, &b),
        Metric::Suss => unreachable!("suss pairs go through fitted models"),
    }
}

/// Fit models for every unique reference, sequentially through the cache.
fn prefit_references<'a>(
    paths: impl Iterator<Item = &'a PathBuf>,
    config: &RunConfig,
) -> Result<BTreeMap<PathBuf, FittedComponents>> {
    let mut models = BTreeMap::new();
    for path in paths {
        if !models.contains_key(path) {
            models.insert(path.clone(), models_for_reference(path, config)?);
        }
    }
    Ok(models)
}

pub fn cmd_eval(args: &Args) -> Result<()> {
    let config = RunConfig::from_args(args)?;
    let manifest_path = PathBuf::from(args.require("manifest")?);
    let mode = args.require("mode")?.to_string();
    let metric = Metric::parse(args.value("metric").unwrap_or("suss"))?;
    let orientation = match args.value("orientation") {
        Some(o) => Orientation::parse(o)?,
        // Every built-in metric is similarity-oriented.
        None => Orientation::Similarity,
    };
    let manifest_mode = if args.switch("lenient") {
        ManifestMode::Lenient
    } else {
        ManifestMode::Strict
    };
    let weights = load_weights(&config)?;

    match mode.as_str() {
        "2afc" => {
            let manifest = load_triplet_manifest(&manifest_path, manifest_mode)?;
            if manifest.records.is_empty() {
                return Err(Error::Invalid("manifest holds no usable triplets".into()));
            }
            let pair_scores: Vec<(f64, f64)> = match metric {
                Metric::Suss => {
                    let models =
                        prefit_references(manifest.records.iter().map(|r| &r.ref_path), &config)?;
                    parallel_map(&manifest.records, config.workers, |rec| {
                        let m = &models[&rec.ref_path];
                        let s0 = suss(m, &load_cropped(&rec.p0_path)?, &weights)?.total;
                        let s1 = suss(m, &load_cropped(&rec.p1_path)?, &weights)?.total;
                        Ok::<_, Error>((s0, s1))
                    })
                    .into_iter()
                    .collect::<Result<_>>()?
                }
                _ => parallel_map(&manifest.records, config.workers, |rec| {
                    let s0 = baseline_pair(metric, &rec.ref_path, &rec.p0_path)?;
                    let s1 = baseline_pair(metric, &rec.ref_path, &rec.p1_path)?;
                    Ok::<_, Error>((s0, s1))
                })
                .into_iter()
                .collect::<Result<_>>()?,
            };
            let choices: Vec<TwoAfcChoice> = pair_scores
                .iter()
                .map(|&(s0, s1)| {
                    let (o0, o1) = (orientation.apply(s0), orientation.apply(s1));
                    if o1 > o0 {
                        TwoAfcChoice::P1
                    } else if o0 > o1 {
                        TwoAfcChoice::P0
                    } else {
                        TwoAfcChoice::Tie
                    }
                })
                .collect();
            let h: Vec<f64> = manifest.records.iter().map(|r| r.h).collect();
            let vote_weighted = twoafc_score(&choices, &h)?;
            // Hard-majority variant: binarized human labels, ties at 0.5.
            let hard: Vec<f64> = h
                .iter()
                .map(|&v| {
                    if v > 0.5 {
                        1.0
                    } else if v < 0.5 {
                        0.0
                    } else {
                        0.5
                    }
                })
                .collect();
            let hard_majority = twoafc_score(&choices, &hard)?;

            emit(&EvalReport {
                mode,
                metric: metric.name(),
                orientation: if orientation == Orientation::Similarity {
                    "similarity"
                } else {
                    "distance"
                },
                records: manifest.records.len(),
                skipped: manifest.skipped,
                vote_weighted: Some(vote_weighted),
                hard_majority: Some(hard_majority),
                plcc: None,
                srcc: None,
                krcc: None,
                kl_by_category: None,
                auc_top_vs_bottom_quintile: None,
                degenerate: false,
                degenerate_reasons: Vec::new(),
            })
        }
        "mos" => {
            let manifest = load_mos_manifest(&manifest_path, manifest_mode)?;
            if manifest.records.is_empty() {
                return Err(Error::Invalid("manifest holds no usable records".into()));
            }
            let raw: Vec<f64> = match metric {
                Metric::Suss => {
                    let models =
                        prefit_references(manifest.records.iter().map(|r| &r.ref_path), &config)?;
                    parallel_map(&manifest.records, config.workers, |rec| {
                        let m = &models[&rec.ref_path];
                        Ok::<_, Error>(suss(m, &load_cropped(&rec.dist_path)?, &weights)?.total)
                    })
                    .into_iter()
                    .collect::<Result<_>>()?
                }
                _ => parallel_map(&manifest.records, config.workers, |rec| {
                    baseline_pair(metric, &rec.ref_path, &rec.dist_path)
                })
                .into_iter()
                .collect::<Result<_>>()?,
            };
            let scores: Vec<f64> = raw.iter().map(|&s| orientation.apply(s)).collect();
            let mos: Vec<f64> = manifest.records.iter().map(|r| r.mos).collect();

            let mut reasons = Vec::new();
            let finite = scores.iter().all(|s| s.is_finite());
            if !finite {
                reasons.push("non-finite scores present".to_string());
            }

            let mut plcc = None;
            let mut srcc = None;
            let mut krcc = None;
            if finite {
                match (pearson(&scores, &mos), spearman(&scores, &mos), kendall(&scores, &mos)) {
                    (Ok(p), Ok(s), Ok(k)) => {
                        plcc = Some(p);
                        srcc = Some(s);
                        krcc = Some(k);
                    }
                    _ => reasons.push("correlations undefined (zero variance)".to_string()),
                }
            }

            let mut kl_by_category = None;
            if finite {
                let mut by_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for (rec, &s) in manifest.records.iter().zip(&scores) {
                    by_cat.entry(rec.category.clone()).or_default().push(s);
                }
                if by_cat.len() >= 2 {
                    match kl_calibration(&by_cat) {
                        Ok(kl) => kl_by_category = Some(kl),
                        Err(e) => reasons.push(format!("kl calibration: {e}")),
                    }
                } else {
                    reasons.push("kl calibration needs at least 2 categories".to_string());
                }
            }

            let mut auc = None;
            if finite {
                // Top vs bottom MOS quintiles.
                let mut order: Vec<usize> = (0..manifest.records.len()).collect();
                order.sort_by(|&a, &b| mos[a].total_cmp(&mos[b]));
                let q = (manifest.records.len() / 5).max(1);
                let bottom: Vec<f64> = order[..q].iter().map(|&i| scores[i]).collect();
                let top: Vec<f64> = order[order.len() - q..].iter().map(|&i| scores[i]).collect();
                match auc_separation(&top, &bottom) {
                    Ok(a) => auc = Some(a),
                    Err(e) => reasons.push(format!("auc: {e}")),
                }
            }

            emit(&EvalReport {
                mode,
                metric: metric.name(),
                orientation: if orientation == Orientation::Similarity {
                    "similarity"
                } else {
                    "distance"
                },
                records: manifest.records.len(),
                skipped: manifest.skipped,
                vote_weighted: None,
                hard_majority: None,
                plcc,
                srcc,
                krcc,
                kl_by_category,
                auc_top_vs_bottom_quintile: auc,
                degenerate: !reasons.is_empty(),
                degenerate_reasons: reasons,
            })
        }
        other => Err(Error::Invalid(format!(
            "unknown mode '{other}', expected 2afc or mos"
        ))),
    }
}
