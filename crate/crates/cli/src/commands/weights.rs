//! The fit-weights command: learn component weights from 2AFC data, either
//! precomputed log-likelihood features or a triplet manifest of images.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use suss_core::eval::{load_triplet_manifest, ManifestMode};
use suss_core::fitting::FittedComponents;
use suss_core::imaging::decompose;
use suss_core::score::{fit_weights, TripletFeatures, WeightFitConfig};
use suss_core::util::parallel_map;
use suss_core::{Error, Result};

use crate::args::Args;
use crate::cache::{load_cropped, models_for_reference};
use crate::config::RunConfig;

use super::emit;

pub(crate) const FEATURE_HEADER: &str = "lp1_y_full,lp1_y_half,lp1_y_quarter,lp1_cbcr_quarter,\
lp0_y_full,lp0_y_half,lp0_y_quarter,lp0_cbcr_quarter,h";

/// Parse a feature CSV: eight component log-likelihoods plus the vote
/// proportion per row.
fn load_features(path: &Path) -> Result<Vec<TripletFeatures>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Decode(format!("{}: empty features file", path.display())))?;
    let normalized: String = header.split(',').map(str::trim).collect::<Vec<_>>().join(",");
    if normalized != FEATURE_HEADER {
        return Err(Error::Decode(format!(
            "{}: unexpected feature header '{header}'",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Invalid(format!("{} row {}: {e}", path.display(), i + 1)))?;
        if fields.len() != 9 {
            return Err(Error::Decode(format!(
                "{} row {}: {} fields, expected 9",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        out.push(TripletFeatures {
            logp1: [fields[0], fields[1], fields[2], fields[3]],
            logp0: [fields[4], fields[5], fields[6], fields[7]],
            h: fields[8],
        });
    }
    Ok(out)
}

/// Component log-likelihoods of one candidate under a reference's models.
fn component_logps(models: &FittedComponents, path: &Path) -> Result<[f64; 4]> {
    let img = load_cropped(path)?;
    let d = decompose(&img)?;
    Ok([
        models.y_full.log_prob(&d.y_full)?,
        models.y_half.log_prob(&d.y_half)?,
        models.y_quarter.log_prob(&d.y_quarter)?,
        models.cbcr_quarter.log_prob(&d.cbcr_quarter)?,
    ])
}

/// Compute features for a triplet manifest: fit each unique reference once
/// (sequentially, through the cache), then score candidates in parallel.
fn features_from_manifest(path: &Path, config: &RunConfig, lenient: bool) -> Result<Vec<TripletFeatures>> {
    let mode = if lenient {
        ManifestMode::Lenient
    } else {
        ManifestMode::Strict
    };
    let manifest = load_triplet_manifest(path, mode)?;
    if manifest.records.is_empty() {
        return Err(Error::Invalid("manifest holds no usable triplets".into()));
    }
    let mut models: BTreeMap<PathBuf, FittedComponents> = BTreeMap::new();
    for rec in &manifest.records {
        if !models.contains_key(&rec.ref_path) {
            models.insert(rec.ref_path.clone(), models_for_reference(&rec.ref_path, config)?);
        }
    }
    let results = parallel_map(&manifest.records, config.workers, |rec| {
        let m = &models[&rec.ref_path];
        Ok::<_, Error>(TripletFeatures {
            logp1: component_logps(m, &rec.p1_path)?,
            logp0: component_logps(m, &rec.p0_path)?,
            h: rec.h,
        })
    });
    results.into_iter().collect()
}

#[derive(Serialize)]
struct WeightsOutput {
    triplets: usize,
    grid_bce: f64,
    refined_bce: f64,
    log_w: [f64; 4],
    weights: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

pub fn cmd_fit_weights(args: &Args) -> Result<()> {
    let config = RunConfig::from_args(args)?;
    let triplets = match (args.value("features"), args.value("triplets")) {
        (Some(f), None) => load_features(Path::new(f))?,
        (None, Some(t)) => features_from_manifest(Path::new(t), &config, args.switch("lenient"))?,
        _ => {
            return Err(Error::Invalid(
                "fit-weights expects exactly one of --features or --triplets".into(),
            ))
        }
    };

    let mut wf_config = WeightFitConfig::default();
    if let Some(steps) = args.usize_value("refine-steps")? {
        wf_config.refine_steps = steps;
    }
    if let Some(lr) = args.f64_value("refine-lr")? {
        wf_config.refine_lr = lr;
    }
    let (weights, report) = fit_weights(&triplets, &wf_config)?;

    let out = match args.value("out") {
        Some(path) => {
            let path = PathBuf::from(path);
            std::fs::write(&path, weights.to_json()).map_err(|e| Error::io(&path, e))?;
            Some(path)
        }
        None => None,
    };
    emit(&WeightsOutput {
        triplets: triplets.len(),
        grid_bce: report.grid_bce,
        refined_bce: report.refined_bce,
        log_w: weights.log_w,
        weights: weights.weights(),
        out,
    })
}
