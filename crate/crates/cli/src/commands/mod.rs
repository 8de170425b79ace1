//! Subcommand implementations. Every command prints a single JSON payload to
//! stdout and is bit-reproducible from (inputs, config, seed).

mod eval;
mod weights;

pub use eval::cmd_eval;
pub use weights::cmd_fit_weights;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::Serialize;

use suss_core::augment::{generate_batch, AugmentationPlan, Family, PlanEntry};
use suss_core::fitting::{fit_decomposition, FitTrace};
use suss_core::imaging::{save_image, ycbcr_to_rgb, ImageRgb, Plane, COMPONENT_ORDER};
use suss_core::score::{reconstruct, suss, suss_map, suss_symmetric, ComponentWeights};
use suss_core::supn::load_supn;
use suss_core::util::derive_seed;
use suss_core::{Error, Result};

use crate::args::Args;
use crate::cache::{container_names, load_cropped, models_for_reference, save_models_dir};
use crate::config::RunConfig;

pub(crate) fn emit(payload: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(payload)
        .map_err(|e| Error::Invalid(format!("output serialization: {e}")))?;
    println!("{json}");
    Ok(())
}

pub(crate) fn load_weights(config: &RunConfig) -> Result<ComponentWeights> {
    match &config.weights_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ComponentWeights::from_json(&text)
        }
        None => Ok(ComponentWeights::uniform()),
    }
}

/// Write raw little-endian f32 samples beside a rendered artifact.
fn write_f32_sidecar(plane: &Plane, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(plane.len() * 4);
    for &v in plane.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

/// Render a single-channel plane to a gray PNG with per-image min-max
/// normalization.
fn save_normalized_gray(plane: &Plane, path: &Path) -> Result<()> {
    let lo = plane.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = ImageRgb::constant(plane.width(), plane.height(), 0.0);
    for y in 0..plane.height() {
        for x in 0..plane.width() {
            let v = (plane.get(y, x, 0) - lo) / span;
            img.set_pixel(y, x, [v, v, v]);
        }
    }
    save_image(&img, path)
}

/// Render a sampled component plane: luma as gray, chroma recombined with a
/// flat mid luma.
fn render_component_plane(plane: &Plane) -> ImageRgb {
    if plane.channels() == 1 {
        let mut img = ImageRgb::constant(plane.width(), plane.height(), 0.0);
        for y in 0..plane.height() {
            for x in 0..plane.width() {
                let v = plane.get(y, x, 0).clamp(0.0, 1.0);
                img.set_pixel(y, x, [v, v, v]);
            }
        }
        img
    } else {
        // Stored chroma is centered at zero; shift back before conversion.
        let mut cbcr = plane.clone();
        for v in cbcr.data_mut() {
            *v += 0.5;
        }
        let luma = Plane::constant(plane.width(), plane.height(), 1, 0.5);
        ycbcr_to_rgb(&luma, &cbcr)
    }
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string())
}

#[derive(Serialize)]
struct FitOutput {
    containers: Vec<PathBuf>,
    trace: PathBuf,
}

pub fn cmd_fit(args: &Args) -> Result<()> {
    let config = RunConfig::from_args(args)?;
    let image_path = args
        .positionals
        .first()
        .ok_or_else(|| Error::Invalid("fit expects an image path".into()))?;
    let image_path = Path::new(image_path);
    let img = load_cropped(image_path)?;
    let (models, traces) = fit_decomposition(&img, &config.plans, &config.fit, config.seed)?;

    let out_dir = config.output_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let stem = stem_of(image_path);
    let model_dir = out_dir.join(format!("{stem}_models"));
    save_models_dir(&models, &model_dir)?;

    #[derive(Serialize)]
    struct TraceFile<'a> {
        seed: u64,
        components: Vec<(&'static str, &'a FitTrace)>,
    }
    let trace_path = out_dir.join(format!("{stem}_trace.json"));
    let trace_file = TraceFile {
        seed: config.seed,
        components: COMPONENT_ORDER
            .iter()
            .zip(&traces)
            .map(|(id, t)| (id.as_str(), t))
            .collect(),
    };
    std::fs::write(
        &trace_path,
        serde_json::to_string_pretty(&trace_file)
            .map_err(|e| Error::Invalid(format!("trace serialization: {e}")))?,
    )
    .map_err(|e| Error::io(&trace_path, e))?;

    emit(&FitOutput {
        containers: container_names()
            .iter()
            .map(|n| model_dir.join(n))
            .collect(),
        trace: trace_path,
    })
}

#[derive(Serialize)]
struct ScoreOutput {
    total: f64,
    per_component: [f64; 4],
    per_component_weighted: [f64; 4],
    /// Weighted score of the mean image itself: the maximum a candidate at
    /// this resolution can reach under these models.
    self_score_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    symmetric_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    map: Option<PathBuf>,
}

const LN_2PI: f64 = 1.8378770664093453;

fn analytic_self_max(
    models: &suss_core::fitting::FittedComponents,
    weights: &ComponentWeights,
) -> f64 {
    let w = weights.weights();
    models
        .components()
        .iter()
        .zip(w)
        .map(|(params, wc)| {
            let n = params.num_variables() as f64;
            wc * (params.log_diag().data().iter().sum::<f64>() - 0.5 * n * LN_2PI)
        })
        .sum()
}

pub fn cmd_score(args: &Args) -> Result<()> {
    let config = RunConfig::from_args(args)?;
    let ref_arg = Path::new(args.require("ref")?).to_path_buf();
    let cand_path = Path::new(args.require("cand")?).to_path_buf();
    let weights = load_weights(&config)?;

    let models = models_for_reference(&ref_arg, &config)?;
    let candidate = load_cropped(&cand_path)?;
    let breakdown = suss(&models, &candidate, &weights)?;

    let symmetric_total = if args.switch("symmetric") {
        if ref_arg.is_dir() {
            return Err(Error::Invalid(
                "--symmetric needs an image reference to score the reverse direction".into(),
            ));
        }
        let ref_img = load_cropped(&ref_arg)?;
        let cand_models = models_for_reference(&cand_path, &config)?;
        Some(suss_symmetric(
            &models,
            &cand_models,
            &ref_img,
            &candidate,
            &weights,
        )?)
    } else {
        None
    };

    let map = match args.value("map") {
        Some(out) => {
            let out = PathBuf::from(out);
            let map_plane = suss_map(&models, &candidate, &weights)?;
            save_normalized_gray(&map_plane, &out)?;
            write_f32_sidecar(&map_plane, &out.with_extension("f32"))?;
            Some(out)
        }
        None => None,
    };

    emit(&ScoreOutput {
        total: breakdown.total,
        per_component: breakdown.per_component,
        per_component_weighted: breakdown.per_component_weighted,
        self_score_max: analytic_self_max(&models, &weights),
        symmetric_total,
        map,
    })
}

#[derive(Serialize)]
struct MapOutput {
    map: PathBuf,
    sidecar: PathBuf,
    energy: f64,
    total: f64,
}

pub fn cmd_map(args: &Args) -> Result<()> {
    let config = RunConfig::from_args(args)?;
    let ref_arg = Path::new(args.require("ref")?).to_path_buf();
    let cand_path = Path::new(args.require("cand")?).to_path_buf();
    let out = PathBuf::from(args.require("out")?);
    let weights = load_weights(&config)?;

    let models = models_for_reference(&ref_arg, &config)?;
    let candidate = load_cropped(&cand_path)?;
    let map_plane = suss_map(&models, &candidate, &weights)?;
    save_normalized_gray(&map_plane, &out)?;
    let sidecar = out.with_extension("f32");
    write_f32_sidecar(&map_plane, &sidecar)?;

    emit(&MapOutput {
        energy: map_plane.data().iter().map(|v| v * v).sum(),
        total: suss(&models, &candidate, &weights)?.total,
        map: out,
        sidecar,
    })
}

#[derive(Serialize)]
struct SampleFile {
    file: PathBuf,
    log_prob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<&'static str>,
}

#[derive(Serialize)]
struct SampleOutput {
    component: String,
    count: usize,
    samples: Vec<SampleFile>,
}

pub fn cmd_sample(args: &Args) -> Result<()> {
    let config = RunConfig::from_args(args)?;
    let params_path = PathBuf::from(args.require("params")?);
    let (params, component_id) = load_supn(&params_path)?;
    let count = args.usize_value("count")?.unwrap_or(1);
    let out_dir = config.output_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let prefix = args
        .value("out-prefix")
        .map(String::from)
        .unwrap_or_else(|| stem_of(&params_path));

    let mut samples = Vec::new();
    if args.switch("ranked") {
        let ranked = params.sample_ranked(count, config.seed)?;
        for (rank, s) in [
            ("lowest", &ranked.lowest),
            ("median", &ranked.median),
            ("highest", &ranked.highest),
        ] {
            let file = out_dir.join(format!("{prefix}_{rank}.png"));
            save_image(&render_component_plane(&s.sample), &file)?;
            write_f32_sidecar(&s.sample, &file.with_extension("f32"))?;
            samples.push(SampleFile {
                file,
                log_prob: s.log_prob,
                rank: Some(rank),
            });
        }
    } else {
        for i in 0..count {
            let draw = params.sample(derive_seed(config.seed, &[i as u64]));
            let log_prob = params.log_prob(&draw)?;
            let file = out_dir.join(format!("{prefix}_sample_{i:04}.png"));
            save_image(&render_component_plane(&draw), &file)?;
            write_f32_sidecar(&draw, &file.with_extension("f32"))?;
            samples.push(SampleFile {
                file,
                log_prob,
                rank: None,
            });
        }
    }
    emit(&SampleOutput {
        component: component_id,
        count,
        samples,
    })
}

#[derive(Serialize)]
struct AugmentItem {
    file: PathBuf,
    spec: suss_core::augment::AugmentationSpec,
}

pub fn cmd_augment(args: &Args) -> Result<()> {
    let config = RunConfig::from_args(args)?;
    let image_path = args
        .positionals
        .first()
        .ok_or_else(|| Error::Invalid("augment expects an image path".into()))?;
    let image_path = Path::new(image_path);
    let img = suss_core::imaging::load_image(image_path)?;

    let plan = match args.value("plan") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(PathBuf::from(path), e))?;
            serde_json::from_str::<AugmentationPlan>(&text)
                .map_err(|e| Error::Decode(format!("{path}: {e}")))?
        }
        None => {
            let family_name = args.require("family")?;
            let family = Family::from_str(family_name)
                .ok_or_else(|| Error::Invalid(format!("unknown family '{family_name}'")))?;
            let level = args
                .usize_value("level")?
                .ok_or_else(|| Error::Invalid("missing required flag --level".into()))?;
            AugmentationPlan {
                entries: vec![PlanEntry {
                    family,
                    levels: vec![level],
                    count: args.usize_value("count")?.unwrap_or(1),
                }],
            }
        }
    };

    let batch = generate_batch(&img, &plan, config.seed)?;
    let out_dir = config.output_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let stem = stem_of(image_path);

    let mut items = Vec::new();
    let mut index_within: std::collections::BTreeMap<(String, usize), usize> = Default::default();
    for item in &batch {
        let key = (item.spec.family.as_str().to_string(), item.spec.level);
        let k = index_within.entry(key).or_insert(0);
        let suffix = if *k == 0 {
            String::new()
        } else {
            format!("_{k}")
        };
        *k += 1;
        let file = out_dir.join(format!(
            "{stem}_{}_{}{suffix}.png",
            item.spec.family.as_str(),
            item.spec.level
        ));
        save_image(&item.image, &file)?;
        items.push(AugmentItem {
            file,
            spec: item.spec.clone(),
        });
    }
    emit(&items)
}

#[derive(Serialize)]
struct ReconstructOutput {
    out: PathBuf,
    init_score: f64,
    best_score: f64,
    steps: usize,
    trajectory: Vec<f64>,
}

pub fn cmd_reconstruct(args: &Args) -> Result<()> {
    let config = RunConfig::from_args(args)?;
    let target_path = Path::new(args.require("target")?).to_path_buf();
    let out = PathBuf::from(args.require("out")?);
    let steps = args.usize_value("steps")?.unwrap_or(300);
    let lr = args.f64_value("lr")?.unwrap_or(0.02);
    let sigma = args.f64_value("sigma")?.unwrap_or(0.1);
    let weights = load_weights(&config)?;

    let models = models_for_reference(&target_path, &config)?;
    let target = load_cropped(&target_path)?;
    let init = match args.value("init") {
        Some(path) => load_cropped(Path::new(path))?,
        None => {
            // Seeded Gaussian perturbation of the target, clipped to range.
            let mut rng = StdRng::seed_from_u64(derive_seed(config.seed, &[0x7ec0]));
            let mut img = target.clone();
            for v in img.data_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = (*v + sigma * z).clamp(0.0, 1.0);
            }
            img
        }
    };

    let init_score = suss(&models, &init, &weights)?.total;
    let rec = reconstruct(&models, &init, &weights, steps, lr)?;
    save_image(&rec.image, &out)?;

    emit(&ReconstructOutput {
        out,
        init_score,
        best_score: rec.best_score,
        steps,
        trajectory: rec.trajectory,
    })
}
