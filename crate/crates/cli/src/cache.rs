//! Content-addressed cache of fitted component containers.
//!
//! A reference image given as a raw file is fitted on demand; the four
//! containers land in a directory keyed by the image content hash and the
//! fit signature (seed + fit config + plans). Scores always go through the
//! serialized containers so cached and freshly fitted runs produce
//! bit-identical results.

use std::path::{Path, PathBuf};

use suss_core::fitting::{fit_decomposition, FittedComponents};
use suss_core::imaging::{load_image, ImageRgb, COMPONENT_ORDER};
use suss_core::supn::{load_supn, save_supn};
use suss_core::util::fnv1a_hex;
use suss_core::{Error, Result};

use crate::config::RunConfig;
use crate::warn;

/// Cache root: `SUSS_CACHE_DIR` when set, otherwise `.suss-cache` beside the
/// image.
fn cache_root(image_path: &Path) -> PathBuf {
    match std::env::var_os("SUSS_CACHE_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => image_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(".suss-cache"),
    }
}

/// Load an image and center-crop it to a decomposable size, warning when
/// pixels are dropped.
pub fn load_cropped(path: &Path) -> Result<ImageRgb> {
    let img = load_image(path)?;
    if img.decomposable() {
        return Ok(img);
    }
    let cropped = img.center_crop_to_multiple_of_4()?;
    warn(
        "crop",
        &format!(
            "{}: {}x{} center-cropped to {}x{}",
            path.display(),
            img.width(),
            img.height(),
            cropped.width(),
            cropped.height()
        ),
    );
    Ok(cropped)
}

/// Container file names inside a model directory, in component order.
pub fn container_names() -> [String; 4] {
    COMPONENT_ORDER.map(|c| format!("{}.supn", c.as_str()))
}

/// Read four containers from a directory written by `fit` or the cache.
pub fn load_models_dir(dir: &Path) -> Result<FittedComponents> {
    let mut loaded = Vec::with_capacity(4);
    for (id, name) in COMPONENT_ORDER.iter().zip(container_names()) {
        let path = dir.join(&name);
        let (params, component_id) = load_supn(&path)?;
        if component_id != id.as_str() {
            return Err(Error::Decode(format!(
                "{}: container claims component '{component_id}', expected '{}'",
                path.display(),
                id.as_str()
            )));
        }
        loaded.push(params);
    }
    let mut it = loaded.into_iter();
    Ok(FittedComponents {
        y_full: it.next().unwrap(),
        y_half: it.next().unwrap(),
        y_quarter: it.next().unwrap(),
        cbcr_quarter: it.next().unwrap(),
    })
}

/// Write four containers into a directory.
pub fn save_models_dir(models: &FittedComponents, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (id, name) in COMPONENT_ORDER.iter().zip(container_names()) {
        save_supn(models.component(*id), id.as_str(), dir.join(name))?;
    }
    Ok(())
}

/// Models for a reference argument that may be a container directory or an
/// image file. Image files are fitted through the cache; the returned
/// parameters always round-trip through the f32 containers.
pub fn models_for_reference(path: &Path, config: &RunConfig) -> Result<FittedComponents> {
    if path.is_dir() {
        return load_models_dir(path);
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let key = format!("{}_{}", fnv1a_hex(&bytes), config.fit_signature());
    let dir = cache_root(path).join(key);
    if !dir.join("y_full.supn").exists() {
        let img = load_cropped(path)?;
        let (models, _) = fit_decomposition(&img, &config.plans, &config.fit, config.seed)?;
        save_models_dir(&models, &dir)?;
    }
    load_models_dir(&dir)
}
