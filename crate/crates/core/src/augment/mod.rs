//! Perceptually calibrated augmentations.
//!
//! Nine transform families at five intensity levels each: geometric warps
//! (translation, rotation, scaling, elastic, perspective) parameterized
//! proportionally to image size, and CIELAB color transforms (brightness,
//! contrast, saturation, hue) on Delta-E-scaled magnitudes. Level 3 sits at
//! the just-noticeable-difference band. Parameter draws are uniform within
//! each level's range; signed parameters get a uniform random sign.

mod color;
mod geometric;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageRgb;
use crate::util::derive_seed;

/// Transform families. The first five are geometric, the rest operate on
/// CIELAB color axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Translation,
    Rotation,
    Scaling,
    Elastic,
    Perspective,
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

pub const GEOMETRIC_FAMILIES: [Family; 5] = [
    Family::Translation,
    Family::Rotation,
    Family::Scaling,
    Family::Elastic,
    Family::Perspective,
];

pub const COLOR_FAMILIES: [Family; 4] = [
    Family::Brightness,
    Family::Contrast,
    Family::Saturation,
    Family::Hue,
];

pub const ALL_FAMILIES: [Family; 9] = [
    Family::Translation,
    Family::Rotation,
    Family::Scaling,
    Family::Elastic,
    Family::Perspective,
    Family::Brightness,
    Family::Contrast,
    Family::Saturation,
    Family::Hue,
];

/// Number of intensity levels per family; level 3 is the JND band.
pub const NUM_LEVELS: usize = 5;

impl Family {
    pub fn is_geometric(self) -> bool {
        GEOMETRIC_FAMILIES.contains(&self)
    }

    pub fn is_color(self) -> bool {
        COLOR_FAMILIES.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Translation => "translation",
            Family::Rotation => "rotation",
            Family::Scaling => "scaling",
            Family::Elastic => "elastic",
            Family::Perspective => "perspective",
            Family::Brightness => "brightness",
            Family::Contrast => "contrast",
            Family::Saturation => "saturation",
            Family::Hue => "hue",
        }
    }

    pub fn from_str(s: &str) -> Option<Family> {
        ALL_FAMILIES.iter().copied().find(|f| f.as_str() == s)
    }

    fn id(self) -> u64 {
        ALL_FAMILIES.iter().position(|&f| f == self).unwrap() as u64
    }
}

/// Displacement fraction of image size per level.
pub const TRANSLATION_LEVELS: [(f64, f64); 5] = [
    (0.008, 0.01),
    (0.01, 0.03),
    (0.03, 0.05),
    (0.05, 0.07),
    (0.07, 0.10),
];

/// Rotation angle magnitude in degrees per level.
pub const ROTATION_LEVELS: [(f64, f64); 5] =
    [(0.01, 0.5), (0.5, 1.4), (1.4, 2.3), (2.3, 3.2), (3.2, 4.2)];

/// Magnification factor per level.
pub const SCALING_LEVELS: [(f64, f64); 5] = [
    (1.001, 1.005),
    (1.005, 1.01),
    (1.01, 1.02),
    (1.02, 1.03),
    (1.03, 1.04),
];

/// Elastic (alpha, sigma) pairs per level: field strength in pixels and the
/// smoothing bandwidth of the displacement noise.
pub const ELASTIC_LEVELS: [(f64, f64); 5] =
    [(1.0, 0.5), (5.0, 1.0), (10.0, 2.0), (15.0, 3.0), (20.0, 4.0)];

/// Maximum fraction of width/height each corner may move.
pub const PERSPECTIVE_LEVELS: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];

/// Additive lightness magnitude (times 100 on the L* axis) per level.
pub const BRIGHTNESS_LEVELS: [(f64, f64); 5] = [
    (0.001, 0.002),
    (0.002, 0.005),
    (0.005, 0.008),
    (0.008, 0.015),
    (0.015, 0.03),
];

/// Contrast gain magnitude about the mean L* per level.
pub const CONTRAST_LEVELS: [(f64, f64); 5] = [
    (0.002, 0.004),
    (0.004, 0.008),
    (0.01, 0.015),
    (0.015, 0.02),
    (0.025, 0.035),
];

/// Chroma gain magnitude per level.
pub const SATURATION_LEVELS: [(f64, f64); 5] = [
    (0.0002, 0.0005),
    (0.0005, 0.001),
    (0.001, 0.015),
    (0.015, 0.02),
    (0.025, 0.035),
];

/// Hue rotation magnitude in radians per level.
pub const HUE_LEVELS: [(f64, f64); 5] =
    [(0.01, 0.02), (0.02, 0.03), (0.03, 0.04), (0.04, 0.05), (0.05, 0.06)];

/// Magnitude range for families sampled from a (lo, hi) band. Perspective
/// reports (0, cap) for its per-corner displacement; elastic has fixed
/// per-level parameters and returns the (alpha, alpha) degenerate band.
pub fn level_range(family: Family, level: usize) -> (f64, f64) {
    match family {
        Family::Translation => TRANSLATION_LEVELS[level],
        Family::Rotation => ROTATION_LEVELS[level],
        Family::Scaling => SCALING_LEVELS[level],
        Family::Elastic => (ELASTIC_LEVELS[level].0, ELASTIC_LEVELS[level].0),
        Family::Perspective => (0.0, PERSPECTIVE_LEVELS[level]),
        Family::Brightness => BRIGHTNESS_LEVELS[level],
        Family::Contrast => CONTRAST_LEVELS[level],
        Family::Saturation => SATURATION_LEVELS[level],
        Family::Hue => HUE_LEVELS[level],
    }
}

/// Family-specific sampled parameters. Signed values fold the drawn sign
/// into the stored magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampledParams {
    /// Signed per-axis displacement fractions of width/height.
    Translation { fraction_x: f64, fraction_y: f64 },
    /// Signed angle in degrees about the image center.
    Rotation { degrees: f64 },
    /// Magnification factor about the image center.
    Scaling { factor: f64 },
    /// Field strength, smoothing sigma, and the noise stream for the field.
    Elastic { alpha: f64, sigma: f64, field_seed: u64 },
    /// Signed per-corner displacement fractions, order
    /// [top-left, top-right, bottom-right, bottom-left], each (x, y).
    Perspective { corner_jitter: [[f64; 2]; 4] },
    /// Signed additive lightness magnitude.
    Brightness { magnitude: f64 },
    /// Signed contrast gain magnitude.
    Contrast { magnitude: f64 },
    /// Signed chroma gain magnitude.
    Saturation { magnitude: f64 },
    /// Signed hue rotation in radians.
    Hue { radians: f64 },
}

/// One fully specified transform: family, intensity level, and the concrete
/// parameter draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub family: Family,
    pub level: usize,
    pub params: SampledParams,
    pub seed: u64,
}

/// Draw the parameters for one transform at the given level.
pub fn sample_spec(family: Family, level: usize, seed: u64) -> Result<AugmentationSpec> {
    if level >= NUM_LEVELS {
        return Err(Error::Invalid(format!(
            "level {level} out of range 0..{NUM_LEVELS}"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let params = match family {
        Family::Translation => {
            let fx = draw(&mut rng, TRANSLATION_LEVELS[level]);
            let fy = draw(&mut rng, TRANSLATION_LEVELS[level]);
            let sx = sign(&mut rng);
            let sy = sign(&mut rng);
            SampledParams::Translation {
                fraction_x: sx * fx,
                fraction_y: sy * fy,
            }
        }
        Family::Rotation => {
            let deg = draw(&mut rng, ROTATION_LEVELS[level]);
            let s = sign(&mut rng);
            SampledParams::Rotation { degrees: s * deg }
        }
        Family::Scaling => SampledParams::Scaling {
            factor: draw(&mut rng, SCALING_LEVELS[level]),
        },
        Family::Elastic => {
            let (alpha, sigma) = ELASTIC_LEVELS[level];
            SampledParams::Elastic {
                alpha,
                sigma,
                field_seed: rng.gen(),
            }
        }
        Family::Perspective => {
            let cap = PERSPECTIVE_LEVELS[level];
            let mut corner_jitter = [[0.0; 2]; 4];
            for corner in &mut corner_jitter {
                for axis in corner.iter_mut() {
                    *axis = rng.gen_range(-cap..=cap);
                }
            }
            SampledParams::Perspective { corner_jitter }
        }
        Family::Brightness => {
            let m = draw(&mut rng, BRIGHTNESS_LEVELS[level]);
            let s = sign(&mut rng);
            SampledParams::Brightness { magnitude: s * m }
        }
        Family::Contrast => {
            let m = draw(&mut rng, CONTRAST_LEVELS[level]);
            let s = sign(&mut rng);
            SampledParams::Contrast { magnitude: s * m }
        }
        Family::Saturation => {
            let m = draw(&mut rng, SATURATION_LEVELS[level]);
            let s = sign(&mut rng);
            SampledParams::Saturation { magnitude: s * m }
        }
        Family::Hue => {
            let m = draw(&mut rng, HUE_LEVELS[level]);
            let s = sign(&mut rng);
            SampledParams::Hue { radians: s * m }
        }
    };
    Ok(AugmentationSpec {
        family,
        level,
        params,
        seed,
    })
}

fn draw(rng: &mut StdRng, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo..=hi)
}

fn sign(rng: &mut StdRng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Apply a geometric transform; errors on color families.
pub fn apply_geometric(img: &ImageRgb, spec: &AugmentationSpec) -> Result<ImageRgb> {
    match &spec.params {
        SampledParams::Translation {
            fraction_x,
            fraction_y,
        } => Ok(geometric::translate(img, *fraction_x, *fraction_y)),
        SampledParams::Rotation { degrees } => Ok(geometric::rotate(img, *degrees)),
        SampledParams::Scaling { factor } => Ok(geometric::scale(img, *factor)),
        SampledParams::Elastic {
            alpha,
            sigma,
            field_seed,
        } => Ok(geometric::elastic(img, *alpha, *sigma, *field_seed)),
        SampledParams::Perspective { corner_jitter } => {
            Ok(geometric::perspective(img, corner_jitter))
        }
        _ => Err(Error::Invalid(format!(
            "{} is not a geometric family",
            spec.family.as_str()
        ))),
    }
}

/// Apply a CIELAB color transform; errors on geometric families.
pub fn apply_color(img: &ImageRgb, spec: &AugmentationSpec) -> Result<ImageRgb> {
    match &spec.params {
        SampledParams::Brightness { magnitude } => Ok(color::brightness(img, *magnitude)),
        SampledParams::Contrast { magnitude } => Ok(color::contrast(img, *magnitude)),
        SampledParams::Saturation { magnitude } => Ok(color::saturation(img, *magnitude)),
        SampledParams::Hue { radians } => Ok(color::hue(img, *radians)),
        _ => Err(Error::Invalid(format!(
            "{} is not a color family",
            spec.family.as_str()
        ))),
    }
}

/// Apply any transform, dispatching on family.
pub fn apply(img: &ImageRgb, spec: &AugmentationSpec) -> Result<ImageRgb> {
    if spec.family.is_geometric() {
        apply_geometric(img, spec)
    } else {
        apply_color(img, spec)
    }
}

/// One batch entry in an augmentation plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanEntry {
    pub family: Family,
    pub levels: Vec<usize>,
    pub count: usize,
}

/// A set of transforms to draw per image, expressible as a JSON list of
/// `{family, levels, count}` objects.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AugmentationPlan {
    pub entries: Vec<PlanEntry>,
}

impl AugmentationPlan {
    /// Five geometric families at five levels each: 25 draws.
    pub fn geometric_default() -> Self {
        AugmentationPlan {
            entries: GEOMETRIC_FAMILIES
                .iter()
                .map(|&family| PlanEntry {
                    family,
                    levels: (0..NUM_LEVELS).collect(),
                    count: 1,
                })
                .collect(),
        }
    }

    /// Four color families at five levels each: 20 draws.
    pub fn color_default() -> Self {
        AugmentationPlan {
            entries: COLOR_FAMILIES
                .iter()
                .map(|&family| PlanEntry {
                    family,
                    levels: (0..NUM_LEVELS).collect(),
                    count: 1,
                })
                .collect(),
        }
    }

    pub fn total_draws(&self) -> usize {
        self.entries.iter().map(|e| e.levels.len() * e.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if e.count == 0 {
                return Err(Error::Invalid("plan entry with count 0".into()));
            }
            for &l in &e.levels {
                if l >= NUM_LEVELS {
                    return Err(Error::Invalid(format!("plan level {l} out of range")));
                }
            }
        }
        Ok(())
    }
}

/// One generated augmentation with the spec that produced it.
#[derive(Debug, Clone)]
pub struct AugmentedImage {
    pub image: ImageRgb,
    pub spec: AugmentationSpec,
}

/// Generate the batch for a plan. Deterministic: each draw's parameter seed
/// derives from (seed, family, level, draw index).
pub fn generate_batch(
    img: &ImageRgb,
    plan: &AugmentationPlan,
    seed: u64,
) -> Result<Vec<AugmentedImage>> {
    plan.validate()?;
    let mut out = Vec::with_capacity(plan.total_draws());
    for entry in &plan.entries {
        for &level in &entry.levels {
            for k in 0..entry.count {
                let spec_seed = derive_seed(seed, &[entry.family.id(), level as u64, k as u64]);
                let spec = sample_spec(entry.family, level, spec_seed)?;
                let image = apply(img, &spec)?;
                out.push(AugmentedImage { image, spec });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
