use super::*;
use crate::synth::synthetic_image;

fn magnitude_of(spec: &AugmentationSpec) -> Vec<f64> {
    match &spec.params {
        SampledParams::Translation {
            fraction_x,
            fraction_y,
        } => vec![fraction_x.abs(), fraction_y.abs()],
        SampledParams::Rotation { degrees } => vec![degrees.abs()],
        SampledParams::Scaling { factor } => vec![*factor],
        SampledParams::Elastic { alpha, .. } => vec![*alpha],
        SampledParams::Perspective { corner_jitter } => corner_jitter
            .iter()
            .flat_map(|c| c.iter().map(|v| v.abs()))
            .collect(),
        SampledParams::Brightness { magnitude }
        | SampledParams::Contrast { magnitude }
        | SampledParams::Saturation { magnitude } => vec![magnitude.abs()],
        SampledParams::Hue { radians } => vec![radians.abs()],
    }
}

#[test]
fn sampled_parameters_stay_inside_level_ranges() {
    for family in ALL_FAMILIES {
        for level in 0..NUM_LEVELS {
            let (lo, hi) = level_range(family, level);
            for seed in 0..10_000u64 {
                let spec = sample_spec(family, level, seed).unwrap();
                for m in magnitude_of(&spec) {
                    assert!(
                        (lo..=hi).contains(&m),
                        "{} level {level} seed {seed}: magnitude {m} outside [{lo}, {hi}]",
                        family.as_str()
                    );
                }
            }
        }
    }
}

#[test]
fn known_level_bands() {
    let spec = sample_spec(Family::Rotation, 3, 7).unwrap();
    let SampledParams::Rotation { degrees } = spec.params else {
        panic!()
    };
    assert!((2.3..=3.2).contains(&degrees.abs()));

    let spec = sample_spec(Family::Translation, 3, 8).unwrap();
    let SampledParams::Translation { fraction_x, .. } = spec.params else {
        panic!()
    };
    assert!((0.05..=0.07).contains(&fraction_x.abs()));

    let spec = sample_spec(Family::Brightness, 0, 9).unwrap();
    let SampledParams::Brightness { magnitude } = spec.params else {
        panic!()
    };
    assert!((0.001..=0.002).contains(&magnitude.abs()));

    let spec = sample_spec(Family::Elastic, 3, 10).unwrap();
    let SampledParams::Elastic { alpha, sigma, .. } = spec.params else {
        panic!()
    };
    assert_eq!((alpha, sigma), (15.0, 3.0));

    let spec = sample_spec(Family::Hue, 3, 11).unwrap();
    let SampledParams::Hue { radians } = spec.params else {
        panic!()
    };
    assert!((0.04..=0.05).contains(&radians.abs()));

    assert!(sample_spec(Family::Rotation, 5, 0).is_err());
}

#[test]
fn constant_image_is_fixed_under_geometric_transforms() {
    let img = ImageRgb::constant(16, 16, 0.4);
    for family in GEOMETRIC_FAMILIES {
        for seed in 0..5 {
            let spec = sample_spec(family, 4, seed).unwrap();
            let out = apply_geometric(&img, &spec).unwrap();
            let max_err = out
                .data()
                .iter()
                .map(|v| (v - 0.4).abs())
                .fold(0.0, f64::max);
            assert!(
                max_err < 1e-6,
                "{} seed {seed}: constant image moved by {max_err}",
                family.as_str()
            );
        }
    }
}

#[test]
fn integer_translation_equals_reflected_index_shift() {
    let img = synthetic_image(16, 16, 42);
    let spec = AugmentationSpec {
        family: Family::Translation,
        level: 2,
        params: SampledParams::Translation {
            fraction_x: 3.0 / 16.0,
            fraction_y: -2.0 / 16.0,
        },
        seed: 0,
    };
    let out = apply_geometric(&img, &spec).unwrap();
    for y in 0..16usize {
        for x in 0..16usize {
            let sx = geometric::reflect_index(x as isize - 3, 16);
            let sy = geometric::reflect_index(y as isize + 2, 16);
            let expect = img.pixel(sy, sx);
            let got = out.pixel(y, x);
            for c in 0..3 {
                assert!(
                    (expect[c] - got[c]).abs() < 1e-12,
                    "pixel ({y},{x}) channel {c}"
                );
            }
        }
    }
}

#[test]
fn zero_hue_rotation_is_identity() {
    let img = synthetic_image(12, 12, 3);
    let spec = AugmentationSpec {
        family: Family::Hue,
        level: 0,
        params: SampledParams::Hue { radians: 0.0 },
        seed: 0,
    };
    let out = apply_color(&img, &spec).unwrap();
    let max_err = img
        .data()
        .iter()
        .zip(out.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(max_err < 1e-6, "round trip moved pixels by {max_err}");
}

#[test]
fn achromatic_image_fixed_under_saturation_and_hue() {
    let mut img = ImageRgb::constant(8, 8, 0.0);
    for y in 0..8 {
        for x in 0..8 {
            let g = 0.1 + 0.8 * (x as f64 / 7.0);
            img.set_pixel(y, x, [g, g, g]);
        }
    }
    for family in [Family::Saturation, Family::Hue] {
        let spec = sample_spec(family, 4, 3).unwrap();
        let out = apply_color(&img, &spec).unwrap();
        let max_err = img
            .data()
            .iter()
            .zip(out.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6, "{}: {max_err}", family.as_str());
    }
}

#[test]
fn family_dispatch_is_checked() {
    let img = ImageRgb::constant(8, 8, 0.5);
    let geo = sample_spec(Family::Rotation, 0, 1).unwrap();
    let col = sample_spec(Family::Hue, 0, 1).unwrap();
    assert!(apply_color(&img, &geo).is_err());
    assert!(apply_geometric(&img, &col).is_err());
}

#[test]
fn default_plans_have_expected_sizes() {
    let img = synthetic_image(16, 16, 1);
    let geo = generate_batch(&img, &AugmentationPlan::geometric_default(), 9).unwrap();
    assert_eq!(geo.len(), 25);
    let mut seen = std::collections::HashSet::new();
    for item in &geo {
        assert!(item.spec.family.is_geometric());
        seen.insert((item.spec.family, item.spec.level));
    }
    assert_eq!(seen.len(), 25, "five families times five levels");

    let col = generate_batch(&img, &AugmentationPlan::color_default(), 9).unwrap();
    assert_eq!(col.len(), 20);
    assert!(col.iter().all(|i| i.spec.family.is_color()));
}

#[test]
fn batches_are_reproducible_from_the_seed() {
    let img = synthetic_image(16, 16, 2);
    let plan = AugmentationPlan::geometric_default();
    let a = generate_batch(&img, &plan, 77).unwrap();
    let b = generate_batch(&img, &plan, 77).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.image.data(), y.image.data());
        assert_eq!(x.spec, y.spec);
    }
    let c = generate_batch(&img, &plan, 78).unwrap();
    assert!(a
        .iter()
        .zip(&c)
        .any(|(x, y)| x.image.data() != y.image.data()));
}

#[test]
fn plan_round_trips_through_json() {
    let plan = AugmentationPlan::color_default();
    let json = serde_json::to_string(&plan).unwrap();
    assert!(json.starts_with('['), "plan serializes as a list: {json}");
    let back: AugmentationPlan = serde_json::from_str(&json).unwrap();
    assert_eq!(back.total_draws(), 20);
}

/// Mean RMS distance to the source, averaged over seeds, must not decrease
/// with level (5% relative slack for ties).
#[test]
fn severity_is_monotone_in_level() {
    let img = synthetic_image(32, 32, 123);
    let seeds = 100u64;
    for family in ALL_FAMILIES {
        let mut rms_by_level = [0.0f64; NUM_LEVELS];
        for (level, rms) in rms_by_level.iter_mut().enumerate() {
            let mut acc = 0.0;
            for seed in 0..seeds {
                let spec = sample_spec(family, level, 1000 + seed).unwrap();
                let out = apply(&img, &spec).unwrap();
                let mse: f64 = img
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / img.data().len() as f64;
                acc += mse.sqrt();
            }
            *rms = acc / seeds as f64;
        }
        for l in 1..NUM_LEVELS {
            assert!(
                rms_by_level[l] >= 0.95 * rms_by_level[l - 1],
                "{}: rms dropped from {} (level {}) to {} (level {l})",
                family.as_str(),
                rms_by_level[l - 1],
                l - 1,
                rms_by_level[l]
            );
        }
    }
}
