//! Color transforms in CIELAB: additive lightness, contrast about the mean
//! lightness, chroma scaling, and hue rotation of the (a*, b*) plane.

use crate::imaging::{lab_to_rgb, rgb_to_lab, ImageRgb};

pub(super) fn brightness(img: &ImageRgb, magnitude: f64) -> ImageRgb {
    let mut lab = rgb_to_lab(img);
    let (w, h) = (lab.width(), lab.height());
    for y in 0..h {
        for x in 0..w {
            let l = lab.get(y, x, 0);
            lab.set(y, x, 0, l + 100.0 * magnitude);
        }
    }
    lab_to_rgb(&lab)
}

pub(super) fn contrast(img: &ImageRgb, magnitude: f64) -> ImageRgb {
    let mut lab = rgb_to_lab(img);
    let (w, h) = (lab.width(), lab.height());
    let mut mean = 0.0;
    for y in 0..h {
        for x in 0..w {
            mean += lab.get(y, x, 0);
        }
    }
    mean /= (w * h) as f64;
    let gain = 1.0 + magnitude;
    for y in 0..h {
        for x in 0..w {
            let l = lab.get(y, x, 0);
            lab.set(y, x, 0, mean + gain * (l - mean));
        }
    }
    lab_to_rgb(&lab)
}

pub(super) fn saturation(img: &ImageRgb, magnitude: f64) -> ImageRgb {
    let mut lab = rgb_to_lab(img);
    let (w, h) = (lab.width(), lab.height());
    let gain = 1.0 + magnitude;
    for y in 0..h {
        for x in 0..w {
            lab.set(y, x, 1, gain * lab.get(y, x, 1));
            lab.set(y, x, 2, gain * lab.get(y, x, 2));
        }
    }
    lab_to_rgb(&lab)
}

pub(super) fn hue(img: &ImageRgb, radians: f64) -> ImageRgb {
    let mut lab = rgb_to_lab(img);
    let (w, h) = (lab.width(), lab.height());
    let (sin, cos) = radians.sin_cos();
    for y in 0..h {
        for x in 0..w {
            let a = lab.get(y, x, 1);
            let b = lab.get(y, x, 2);
            lab.set(y, x, 1, cos * a - sin * b);
            lab.set(y, x, 2, sin * a + cos * b);
        }
    }
    lab_to_rgb(&lab)
}
