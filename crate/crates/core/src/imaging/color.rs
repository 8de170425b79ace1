//! Color-space conversions: full-range BT.601 YCbCr and CIELAB (D65).

use super::{ImageRgb, Plane};

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

/// Linear part of the RGB -> YCbCr map, rows [Y, Cb, Cr], columns [R, G, B].
/// The 0.5 chroma offset is applied separately.
pub(super) fn ycbcr_matrix() -> [[f64; 3]; 3] {
    let cb_den = 2.0 * (1.0 - KB);
    let cr_den = 2.0 * (1.0 - KR);
    [
        [KR, KG, KB],
        [-KR / cb_den, -KG / cb_den, (1.0 - KB) / cb_den],
        [(1.0 - KR) / cr_den, -KG / cr_den, -KB / cr_den],
    ]
}

/// Full-range BT.601 conversion. Returns the luma plane and an interleaved
/// (Cb, Cr) plane with both chroma channels centered at 0.5.
pub fn rgb_to_ycbcr(img: &ImageRgb) -> (Plane, Plane) {
    let m = ycbcr_matrix();
    let (w, h) = (img.width(), img.height());
    let mut y = Plane::zeros(w, h, 1);
    let mut cbcr = Plane::zeros(w, h, 2);
    for py in 0..h {
        for px in 0..w {
            let [r, g, b] = img.pixel(py, px);
            y.set(py, px, 0, m[0][0] * r + m[0][1] * g + m[0][2] * b);
            cbcr.set(py, px, 0, 0.5 + m[1][0] * r + m[1][1] * g + m[1][2] * b);
            cbcr.set(py, px, 1, 0.5 + m[2][0] * r + m[2][1] * g + m[2][2] * b);
        }
    }
    (y, cbcr)
}

/// Exact inverse of [`rgb_to_ycbcr`] before clipping; output is clipped to
/// `[0, 1]`.
pub fn ycbcr_to_rgb(y: &Plane, cbcr: &Plane) -> ImageRgb {
    assert!(y.same_shape(&Plane::zeros(y.width(), y.height(), 1)));
    assert_eq!(cbcr.channels(), 2);
    let (w, h) = (y.width(), y.height());
    let mut img = ImageRgb::constant(w, h, 0.0);
    for py in 0..h {
        for px in 0..w {
            let yy = y.get(py, px, 0);
            let cb = cbcr.get(py, px, 0) - 0.5;
            let cr = cbcr.get(py, px, 1) - 0.5;
            let r = yy + 2.0 * (1.0 - KR) * cr;
            let b = yy + 2.0 * (1.0 - KB) * cb;
            let g = (yy - KR * r - KB * b) / KG;
            img.set_pixel(py, px, [r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0)]);
        }
    }
    img
}

// sRGB (D65) to CIEXYZ matrix; the white point is taken as the row sums so
// that pure white maps exactly to L* = 100, a* = b* = 0.
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn white_point() -> [f64; 3] {
    [
        SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
        SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
        SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
    ]
}

fn xyz_to_srgb_matrix() -> [[f64; 3]; 3] {
    invert3(SRGB_TO_XYZ)
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    out
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        c * 12.92
    } else {
        1.055 * c.max(0.0).powf(1.0 / 2.4) - 0.055
    }
}

const LAB_EPS: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPS {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let f3 = f * f * f;
    if f3 > LAB_EPS {
        f3
    } else {
        (116.0 * f - 16.0) / LAB_KAPPA
    }
}

/// Convert a single sRGB pixel to (L*, a*, b*).
pub fn srgb_pixel_to_lab(p: [f64; 3]) -> [f64; 3] {
    let lin = [srgb_to_linear(p[0]), srgb_to_linear(p[1]), srgb_to_linear(p[2])];
    let wp = white_point();
    let mut xyz = [0.0; 3];
    for (i, row) in SRGB_TO_XYZ.iter().enumerate() {
        xyz[i] = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / wp[0]);
    let fy = lab_f(xyz[1] / wp[1]);
    let fz = lab_f(xyz[2] / wp[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Convert (L*, a*, b*) back to sRGB, clipping out-of-gamut values to `[0, 1]`.
pub fn lab_pixel_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let wp = white_point();
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let xyz = [lab_f_inv(fx) * wp[0], lab_f_inv(fy) * wp[1], lab_f_inv(fz) * wp[2]];
    let inv = xyz_to_srgb_matrix();
    let mut out = [0.0; 3];
    for (i, row) in inv.iter().enumerate() {
        let lin = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
        out[i] = linear_to_srgb(lin).clamp(0.0, 1.0);
    }
    out
}

/// Convert an image to a 3-channel CIELAB plane (L*, a*, b* interleaved).
pub fn rgb_to_lab(img: &ImageRgb) -> Plane {
    let (w, h) = (img.width(), img.height());
    let mut out = Plane::zeros(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let lab = srgb_pixel_to_lab(img.pixel(y, x));
            out.set(y, x, 0, lab[0]);
            out.set(y, x, 1, lab[1]);
            out.set(y, x, 2, lab[2]);
        }
    }
    out
}

/// Convert a 3-channel CIELAB plane back to sRGB with gamut clipping.
pub fn lab_to_rgb(lab: &Plane) -> ImageRgb {
    assert_eq!(lab.channels(), 3);
    let (w, h) = (lab.width(), lab.height());
    let mut img = ImageRgb::constant(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let p = lab_pixel_to_srgb([lab.get(y, x, 0), lab.get(y, x, 1), lab.get(y, x, 2)]);
            img.set_pixel(y, x, p);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn gray_is_achromatic_in_ycbcr() {
        let img = ImageRgb::constant(4, 4, 0.5);
        let (y, cbcr) = rgb_to_ycbcr(&img);
        assert!(y.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(cbcr.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn pure_red_ycbcr_values() {
        let mut img = ImageRgb::constant(1, 1, 0.0);
        img.set_pixel(0, 0, [1.0, 0.0, 0.0]);
        let (y, cbcr) = rgb_to_ycbcr(&img);
        assert!((y.get(0, 0, 0) - 0.299).abs() < 1e-9);
        assert!((cbcr.get(0, 0, 0) - 0.331264).abs() < 1e-6);
        assert!((cbcr.get(0, 0, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ycbcr_round_trip() {
        let mut rng = StdRng::seed_from_u64(7);
        let data: Vec<f64> = (0..8 * 8 * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let img = ImageRgb::new(8, 8, data).unwrap();
        let (y, cbcr) = rgb_to_ycbcr(&img);
        let back = ycbcr_to_rgb(&y, &cbcr);
        let max_err = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6, "max round-trip error {max_err}");
    }

    #[test]
    fn lab_white_and_black() {
        let white = srgb_pixel_to_lab([1.0, 1.0, 1.0]);
        assert!((white[0] - 100.0).abs() < 1e-9);
        assert!(white[1].abs() < 1e-9);
        assert!(white[2].abs() < 1e-9);
        let black = srgb_pixel_to_lab([0.0, 0.0, 0.0]);
        assert!(black[0].abs() < 1e-9);
    }

    #[test]
    fn lab_round_trip() {
        let mut rng = StdRng::seed_from_u64(13);
        let data: Vec<f64> = (0..6 * 6 * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let img = ImageRgb::new(6, 6, data).unwrap();
        let lab = rgb_to_lab(&img);
        let back = lab_to_rgb(&lab);
        let max_err = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-4, "max round-trip error {max_err}");
    }

    #[test]
    fn gray_has_zero_chroma_in_lab() {
        for g in [0.1, 0.25, 0.5, 0.9] {
            let lab = srgb_pixel_to_lab([g, g, g]);
            assert!(lab[1].abs() < 1e-9, "a* for gray {g}");
            assert!(lab[2].abs() < 1e-9, "b* for gray {g}");
        }
    }
}
