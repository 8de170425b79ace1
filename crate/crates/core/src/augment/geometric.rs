//! Geometric warps: bilinear resampling with symmetric reflect padding,
//! affine maps, homography fitting for four-corner jitter, and the elastic
//! displacement field.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::imaging::{ImageRgb, Plane};

/// Symmetric reflection of an index into [0, n): ... 1 0 | 0 1 ... n-1 | n-1 ...
#[inline]
pub(super) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    if m < n {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Bilinear sample with reflect padding at continuous pixel coordinates.
fn sample_bilinear(img: &ImageRgb, x: f64, y: f64) -> [f64; 3] {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let xa = reflect_index(x0, img.width());
    let xb = reflect_index(x0 + 1, img.width());
    let ya = reflect_index(y0, img.height());
    let yb = reflect_index(y0 + 1, img.height());
    let p00 = img.pixel(ya, xa);
    let p01 = img.pixel(ya, xb);
    let p10 = img.pixel(yb, xa);
    let p11 = img.pixel(yb, xb);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p01[c] * fx;
        let bot = p10[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// Resample through an inverse map: output pixel (x, y) reads the input at
/// `src(x, y)`.
fn warp(img: &ImageRgb, src: impl Fn(f64, f64) -> (f64, f64)) -> ImageRgb {
    let (w, h) = (img.width(), img.height());
    let mut out = ImageRgb::constant(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = src(x as f64, y as f64);
            out.set_pixel(y, x, sample_bilinear(img, sx, sy));
        }
    }
    out
}

pub(super) fn translate(img: &ImageRgb, fraction_x: f64, fraction_y: f64) -> ImageRgb {
    let dx = fraction_x * img.width() as f64;
    let dy = fraction_y * img.height() as f64;
    warp(img, |x, y| (x - dx, y - dy))
}

pub(super) fn rotate(img: &ImageRgb, degrees: f64) -> ImageRgb {
    let theta = degrees.to_radians();
    let (sin, cos) = (-theta).sin_cos();
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    warp(img, |x, y| {
        let (rx, ry) = (x - cx, y - cy);
        (cx + cos * rx - sin * ry, cy + sin * rx + cos * ry)
    })
}

pub(super) fn scale(img: &ImageRgb, factor: f64) -> ImageRgb {
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    warp(img, |x, y| (cx + (x - cx) / factor, cy + (y - cy) / factor))
}

pub(super) fn perspective(img: &ImageRgb, corner_jitter: &[[f64; 2]; 4]) -> ImageRgb {
    let w = img.width() as f64;
    let h = img.height() as f64;
    let src = [[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]];
    let mut dst = src;
    for (d, j) in dst.iter_mut().zip(corner_jitter) {
        d[0] += j[0] * w;
        d[1] += j[1] * h;
    }
    // Homography taking displaced corners back to their source positions;
    // evaluating it at each output pixel yields the read coordinate.
    let hmat = fit_homography(&dst, &src);
    warp(img, |x, y| apply_homography(&hmat, x, y))
}

pub(super) fn elastic(img: &ImageRgb, alpha: f64, sigma: f64, field_seed: u64) -> ImageRgb {
    let (w, h) = (img.width(), img.height());
    let mut rng = StdRng::seed_from_u64(field_seed);
    let mut fields = [Plane::zeros(w, h, 1), Plane::zeros(w, h, 1)];
    for f in &mut fields {
        for v in f.data_mut() {
            *v = rng.gen_range(-1.0..=1.0);
        }
        *f = gaussian_filter(f, sigma);
    }
    warp(img, |x, y| {
        let (xi, yi) = (x as usize, y as usize);
        (
            x + alpha * fields[0].get(yi, xi, 0),
            y + alpha * fields[1].get(yi, xi, 0),
        )
    })
}

/// Separable normalized Gaussian filter with reflect padding, kernel
/// truncated at 4 sigma.
pub(super) fn gaussian_filter(p: &Plane, sigma: f64) -> Plane {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-0.5 * (i as f64 / sigma).powi(2)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }

    let (w, h, ch) = (p.width(), p.height(), p.channels());
    let mut horiz = Plane::zeros(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let xi = reflect_index(x as isize + ki as isize - radius, w);
                    acc += k * p.get(y, xi, c);
                }
                horiz.set(y, x, c, acc);
            }
        }
    }
    let mut out = Plane::zeros(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let yi = reflect_index(y as isize + ki as isize - radius, h);
                    acc += k * horiz.get(yi, x, c);
                }
                out.set(y, x, c, acc);
            }
        }
    }
    out
}

/// Fit the homography mapping `from` points to `to` points (4 correspondences,
/// h22 normalized to 1) by solving the standard 8x8 linear system.
fn fit_homography(from: &[[f64; 2]; 4], to: &[[f64; 2]; 4]) -> [f64; 9] {
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let [u, v] = from[i];
        let [x, y] = to[i];
        a[2 * i] = [u, v, 1.0, 0.0, 0.0, 0.0, -u * x, -v * x, x];
        a[2 * i + 1] = [0.0, 0.0, 0.0, u, v, 1.0, -u * y, -v * y, y];
    }
    let sol = solve8(&mut a);
    [sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], 1.0]
}

#[inline]
fn apply_homography(hm: &[f64; 9], x: f64, y: f64) -> (f64, f64) {
    let den = hm[6] * x + hm[7] * y + hm[8];
    (
        (hm[0] * x + hm[1] * y + hm[2]) / den,
        (hm[3] * x + hm[4] * y + hm[5]) / den,
    )
}

/// Gaussian elimination with partial pivoting on an 8x9 augmented system.
fn solve8(a: &mut [[f64; 9]; 8]) -> [f64; 8] {
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        for row in col + 1..8 {
            let f = a[row][col] / p;
            for k in col..9 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = [0.0f64; 8];
    for row in (0..8).rev() {
        let mut acc = a[row][8];
        for k in row + 1..8 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}
