//! Procedural RGB textures with natural-image-like structure (smooth shading,
//! edges, oriented texture, mild noise). Used by the demo fixtures and the
//! verification suites, which cannot ship photographic data.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::imaging::ImageRgb;

/// Deterministic structured texture: a colored gradient base, a few soft
/// blobs, sinusoidal gratings, a hard edge, and low-amplitude noise. Values
/// stay inside [0.05, 0.95] so color transforms rarely clip.
pub fn synthetic_image(width: usize, height: usize, seed: u64) -> ImageRgb {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut img = ImageRgb::constant(width, height, 0.0);

    let base: [[f64; 3]; 2] = [
        [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)],
        [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)],
    ];

    struct Blob {
        cx: f64,
        cy: f64,
        radius: f64,
        color: [f64; 3],
        gain: f64,
    }
    let blobs: Vec<Blob> = (0..5)
        .map(|_| Blob {
            cx: rng.gen_range(0.0..width as f64),
            cy: rng.gen_range(0.0..height as f64),
            radius: rng.gen_range(0.1..0.35) * width.min(height) as f64,
            color: [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ],
            gain: rng.gen_range(0.4..1.0),
        })
        .collect();

    let grating_freq = rng.gen_range(2.0..6.0);
    let grating_angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let grating_amp = rng.gen_range(0.03..0.10);
    let edge_x = rng.gen_range(0.25..0.75) * width as f64;
    let edge_drop = rng.gen_range(0.1..0.3);
    let noise_amp = rng.gen_range(0.005..0.02);

    let (ga_sin, ga_cos) = grating_angle.sin_cos();
    for y in 0..height {
        for x in 0..width {
            let u = x as f64 / width as f64;
            let v = y as f64 / height as f64;
            let mut px = [0.0f64; 3];
            for c in 0..3 {
                px[c] = base[0][c] * (1.0 - u) + base[1][c] * u + 0.1 * (v - 0.5);
            }
            for b in &blobs {
                let d2 = ((x as f64 - b.cx).powi(2) + (y as f64 - b.cy).powi(2))
                    / (b.radius * b.radius);
                let w = b.gain * (-d2).exp();
                for c in 0..3 {
                    px[c] += w * b.color[c];
                }
            }
            let phase = grating_freq
                * 2.0
                * std::f64::consts::PI
                * (u * ga_cos + v * ga_sin);
            let grating = grating_amp * phase.sin();
            let edge = if (x as f64) > edge_x { -edge_drop } else { 0.0 };
            for c in 0..3 {
                px[c] += grating + edge + noise_amp * rng.gen_range(-1.0..1.0);
                px[c] = px[c].clamp(0.05, 0.95);
            }
            img.set_pixel(y, x, px);
        }
    }
    img
}
