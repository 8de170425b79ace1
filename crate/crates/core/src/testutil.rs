//! Shared helpers for the crate's test suites.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::imaging::Plane;
use crate::supn::{NeighborhoodLayout, ParamGradients, SupnParams};

pub(crate) fn random_plane(
    w: usize,
    h: usize,
    c: usize,
    rng: &mut StdRng,
    lo: f64,
    hi: f64,
) -> Plane {
    let data = (0..w * h * c).map(|_| rng.gen_range(lo..hi)).collect();
    Plane::new(w, h, c, data).unwrap()
}

/// Random model with diagonal near one and mild couplings.
pub(crate) fn random_params(
    w: usize,
    h: usize,
    window: u32,
    channels: usize,
    seed: u64,
) -> SupnParams {
    random_params_scaled(w, h, window, channels, seed, -0.3, 0.5)
}

pub(crate) fn random_params_scaled(
    w: usize,
    h: usize,
    window: u32,
    channels: usize,
    seed: u64,
    diag_lo: f64,
    diag_hi: f64,
) -> SupnParams {
    let mut rng = StdRng::seed_from_u64(seed);
    let layout = NeighborhoodLayout::new(window, channels).unwrap();
    let mu = random_plane(w, h, channels, &mut rng, -0.5, 0.5);
    let log_diag = random_plane(w, h, channels, &mut rng, diag_lo, diag_hi);
    let off = (0..layout.offsets().len())
        .map(|_| random_plane(w, h, channels * channels, &mut rng, -0.3, 0.3))
        .collect();
    let intra = (channels == 2).then(|| random_plane(w, h, 1, &mut rng, -0.3, 0.3));
    SupnParams::new(layout, mu, log_diag, off, intra).unwrap()
}

pub(crate) fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub(crate) fn flatten(p: &SupnParams) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend_from_slice(p.mu.data());
    out.extend_from_slice(p.log_diag.data());
    for plane in &p.off_diag {
        out.extend_from_slice(plane.data());
    }
    if let Some(i) = &p.intra {
        out.extend_from_slice(i.data());
    }
    out
}

pub(crate) fn unflatten(template: &SupnParams, flat: &[f64]) -> SupnParams {
    let mut p = template.clone();
    let mut at = 0;
    for v in p.mu.data_mut() {
        *v = flat[at];
        at += 1;
    }
    for v in p.log_diag.data_mut() {
        *v = flat[at];
        at += 1;
    }
    for plane in &mut p.off_diag {
        for v in plane.data_mut() {
            *v = flat[at];
            at += 1;
        }
    }
    if let Some(i) = &mut p.intra {
        for v in i.data_mut() {
            *v = flat[at];
            at += 1;
        }
    }
    assert_eq!(at, flat.len());
    p
}

pub(crate) fn flatten_grads(g: &ParamGradients) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend_from_slice(g.mu.data());
    out.extend_from_slice(g.log_diag.data());
    for plane in &g.off_diag {
        out.extend_from_slice(plane.data());
    }
    if let Some(i) = &g.intra {
        out.extend_from_slice(i.data());
    }
    out
}
