//! Image containers, color conversion, and the multi-scale perceptual
//! decomposition together with its exact adjoint.
//!
//! The decomposition splits an RGB image into four components: luminance at
//! full, half, and quarter resolution, plus interleaved chroma (Cb, Cr,
//! centered at zero) at quarter resolution. The map is exactly linear, so its
//! adjoint routes per-component gradients back to RGB pixel space.

mod color;
mod io;

pub use color::{lab_to_rgb, rgb_to_lab, rgb_to_ycbcr, ycbcr_to_rgb};
pub use io::{encode_ppm, load_image, save_image};

use crate::error::{Error, Result};

/// A rectangular array of float samples with 1, 2, or 3 interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "plane data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("plane contains non-finite values".into()));
        }
        Ok(Plane {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Plane {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Plane {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Total number of samples (width * height * channels).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }
}

/// An RGB image with samples in `[0, 1]`, row-major, interleaved triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "rgb data length {} does not match {}x{}x3",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("image contains non-finite values".into()));
        }
        Ok(ImageRgb {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        ImageRgb {
            width,
            height,
            data: vec![value; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, p: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] = p[0];
        self.data[i + 1] = p[1];
        self.data[i + 2] = p[2];
    }

    /// True when the quarter-scale components of the decomposition exist.
    pub fn decomposable(&self) -> bool {
        self.width >= 8 && self.height >= 8 && self.width % 4 == 0 && self.height % 4 == 0
    }

    /// Largest centered crop whose sides are divisible by four.
    pub fn center_crop_to_multiple_of_4(&self) -> Result<ImageRgb> {
        let w = self.width - self.width % 4;
        let h = self.height - self.height % 4;
        if w < 8 || h < 8 {
            return Err(Error::Shape(format!(
                "image {}x{} too small to crop to a decomposable size",
                self.width, self.height
            )));
        }
        let x0 = (self.width - w) / 2;
        let y0 = (self.height - h) / 2;
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&self.pixel(y0 + y, x0 + x));
            }
        }
        Ok(ImageRgb {
            width: w,
            height: h,
            data,
        })
    }
}

/// Identifies one of the four decomposition components. The order
/// `[YFull, YHalf, YQuarter, CbcrQuarter]` is fixed everywhere in the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentId {
    YFull,
    YHalf,
    YQuarter,
    CbcrQuarter,
}

/// Fixed component order shared by decompositions, fitted models, and weights.
pub const COMPONENT_ORDER: [ComponentId; 4] = [
    ComponentId::YFull,
    ComponentId::YHalf,
    ComponentId::YQuarter,
    ComponentId::CbcrQuarter,
];

impl ComponentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentId::YFull => "y_full",
            ComponentId::YHalf => "y_half",
            ComponentId::YQuarter => "y_quarter",
            ComponentId::CbcrQuarter => "cbcr_quarter",
        }
    }

    pub fn from_str(s: &str) -> Option<ComponentId> {
        match s {
            "y_full" => Some(ComponentId::YFull),
            "y_half" => Some(ComponentId::YHalf),
            "y_quarter" => Some(ComponentId::YQuarter),
            "cbcr_quarter" => Some(ComponentId::CbcrQuarter),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            ComponentId::YFull => 0,
            ComponentId::YHalf => 1,
            ComponentId::YQuarter => 2,
            ComponentId::CbcrQuarter => 3,
        }
    }

    /// Downsampling factor of this component relative to the source image.
    pub fn scale(self) -> usize {
        match self {
            ComponentId::YFull => 1,
            ComponentId::YHalf => 2,
            ComponentId::YQuarter => 4,
            ComponentId::CbcrQuarter => 4,
        }
    }

    pub fn channels(self) -> usize {
        match self {
            ComponentId::CbcrQuarter => 2,
            _ => 1,
        }
    }
}

/// The four perceptual components of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualDecomposition {
    pub y_full: Plane,
    pub y_half: Plane,
    pub y_quarter: Plane,
    pub cbcr_quarter: Plane,
}

impl PerceptualDecomposition {
    pub fn components(&self) -> [&Plane; 4] {
        [
            &self.y_full,
            &self.y_half,
            &self.y_quarter,
            &self.cbcr_quarter,
        ]
    }

    pub fn component(&self, id: ComponentId) -> &Plane {
        match id {
            ComponentId::YFull => &self.y_full,
            ComponentId::YHalf => &self.y_half,
            ComponentId::YQuarter => &self.y_quarter,
            ComponentId::CbcrQuarter => &self.cbcr_quarter,
        }
    }
}

/// 2x2 non-overlapping average pooling per channel. Errors on odd dimensions.
pub fn downsample2x(p: &Plane) -> Result<Plane> {
    if p.width % 2 != 0 || p.height % 2 != 0 {
        return Err(Error::Shape(format!(
            "downsample2x needs even dimensions, got {}",
            p.shape_str()
        )));
    }
    let (w, h, ch) = (p.width / 2, p.height / 2, p.channels);
    let mut out = Plane::zeros(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let s = p.get(2 * y, 2 * x, c)
                    + p.get(2 * y, 2 * x + 1, c)
                    + p.get(2 * y + 1, 2 * x, c)
                    + p.get(2 * y + 1, 2 * x + 1, c);
                out.set(y, x, c, 0.25 * s);
            }
        }
    }
    Ok(out)
}

/// Exact transpose of [`downsample2x`]: replicate each coarse sample into its
/// 2x2 block scaled by 1/4.
pub fn downsample2x_adjoint(g: &Plane) -> Plane {
    let (w, h, ch) = (g.width * 2, g.height * 2, g.channels);
    let mut out = Plane::zeros(w, h, ch);
    for y in 0..g.height {
        for x in 0..g.width {
            for c in 0..ch {
                let v = 0.25 * g.get(y, x, c);
                out.set(2 * y, 2 * x, c, v);
                out.set(2 * y, 2 * x + 1, c, v);
                out.set(2 * y + 1, 2 * x, c, v);
                out.set(2 * y + 1, 2 * x + 1, c, v);
            }
        }
    }
    out
}

/// Split an image into the four perceptual components.
///
/// Chroma is stored centered at zero so the whole map is linear in the RGB
/// samples; the matching adjoint is [`decompose_adjoint`].
pub fn decompose(img: &ImageRgb) -> Result<PerceptualDecomposition> {
    if !img.decomposable() {
        return Err(Error::Shape(format!(
            "image {}x{} must be at least 8x8 with sides divisible by 4",
            img.width, img.height
        )));
    }
    let (y, cbcr) = rgb_to_ycbcr(img);
    let y_half = downsample2x(&y)?;
    let y_quarter = downsample2x(&y_half)?;

    // Center chroma before pooling; the 0.5 offset is an affine shift that
    // would otherwise break linearity of the decomposition.
    let mut centered = cbcr;
    for v in centered.data_mut() {
        *v -= 0.5;
    }
    let cbcr_quarter = downsample2x(&downsample2x(&centered)?)?;

    Ok(PerceptualDecomposition {
        y_full: y,
        y_half,
        y_quarter,
        cbcr_quarter,
    })
}

/// Exact transpose of [`decompose`]. Takes per-component gradient planes and
/// returns the gradient with respect to the RGB samples as a 3-channel plane.
pub fn decompose_adjoint(grads: &PerceptualDecomposition) -> Result<Plane> {
    let w = grads.y_full.width;
    let h = grads.y_full.height;
    let ok = grads.y_full.channels == 1
        && grads.y_half.channels == 1
        && grads.y_quarter.channels == 1
        && grads.cbcr_quarter.channels == 2
        && grads.y_half.width * 2 == w
        && grads.y_half.height * 2 == h
        && grads.y_quarter.width * 4 == w
        && grads.y_quarter.height * 4 == h
        && grads.cbcr_quarter.width * 4 == w
        && grads.cbcr_quarter.height * 4 == h;
    if !ok {
        return Err(Error::Shape(
            "component gradient planes are not shaped like a decomposition".into(),
        ));
    }

    // Gradient w.r.t. the full-resolution Y plane.
    let mut g_y = downsample2x_adjoint(&downsample2x_adjoint(&grads.y_quarter));
    let g_half = downsample2x_adjoint(&grads.y_half);
    for (a, b) in g_y.data_mut().iter_mut().zip(g_half.data()) {
        *a += *b;
    }
    for (a, b) in g_y.data_mut().iter_mut().zip(grads.y_full.data()) {
        *a += *b;
    }

    // Gradient w.r.t. the full-resolution centered CbCr planes.
    let g_cbcr = downsample2x_adjoint(&downsample2x_adjoint(&grads.cbcr_quarter));

    // Transpose of the linear YCbCr matrix, per pixel.
    let mut out = Plane::zeros(w, h, 3);
    let m = color::ycbcr_matrix();
    for y in 0..h {
        for x in 0..w {
            let gy = g_y.get(y, x, 0);
            let gcb = g_cbcr.get(y, x, 0);
            let gcr = g_cbcr.get(y, x, 1);
            for c in 0..3 {
                out.set(
                    y,
                    x,
                    c,
                    m[0][c] * gy + m[1][c] * gcb + m[2][c] * gcr,
                );
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_image(w: usize, h: usize, seed: u64) -> ImageRgb {
        let mut rng = StdRng::seed_from_u64(seed);
        let data = (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        ImageRgb::new(w, h, data).unwrap()
    }

    fn random_plane(w: usize, h: usize, ch: usize, seed: u64) -> Plane {
        let mut rng = StdRng::seed_from_u64(seed);
        let data = (0..w * h * ch).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Plane::new(w, h, ch, data).unwrap()
    }

    #[test]
    fn downsample_constant_stays_constant() {
        let p = Plane::constant(6, 4, 1, 0.7);
        let d = downsample2x(&p).unwrap();
        assert_eq!(d.width(), 3);
        assert_eq!(d.height(), 2);
        assert!(d.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn downsample_2x2_mean() {
        let p = Plane::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let d = downsample2x(&p).unwrap();
        assert_eq!(d.data(), &[0.5]);
    }

    #[test]
    fn downsample_rejects_odd() {
        let p = Plane::zeros(3, 4, 1);
        assert!(downsample2x(&p).is_err());
    }

    #[test]
    fn downsample_preserves_mean() {
        let p = random_plane(8, 6, 2, 11);
        let d = downsample2x(&p).unwrap();
        for c in 0..2 {
            let mean_in: f64 = (0..6)
                .flat_map(|y| (0..8).map(move |x| (y, x)))
                .map(|(y, x)| p.get(y, x, c))
                .sum::<f64>()
                / 48.0;
            let mean_out: f64 = (0..3)
                .flat_map(|y| (0..4).map(move |x| (y, x)))
                .map(|(y, x)| d.get(y, x, c))
                .sum::<f64>()
                / 12.0;
            assert!((mean_in - mean_out).abs() < 1e-12);
        }
    }

    #[test]
    fn downsample_adjoint_dot_product() {
        for seed in 0..100 {
            let x = random_plane(8, 6, 1, seed);
            let y = random_plane(4, 3, 1, seed + 1000);
            let ax = downsample2x(&x).unwrap();
            let aty = downsample2x_adjoint(&y);
            let lhs: f64 = ax.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "seed {seed}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn decompose_gray_image() {
        let img = ImageRgb::constant(8, 8, 0.5);
        let d = decompose(&img).unwrap();
        assert_eq!(d.y_full.width(), 8);
        assert_eq!(d.y_half.width(), 4);
        assert_eq!(d.y_quarter.width(), 2);
        assert_eq!(d.cbcr_quarter.width(), 2);
        assert_eq!(d.cbcr_quarter.channels(), 2);
        assert!(d.y_full.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(d.y_quarter.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        // Achromatic input: centered chroma is zero.
        assert!(d.cbcr_quarter.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn decompose_rejects_bad_dimensions() {
        let img = ImageRgb::constant(10, 8, 0.5);
        assert!(decompose(&img).is_err());
        let img = ImageRgb::constant(4, 4, 0.5);
        assert!(decompose(&img).is_err());
    }

    #[test]
    fn decompose_is_linear() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let x1 = random_image(8, 8, rng.gen());
            let x2 = random_image(8, 8, rng.gen());
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(-2.0..2.0);
            let mixed_data: Vec<f64> = x1
                .data()
                .iter()
                .zip(x2.data())
                .map(|(p, q)| a * p + b * q)
                .collect();
            let mixed = ImageRgb {
                width: 8,
                height: 8,
                data: mixed_data,
            };
            let dm = decompose(&mixed).unwrap();
            let d1 = decompose(&x1).unwrap();
            let d2 = decompose(&x2).unwrap();
            for (i, (pm, (p1, p2))) in dm
                .components()
                .iter()
                .zip(d1.components().iter().zip(d2.components()))
                .enumerate()
            {
                for ((vm, v1), v2) in pm.data().iter().zip(p1.data()).zip(p2.data()) {
                    assert!(
                        (vm - (a * v1 + b * v2)).abs() < 1e-10,
                        "component {i} not linear"
                    );
                }
            }
        }
    }

    #[test]
    fn decompose_adjoint_dot_product() {
        for seed in 0..100 {
            let img = random_image(8, 8, seed);
            let g = PerceptualDecomposition {
                y_full: random_plane(8, 8, 1, seed + 1),
                y_half: random_plane(4, 4, 1, seed + 2),
                y_quarter: random_plane(2, 2, 1, seed + 3),
                cbcr_quarter: random_plane(2, 2, 2, seed + 4),
            };
            let d = decompose(&img).unwrap();
            let adj = decompose_adjoint(&g).unwrap();
            let lhs: f64 = d
                .components()
                .iter()
                .zip(g.components())
                .map(|(a, b)| -> f64 { a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum() })
                .sum();
            let rhs: f64 = img.data().iter().zip(adj.data()).map(|(p, q)| p * q).sum();
            assert!((lhs - rhs).abs() < 1e-9, "seed {seed}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn adjoint_zero_grads_give_zero() {
        let g = PerceptualDecomposition {
            y_full: Plane::zeros(8, 8, 1),
            y_half: Plane::zeros(4, 4, 1),
            y_quarter: Plane::zeros(2, 2, 1),
            cbcr_quarter: Plane::zeros(2, 2, 2),
        };
        let adj = decompose_adjoint(&g).unwrap();
        assert!(adj.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_single_quarter_pixel_spreads_to_block() {
        let mut g = PerceptualDecomposition {
            y_full: Plane::zeros(8, 8, 1),
            y_half: Plane::zeros(4, 4, 1),
            y_quarter: Plane::zeros(2, 2, 1),
            cbcr_quarter: Plane::zeros(2, 2, 2),
        };
        g.y_quarter.set(0, 0, 0, 1.0);
        let adj = decompose_adjoint(&g).unwrap();
        // The red channel picks up the Y-row coefficient uniformly over the
        // 4x4 block that pools into quarter pixel (0, 0).
        let expected = 0.299 / 16.0;
        for y in 0..4 {
            for x in 0..4 {
                assert!((adj.get(y, x, 0) - expected).abs() < 1e-12);
            }
        }
        for y in 0..4 {
            for x in 4..8 {
                assert_eq!(adj.get(y, x, 0), 0.0);
            }
        }
    }

    #[test]
    fn component_order_is_fixed() {
        assert_eq!(
            COMPONENT_ORDER.map(|c| c.as_str()),
            ["y_full", "y_half", "y_quarter", "cbcr_quarter"]
        );
        let img = ImageRgb::constant(8, 8, 0.3);
        let d = decompose(&img).unwrap();
        for (i, id) in COMPONENT_ORDER.iter().enumerate() {
            assert!(std::ptr::eq(d.components()[i], d.component(*id)));
            assert_eq!(d.component(*id).channels(), id.channels());
            assert_eq!(d.component(*id).width() * id.scale(), 8);
        }
    }

    #[test]
    fn center_crop_trims_to_multiple_of_four() {
        let img = random_image(37, 22, 9);
        let cropped = img.center_crop_to_multiple_of_4().unwrap();
        assert_eq!(cropped.width(), 36);
        assert_eq!(cropped.height(), 20);
        // Content is preserved at the cropped origin.
        assert_eq!(cropped.pixel(0, 0), img.pixel(1, 0));
    }
}
