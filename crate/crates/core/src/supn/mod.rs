//! Structured-uncertainty Gaussians on the pixel lattice.
//!
//! A component is modelled as N(mu, (L L^T)^-1) where L is a sparse
//! lower-triangular Cholesky factor of the precision matrix. Off-diagonal
//! entries are restricted to a causal neighborhood of each pixel (offsets
//! that strictly precede it in raster order), so densities, whitening, and
//! gradients are convolution-like passes over the planes and never touch a
//! dense matrix. A dense materialization is provided as a test oracle.
//!
//! Global variable order: raster-scan pixels; within a pixel of a 2-channel
//! component, Cb comes before Cr. One intra-pixel coupling (Cr row, Cb
//! column) plus 2x2 blocks per spatial offset encode cross-channel structure.

mod container;
mod dense;

pub use container::{load_supn, save_supn};
pub use dense::DenseLower;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::imaging::Plane;

const LN_2PI: f64 = 1.8378770664093453;

/// Causal offsets for a `window`-sized neighborhood with half-width
/// `hw = window / 2`: same-row offsets `(0, 1..=hw)` followed by full rows
/// `(1..=hw, -hw..=hw)`. Every offset points at a pixel that strictly
/// precedes the anchor in raster order.
///
/// ```
/// use suss_core::supn::offset_set;
///
/// assert_eq!(offset_set(5).unwrap().len(), 12);
/// assert_eq!(offset_set(8).unwrap().len(), 40);
/// assert!(offset_set(1).unwrap().is_empty()); // diagonal Gaussian
/// ```
pub fn offset_set(window: u32) -> Result<Vec<(i32, i32)>> {
    if window < 1 {
        return Err(Error::Invalid(format!("window {window} must be >= 1")));
    }
    let hw = (window / 2) as i32;
    let mut offsets = Vec::new();
    for dx in 1..=hw {
        offsets.push((0, dx));
    }
    for dy in 1..=hw {
        for dx in -hw..=hw {
            offsets.push((dy, dx));
        }
    }
    Ok(offsets)
}

/// Inclusive-exclusive anchor ranges for one offset on a w x h lattice: the
/// anchors whose neighbor `p - (dy, dx)` stays inside the image. Returns
/// `(py_start, px_lo, px_hi, q_shift)` with `q = p_index - q_shift`.
#[inline]
fn anchor_bounds(dy: i32, dx: i32, w: usize, h: usize) -> (usize, usize, usize, isize) {
    let dxi = dx as isize;
    let py_start = (dy as usize).min(h);
    let px_lo = dxi.max(0) as usize;
    let px_hi = (w as isize + dxi.min(0)).max(0) as usize;
    let q_shift = dy as isize * w as isize + dxi;
    (py_start, px_lo, px_hi, q_shift)
}

/// Sparsity pattern of the Cholesky factor: window size, causal offsets, and
/// channel structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodLayout {
    window: u32,
    channels: usize,
    offsets: Vec<(i32, i32)>,
}

impl NeighborhoodLayout {
    pub fn new(window: u32, channels: usize) -> Result<Self> {
        if channels != 1 && channels != 2 {
            return Err(Error::Invalid(format!(
                "channels {channels} must be 1 or 2"
            )));
        }
        Ok(NeighborhoodLayout {
            window,
            channels,
            offsets: offset_set(window)?,
        })
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    pub fn half_width(&self) -> u32 {
        self.window / 2
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// Number of intra-pixel couplings per pixel (Cr <- Cb when 2-channel).
    pub fn intra_pixel_couplings(&self) -> usize {
        if self.channels == 2 {
            1
        } else {
            0
        }
    }
}

/// Parameters of one structured Gaussian: mean plane, log-diagonal plane, and
/// per-offset coupling planes of the Cholesky factor.
///
/// Couplings are stored at the anchor pixel: plane `off_diag[k]` holds, for
/// each pixel `p`, the factor entries `L[(p, c_row)][(q, c_col)]` where `q`
/// is the neighbor at `p - offsets[k]` (a `channels^2` block, row-major).
/// Entries whose neighbor falls outside the image are structurally zero and
/// ignored by every operation.
#[derive(Debug, Clone, PartialEq)]
pub struct SupnParams {
    pub(crate) layout: NeighborhoodLayout,
    pub(crate) mu: Plane,
    pub(crate) log_diag: Plane,
    pub(crate) off_diag: Vec<Plane>,
    pub(crate) intra: Option<Plane>,
}

/// Gradient of the log-density with respect to every parameter plane, shaped
/// like the parameters themselves.
#[derive(Debug, Clone)]
pub struct ParamGradients {
    pub mu: Plane,
    pub log_diag: Plane,
    pub off_diag: Vec<Plane>,
    pub intra: Option<Plane>,
}

/// Residual, whitened residual, and log-density of one observation.
#[derive(Debug, Clone)]
pub struct Whitening {
    /// y - mu
    pub residual: Plane,
    /// s = L^T (y - mu)
    pub whitened: Plane,
    pub log_prob: f64,
}

/// One sample with its log-density under the model.
#[derive(Debug, Clone)]
pub struct RankedSample {
    pub sample: Plane,
    pub log_prob: f64,
}

/// Lowest/median/highest log-density draws from a batch of samples.
#[derive(Debug, Clone)]
pub struct RankedSamples {
    pub lowest: RankedSample,
    pub median: RankedSample,
    pub highest: RankedSample,
}

impl SupnParams {
    pub fn new(
        layout: NeighborhoodLayout,
        mu: Plane,
        log_diag: Plane,
        off_diag: Vec<Plane>,
        intra: Option<Plane>,
    ) -> Result<Self> {
        let (w, h, c) = (mu.width(), mu.height(), layout.channels());
        if w == 0 || h == 0 {
            return Err(Error::Invalid("zero-area component".into()));
        }
        if mu.channels() != c {
            return Err(Error::Shape(format!(
                "mu has {} channels, layout wants {c}",
                mu.channels()
            )));
        }
        if !log_diag.same_shape(&mu) {
            return Err(Error::Shape("log_diag shape differs from mu".into()));
        }
        if off_diag.len() != layout.offsets().len() {
            return Err(Error::Shape(format!(
                "{} coupling planes for {} offsets",
                off_diag.len(),
                layout.offsets().len()
            )));
        }
        for p in &off_diag {
            if p.width() != w || p.height() != h || p.channels() != c * c {
                return Err(Error::Shape(format!(
                    "coupling plane {} does not match {w}x{h}x{}",
                    p.shape_str(),
                    c * c
                )));
            }
        }
        match (&intra, c) {
            (None, 1) => {}
            (Some(p), 2) => {
                if p.width() != w || p.height() != h || p.channels() != 1 {
                    return Err(Error::Shape("intra plane shape mismatch".into()));
                }
            }
            _ => {
                return Err(Error::Shape(
                    "intra-pixel plane present iff the layout is 2-channel".into(),
                ))
            }
        }
        Ok(SupnParams {
            layout,
            mu,
            log_diag,
            off_diag,
            intra,
        })
    }

    /// Model with the given mean and log-diagonal and all couplings zero.
    pub fn with_zero_couplings(
        layout: NeighborhoodLayout,
        mu: Plane,
        log_diag: Plane,
    ) -> Result<Self> {
        let (w, h, c) = (mu.width(), mu.height(), layout.channels());
        let off = (0..layout.offsets().len())
            .map(|_| Plane::zeros(w, h, c * c))
            .collect();
        let intra = (c == 2).then(|| Plane::zeros(w, h, 1));
        SupnParams::new(layout, mu, log_diag, off, intra)
    }

    pub fn layout(&self) -> &NeighborhoodLayout {
        &self.layout
    }

    pub fn width(&self) -> usize {
        self.mu.width()
    }

    pub fn height(&self) -> usize {
        self.mu.height()
    }

    pub fn channels(&self) -> usize {
        self.layout.channels()
    }

    /// Number of variables (pixels times channels).
    pub fn num_variables(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &Plane {
        &self.mu
    }

    pub fn mu_mut(&mut self) -> &mut Plane {
        &mut self.mu
    }

    pub fn log_diag(&self) -> &Plane {
        &self.log_diag
    }

    pub fn log_diag_mut(&mut self) -> &mut Plane {
        &mut self.log_diag
    }

    pub fn off_diag(&self) -> &[Plane] {
        &self.off_diag
    }

    pub fn off_diag_mut(&mut self) -> &mut [Plane] {
        &mut self.off_diag
    }

    pub fn intra(&self) -> Option<&Plane> {
        self.intra.as_ref()
    }

    pub fn intra_mut(&mut self) -> Option<&mut Plane> {
        self.intra.as_mut()
    }

    fn check_shape(&self, y: &Plane) -> Result<()> {
        if !y.same_shape(&self.mu) {
            return Err(Error::Shape(format!(
                "observation {} does not match model {}",
                y.shape_str(),
                self.mu.shape_str()
            )));
        }
        Ok(())
    }

    /// Residual, whitened residual s = L^T (y - mu), and log-density in one
    /// sparse pass.
    pub fn whitening(&self, y: &Plane) -> Result<Whitening> {
        self.check_shape(y)?;
        let (w, h, c) = (self.width(), self.height(), self.channels());
        let mut residual = Plane::zeros(w, h, c);
        for ((r, yv), m) in residual
            .data_mut()
            .iter_mut()
            .zip(y.data())
            .zip(self.mu.data())
        {
            *r = yv - m;
        }
        let whitened = self.whiten_residual(&residual);
        let n = self.num_variables() as f64;
        let log_det_half: f64 = self.log_diag.data().iter().sum();
        let quad: f64 = whitened.data().iter().map(|&s| s * s).sum();
        let log_prob = log_det_half - 0.5 * n * LN_2PI - 0.5 * quad;
        Ok(Whitening {
            residual,
            whitened,
            log_prob,
        })
    }

    /// Whitened residual s = L^T (y - mu). Zero exactly when y equals mu.
    pub fn whiten(&self, y: &Plane) -> Result<Plane> {
        Ok(self.whitening(y)?.whitened)
    }

    /// Log-density of `y` under N(mu, (L L^T)^-1):
    /// sum(log_diag) - n/2 log(2 pi) - 1/2 ||L^T (y - mu)||^2.
    pub fn log_prob(&self, y: &Plane) -> Result<f64> {
        if y.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite observation".into()));
        }
        Ok(self.whitening(y)?.log_prob)
    }

    /// s = L^T r for a precomputed residual plane. The coupling stored at
    /// anchor p scatters r[p] into s at the preceding neighbor q.
    pub fn whiten_residual(&self, residual: &Plane) -> Plane {
        let (w, h, c) = (self.width(), self.height(), self.channels());
        let mut s = Plane::zeros(w, h, c);
        let rd = residual.data();
        let sd = s.data_mut();
        for ((sv, rv), ld) in sd.iter_mut().zip(rd).zip(self.log_diag.data()) {
            *sv = ld.exp() * rv;
        }
        for (k, &(dy, dx)) in self.layout.offsets().iter().enumerate() {
            let od = self.off_diag[k].data();
            let (py_start, px_lo, px_hi, q_shift) = anchor_bounds(dy, dx, w, h);
            for py in py_start..h {
                let row = py * w;
                for px in px_lo..px_hi {
                    let p = row + px;
                    let q = (p as isize - q_shift) as usize;
                    if c == 1 {
                        sd[q] += od[p] * rd[p];
                    } else {
                        let b = p * 4;
                        let (p2, q2) = (p * 2, q * 2);
                        sd[q2] += od[b] * rd[p2] + od[b + 2] * rd[p2 + 1];
                        sd[q2 + 1] += od[b + 1] * rd[p2] + od[b + 3] * rd[p2 + 1];
                    }
                }
            }
        }
        if let Some(intra) = &self.intra {
            let id = intra.data();
            for p in 0..w * h {
                sd[p * 2] += id[p] * rd[p * 2 + 1];
            }
        }
        s
    }

    /// Multiply by the factor itself: out = L v. The coupling stored at
    /// anchor p gathers v from the preceding neighbor q into out[p].
    pub fn apply_l(&self, v: &Plane) -> Plane {
        let (w, h, c) = (self.width(), self.height(), self.channels());
        let mut out = Plane::zeros(w, h, c);
        let vd = v.data();
        let outd = out.data_mut();
        for ((ov, vv), ld) in outd.iter_mut().zip(vd).zip(self.log_diag.data()) {
            *ov = ld.exp() * vv;
        }
        for (k, &(dy, dx)) in self.layout.offsets().iter().enumerate() {
            let od = self.off_diag[k].data();
            let (py_start, px_lo, px_hi, q_shift) = anchor_bounds(dy, dx, w, h);
            for py in py_start..h {
                let row = py * w;
                for px in px_lo..px_hi {
                    let p = row + px;
                    let q = (p as isize - q_shift) as usize;
                    if c == 1 {
                        outd[p] += od[p] * vd[q];
                    } else {
                        let b = p * 4;
                        let (p2, q2) = (p * 2, q * 2);
                        outd[p2] += od[b] * vd[q2] + od[b + 1] * vd[q2 + 1];
                        outd[p2 + 1] += od[b + 2] * vd[q2] + od[b + 3] * vd[q2 + 1];
                    }
                }
            }
        }
        if let Some(intra) = &self.intra {
            let id = intra.data();
            for p in 0..w * h {
                outd[p * 2 + 1] += id[p] * vd[p * 2];
            }
        }
        out
    }

    /// Gradient of the log-density with respect to mu, log_diag, and every
    /// stored coupling, computed in closed form.
    pub fn grad_log_prob_params(&self, y: &Plane) -> Result<ParamGradients> {
        let wh = self.whitening(y)?;
        let mut acc = ParamGradients::zeros_like(self);
        self.add_scaled_param_grads(&wh, 1.0, &mut acc);
        Ok(acc)
    }

    /// Accumulate `coef` times the parameter gradient for a precomputed
    /// whitening into `acc`. Allocation-light core used by the fitting loop.
    pub fn add_scaled_param_grads(&self, wh: &Whitening, coef: f64, acc: &mut ParamGradients) {
        let (w, h, c) = (self.width(), self.height(), self.channels());
        let rd = wh.residual.data();
        let sd = wh.whitened.data();

        // d logp / d mu = L L^T r = L s
        let ls = self.apply_l(&wh.whitened);
        for (a, v) in acc.mu.data_mut().iter_mut().zip(ls.data()) {
            *a += coef * v;
        }
        // d logp / d log_diag_i = 1 - s_i r_i d_i
        for (((a, &s), &r), &ld) in acc
            .log_diag
            .data_mut()
            .iter_mut()
            .zip(sd)
            .zip(rd)
            .zip(self.log_diag.data())
        {
            *a += coef * (1.0 - s * r * ld.exp());
        }
        // d logp / d L[(p,cr)][(q,cc)] = -s[(q,cc)] * r[(p,cr)]
        for (k, &(dy, dx)) in self.layout.offsets().iter().enumerate() {
            let gd = acc.off_diag[k].data_mut();
            let (py_start, px_lo, px_hi, q_shift) = anchor_bounds(dy, dx, w, h);
            for py in py_start..h {
                let row = py * w;
                for px in px_lo..px_hi {
                    let p = row + px;
                    let q = (p as isize - q_shift) as usize;
                    if c == 1 {
                        gd[p] -= coef * sd[q] * rd[p];
                    } else {
                        let b = p * 4;
                        let (p2, q2) = (p * 2, q * 2);
                        gd[b] -= coef * sd[q2] * rd[p2];
                        gd[b + 1] -= coef * sd[q2 + 1] * rd[p2];
                        gd[b + 2] -= coef * sd[q2] * rd[p2 + 1];
                        gd[b + 3] -= coef * sd[q2 + 1] * rd[p2 + 1];
                    }
                }
            }
        }
        if let Some(gi) = &mut acc.intra {
            let gd = gi.data_mut();
            for p in 0..w * h {
                gd[p] -= coef * sd[p * 2] * rd[p * 2 + 1];
            }
        }
    }

    /// Gradient of the log-density with respect to the observation:
    /// d logp / dy = -L L^T (y - mu).
    pub fn grad_log_prob_obs(&self, y: &Plane) -> Result<Plane> {
        let wh = self.whitening(y)?;
        Ok(self.grad_obs_from(&wh))
    }

    /// Observation gradient from a precomputed whitening.
    pub fn grad_obs_from(&self, wh: &Whitening) -> Plane {
        let mut g = self.apply_l(&wh.whitened);
        for v in g.data_mut() {
            *v = -*v;
        }
        g
    }

    /// Draw one exact sample: z ~ N(0, I), solve L^T x = z by back
    /// substitution in reverse variable order, return mu + x.
    pub fn sample(&self, seed: u64) -> Plane {
        let mut rng = StdRng::seed_from_u64(seed);
        self.sample_with_rng(&mut rng)
    }

    pub(crate) fn sample_with_rng(&self, rng: &mut StdRng) -> Plane {
        let (w, h, c) = (self.width(), self.height(), self.channels());
        let n = self.num_variables();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = vec![0.0f64; n];
        let offsets = self.layout.offsets();
        let ld = self.log_diag.data();
        // Reverse raster order; within a 2-channel pixel solve Cr before Cb
        // since the intra coupling feeds Cr into the Cb equation.
        for qy in (0..h).rev() {
            for qx in (0..w).rev() {
                let qpix = qy * w + qx;
                for cc in (0..c).rev() {
                    let j = qpix * c + cc;
                    let mut acc = z[j];
                    for (k, &(dy, dx)) in offsets.iter().enumerate() {
                        let py = qy as isize + dy as isize;
                        let px = qx as isize + dx as isize;
                        if py >= h as isize || px < 0 || px >= w as isize {
                            continue;
                        }
                        let p = py as usize * w + px as usize;
                        let od = self.off_diag[k].data();
                        if c == 1 {
                            acc -= od[p] * x[p];
                        } else {
                            let b = p * 4;
                            acc -= od[b + cc] * x[p * 2] + od[b + 2 + cc] * x[p * 2 + 1];
                        }
                    }
                    if c == 2 && cc == 0 {
                        let intra = self.intra.as_ref().expect("2-channel layout has intra");
                        acc -= intra.data()[qpix] * x[qpix * 2 + 1];
                    }
                    x[j] = acc / ld[j].exp();
                }
            }
        }
        let mut out = Plane::zeros(w, h, c);
        for ((o, xv), m) in out.data_mut().iter_mut().zip(&x).zip(self.mu.data()) {
            *o = m + xv;
        }
        out
    }

    /// Draw `count` samples, score each, and return the lowest/median/highest
    /// log-density draws.
    pub fn sample_ranked(&self, count: usize, seed: u64) -> Result<RankedSamples> {
        if count < 3 {
            return Err(Error::Invalid(format!("count {count} must be >= 3")));
        }
        let mut rng = StdRng::seed_from_u64(seed);
        let mut scored: Vec<RankedSample> = (0..count)
            .map(|_| {
                let sample = self.sample_with_rng(&mut rng);
                let log_prob = self
                    .whitening(&sample)
                    .expect("sample shape matches model")
                    .log_prob;
                RankedSample { sample, log_prob }
            })
            .collect();
        scored.sort_by(|a, b| a.log_prob.total_cmp(&b.log_prob));
        let highest = scored.pop().expect("count >= 3");
        let median = scored.swap_remove(count / 2);
        let lowest = scored.swap_remove(0);
        Ok(RankedSamples {
            lowest,
            median,
            highest,
        })
    }

    /// Count of structurally present factor entries: diagonal, in-bounds
    /// coupling blocks, and intra-pixel couplings.
    pub fn structural_nonzeros(&self) -> usize {
        let (w, h, c) = (self.width(), self.height(), self.channels());
        let mut count = self.num_variables();
        for &(dy, dx) in self.layout.offsets() {
            let rows = h.saturating_sub(dy as usize);
            let cols = w.saturating_sub(dx.unsigned_abs() as usize);
            count += rows * cols * c * c;
        }
        if self.intra.is_some() {
            count += w * h;
        }
        count
    }
}

impl ParamGradients {
    pub fn zeros_like(params: &SupnParams) -> Self {
        let (w, h, c) = (params.width(), params.height(), params.channels());
        ParamGradients {
            mu: Plane::zeros(w, h, c),
            log_diag: Plane::zeros(w, h, c),
            off_diag: (0..params.off_diag.len())
                .map(|_| Plane::zeros(w, h, c * c))
                .collect(),
            intra: params.intra.as_ref().map(|_| Plane::zeros(w, h, 1)),
        }
    }

    pub fn reset(&mut self) {
        for v in self.mu.data_mut() {
            *v = 0.0;
        }
        for v in self.log_diag.data_mut() {
            *v = 0.0;
        }
        for p in &mut self.off_diag {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        if let Some(p) = &mut self.intra {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests;
