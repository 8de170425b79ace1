//! Dataset ingestion and evaluation statistics: 2AFC scoring, rank
//! correlations, KL-divergence calibration across distortion categories,
//! MOS-group separation, and the PSNR/SSIM baseline metrics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::{rgb_to_ycbcr, ImageRgb, Plane};

/// One 2AFC triplet: a reference, two candidates, and the proportion of
/// human votes preferring `p1`.
#[derive(Debug, Clone)]
pub struct TripletRecord {
    pub ref_path: PathBuf,
    pub p0_path: PathBuf,
    pub p1_path: PathBuf,
    /// Proportion of votes in [0, 1] for p1 being closer to the reference.
    pub h: f64,
    /// 1-based data row in the source manifest, for diagnostics.
    pub row: usize,
}

/// One MOS-labeled pair with its distortion category.
#[derive(Debug, Clone)]
pub struct MosRecord {
    pub ref_path: PathBuf,
    pub dist_path: PathBuf,
    pub mos: f64,
    pub category: String,
    pub distortion_level: Option<i64>,
    pub row: usize,
}

/// Whether unresolvable file paths abort the load or merely skip the record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestMode {
    Strict,
    Lenient,
}

/// A loaded manifest with the count of records skipped in lenient mode.
#[derive(Debug, Clone)]
pub struct Manifest<T> {
    pub records: Vec<T>,
    pub skipped: usize,
}

fn read_csv(path: &Path, expected_header: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Decode(format!("{}: empty manifest", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != expected_header {
        return Err(Error::Decode(format!(
            "{}: header {cols:?} does not match expected {expected_header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != expected_header.len() {
            return Err(Error::Decode(format!(
                "{} row {}: {} fields, expected {}",
                path.display(),
                i + 1,
                fields.len(),
                expected_header.len()
            )));
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

/// Resolve a manifest-relative path against the manifest's directory.
fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Load a 2AFC triplet manifest: CSV with header `ref,p0,p1,h`.
pub fn load_triplet_manifest(
    path: impl AsRef<Path>,
    mode: ManifestMode,
) -> Result<Manifest<TripletRecord>> {
    let path = path.as_ref();
    let rows = read_csv(path, &["ref", "p0", "p1", "h"])?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for (row, fields) in rows {
        let h: f64 = fields[3].parse().map_err(|_| {
            Error::Invalid(format!("{} row {row}: unparsable h '{}'", path.display(), fields[3]))
        })?;
        if !(0.0..=1.0).contains(&h) {
            return Err(Error::Invalid(format!(
                "{} row {row}: h = {h} outside [0, 1]",
                path.display()
            )));
        }
        let rec = TripletRecord {
            ref_path: resolve(path, &fields[0]),
            p0_path: resolve(path, &fields[1]),
            p1_path: resolve(path, &fields[2]),
            h,
            row,
        };
        let missing = [&rec.ref_path, &rec.p0_path, &rec.p1_path]
            .into_iter()
            .find(|p| !p.exists());
        match (missing, mode) {
            (Some(p), ManifestMode::Strict) => {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, format!("row {row}")),
                ))
            }
            (Some(_), ManifestMode::Lenient) => skipped += 1,
            (None, _) => records.push(rec),
        }
    }
    Ok(Manifest { records, skipped })
}

/// Load a MOS manifest: CSV with header `ref,dist,mos,category,level`
/// (level may be empty).
pub fn load_mos_manifest(
    path: impl AsRef<Path>,
    mode: ManifestMode,
) -> Result<Manifest<MosRecord>> {
    let path = path.as_ref();
    let rows = read_csv(path, &["ref", "dist", "mos", "category", "level"])?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for (row, fields) in rows {
        let mos: f64 = fields[2].parse().map_err(|_| {
            Error::Invalid(format!(
                "{} row {row}: unparsable mos '{}'",
                path.display(),
                fields[2]
            ))
        })?;
        if !mos.is_finite() {
            return Err(Error::Invalid(format!(
                "{} row {row}: non-finite mos",
                path.display()
            )));
        }
        let distortion_level = if fields[4].is_empty() {
            None
        } else {
            Some(fields[4].parse().map_err(|_| {
                Error::Invalid(format!(
                    "{} row {row}: unparsable level '{}'",
                    path.display(),
                    fields[4]
                ))
            })?)
        };
        let rec = MosRecord {
            ref_path: resolve(path, &fields[0]),
            dist_path: resolve(path, &fields[1]),
            mos,
            category: fields[3].clone(),
            distortion_level,
            row,
        };
        let missing = [&rec.ref_path, &rec.dist_path]
            .into_iter()
            .find(|p| !p.exists());
        match (missing, mode) {
            (Some(p), ManifestMode::Strict) => {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, format!("row {row}")),
                ))
            }
            (Some(_), ManifestMode::Lenient) => skipped += 1,
            (None, _) => records.push(rec),
        }
    }
    Ok(Manifest { records, skipped })
}

/// A metric's choice on one triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoAfcChoice {
    P0,
    P1,
    Tie,
}

/// Vote-weighted 2AFC agreement: mean over triplets of h when the metric
/// picks p1, 1-h when it picks p0, and 0.5 on ties.
///
/// ```
/// use suss_core::eval::{twoafc_score, TwoAfcChoice};
///
/// let score = twoafc_score(
///     &[TwoAfcChoice::P1, TwoAfcChoice::P0],
///     &[0.9, 0.3],
/// ).unwrap();
/// assert!((score - 0.8).abs() < 1e-12); // (0.9 + 0.7) / 2
/// ```
pub fn twoafc_score(choices: &[TwoAfcChoice], h: &[f64]) -> Result<f64> {
    if choices.len() != h.len() {
        return Err(Error::Shape(format!(
            "{} choices vs {} vote proportions",
            choices.len(),
            h.len()
        )));
    }
    if choices.is_empty() {
        return Err(Error::Invalid("empty 2AFC evaluation".into()));
    }
    let total: f64 = choices
        .iter()
        .zip(h)
        .map(|(c, &h)| match c {
            TwoAfcChoice::P1 => h,
            TwoAfcChoice::P0 => 1.0 - h,
            TwoAfcChoice::Tie => 0.5,
        })
        .sum();
    Ok(total / choices.len() as f64)
}

/// Pearson linear correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (xc, yc) = (a - mx, b - my);
        sxx += xc * xc;
        syy += yc * yc;
        sxy += xc * yc;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numeric("zero variance in correlation input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

/// Kendall rank correlation, tau-b (tie-corrected).
pub fn kendall(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                ties_x += 1;
                ties_y += 1;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if dx * dy > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - ties_x) as f64) * ((n0 - ties_y) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::Numeric("zero variance in correlation input".into()));
    }
    Ok((concordant - discordant) as f64 / denom)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "correlation inputs of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Invalid("need at least 2 points".into()));
    }
    Ok(())
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        // Average of 1-based ranks i+1 ..= j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Number of shared histogram bins in the KL machinery.
pub const KL_BINS: usize = 50;
const KL_SMOOTHING: f64 = 1e-9;

fn histogram(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut bins = vec![0.0f64; KL_BINS];
    let span = hi - lo;
    for &v in values {
        let t = ((v - lo) / span * KL_BINS as f64).floor() as usize;
        bins[t.min(KL_BINS - 1)] += 1.0;
    }
    // Additive smoothing, then renormalize to a distribution.
    let total: f64 = values.len() as f64 + KL_BINS as f64 * KL_SMOOTHING;
    for b in &mut bins {
        *b = (*b + KL_SMOOTHING) / total;
    }
    bins
}

fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// Per-category KL divergence against the pooled score distribution.
///
/// All scores are jointly min-max normalized to [0, 1], histogrammed over 50
/// shared bins with 1e-9 additive smoothing, and each category's distribution
/// is compared to the aggregate: KL(D_category || D_aggregate).
pub fn kl_calibration(
    scores_by_category: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeMap<String, f64>> {
    if scores_by_category.len() < 2 {
        return Err(Error::Invalid("need at least 2 categories".into()));
    }
    for (cat, scores) in scores_by_category {
        if scores.is_empty() {
            return Err(Error::Invalid(format!("category '{cat}' is empty")));
        }
    }
    let pooled: Vec<f64> = scores_by_category.values().flatten().copied().collect();
    let (lo, hi) = min_max(&pooled)?;
    let aggregate = histogram(&pooled, lo, hi);
    Ok(scores_by_category
        .iter()
        .map(|(cat, scores)| {
            let h = histogram(scores, lo, hi);
            (cat.clone(), kl_divergence(&h, &aggregate))
        })
        .collect())
}

/// KL divergence between two score samples through the same binning pipeline
/// (joint normalization, 50 bins, smoothing). Exactly zero for identical
/// samples.
pub fn kl_between(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("empty score sample".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (lo, hi) = min_max(&pooled)?;
    Ok(kl_divergence(&histogram(a, lo, hi), &histogram(b, lo, hi)))
}

fn min_max(values: &[f64]) -> Result<(f64, f64)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Numeric("non-finite scores".into()));
    }
    if lo == hi {
        return Err(Error::Numeric(
            "all scores identical: normalization degenerate".into(),
        ));
    }
    Ok((lo, hi))
}

/// Mann-Whitney probability that a random high-MOS score exceeds a random
/// low-MOS score, ties counted one half.
pub fn auc_separation(scores_high: &[f64], scores_low: &[f64]) -> Result<f64> {
    if scores_high.is_empty() || scores_low.is_empty() {
        return Err(Error::Invalid("empty MOS group".into()));
    }
    let mut acc = 0.0;
    for h in scores_high {
        for l in scores_low {
            if h > l {
                acc += 1.0;
            } else if h == l {
                acc += 0.5;
            }
        }
    }
    Ok(acc / (scores_high.len() * scores_low.len()) as f64)
}

/// Peak signal-to-noise ratio over all RGB samples with MAX = 1. Identical
/// images report positive infinity.
pub fn psnr(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape(format!(
            "psnr inputs {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Structural similarity on luminance with an 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.
pub fn ssim(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape(format!(
            "ssim inputs {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (ya, _) = rgb_to_ycbcr(a);
    let (yb, _) = rgb_to_ycbcr(b);
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);

    let mul = |p: &Plane, q: &Plane| -> Plane {
        let mut out = p.clone();
        for (o, v) in out.data_mut().iter_mut().zip(q.data()) {
            *o *= v;
        }
        out
    };
    let mu_a = ssim_window_filter(&ya);
    let mu_b = ssim_window_filter(&yb);
    let e_aa = ssim_window_filter(&mul(&ya, &ya));
    let e_bb = ssim_window_filter(&mul(&yb, &yb));
    let e_ab = ssim_window_filter(&mul(&ya, &yb));

    let mut acc = 0.0;
    let n = mu_a.len();
    for i in 0..n {
        let (ma, mb) = (mu_a.data()[i], mu_b.data()[i]);
        let va = e_aa.data()[i] - ma * ma;
        let vb = e_bb.data()[i] - mb * mb;
        let cov = e_ab.data()[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(acc / n as f64)
}

/// Separable 11-tap Gaussian (sigma 1.5) with reflect padding.
fn ssim_window_filter(p: &Plane) -> Plane {
    const RADIUS: isize = 5;
    let mut kernel = [0.0f64; 11];
    for (i, k) in kernel.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *k = (-0.5 * (d / 1.5).powi(2)).exp();
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let m = i.rem_euclid(2 * n);
        if m < n {
            m as usize
        } else {
            (2 * n - 1 - m) as usize
        }
    };
    let (w, h) = (p.width(), p.height());
    let mut horiz = Plane::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                acc += k * p.get(y, reflect(x as isize + ki as isize - RADIUS, w), 0);
            }
            horiz.set(y, x, 0, acc);
        }
    }
    let mut out = Plane::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                acc += k * horiz.get(reflect(y as isize + ki as isize - RADIUS, h), x, 0);
            }
            out.set(y, x, 0, acc);
        }
    }
    out
}
