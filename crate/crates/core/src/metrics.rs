//! Agreement metrics between a detected and an annotated edge map.
//!
//! Dice and the confusion counts work on {0,1} maps. MSE, PSNR and SSIM treat
//! both maps as {0,255} images.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::EdgeMap;

/// Peak value used by PSNR.
pub const PEAK: f64 = 255.0;

/// Pixel counts with "edge" as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn check_shapes(a: &EdgeMap, b: &EdgeMap) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid(format!(
            "edge maps differ in size: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn confusion(detected: &EdgeMap, annotated: &EdgeMap) -> Result<ConfusionCounts> {
    check_shapes(detected, annotated)?;
    let mut c = ConfusionCounts::default();
    for (&d, &a) in detected.data().iter().zip(annotated.data()) {
        match (d != 0, a != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Dice similarity `2TP / (2TP + FP + FN)`; two empty maps score 1.
pub fn dsc(detected: &EdgeMap, annotated: &EdgeMap) -> Result<f64> {
    let c = confusion(detected, annotated)?;
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok((2 * c.tp) as f64 / denom as f64)
}

pub fn mse(f: &EdgeMap, g: &EdgeMap) -> Result<f64> {
    check_shapes(f, g)?;
    if f.data().is_empty() {
        return Err(Error::invalid("cannot compare empty maps"));
    }
    // On {0,255} maps every disagreeing pixel contributes 255^2.
    let diff = f.data().iter().zip(g.data()).filter(|(a, b)| a != b).count();
    Ok(diff as f64 * PEAK * PEAK / f.data().len() as f64)
}

/// `10 log10(255^2 / MSE)`; `f64::INFINITY` for identical maps.
pub fn psnr(f: &EdgeMap, g: &EdgeMap) -> Result<f64> {
    Ok(psnr_from_mse(mse(f, g)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Gaussian window parameters and stabilizing constants for SSIM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * PEAK).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * PEAK).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let x = i as f64 - half;
                (-(x * x) / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

/// Mean SSIM over every fully contained window position.
pub fn ssim(f: &EdgeMap, g: &EdgeMap) -> Result<f64> {
    ssim_with(f, g, &SsimConfig::default())
}

pub fn ssim_with(f: &EdgeMap, g: &EdgeMap, cfg: &SsimConfig) -> Result<f64> {
    check_shapes(f, g)?;
    let (w, h, n) = (f.width(), f.height(), cfg.window);
    if w < n || h < n {
        return Err(Error::invalid(format!(
            "{w}x{h} map is smaller than the {n}x{n} SSIM window"
        )));
    }
    let x: Vec<f64> = f.data().iter().map(|&v| v as f64 * PEAK).collect();
    let y: Vec<f64> = g.data().iter().map(|&v| v as f64 * PEAK).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();

    let k = cfg.kernel();
    let mu_x = filter_valid(&x, w, h, &k);
    let mu_y = filter_valid(&y, w, h, &k);
    let e_xx = filter_valid(&xx, w, h, &k);
    let e_yy = filter_valid(&yy, w, h, &k);
    let e_xy = filter_valid(&xy, w, h, &k);

    let (c1, c2) = (cfg.c1(), cfg.c2());
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        let den = (mx * mx + my * my + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok(total / mu_x.len() as f64)
}

/// Separable correlation keeping only positions where the window fits.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = k.iter().zip(&line[c..c + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = k
                .iter()
                .enumerate()
                .map(|(i, a)| a * rows[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

/// All metrics for one detected/annotated pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub dsc: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
}

pub fn evaluate(detected: &EdgeMap, annotated: &EdgeMap) -> Result<MetricReport> {
    let mse = mse(annotated, detected)?;
    Ok(MetricReport {
        dsc: dsc(detected, annotated)?,
        psnr: psnr_from_mse(mse),
        ssim: ssim(annotated, detected)?,
        mse,
    })
}

/// Formats a metric for CSV output; infinite values print as `inf`.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}
