//! Canny edge detector used as the comparison baseline.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{EdgeMap, GrayImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyConfig {
    pub sigma: f64,
    /// Hysteresis thresholds on the Sobel gradient magnitude of the 0..255 image.
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl Default for CannyConfig {
    /// sigma 1, thresholds at 10% and 20% of 255.
    fn default() -> Self {
        Self {
            sigma: 1.0,
            low_threshold: 0.1 * 255.0,
            high_threshold: 0.2 * 255.0,
        }
    }
}

impl CannyConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::invalid("canny sigma must be positive"));
        }
        if !(0.0 <= self.low_threshold && self.low_threshold <= self.high_threshold) {
            return Err(Error::invalid(
                "canny thresholds must satisfy 0 <= low <= high",
            ));
        }
        Ok(())
    }
}

/// Half-sample symmetric reflection: `... b a | a b c ... | c b ...`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

fn gaussian_blur(img: &GrayImage, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            tmp[row * w + col] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * img.get(row, reflect(col as isize + i as isize - r, w)) as f64)
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            out[row * w + col] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[reflect(row as isize + i as isize - r, h) * w + col])
                .sum();
        }
    }
    out
}

/// Horizontal and vertical Sobel responses with reflected borders.
fn sobel(src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |r: isize, c: isize| src[reflect(r, h) * w + reflect(c, w)];
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for row in 0..h as isize {
        for col in 0..w as isize {
            let i = row as usize * w + col as usize;
            gx[i] = (at(row - 1, col + 1) + 2.0 * at(row, col + 1) + at(row + 1, col + 1))
                - (at(row - 1, col - 1) + 2.0 * at(row, col - 1) + at(row + 1, col - 1));
            gy[i] = (at(row + 1, col - 1) + 2.0 * at(row + 1, col) + at(row + 1, col + 1))
                - (at(row - 1, col - 1) + 2.0 * at(row - 1, col) + at(row - 1, col + 1));
        }
    }
    (gx, gy)
}

/// Keeps pixels that are maximal along their quantized gradient direction.
///
/// Ties are resolved toward the neighbor in the positive direction so a
/// symmetric ridge yields a single-pixel line.
fn non_max_suppression(mag: &[f64], gx: &[f64], gy: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let tan22 = (std::f64::consts::PI / 8.0).tan();
    for row in 1..h.saturating_sub(1) {
        for col in 1..w.saturating_sub(1) {
            let i = row * w + col;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let (dx, dy) = (gx[i], gy[i]);
            let (ax, ay) = (dx.abs(), dy.abs());
            // (drow, dcol) of the positive-direction neighbor
            let (sr, sc): (isize, isize) = if ay <= ax * tan22 {
                (0, 1)
            } else if ax <= ay * tan22 {
                (1, 0)
            } else if (dx > 0.0) == (dy > 0.0) {
                (1, 1)
            } else {
                (1, -1)
            };
            let fwd = mag[((row as isize + sr) as usize) * w + (col as isize + sc) as usize];
            let back = mag[((row as isize - sr) as usize) * w + (col as isize - sc) as usize];
            if m >= back && m > fwd {
                out[i] = m;
            }
        }
    }
    out
}

/// Runs the full Canny pipeline and returns a binary map of the input size.
pub fn canny(img: &GrayImage, config: &CannyConfig) -> Result<EdgeMap> {
    config.validate()?;
    if img.is_empty() {
        return Err(Error::invalid("canny needs a non-empty image"));
    }
    let (w, h) = (img.width(), img.height());
    let smooth = gaussian_blur(img, config.sigma);
    let (gx, gy) = sobel(&smooth, w, h);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let thin = non_max_suppression(&mag, &gx, &gy, w, h);

    let mut edges = vec![0u8; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in thin.iter().enumerate() {
        if m > 0.0 && m >= config.high_threshold {
            edges[i] = 1;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (row, col) = ((i / w) as isize, (i % w) as isize);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (r, c) = (row + dr, col + dc);
                if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                    continue;
                }
                let j = r as usize * w + c as usize;
                if edges[j] == 0 && thin[j] > 0.0 && thin[j] >= config.low_threshold {
                    edges[j] = 1;
                    queue.push_back(j);
                }
            }
        }
    }
    EdgeMap::new(w, h, edges)
}
