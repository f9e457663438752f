//! Grayscale images, binary edge maps and annotator probability maps, plus the
//! preprocessing steps applied before detection.

use crate::ca::Radius;
use crate::error::{Error, Result};

/// 8-bit grayscale image stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "gray image buffer has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image from a `(row, col) -> intensity` function.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn rotate90_cw(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |row, col| self.get(h - 1 - col, row))
    }

    /// Removes a band of `border` pixels from every side.
    pub fn crop_border(&self, border: usize) -> Result<Self> {
        if 2 * border > self.width || 2 * border > self.height {
            return Err(Error::invalid("crop border exceeds image size"));
        }
        Ok(Self::from_fn(
            self.width - 2 * border,
            self.height - 2 * border,
            |row, col| self.get(row + border, col + border),
        ))
    }
}

/// Binary edge map; every value is 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl EdgeMap {
    /// Values must already be in {0,1}.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "edge map buffer has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("edge map values must be 0 or 1"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(u8::from(f(row, col)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Binarizes an 8-bit buffer: any nonzero value is an edge.
    pub fn from_intensities(width: usize, height: usize, values: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            values.iter().map(|&v| u8::from(v > 0)).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    pub fn edge_count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// True if every edge of `self` is also an edge of `other`.
    pub fn is_subset_of(&self, other: &EdgeMap) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| a <= b)
    }

    /// The map scaled to {0,255}, as used by PSNR/SSIM and PNG output.
    pub fn to_intensities(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v * 255).collect()
    }

    pub fn rotate90_cw(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |row, col| self.get(h - 1 - col, row))
    }

    pub fn rotate90_ccw(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |row, col| self.get(col, w - 1 - row))
    }

    pub(crate) fn same_shape(&self, other: &EdgeMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel fraction of annotators marking an edge.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("probability map buffer has wrong length"));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("probabilities must lie in [0,1]"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
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

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Area-weighted resampling to `width x height`.
    ///
    /// Each output pixel receives the mean probability over the source area it
    /// covers, so thin annotated lines survive heavy downscaling as low but
    /// nonzero probabilities.
    pub fn resize_area(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || self.data.is_empty() {
            return Err(Error::invalid("cannot resample an empty probability map"));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let wx = area_weights(self.width, width);
        let wy = area_weights(self.height, height);
        // Horizontal pass, then vertical.
        let mut tmp = vec![0.0; width * self.height];
        for row in 0..self.height {
            let src = &self.data[row * self.width..(row + 1) * self.width];
            for (col, taps) in wx.iter().enumerate() {
                tmp[row * width + col] = taps.iter().map(|&(i, w)| src[i] * w).sum();
            }
        }
        let mut data = vec![0.0; width * height];
        for (row, taps) in wy.iter().enumerate() {
            for col in 0..width {
                let v: f64 = taps.iter().map(|&(i, w)| tmp[i * width + col] * w).sum();
                data[row * width + col] = v.clamp(0.0, 1.0);
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn rotate90_cw(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut data = Vec::with_capacity(w * h);
        for row in 0..w {
            for col in 0..h {
                data.push(self.get(h - 1 - col, row));
            }
        }
        Self {
            width: h,
            height: w,
            data,
        }
    }
}

/// Per output index, the (source index, weight) pairs of a box filter whose
/// weights sum to 1.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let start = i as f64 * scale;
            let end = (i + 1) as f64 * scale;
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(src);
            let mut taps: Vec<(usize, f64)> = (first..last)
                .map(|s| {
                    let lo = start.max(s as f64);
                    let hi = end.min((s + 1) as f64);
                    (s, (hi - lo).max(0.0) / scale)
                })
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

#[inline]
pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Converts an interleaved 8-bit buffer with `channels` values per pixel to
/// luma using BT.601 weights.
pub fn to_grayscale(width: usize, height: usize, channels: usize, data: &[u8]) -> Result<GrayImage> {
    if channels != 3 {
        return Err(Error::invalid(format!(
            "expected 3 color channels, got {channels}"
        )));
    }
    if data.len() != width * height * 3 {
        return Err(Error::invalid("rgb buffer length does not match dimensions"));
    }
    let gray = data
        .chunks_exact(3)
        .map(|px| {
            let luma = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            round_half_up(luma).clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(width, height, gray)
}

/// Rotates portrait images 90° clockwise so that `width >= height`.
pub fn standardize_orientation(img: &GrayImage) -> GrayImage {
    if img.height > img.width {
        img.rotate90_cw()
    } else {
        img.clone()
    }
}

/// Output dimensions when the larger side is scaled to `max_side`.
pub fn fit_dimensions(width: usize, height: usize, max_side: usize) -> (usize, usize) {
    let scaled = |small: usize, large: usize| {
        (round_half_up(small as f64 * max_side as f64 / large as f64) as usize).max(1)
    };
    if width >= height {
        (max_side, scaled(height, width))
    } else {
        (scaled(width, height), max_side)
    }
}

/// Bilinear resize keeping the aspect ratio, with the larger side set to `max_side`.
///
/// Sampling is pixel-center aligned and edge-clamped; results are rounded half up.
pub fn resize_max_side(img: &GrayImage, max_side: usize) -> Result<GrayImage> {
    if img.is_empty() {
        return Err(Error::invalid("cannot resize an empty image"));
    }
    if max_side == 0 {
        return Err(Error::invalid("max_side must be at least 1"));
    }
    let (w, h) = fit_dimensions(img.width, img.height, max_side);
    if (w, h) == (img.width, img.height) {
        return Ok(img.clone());
    }
    let xs = bilinear_taps(img.width, w);
    let ys = bilinear_taps(img.height, h);
    Ok(GrayImage::from_fn(w, h, |row, col| {
        let (y0, y1, fy) = ys[row];
        let (x0, x1, fx) = xs[col];
        let top = img.get(y0, x0) as f64 * (1.0 - fx) + img.get(y0, x1) as f64 * fx;
        let bottom = img.get(y1, x0) as f64 * (1.0 - fx) + img.get(y1, x1) as f64 * fx;
        let v = top * (1.0 - fy) + bottom * fy;
        round_half_up(v).clamp(0.0, 255.0) as u8
    }))
}

fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Zero-pads the image by `r` pixels on each side.
pub fn pad_zero(img: &GrayImage, r: Radius) -> GrayImage {
    let r = r.get();
    let width = img.width + 2 * r;
    GrayImage::from_fn(width, img.height + 2 * r, |row, col| {
        if row < r || col < r || row >= img.height + r || col >= img.width + r {
            0
        } else {
            img.get(row - r, col - r)
        }
    })
}

/// Zero-pads to a `side x side` canvas with the image centered.
pub fn letterbox_square(img: &GrayImage, side: usize) -> Result<GrayImage> {
    if img.width > side || img.height > side {
        return Err(Error::invalid(format!(
            "{}x{} image does not fit a {side}x{side} canvas",
            img.width, img.height
        )));
    }
    let left = (side - img.width) / 2;
    let top = (side - img.height) / 2;
    Ok(GrayImage::from_fn(side, side, |row, col| {
        if row < top || col < left || row >= top + img.height || col >= left + img.width {
            0
        } else {
            img.get(row - top, col - left)
        }
    }))
}

/// Same placement as [`letterbox_square`], for edge maps.
pub fn letterbox_edges(map: &EdgeMap, side: usize) -> Result<EdgeMap> {
    if map.width > side || map.height > side {
        return Err(Error::invalid("edge map does not fit the square canvas"));
    }
    let left = (side - map.width) / 2;
    let top = (side - map.height) / 2;
    Ok(EdgeMap::from_fn(side, side, |row, col| {
        row >= top
            && col >= left
            && row < top + map.height
            && col < left + map.width
            && map.get(row - top, col - left)
    }))
}

/// Per-pixel mean of several annotators' binary maps.
pub fn average_annotations(maps: &[EdgeMap]) -> Result<ProbabilityMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::invalid("at least one annotation map is required"))?;
    if maps.iter().any(|m| !m.same_shape(first)) {
        return Err(Error::invalid("annotation maps differ in dimensions"));
    }
    let n = maps.len() as f64;
    let data = (0..first.data.len())
        .map(|i| maps.iter().map(|m| m.data[i] as u32).sum::<u32>() as f64 / n)
        .collect();
    Ok(ProbabilityMap {
        width: first.width,
        height: first.height,
        data,
    })
}

/// Pixels whose probability is strictly above `p` become edges.
pub fn threshold_probability(pmap: &ProbabilityMap, p: f64) -> EdgeMap {
    EdgeMap {
        width: pmap.width,
        height: pmap.height,
        data: pmap.data.iter().map(|&v| u8::from(v > p)).collect(),
    }
}
