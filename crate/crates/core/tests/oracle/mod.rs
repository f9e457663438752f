//! Straight-from-the-definitions reference implementations used as test oracles.
//!
//! Nothing here calls into the library's detector or metric code.
#![allow(dead_code, clippy::needless_range_loop)]

/// Bit -> (dy, dx) for the 3x3 window, written out by hand.
const CELLS_R1: [(i32, i32); 9] = [
    (0, 0),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

/// Bits 9..=24: outer ring of the 5x5 window, clockwise from two cells east.
const CELLS_R2_OUTER: [(i32, i32); 16] = [
    (0, 2),
    (1, 2),
    (2, 2),
    (2, 1),
    (2, 0),
    (2, -1),
    (2, -2),
    (1, -2),
    (0, -2),
    (-1, -2),
    (-2, -2),
    (-2, -1),
    (-2, 0),
    (-2, 1),
    (-2, 2),
    (-1, 2),
];

pub fn cell(bit: usize) -> (i32, i32) {
    if bit < 9 {
        CELLS_R1[bit]
    } else {
        CELLS_R2_OUTER[bit - 9]
    }
}

/// Offsets selected by rule `z` in a window of radius `r`.
pub fn mask(z: u32, r: u32) -> Vec<(i32, i32)> {
    let bits = ((2 * r + 1) * (2 * r + 1)) as usize;
    (0..bits).filter(|b| z >> b & 1 == 1).map(cell).collect()
}

/// Brute-force detector over a row-major image; pixels outside the image read as 0.
pub fn detect(pixels: &[u8], w: usize, h: usize, delta: u8, tau: f64, z: u32, r: u32) -> Vec<u8> {
    let offsets = mask(z, r);
    let at = |y: i64, x: i64| -> i64 {
        if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
            0
        } else {
            pixels[y as usize * w + x as usize] as i64
        }
    };
    let mut out = vec![0u8; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut phi = 0i64;
            for &(k, q) in &offsets {
                phi += (at(y, x) - at(y + k as i64, x + q as i64)).abs();
            }
            let denom = delta as i64 + phi;
            let mu = if denom == 0 { 0.0 } else { phi as f64 / denom as f64 };
            if mu > tau {
                out[y as usize * w + x as usize] = 1;
            }
        }
    }
    out
}

pub fn counts(a: &[u8], b: &[u8]) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..a.len() {
        match (a[i] != 0, b[i] != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

pub fn dsc(a: &[u8], b: &[u8]) -> f64 {
    let (tp, fp, fn_) = counts(a, b);
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

pub fn mse(a: &[u8], b: &[u8]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = 255.0 * x as f64 - 255.0 * y as f64;
            d * d
        })
        .sum();
    s / a.len() as f64
}

/// Windowed SSIM computed window by window with a two-pass variance.
pub fn ssim(a: &[u8], b: &[u8], w: usize, h: usize) -> f64 {
    const N: usize = 11;
    let sigma = 1.5f64;
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut weights = [[0.0f64; N]; N];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    for row in weights.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let px = |m: &[u8], y: usize, x: usize| 255.0 * m[y * w + x] as f64;
    let mut sum = 0.0;
    let mut windows = 0usize;
    for y0 in 0..=h - N {
        for x0 in 0..=w - N {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    mx += weights[i][j] * px(a, y0 + i, x0 + j);
                    my += weights[i][j] * px(b, y0 + i, x0 + j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let dx = px(a, y0 + i, x0 + j) - mx;
                    let dy = px(b, y0 + i, x0 + j) - my;
                    vx += weights[i][j] * dx * dx;
                    vy += weights[i][j] * dy * dy;
                    cxy += weights[i][j] * dx * dy;
                }
            }
            sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            windows += 1;
        }
    }
    sum / windows as f64
}

/// Small deterministic generator so oracle inputs do not depend on the library.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn bytes(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.next() as u8).collect()
    }

    pub fn bits(&mut self, n: usize, density: f64) -> Vec<u8> {
        (0..n).map(|_| u8::from(self.unit() < density)).collect()
    }
}
