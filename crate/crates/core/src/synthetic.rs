//! Procedural scenes with multi-annotator boundary maps.
//!
//! Used as fixtures by tests and demos when no annotated photographs are at
//! hand. A scene is a stack of shaded shapes over a gradient background, with
//! optional striped texture and sensor noise. Annotators trace the shape
//! boundaries; each one skips some shapes and shifts some boundary pixels.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{save_edge_map, save_gray, Category};
use crate::error::{Error, Result};
use crate::image::{EdgeMap, GrayImage};

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub annotators: usize,
    /// Amplitude of the additive noise, in gray levels.
    pub noise: f64,
    /// Chance that an annotator leaves out a shape's outline.
    pub skip_shape: f64,
    /// Chance that an annotated pixel is shifted by one pixel.
    pub jitter: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 64,
            annotators: 5,
            noise: 6.0,
            skip_shape: 0.2,
            jitter: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
    Rect { top: f64, left: f64, bottom: f64, right: f64 },
    // everything below the line y = a + b x
    Horizon { a: f64, b: f64, wave: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Ellipse { cy, cx, ry, rx } => {
                let (dy, dx) = ((y - cy) / ry, (x - cx) / rx);
                dy * dy + dx * dx <= 1.0
            }
            Shape::Rect {
                top,
                left,
                bottom,
                right,
            } => y >= top && y <= bottom && x >= left && x <= right,
            Shape::Horizon { a, b, wave } => y >= a + b * x + wave * (x / 7.0).sin(),
        }
    }
}

struct Layer {
    shape: Shape,
    level: f64,
    stripes: Option<(f64, f64)>,
}

fn random_shape(rng: &mut ChaCha8Rng, category: Category, w: f64, h: f64) -> Shape {
    let side = w.min(h);
    match category {
        Category::Landscapes => Shape::Horizon {
            a: rng.gen_range(0.25..0.8) * h,
            b: rng.gen_range(-0.3..0.3),
            wave: rng.gen_range(0.0..3.0),
        },
        Category::Objects if rng.gen_bool(0.6) => {
            let (hh, hw) = (rng.gen_range(0.15..0.35) * h, rng.gen_range(0.1..0.3) * w);
            let (cy, cx) = (rng.gen_range(0.2..0.8) * h, rng.gen_range(0.2..0.8) * w);
            Shape::Rect {
                top: cy - hh,
                left: cx - hw,
                bottom: cy + hh,
                right: cx + hw,
            }
        }
        Category::People => Shape::Ellipse {
            cy: rng.gen_range(0.2..0.8) * h,
            cx: rng.gen_range(0.15..0.85) * w,
            ry: rng.gen_range(0.15..0.35) * side,
            rx: rng.gen_range(0.1..0.22) * side,
        },
        _ => Shape::Ellipse {
            cy: rng.gen_range(0.1..0.9) * h,
            cx: rng.gen_range(0.1..0.9) * w,
            ry: rng.gen_range(0.08..0.3) * side,
            rx: rng.gen_range(0.08..0.3) * side,
        },
    }
}

/// Generates one scene and its per-annotator boundary maps.
pub fn scene(seed: u64, category: Category, cfg: &SceneConfig) -> Result<(GrayImage, Vec<EdgeMap>)> {
    if cfg.width < 2 || cfg.height < 2 || cfg.annotators == 0 {
        return Err(Error::invalid("scene needs at least 2x2 pixels and one annotator"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let shape_count = match category {
        Category::Landscapes => rng.gen_range(2..4),
        Category::Objects => rng.gen_range(1..3),
        _ => rng.gen_range(2..5),
    };
    let layers: Vec<Layer> = (0..shape_count)
        .map(|_| Layer {
            shape: random_shape(&mut rng, category, w, h),
            level: rng.gen_range(20.0..235.0),
            stripes: rng
                .gen_bool(0.35)
                .then(|| (rng.gen_range(4.0..14.0), rng.gen_range(2.5..6.0))),
        })
        .collect();
    let background = rng.gen_range(40.0..200.0);
    let tilt = rng.gen_range(-40.0..40.0);

    let mut labels = vec![0usize; cfg.width * cfg.height];
    let mut pixels = Vec::with_capacity(cfg.width * cfg.height);
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let (y, x) = (row as f64 + 0.5, col as f64 + 0.5);
            let top = layers.iter().rposition(|l| l.shape.contains(y, x));
            let mut v = background + tilt * (x / w - 0.5);
            if let Some(i) = top {
                labels[row * cfg.width + col] = i + 1;
                let l = &layers[i];
                v = l.level + 0.1 * tilt * (y / h - 0.5);
                if let Some((amp, period)) = l.stripes {
                    v += amp * (std::f64::consts::TAU * (x + y) / period).sin();
                }
            }
            let noise: f64 = (0..3).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() / 3.0;
            pixels.push((v + cfg.noise * noise).round().clamp(0.0, 255.0) as u8);
        }
    }
    let image = GrayImage::new(cfg.width, cfg.height, pixels)?;

    let label = |r: usize, c: usize| labels[r * cfg.width + c];
    // boundary pixels tagged with the upper layer that causes them
    let mut boundary = Vec::new();
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let here = label(row, col);
            let right = (col + 1 < cfg.width).then(|| label(row, col + 1));
            let down = (row + 1 < cfg.height).then(|| label(row + 1, col));
            for other in [right, down].into_iter().flatten() {
                if other != here {
                    boundary.push((row, col, here.max(other)));
                    break;
                }
            }
        }
    }

    let annotations = (0..cfg.annotators)
        .map(|_| {
            let skipped: Vec<bool> = (0..=layers.len()).map(|_| rng.gen_bool(cfg.skip_shape)).collect();
            let mut data = vec![0u8; cfg.width * cfg.height];
            for &(row, col, layer) in &boundary {
                if skipped[layer] {
                    continue;
                }
                let (mut r, mut c) = (row as isize, col as isize);
                if rng.gen_bool(cfg.jitter) {
                    r += rng.gen_range(-1..=1);
                    c += rng.gen_range(-1..=1);
                }
                let r = r.clamp(0, cfg.height as isize - 1) as usize;
                let c = c.clamp(0, cfg.width as isize - 1) as usize;
                data[r * cfg.width + c] = 1;
            }
            EdgeMap::new(cfg.width, cfg.height, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((image, annotations))
}

/// Writes `count` scenes, their annotator maps and a `manifest.csv` under
/// `dir`, cycling through the four categories. Returns the manifest path.
pub fn write_dataset(dir: impl AsRef<Path>, count: usize, seed: u64, cfg: &SceneConfig) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("image,annotations,category\n");
    for i in 0..count {
        let category = Category::ALL[i % Category::ALL.len()];
        let (image, maps) = scene(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), category, cfg)?;
        let name = format!("scene{i:03}");
        save_gray(dir.join(format!("{name}.png")), &image)?;
        let mut refs = Vec::new();
        for (k, m) in maps.iter().enumerate() {
            let file = format!("{name}_a{k}.png");
            save_edge_map(dir.join(&file), m)?;
            refs.push(file);
        }
        manifest.push_str(&format!("{name}.png,{},{category}\n", refs.join(";")));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
