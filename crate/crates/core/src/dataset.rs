//! Manifest parsing, PNG input/output and dataset preprocessing.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{
    average_annotations, letterbox_edges, letterbox_square, resize_max_side,
    standardize_orientation, threshold_probability, to_grayscale, EdgeMap, GrayImage,
};

/// Image category labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Animals,
    Landscapes,
    Objects,
    People,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Animals,
        Category::Landscapes,
        Category::Objects,
        Category::People,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Animals => "animals",
            Category::Landscapes => "landscapes",
            Category::Objects => "objects",
            Category::People => "people",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown category {s:?}; expected animals, landscapes, objects or people"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub annotations: Vec<PathBuf>,
    pub category: Category,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct ManifestRow {
    image: String,
    annotations: String,
    category: String,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<Category, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.category).or_insert(0) += 1;
        }
        out
    }
}

/// Reads a `image,annotations,category` CSV. Relative paths resolve against
/// the manifest's directory; `annotations` is a `;`-separated list.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut entries = Vec::new();
    for (line, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| Error::data(path, e.to_string()))?;
        let at = |msg: String| Error::data(path, format!("entry {}: {msg}", line + 1));
        let category = row.category.parse::<Category>().map_err(|e| at(e.to_string()))?;
        let resolve = |p: &str| -> Result<PathBuf> {
            let p = base.join(p);
            if p.is_file() {
                Ok(p)
            } else {
                Err(at(format!("{} does not exist", p.display())))
            }
        };
        let image = resolve(&row.image)?;
        let annotations = row
            .annotations
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(resolve)
            .collect::<Result<Vec<_>>>()?;
        if annotations.is_empty() {
            return Err(at("no annotation maps listed".into()));
        }
        entries.push(ManifestEntry {
            image,
            annotations,
            category,
        });
    }
    Ok(DatasetManifest { entries })
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads any supported image as 8-bit grayscale; color images go through luma conversion.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = open(path)?;
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        to_grayscale(w, h, 3, rgb.as_raw())
    } else {
        let l = img.to_luma8();
        GrayImage::new(l.width() as usize, l.height() as usize, l.into_raw())
    }
}

/// Loads a binary map; every nonzero pixel is an edge.
pub fn load_edge_map(path: impl AsRef<Path>) -> Result<EdgeMap> {
    let l = open(path.as_ref())?.to_luma8();
    EdgeMap::from_intensities(l.width() as usize, l.height() as usize, l.as_raw())
}

fn save_luma(path: &Path, width: usize, height: usize, data: Vec<u8>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let buf = image::GrayImage::from_raw(width as u32, height as u32, data)
        .expect("buffer matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes the map as an 8-bit PNG with values {0,255}.
pub fn save_edge_map(path: impl AsRef<Path>, map: &EdgeMap) -> Result<()> {
    save_luma(path.as_ref(), map.width(), map.height(), map.to_intensities())
}

pub fn save_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    save_luma(path.as_ref(), img.width(), img.height(), img.data().to_vec())
}

/// Preprocessing applied while loading a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    /// Larger output side; `None` keeps the original size.
    pub max_side: Option<usize>,
    /// Zero-pad to a `max_side x max_side` square after resizing.
    pub square: bool,
    /// Annotator-probability threshold `p`; pixels with probability `> p` are edges.
    pub prob_threshold: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            max_side: Some(128),
            square: false,
            prob_threshold: 0.02,
        }
    }
}

/// One preprocessed image with its ground-truth edge map.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub category: Category,
    pub image: GrayImage,
    pub truth: EdgeMap,
}

fn preprocess_entry(entry: &ManifestEntry, pre: &Preprocess) -> Result<(GrayImage, EdgeMap)> {
    let raw = load_image(&entry.image)?;
    let portrait = raw.height() > raw.width();
    let mut image = standardize_orientation(&raw);
    if let Some(side) = pre.max_side {
        image = resize_max_side(&image, side)?;
    }

    let maps = entry
        .annotations
        .iter()
        .map(|p| {
            let m = load_edge_map(p)?;
            if (m.width(), m.height()) != (raw.width(), raw.height()) {
                return Err(Error::data(
                    p,
                    format!(
                        "annotation is {}x{} but the image is {}x{}",
                        m.width(),
                        m.height(),
                        raw.width(),
                        raw.height()
                    ),
                ));
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut prob = average_annotations(&maps)?;
    if portrait {
        prob = prob.rotate90_cw();
    }
    let prob = prob.resize_area(image.width(), image.height())?;
    let mut truth = threshold_probability(&prob, pre.prob_threshold);

    if pre.square {
        let side = pre.max_side.unwrap_or(image.width().max(image.height()));
        image = letterbox_square(&image, side)?;
        truth = letterbox_edges(&truth, side)?;
    }
    Ok((image, truth))
}

/// Ordered collection of samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    /// Loads and preprocesses every manifest entry, preserving manifest order.
    pub fn load(manifest: &DatasetManifest, pre: &Preprocess) -> Result<Self> {
        if !(0.0..=1.0).contains(&pre.prob_threshold) {
            return Err(Error::Config(format!(
                "probability threshold {} outside [0,1]",
                pre.prob_threshold
            )));
        }
        let ids = unique_ids(manifest);
        let samples = manifest
            .entries
            .par_iter()
            .zip(ids)
            .map(|(entry, id)| {
                let (image, truth) = preprocess_entry(entry, pre)?;
                Ok(Sample {
                    id,
                    category: entry.category,
                    image,
                    truth,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Categories that occur in the dataset, in canonical order.
    pub fn categories(&self) -> Vec<Category> {
        Category::ALL
            .into_iter()
            .filter(|c| self.samples.iter().any(|s| s.category == *c))
            .collect()
    }

    pub fn category(&self, category: Category) -> Vec<Sample> {
        self.samples
            .iter()
            .filter(|s| s.category == category)
            .cloned()
            .collect()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<Sample> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }

    /// Writes images, ground truth and a single-annotation manifest to `dir`.
    pub fn write_preprocessed(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["image", "annotations", "category"])?;
        for s in &self.samples {
            let img = format!("images/{}.png", s.id);
            let gt = format!("annotations/{}.png", s.id);
            save_gray(dir.join(&img), &s.image)?;
            save_edge_map(dir.join(&gt), &s.truth)?;
            writer.write_record([img.as_str(), gt.as_str(), s.category.as_str()])?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        let manifest = dir.join("manifest.csv");
        fs::write(&manifest, bytes).map_err(|e| Error::io(&manifest, e))?;
        Ok(manifest)
    }
}

fn unique_ids(manifest: &DatasetManifest) -> Vec<String> {
    let mut seen = HashSet::new();
    manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let stem = e
                .image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("image{i}"));
            let id = if seen.contains(&stem) {
                format!("{stem}-{i}")
            } else {
                stem
            };
            seen.insert(id.clone());
            id
        })
        .collect()
}
