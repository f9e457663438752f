//! The cellular-automaton edge detector.
//!
//! A rule number `z` selects a subset of the Moore neighborhood: every cell of
//! the `(2r+1) x (2r+1)` window is assigned a distinct power of two and `z` is
//! the sum of the selected cells' values. For each pixel the detector computes
//! `phi`, the sum of absolute differences to the selected neighbors, maps it to
//! `mu = phi / (delta + phi)` and marks an edge where `mu > tau`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{pad_zero, round_half_up, EdgeMap, GrayImage};

/// Moore neighborhood radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Radius {
    One,
    Two,
}

impl Radius {
    pub const ALL: [Radius; 2] = [Radius::One, Radius::Two];

    pub fn get(self) -> usize {
        match self {
            Radius::One => 1,
            Radius::Two => 2,
        }
    }

    /// Number of cells in the window, center included.
    pub fn cell_count(self) -> usize {
        let side = 2 * self.get() + 1;
        side * side
    }
}

impl TryFrom<u32> for Radius {
    type Error = Error;

    fn try_from(r: u32) -> Result<Self> {
        match r {
            1 => Ok(Radius::One),
            2 => Ok(Radius::Two),
            other => Err(Error::invalid(format!(
                "unsupported radius {other}; expected 1 or 2"
            ))),
        }
    }
}

impl From<Radius> for u32 {
    fn from(r: Radius) -> u32 {
        r.get() as u32
    }
}

impl fmt::Display for Radius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.get())
    }
}

/// Largest rule number for radius `r`: `2^((2r+1)^2) - 1`.
pub fn max_rule(r: Radius) -> u32 {
    ((1u64 << r.cell_count()) - 1) as u32
}

/// Same as [`max_rule`] for a raw radius value.
pub fn max_rule_for(r: u32) -> Result<u32> {
    Radius::try_from(r).map(max_rule)
}

/// Assignment of rule bits to neighborhood offsets `(dy, dx)`.
///
/// Bit 0 is always the central cell. Row offsets grow downwards.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellTable {
    radius: Radius,
    // indexed by bit
    offsets: Vec<(i32, i32)>,
}

const RING_ONE: [(i32, i32); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

const RING_TWO: [(i32, i32); 16] = [
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

impl CellTable {
    /// Center is bit 0, then each ring clockwise starting east, inner ring first.
    pub fn standard(radius: Radius) -> Self {
        let mut offsets = vec![(0, 0)];
        offsets.extend_from_slice(&RING_ONE);
        if radius == Radius::Two {
            offsets.extend_from_slice(&RING_TWO);
        }
        Self { radius, offsets }
    }

    /// Builds a table from `(bit, dy, dx)` triples in any order.
    pub fn from_entries(radius: Radius, entries: &[(u32, i32, i32)]) -> Result<Self> {
        let n = radius.cell_count();
        if entries.len() != n {
            return Err(Error::Config(format!(
                "cell table for radius {radius} needs {n} entries, got {}",
                entries.len()
            )));
        }
        let mut offsets = vec![None; n];
        let mut seen = HashSet::new();
        let r = radius.get() as i32;
        for &(bit, dy, dx) in entries {
            let slot = offsets
                .get_mut(bit as usize)
                .ok_or_else(|| Error::Config(format!("cell table bit {bit} out of range")))?;
            if slot.is_some() {
                return Err(Error::Config(format!("cell table repeats bit {bit}")));
            }
            if dy.abs() > r || dx.abs() > r {
                return Err(Error::Config(format!(
                    "cell table offset ({dy},{dx}) outside radius {radius}"
                )));
            }
            if !seen.insert((dy, dx)) {
                return Err(Error::Config(format!("cell table repeats offset ({dy},{dx})")));
            }
            *slot = Some((dy, dx));
        }
        let offsets: Vec<(i32, i32)> = offsets.into_iter().map(Option::unwrap).collect();
        if offsets[0] != (0, 0) {
            return Err(Error::Config("cell table bit 0 must be the central cell".into()));
        }
        Ok(Self { radius, offsets })
    }

    /// Parses a JSON array of `[bit, dy, dx]` triples.
    pub fn from_json(radius: Radius, json: &str) -> Result<Self> {
        let entries: Vec<(u32, i32, i32)> = serde_json::from_str(json)?;
        Self::from_entries(radius, &entries)
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<(u32, i32, i32)> = self
            .offsets
            .iter()
            .enumerate()
            .map(|(bit, &(dy, dx))| (bit as u32, dy, dx))
            .collect();
        serde_json::to_string(&entries).expect("table serializes")
    }

    pub fn radius(&self) -> Radius {
        self.radius
    }

    pub fn offset(&self, bit: usize) -> (i32, i32) {
        self.offsets[bit]
    }

    /// Bit assigned to `(dy, dx)`, if inside the window.
    pub fn bit_of(&self, offset: (i32, i32)) -> Option<usize> {
        self.offsets.iter().position(|&o| o == offset)
    }
}

/// The neighborhood subset selected by a rule number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleMask {
    radius: Radius,
    rule: u32,
    offsets: Vec<(i32, i32)>,
}

impl RuleMask {
    pub fn radius(&self) -> Radius {
        self.radius
    }

    pub fn rule(&self) -> u32 {
        self.rule
    }

    /// Selected offsets in increasing bit order.
    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    pub fn contains(&self, offset: (i32, i32)) -> bool {
        self.offsets.contains(&offset)
    }
}

/// Decodes rule `z` with `table`; bit `b` of `z` selects the cell valued `2^b`.
pub fn decode_rule(z: u32, table: &CellTable) -> Result<RuleMask> {
    let radius = table.radius;
    if z > max_rule(radius) {
        return Err(Error::invalid(format!(
            "rule {z} exceeds the maximum {} for radius {radius}",
            max_rule(radius)
        )));
    }
    let offsets = (0..radius.cell_count())
        .filter(|&bit| z >> bit & 1 == 1)
        .map(|bit| table.offset(bit))
        .collect();
    Ok(RuleMask {
        radius,
        rule: z,
        offsets,
    })
}

/// Rule number of a set of offsets; inverse of [`decode_rule`].
pub fn encode_rule(offsets: &[(i32, i32)], table: &CellTable) -> Result<u32> {
    offsets.iter().try_fold(0u32, |acc, &o| {
        table
            .bit_of(o)
            .map(|bit| acc | 1 << bit)
            .ok_or_else(|| Error::invalid(format!("offset {o:?} outside the neighborhood")))
    })
}

/// One detector configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorParams {
    pub delta: u8,
    pub tau: f64,
    pub mask: RuleMask,
}

impl DetectorParams {
    pub fn new(delta: u8, tau: f64, rule: u32, table: &CellTable) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid(format!("tau {tau} outside [0,1]")));
        }
        Ok(Self {
            delta,
            tau,
            mask: decode_rule(rule, table)?,
        })
    }

    pub fn radius(&self) -> Radius {
        self.mask.radius
    }

    pub fn rule(&self) -> u32 {
        self.mask.rule
    }

    pub fn record(&self) -> ParamsRecord {
        ParamsRecord {
            delta: self.delta,
            tau: self.tau,
            rule: self.mask.rule,
            radius: self.mask.radius,
        }
    }
}

/// Serialized form of [`DetectorParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub delta: u8,
    pub tau: f64,
    pub rule: u32,
    pub radius: Radius,
}

impl ParamsRecord {
    pub fn to_params(&self, table: &CellTable) -> Result<DetectorParams> {
        if table.radius() != self.radius {
            return Err(Error::Config(format!(
                "parameters use radius {} but the cell table is for radius {}",
                self.radius,
                table.radius()
            )));
        }
        DetectorParams::new(self.delta, self.tau, self.rule, table)
    }
}

/// Sum of absolute differences between pixel `(i, j)` of a padded image and
/// the neighbors selected by `mask`.
pub fn phi(padded: &GrayImage, i: usize, j: usize, mask: &RuleMask) -> Result<u32> {
    let r = mask.radius.get();
    if i < r || j < r || i + r >= padded.height() || j + r >= padded.width() {
        return Err(Error::invalid(format!(
            "pixel ({i},{j}) is closer than {r} to the border of a {}x{} image",
            padded.width(),
            padded.height()
        )));
    }
    let center = padded.get(i, j) as i32;
    Ok(mask
        .offsets
        .iter()
        .map(|&(dy, dx)| {
            let v = padded.get((i as i32 + dy) as usize, (j as i32 + dx) as usize) as i32;
            (center - v).unsigned_abs()
        })
        .sum())
}

/// First phase of the transition: `phi / (delta + phi)`, with `0/0` taken as 0.
#[inline]
pub fn mu(phi: u32, delta: u8) -> f64 {
    if phi == 0 {
        return 0.0;
    }
    let phi = phi as f64;
    phi / (delta as f64 + phi)
}

/// Runs one CA step over the whole image and returns the binary edge map.
pub fn detect_edges(img: &GrayImage, params: &DetectorParams) -> EdgeMap {
    let r = params.radius();
    let padded = pad_zero(img, r);
    let stride = padded.width() as isize;
    let deltas: Vec<isize> = params
        .mask
        .offsets
        .iter()
        .filter(|&&o| o != (0, 0))
        .map(|&(dy, dx)| dy as isize * stride + dx as isize)
        .collect();
    let src = padded.data();
    let r = r.get();
    let mut out = Vec::with_capacity(img.width() * img.height());
    for row in 0..img.height() {
        let base = (row + r) * padded.width() + r;
        for col in 0..img.width() {
            let idx = (base + col) as isize;
            let center = src[idx as usize] as i32;
            let phi: u32 = deltas
                .iter()
                .map(|&d| (center - src[(idx + d) as usize] as i32).unsigned_abs())
                .sum();
            out.push(u8::from(mu(phi, params.delta) > params.tau));
        }
    }
    EdgeMap::new(img.width(), img.height(), out).expect("dimensions match")
}

/// Maps a normalized position in `[0,1]^3` to detector parameters.
///
/// Coordinates are `(delta / 255, tau, rule / max_rule)`.
pub fn decode_particle(position: [f64; 3], table: &CellTable) -> DetectorParams {
    let unit = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    let zmax = max_rule(table.radius());
    let delta = round_half_up(unit(position[0]) * 255.0).clamp(0.0, 255.0) as u8;
    let tau = unit(position[1]);
    let rule = round_half_up(unit(position[2]) * zmax as f64).clamp(0.0, zmax as f64) as u32;
    DetectorParams {
        delta,
        tau,
        mask: decode_rule(rule, table).expect("rule clamped to range"),
    }
}
