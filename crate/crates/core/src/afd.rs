//! Active-fire detection: band-ratio indices, threshold maps, NDVI-difference
//! ground truth with morphological opening, and pixel classification scores.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::raster::{write_png, BandGrid, Scene};
use crate::resample::{downsample_box, ScaleFactor};
use crate::{Error, Result};

/// Value written where an index denominator is zero.
pub const ZERO_DENOMINATOR_SENTINEL: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AfiKind {
    /// B12 / B08
    Afi1,
    /// B11 / B08
    Afi2,
    /// B12 / B11
    Afi3,
}

impl AfiKind {
    pub const ALL: [AfiKind; 3] = [AfiKind::Afi1, AfiKind::Afi2, AfiKind::Afi3];

    pub fn from_index(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Self::Afi1),
            2 => Ok(Self::Afi2),
            3 => Ok(Self::Afi3),
            _ => Err(Error::InvalidArgument(format!(
                "AFI kind must be 1, 2 or 3, got {k}"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::Afi1 => 1,
            Self::Afi2 => 2,
            Self::Afi3 => 3,
        }
    }

    /// (numerator, denominator) band names.
    pub fn bands(self) -> (&'static str, &'static str) {
        match self {
            Self::Afi1 => ("B12", "B08"),
            Self::Afi2 => ("B11", "B08"),
            Self::Afi3 => ("B12", "B11"),
        }
    }
}

impl fmt::Display for AfiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AFI{}", self.index())
    }
}

impl FromStr for AfiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches("AFI").trim_start_matches("afi");
        let k: u8 = digits
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("unknown AFI kind {s:?}")))?;
        Self::from_index(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Greater,
    Less,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greater" | "gt" | ">" => Ok(Self::Greater),
            "less" | "lt" | "<" => Ok(Self::Less),
            _ => Err(Error::InvalidArgument(format!("unknown direction {s:?}"))),
        }
    }
}

/// Boolean raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "map dimensions must be positive, got {width}x{height}"
            )));
        }
        if bits.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} bits for a {width}x{height} map",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&true)
    }

    pub fn same_shape(&self, other: &BinaryMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// True where `self` is true and `other` is true.
    pub fn and(&self, other: &BinaryMap) -> Result<BinaryMap> {
        check_maps(self, other)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| *a && *b)
            .collect();
        Ok(Self { bits, ..*self })
    }

    /// Whether every true pixel of `self` is also true in `other`.
    pub fn is_subset_of(&self, other: &BinaryMap) -> bool {
        self.same_shape(other) && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// 0/1 band for SRAF storage.
    pub fn to_band(&self, name: impl Into<String>, gsd_m: f64) -> Result<BandGrid> {
        let values = self.bits.iter().map(|&b| f64::from(u8::from(b))).collect();
        BandGrid::new(name, self.width, self.height, gsd_m, values)
    }

    /// Reads a band as a map: nonzero pixels are true.
    pub fn from_band(band: &BandGrid) -> Self {
        Self {
            width: band.width(),
            height: band.height(),
            bits: band.values().iter().map(|v| *v != 0.0).collect(),
        }
    }

    /// Writes a 1-bit grayscale PNG, white for true.
    pub fn export_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let stride = self.width.div_ceil(8);
        let mut data = vec![0u8; stride * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    data[y * stride + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        write_png(
            path.as_ref(),
            self.width,
            self.height,
            png::ColorType::Grayscale,
            png::BitDepth::One,
            &data,
        )
    }
}

fn check_maps(a: &BinaryMap, b: &BinaryMap) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "maps are {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}

fn check_bands(a: &BandGrid, b: &BandGrid) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{} is {}x{} but {} is {}x{}",
            a.name(),
            a.width(),
            a.height(),
            b.name(),
            b.width(),
            b.height()
        )))
    }
}

/// Normalised difference vegetation index; 0 where `nir + red == 0`.
pub fn ndvi(nir: &BandGrid, red: &BandGrid) -> Result<BandGrid> {
    check_bands(nir, red)?;
    let values = nir
        .values()
        .iter()
        .zip(red.values())
        .map(|(n, r)| {
            let s = n + r;
            if s == 0.0 {
                0.0
            } else {
                (n - r) / s
            }
        })
        .collect();
    BandGrid::signed("NDVI", nir.width(), nir.height(), nir.gsd_m(), values)
}

/// An index raster together with the pixels whose denominator was zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AfiMap {
    pub index: BandGrid,
    pub zero_denominator: BinaryMap,
}

/// Elementwise `numerator / denominator`.
pub fn band_ratio(name: &str, numerator: &BandGrid, denominator: &BandGrid) -> Result<AfiMap> {
    check_bands(numerator, denominator)?;
    let mut zero = Vec::with_capacity(numerator.values().len());
    let values = numerator
        .values()
        .iter()
        .zip(denominator.values())
        .map(|(n, d)| {
            zero.push(*d == 0.0);
            if *d == 0.0 {
                ZERO_DENOMINATOR_SENTINEL
            } else {
                n / d
            }
        })
        .collect();
    Ok(AfiMap {
        index: numerator.with_values(name, values)?,
        zero_denominator: BinaryMap::new(numerator.width(), numerator.height(), zero)?,
    })
}

/// Looks up `name`, preferring a super-resolved `<name>_sr` band.
fn pick<'a>(scene: &'a Scene, name: &str) -> Result<&'a BandGrid> {
    scene
        .get(&format!("{name}_sr"))
        .map_or_else(|| scene.band(name), Ok)
}

/// Computes an index from a scene. Super-resolved SWIR bands are used when
/// present. If the operands still sit on different grids the finer one is
/// box-averaged onto the coarser grid.
pub fn compute_afi(kind: AfiKind, scene: &Scene) -> Result<AfiMap> {
    let (num_name, den_name) = kind.bands();
    let num = pick(scene, num_name)?;
    let den = pick(scene, den_name)?;
    let name = kind.to_string();
    if num.same_shape(den) {
        return band_ratio(&name, num, den);
    }
    let (fine, coarse) = if num.gsd_m() < den.gsd_m() {
        (num, den)
    } else {
        (den, num)
    };
    let r = (coarse.gsd_m() / fine.gsd_m()).round() as usize;
    let reduced = downsample_box(fine, ScaleFactor::new(r)?)?;
    check_bands(&reduced, coarse)?;
    if std::ptr::eq(fine, num) {
        band_ratio(&name, &reduced, den)
    } else {
        band_ratio(&name, num, &reduced)
    }
}

/// `index > alpha` or `index < alpha`.
pub fn threshold_map(index: &BandGrid, alpha: f64, direction: Direction) -> Result<BinaryMap> {
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "threshold must be finite, got {alpha}"
        )));
    }
    let bits = index
        .values()
        .iter()
        .map(|&v| match direction {
            Direction::Greater => v > alpha,
            Direction::Less => v < alpha,
        })
        .collect();
    BinaryMap::new(index.width(), index.height(), bits)
}

/// One pass of a 1-D square-window filter along rows (`horizontal`) or
/// columns. `erode` takes the AND over the window, otherwise the OR;
/// out-of-bounds pixels read as false.
fn window_pass(map: &BinaryMap, r: usize, horizontal: bool, erode: bool) -> Vec<bool> {
    let (w, h) = (map.width, map.height);
    let mut out = vec![false; w * h];
    let (len, lines) = if horizontal { (w, h) } else { (h, w) };
    let idx = |line: usize, i: usize| {
        if horizontal {
            line * w + i
        } else {
            i * w + line
        }
    };
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for i in 0..len {
            prefix[i + 1] = prefix[i] + usize::from(map.bits[idx(line, i)]);
        }
        for i in 0..len {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(len);
            let ones = prefix[hi] - prefix[lo];
            out[idx(line, i)] = if erode { ones == 2 * r + 1 } else { ones > 0 };
        }
    }
    out
}

fn square_filter(map: &BinaryMap, r: usize, erode: bool) -> BinaryMap {
    let rows = BinaryMap {
        bits: window_pass(map, r, true, erode),
        ..*map
    };
    BinaryMap {
        bits: window_pass(&rows, r, false, erode),
        ..*map
    }
}

pub fn erode(map: &BinaryMap, radius: usize) -> BinaryMap {
    square_filter(map, radius, true)
}

pub fn dilate(map: &BinaryMap, radius: usize) -> BinaryMap {
    square_filter(map, radius, false)
}

/// Erosion then dilation with a `(2r+1)^2` square.
pub fn morph_open(map: &BinaryMap, radius: usize) -> BinaryMap {
    dilate(&erode(map, radius), radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GtConfig {
    pub ndvi_delta_threshold: f64,
    pub opening_radius: usize,
}

impl Default for GtConfig {
    fn default() -> Self {
        Self {
            ndvi_delta_threshold: 0.2,
            opening_radius: 1,
        }
    }
}

pub const NIR_BAND: &str = "B08";
pub const RED_BAND: &str = "B04";

/// Burned-area mask from the NDVI drop between two acquisitions.
pub fn build_ground_truth(before: &Scene, after: &Scene, cfg: &GtConfig) -> Result<BinaryMap> {
    let pre = ndvi(before.band(NIR_BAND)?, before.band(RED_BAND)?)?;
    let post = ndvi(after.band(NIR_BAND)?, after.band(RED_BAND)?)?;
    check_bands(&pre, &post)?;
    let delta: Vec<f64> = pre
        .values()
        .iter()
        .zip(post.values())
        .map(|(a, b)| a - b)
        .collect();
    let delta = BandGrid::signed("dNDVI", pre.width(), pre.height(), pre.gsd_m(), delta)?;
    let raw = threshold_map(&delta, cfg.ndvi_delta_threshold, Direction::Greater)?;
    Ok(morph_open(&raw, cfg.opening_radius))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Precision, recall and IoU. A 0/0 ratio is 1 when both maps are empty and
/// 0 otherwise.
pub fn classification_scores(pred: &BinaryMap, gt: &BinaryMap) -> Result<Scores> {
    check_maps(pred, gt)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.bits.iter().zip(&gt.bits) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let both_empty = tp + fp + fn_ == 0;
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            if both_empty {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };
    Ok(Scores {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        iou: ratio(tp, tp + fp + fn_),
        tp,
        fp,
        fn_,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Position of the first row with the highest IoU.
    pub best: usize,
}

impl Sweep {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,precision,recall,iou\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.alpha, r.precision, r.recall, r.iou
            ));
        }
        s
    }
}

/// Scores the threshold map of `index` at every alpha.
pub fn sweep_thresholds(
    index: &BandGrid,
    gt: &BinaryMap,
    alphas: &[f64],
    direction: Direction,
) -> Result<Sweep> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("threshold list is empty".into()));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    let mut best = 0;
    for &alpha in alphas {
        let s = classification_scores(&threshold_map(index, alpha, direction)?, gt)?;
        if s.iou
            > rows
                .get(best)
                .map_or(f64::NEG_INFINITY, |r: &SweepRow| r.iou)
        {
            best = rows.len();
        }
        rows.push(SweepRow {
            alpha,
            precision: s.precision,
            recall: s.recall,
            iou: s.iou,
        });
    }
    Ok(Sweep { rows, best })
}
