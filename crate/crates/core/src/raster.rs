//! Band grids, multi-resolution scenes and their on-disk forms.
//!
//! A [`BandGrid`] is one spectral band on a regular grid. A [`Scene`] groups
//! bands that cover the same ground footprint at possibly different sampling
//! distances. Scenes are persisted as SRAF files, one file per sampling
//! distance:
//!
//! ```text
//! "SRAF" | version u16 = 1 | band_count u16 | width u32 | height u32 | gsd_m f32
//!        | band_count x (name_len u8, name bytes)
//!        | band-major, row-major f32 payload
//! ```
//!
//! All integers and floats are little-endian. Values are held as `f64` in
//! memory and narrowed to `f32` on save, so grids that were loaded from SRAF
//! round-trip bit-for-bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub const SRAF_MAGIC: &[u8; 4] = b"SRAF";
pub const SRAF_VERSION: u16 = 1;

/// One spectral band sampled on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BandGrid {
    name: String,
    width: usize,
    height: usize,
    gsd_m: f64,
    values: Vec<f64>,
}

impl BandGrid {
    pub fn new(
        name: impl Into<String>,
        width: usize,
        height: usize,
        gsd_m: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::checked(name.into(), width, height, gsd_m, values, false)
    }

    /// Grid for derived quantities that may be negative, such as NDVI.
    /// Values must still be finite.
    pub fn signed(
        name: impl Into<String>,
        width: usize,
        height: usize,
        gsd_m: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::checked(name.into(), width, height, gsd_m, values, true)
    }

    fn checked(
        name: String,
        width: usize,
        height: usize,
        gsd_m: f64,
        values: Vec<f64>,
        allow_negative: bool,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "band {name}: dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(gsd_m.is_finite() && gsd_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "band {name}: gsd must be positive, got {gsd_m}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "band {name}: {} values for a {width}x{height} grid",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (allow_negative || **v >= 0.0)))
        {
            let what = if allow_negative {
                "finite"
            } else {
                "finite non-negative"
            };
            return Err(Error::InvalidValue(format!(
                "band {name}: value {v} at index {i} is not a {what} number"
            )));
        }
        Ok(Self {
            name,
            width,
            height,
            gsd_m,
            values,
        })
    }

    /// Constant grid, mostly useful for tests and fixtures.
    pub fn filled(
        name: impl Into<String>,
        width: usize,
        height: usize,
        gsd_m: f64,
        value: f64,
    ) -> Result<Self> {
        Self::new(name, width, height, gsd_m, vec![value; width * height])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn gsd_m(&self) -> f64 {
        self.gsd_m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_shape(&self, other: &BandGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Builds a grid of the same geometry with new values.
    pub fn with_values(&self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(name, self.width, self.height, self.gsd_m, values)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Bands of one acquisition, keyed by band identifier.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    bands: BTreeMap<String, BandGrid>,
    pub acquisition_label: String,
}

impl Scene {
    pub fn new(acquisition_label: impl Into<String>) -> Self {
        Self {
            bands: BTreeMap::new(),
            acquisition_label: acquisition_label.into(),
        }
    }

    pub fn from_bands(
        acquisition_label: impl Into<String>,
        bands: impl IntoIterator<Item = BandGrid>,
    ) -> Result<Self> {
        let mut scene = Self::new(acquisition_label);
        for band in bands {
            scene.insert(band)?;
        }
        Ok(scene)
    }

    /// Adds or replaces a band, rejecting it if its footprint disagrees with
    /// the bands already present.
    pub fn insert(&mut self, band: BandGrid) -> Result<()> {
        for other in self.bands.values().filter(|b| b.name != band.name) {
            check_compatible(other, &band)?;
        }
        self.bands.insert(band.name.clone(), band);
        Ok(())
    }

    pub fn band(&self, name: &str) -> Result<&BandGrid> {
        self.bands
            .get(name)
            .ok_or_else(|| Error::MissingBand(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&BandGrid> {
        self.bands.get(name)
    }

    pub fn bands(&self) -> impl Iterator<Item = &BandGrid> {
        self.bands.values()
    }

    pub fn band_names(&self) -> impl Iterator<Item = &str> {
        self.bands.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Sub-scene holding only the named bands.
    pub fn select(&self, names: &[&str]) -> Result<Scene> {
        let mut out = Scene::new(self.acquisition_label.clone());
        for name in names {
            out.bands.insert(name.to_string(), self.band(name)?.clone());
        }
        Ok(out)
    }

    /// Merges all bands of `other` into `self`.
    pub fn merge(&mut self, other: Scene) -> Result<()> {
        for band in other.bands.into_values() {
            self.insert(band)?;
        }
        Ok(())
    }

    /// Bands grouped by sampling distance, finest first.
    pub fn resolution_groups(&self) -> Vec<(f64, Vec<&BandGrid>)> {
        let mut groups: Vec<(f64, Vec<&BandGrid>)> = Vec::new();
        for band in self.bands.values() {
            match groups.iter_mut().find(|(g, _)| *g == band.gsd_m) {
                Some((_, v)) => v.push(band),
                None => groups.push((band.gsd_m, vec![band])),
            }
        }
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        groups
    }
}

fn check_compatible(a: &BandGrid, b: &BandGrid) -> Result<()> {
    if a.gsd_m == b.gsd_m {
        if !a.same_shape(b) {
            return Err(Error::ShapeMismatch(format!(
                "bands {} and {} share gsd {} m but have shapes {}x{} and {}x{}",
                a.name, b.name, a.gsd_m, a.width, a.height, b.width, b.height
            )));
        }
        return Ok(());
    }
    let tol = 0.5 * a.gsd_m.min(b.gsd_m);
    let dw = (a.width as f64 * a.gsd_m - b.width as f64 * b.gsd_m).abs();
    let dh = (a.height as f64 * a.gsd_m - b.height as f64 * b.gsd_m).abs();
    if dw > tol || dh > tol {
        return Err(Error::ShapeMismatch(format!(
            "bands {} and {} cover different ground footprints",
            a.name, b.name
        )));
    }
    Ok(())
}

/// Sample type of a headerless raw raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawDtype {
    U16,
    F32,
}

impl RawDtype {
    pub fn size(self) -> usize {
        match self {
            RawDtype::U16 => 2,
            RawDtype::F32 => 4,
        }
    }
}

impl std::str::FromStr for RawDtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u16" => Ok(RawDtype::U16),
            "f32" => Ok(RawDtype::F32),
            other => Err(Error::InvalidArgument(format!("unknown dtype {other}"))),
        }
    }
}

/// Reads a little-endian, row-major raw raster and divides every sample by
/// `scale_divisor`.
pub fn import_raw(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    dtype: RawDtype,
    scale_divisor: f64,
    name: &str,
    gsd_m: f64,
) -> Result<BandGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes, width, height, dtype, scale_divisor, name, gsd_m)
}

pub fn decode_raw(
    bytes: &[u8],
    width: usize,
    height: usize,
    dtype: RawDtype,
    scale_divisor: f64,
    name: &str,
    gsd_m: f64,
) -> Result<BandGrid> {
    if !(scale_divisor.is_finite() && scale_divisor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale divisor must be positive, got {scale_divisor}"
        )));
    }
    let expected = (width * height * dtype.size()) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let values: Vec<f64> = match dtype {
        RawDtype::U16 => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64 / scale_divisor)
            .collect(),
        RawDtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64 / scale_divisor)
            .collect(),
    };
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!(
            "non-finite sample {v} after scaling"
        )));
    }
    BandGrid::new(name, width, height, gsd_m, values)
}

/// Encodes bands that share one sampling distance into SRAF bytes.
pub fn encode_sraf(bands: &[&BandGrid]) -> Result<Vec<u8>> {
    let first = bands
        .first()
        .ok_or_else(|| Error::InvalidArgument("no bands to serialize".into()))?;
    if bands.len() > u16::MAX as usize {
        return Err(Error::InvalidArgument("too many bands for one file".into()));
    }
    for b in &bands[1..] {
        if !b.same_shape(first) || b.gsd_m != first.gsd_m {
            return Err(Error::ShapeMismatch(format!(
                "band {} does not match {} in shape or gsd",
                b.name, first.name
            )));
        }
    }
    let (w, h) = (first.width, first.height);
    if w > u32::MAX as usize || h > u32::MAX as usize {
        return Err(Error::InvalidArgument("grid too large for SRAF".into()));
    }
    let names_len: usize = bands.iter().map(|b| 1 + b.name.len()).sum();
    let mut out = Vec::with_capacity(20 + names_len + bands.len() * w * h * 4);
    out.extend_from_slice(SRAF_MAGIC);
    out.extend_from_slice(&SRAF_VERSION.to_le_bytes());
    out.extend_from_slice(&(bands.len() as u16).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(first.gsd_m as f32).to_le_bytes());
    for b in bands {
        if !b.name.is_ascii() || b.name.len() > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "band name {:?} must be ASCII and at most 255 bytes",
                b.name
            )));
        }
        out.push(b.name.len() as u8);
        out.extend_from_slice(b.name.as_bytes());
    }
    for b in bands {
        for &v in &b.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Truncated(format!("while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let s = self.take(2, what)?;
        Ok(u16::from_le_bytes([s[0], s[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let s = self.take(4, what)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let s = self.take(4, what)?;
        Ok(f32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }
}

/// Decodes SRAF bytes into a scene (with an empty acquisition label).
pub fn decode_sraf(bytes: &[u8]) -> Result<Scene> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != SRAF_MAGIC {
        let mut m = [0u8; 4];
        m.copy_from_slice(magic);
        return Err(Error::BadMagic(m));
    }
    let version = r.u16("version")?;
    if version != SRAF_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let band_count = r.u16("band count")? as usize;
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let gsd = r.f32("gsd")? as f64;
    let mut names = Vec::with_capacity(band_count);
    for i in 0..band_count {
        let len = r.u8("band name length")? as usize;
        let raw = r.take(len, "band name")?;
        let name = std::str::from_utf8(raw)
            .ok()
            .filter(|s| s.is_ascii())
            .ok_or_else(|| Error::InvalidValue(format!("band name {i} is not ASCII")))?;
        names.push(name.to_string());
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::InvalidValue("grid dimensions overflow".into()))?;
    let mut scene = Scene::new("");
    for name in names {
        let payload = r.take(n * 4, &format!("payload of band {name}"))?;
        let mut values = Vec::with_capacity(n);
        for c in payload.chunks_exact(4) {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_nan() {
                return Err(Error::InvalidValue(format!(
                    "NaN in payload of band {name}"
                )));
            }
            values.push(v as f64);
        }
        scene.insert(BandGrid::new(name, width, height, gsd, values)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::InvalidValue(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    Ok(scene)
}

/// `dir/scene.sraf` with suffix `_20m` gives `dir/scene_20m.sraf`.
pub fn suffixed_path(path: &Path, gsd_m: f64) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{gsd_m}m.{}", ext.to_string_lossy()),
        None => format!("{stem}_{gsd_m}m"),
    };
    path.with_file_name(name)
}

/// Writes a scene as SRAF. A single-resolution scene goes to `path`; a
/// mixed-resolution scene is split into one file per sampling distance with
/// `_<gsd>m` appended to the file stem. Returns the paths written.
pub fn save_sraf(scene: &Scene, path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let groups = scene.resolution_groups();
    if groups.is_empty() {
        return Err(Error::InvalidArgument("scene has no bands".into()));
    }
    let single = groups.len() == 1;
    let mut written = Vec::with_capacity(groups.len());
    for (gsd, bands) in groups {
        let target = if single {
            path.to_path_buf()
        } else {
            suffixed_path(path, gsd)
        };
        write_file(&target, &encode_sraf(&bands)?)?;
        written.push(target);
    }
    Ok(written)
}

pub fn load_sraf(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sraf(&bytes)
}

/// Loads a scene from a single SRAF file or from every `*.sraf` file directly
/// inside a directory (sorted by file name).
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    if !path.is_dir() {
        return load_sraf(path);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "sraf"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .sraf files in {}",
            path.display()
        )));
    }
    let mut scene = Scene::new("");
    for f in files {
        scene.merge(load_sraf(&f)?)?;
    }
    Ok(scene)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Contrast stretch applied before 8-bit quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stretch {
    /// Per-band minimum and maximum.
    MinMax,
    Fixed {
        lo: f64,
        hi: f64,
    },
}

fn quantize(band: &BandGrid, stretch: Stretch) -> Result<Vec<u8>> {
    let (lo, hi) = match stretch {
        Stretch::MinMax => band.min_max(),
        Stretch::Fixed { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
                return Err(Error::InvalidArgument(format!(
                    "stretch upper bound {hi} must exceed lower bound {lo}"
                )));
            }
            (lo, hi)
        }
    };
    let span = hi - lo;
    Ok(band
        .values
        .iter()
        .map(|&v| {
            // A constant band under min/max stretch has no span; render it black.
            if span <= 0.0 {
                0
            } else {
                (255.0 * ((v - lo) / span).clamp(0.0, 1.0)).round() as u8
            }
        })
        .collect())
}

/// Writes one band as 8-bit grayscale or three bands as 8-bit RGB.
pub fn export_png(bands: &[&BandGrid], path: impl AsRef<Path>, stretch: Stretch) -> Result<()> {
    let color = match bands.len() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        n => {
            return Err(Error::InvalidArgument(format!(
                "png export takes 1 or 3 bands, got {n}"
            )))
        }
    };
    let first = bands[0];
    for b in &bands[1..] {
        if !b.same_shape(first) || b.gsd_m != first.gsd_m {
            return Err(Error::ShapeMismatch(format!(
                "band {} does not match {} for png export",
                b.name, first.name
            )));
        }
    }
    let planes = bands
        .iter()
        .map(|b| quantize(b, stretch))
        .collect::<Result<Vec<_>>>()?;
    let n = first.width * first.height;
    let mut pixels = Vec::with_capacity(n * planes.len());
    for i in 0..n {
        pixels.extend(planes.iter().map(|p| p[i]));
    }
    write_png(
        path.as_ref(),
        first.width,
        first.height,
        color,
        png::BitDepth::Eight,
        &pixels,
    )
}

pub(crate) fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(data)?;
    writer.finish()?;
    Ok(())
}

/// Returns (B12, B11, B08) on the finest of their grids. Coarser bands are
/// brought onto that grid by nearest-neighbour replication.
pub fn composite_false_color(scene: &Scene) -> Result<[BandGrid; 3]> {
    let bands = [scene.band("B12")?, scene.band("B11")?, scene.band("B08")?];
    let finest = bands
        .iter()
        .min_by(|a, b| a.gsd_m.total_cmp(&b.gsd_m))
        .copied()
        .expect("three bands");
    let to_common = |b: &BandGrid| -> Result<BandGrid> {
        if b.gsd_m == finest.gsd_m {
            return Ok(b.clone());
        }
        let ratio = b.gsd_m / finest.gsd_m;
        let r = ratio.round();
        if (ratio - r).abs() > 1e-9 || r < 1.0 {
            return Err(Error::ShapeMismatch(format!(
                "band {} gsd {} is not an integer multiple of {}",
                b.name, b.gsd_m, finest.gsd_m
            )));
        }
        let up =
            crate::resample::upsample_nearest(b, crate::resample::ScaleFactor::new(r as usize)?);
        if !up.same_shape(finest) {
            return Err(Error::ShapeMismatch(format!(
                "band {} does not tile onto the {} m grid",
                b.name, finest.gsd_m
            )));
        }
        Ok(up)
    };
    Ok([
        to_common(bands[0])?,
        to_common(bands[1])?,
        to_common(bands[2])?,
    ])
}

/// Writes `text` to `path` through a buffered writer; used for CSV and JSON sidecars.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
