//! Seeded synthetic scenes with known fire locations and a hidden 10 m SWIR
//! reference.
//!
//! Terrain comes from two value-noise fields: a detailed one shared by every
//! band and a smooth one that only enters the SWIR bands. All values are
//! multiples of 2^-16 so they survive f32 storage unchanged.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::afd::BinaryMap;
use crate::raster::{save_sraf, write_text, BandGrid, Scene};
use crate::resample::{downsample_box, ScaleFactor};
use crate::{Error, Result};

pub const FINE_GSD: f64 = 10.0;
pub const COARSE_GSD: f64 = 20.0;
pub const FIRE_GT_BAND: &str = "fire_gt";

/// A burning disc, in 10 m pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FireBlob {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub texture_octaves: usize,
    pub fire_blobs: Vec<FireBlob>,
    pub smoke_opacity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::with_size(256, 256, 0)
    }
}

impl SynthConfig {
    /// Default texture and smoke with three fires placed relative to the
    /// scene size.
    pub fn with_size(width: usize, height: usize, seed: u64) -> Self {
        let s = width.min(height) as f64;
        let (w, h) = (width as f64, height as f64);
        let blob = |fx: f64, fy: f64, fr: f64| FireBlob {
            cx: fx * w,
            cy: fy * h,
            radius: (fr * s).max(3.0),
            intensity: 0.5,
        };
        Self {
            width,
            height,
            seed,
            texture_octaves: 5,
            fire_blobs: vec![
                blob(0.3, 0.32, 0.06),
                blob(0.68, 0.58, 0.08),
                blob(0.4, 0.76, 0.045),
            ],
            smoke_opacity: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || !self.width.is_multiple_of(4)
            || !self.height.is_multiple_of(4)
        {
            return Err(Error::InvalidArgument(format!(
                "scene size must be a positive multiple of 4, got {}x{}",
                self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.smoke_opacity) {
            return Err(Error::InvalidArgument(format!(
                "smoke opacity must lie in [0, 1], got {}",
                self.smoke_opacity
            )));
        }
        for b in &self.fire_blobs {
            if !(b.intensity.is_finite() && b.intensity > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "fire intensity must be positive, got {}",
                    b.intensity
                )));
            }
            if !(b.radius.is_finite() && b.radius > 0.0 && b.cx.is_finite() && b.cy.is_finite()) {
                return Err(Error::InvalidArgument(format!("invalid fire blob {b:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    /// B02, B03, B04, B08 at 10 m; B11, B12 at 20 m.
    pub scene: Scene,
    /// Same terrain without fires or smoke.
    pub before: Scene,
    /// True where a fire disc covers the pixel centre.
    pub fire_gt: BinaryMap,
    /// B11 and B12 at 10 m, before reduction.
    pub reference_swir: Scene,
}

/// Multi-octave value noise in [0, 1].
fn value_noise(
    rng: &mut ChaCha8Rng,
    w: usize,
    h: usize,
    base_cell: f64,
    octaves: usize,
) -> Vec<f64> {
    let mut acc = vec![0.0; w * h];
    let mut amp = 1.0;
    let mut total = 0.0;
    let mut cell = base_cell;
    for _ in 0..octaves.max(1) {
        let gw = (w as f64 / cell).ceil() as usize + 2;
        let gh = (h as f64 / cell).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen::<f64>()).collect();
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        for y in 0..h {
            let fy = (y as f64 + 0.5) / cell;
            let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
            for x in 0..w {
                let fx = (x as f64 + 0.5) / cell;
                let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let l = |gx: usize, gy: usize| lattice[gy * gw + gx];
                let top = l(ix, iy) * (1.0 - tx) + l(ix + 1, iy) * tx;
                let bottom = l(ix, iy + 1) * (1.0 - tx) + l(ix + 1, iy + 1) * tx;
                acc[y * w + x] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
        total += amp;
        amp *= 0.6;
        cell = (cell / 2.0).max(1.0);
    }
    let (lo, hi) = acc
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = if hi > lo { hi - lo } else { total };
    acc.iter().map(|v| (v - lo) / span).collect()
}

fn quantize(v: f64) -> f64 {
    (v.max(0.0) * 65536.0).round() / 65536.0
}

fn band(name: &str, w: usize, h: usize, values: Vec<f64>) -> Result<BandGrid> {
    BandGrid::new(
        name,
        w,
        h,
        FINE_GSD,
        values.into_iter().map(quantize).collect(),
    )
}

pub fn generate_scene(cfg: &SynthConfig) -> Result<SynthScene> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let n = w * h;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let detail = value_noise(&mut rng, w, h, 64.0, cfg.texture_octaves);
    let smooth = value_noise(&mut rng, w, h, 96.0, 2);
    let plume_field = value_noise(&mut rng, w, h, 80.0, 3);

    let mut fire = vec![0.0; n];
    let mut gt = vec![false; n];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            for b in &cfg.fire_blobs {
                if (px - b.cx).powi(2) + (py - b.cy).powi(2) <= b.radius * b.radius {
                    gt[y * w + x] = true;
                    fire[y * w + x] += b.intensity;
                }
            }
        }
    }
    // smoke cover in [0, 1]: smooth ramp over the upper part of the plume field
    let plume: Vec<f64> = plume_field
        .iter()
        .map(|&p| {
            let t = ((p - 0.35) / 0.3).clamp(0.0, 1.0);
            t * t * (3.0 - 2.0 * t)
        })
        .collect();

    let mut nir0 = Vec::with_capacity(n);
    let mut red0 = Vec::with_capacity(n);
    let mut green0 = Vec::with_capacity(n);
    let mut blue0 = Vec::with_capacity(n);
    let mut b11_0 = Vec::with_capacity(n);
    let mut b12_0 = Vec::with_capacity(n);
    for i in 0..n {
        let (t, s) = (detail[i], smooth[i]);
        nir0.push(0.20 + 0.30 * t);
        red0.push(0.03 + 0.04 * (1.0 - t));
        green0.push(0.05 + 0.04 * (1.0 - t) + 0.01 * s);
        blue0.push(0.04 + 0.03 * (1.0 - t));
        b11_0.push(0.10 + 0.12 * t + 0.06 * s);
        b12_0.push(0.05 + 0.08 * t + 0.04 * s);
    }

    let mut after = [
        blue0.clone(),
        green0.clone(),
        red0.clone(),
        nir0.clone(),
        b11_0.clone(),
        b12_0.clone(),
    ];
    for i in 0..n {
        if gt[i] {
            let f = fire[i];
            after[2][i] = 1.5 * after[2][i] + 0.05;
            after[3][i] *= 0.4;
            after[4][i] += 2.0 * f;
            after[5][i] += 3.0 * f;
        }
        let keep = 1.0 - cfg.smoke_opacity * plume[i];
        for vis_nir in after.iter_mut().take(4) {
            vis_nir[i] *= keep;
        }
    }

    let names = ["B02", "B03", "B04", "B08"];
    let build = |planes: [Vec<f64>; 6]| -> Result<(Scene, Scene)> {
        let [b02, b03, b04, b08, b11, b12] = planes;
        let mut scene = Scene::new("");
        for (name, v) in names.iter().zip([b02, b03, b04, b08]) {
            scene.insert(band(name, w, h, v)?)?;
        }
        let swir = Scene::from_bands("", [band("B11", w, h, b11)?, band("B12", w, h, b12)?])?;
        for b in swir.bands() {
            scene.insert(downsample_box(b, ScaleFactor::TWO)?)?;
        }
        Ok((scene, swir))
    };
    let (mut scene, mut reference_swir) = build(after)?;
    let (mut before, _) = build([blue0, green0, red0, nir0, b11_0, b12_0])?;
    scene.acquisition_label = format!("synthetic seed {} after", cfg.seed);
    before.acquisition_label = format!("synthetic seed {} before", cfg.seed);
    reference_swir.acquisition_label = format!("synthetic seed {} reference", cfg.seed);
    Ok(SynthScene {
        scene,
        before,
        fire_gt: BinaryMap::new(w, h, gt)?,
        reference_swir,
    })
}

/// Paths written by [`write_synth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub scene: Vec<PathBuf>,
    pub before: Vec<PathBuf>,
    pub reference_swir: Vec<PathBuf>,
    pub fire_gt: PathBuf,
}

pub const BEFORE_DIR: &str = "before";
pub const TRUTH_DIR: &str = "truth";
pub const MANIFEST_FILE: &str = "manifest.json";

fn relative(root: &Path, paths: Vec<PathBuf>) -> Vec<PathBuf> {
    paths
        .into_iter()
        .map(|p| p.strip_prefix(root).map(Path::to_path_buf).unwrap_or(p))
        .collect()
}

/// Writes `dir/scene_{10,20}m.sraf`, `dir/before/`, `dir/truth/` holding the
/// 10 m SWIR reference and the fire mask, and `dir/manifest.json`. Manifest
/// paths are relative to `dir`.
pub fn write_synth(
    dir: impl AsRef<Path>,
    cfg: &SynthConfig,
    synth: &SynthScene,
) -> Result<SynthManifest> {
    let dir = dir.as_ref();
    let scene = save_sraf(&synth.scene, dir.join("scene.sraf"))?;
    let before = save_sraf(&synth.before, dir.join(BEFORE_DIR).join("scene.sraf"))?;
    let reference = save_sraf(
        &synth.reference_swir,
        dir.join(TRUTH_DIR).join("swir_ref.sraf"),
    )?;
    let gt_path = dir.join(TRUTH_DIR).join("fire_gt.sraf");
    let gt_scene = Scene::from_bands("", [synth.fire_gt.to_band(FIRE_GT_BAND, FINE_GSD)?])?;
    save_sraf(&gt_scene, &gt_path)?;
    let manifest = SynthManifest {
        seed: cfg.seed,
        config: cfg.clone(),
        scene: relative(dir, scene),
        before: relative(dir, before),
        reference_swir: relative(dir, reference),
        fire_gt: relative(dir, vec![gt_path]).remove(0),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&dir.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afd::{compute_afi, AfiKind};
    use crate::raster::load_scene;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig::with_size(64, 48, seed)
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_scene(&small(7)).unwrap();
        let b = generate_scene(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&small(8)).unwrap();
        assert_ne!(a.scene, c.scene);
    }

    #[test]
    fn quiet_scene_matches_before() {
        let cfg = SynthConfig {
            fire_blobs: vec![],
            smoke_opacity: 0.0,
            ..small(3)
        };
        let s = generate_scene(&cfg).unwrap();
        assert!(s.fire_gt.is_empty());
        let mut before = s.before.clone();
        before.acquisition_label = s.scene.acquisition_label.clone();
        assert_eq!(before, s.scene);
    }

    #[test]
    fn reference_reduces_to_delivered_swir() {
        let s = generate_scene(&small(1)).unwrap();
        for name in ["B11", "B12"] {
            let reduced =
                downsample_box(s.reference_swir.band(name).unwrap(), ScaleFactor::TWO).unwrap();
            assert_eq!(&reduced, s.scene.band(name).unwrap());
            assert_eq!(reduced.gsd_m(), COARSE_GSD);
        }
        assert_eq!(s.scene.band("B08").unwrap().gsd_m(), FINE_GSD);
    }

    #[test]
    fn fire_raises_afi3_only_inside_blob() {
        let cfg = SynthConfig {
            fire_blobs: vec![FireBlob {
                cx: 32.0,
                cy: 24.0,
                radius: 5.0,
                intensity: 0.5,
            }],
            ..small(5)
        };
        let s = generate_scene(&cfg).unwrap();
        let afi = compute_afi(AfiKind::Afi3, &s.reference_swir).unwrap().index;
        for (v, &fire) in afi.values().iter().zip(s.fire_gt.bits()) {
            if fire {
                assert!(*v > 1.0);
            } else {
                assert!(*v < 1.1);
            }
        }
        assert_eq!(
            s.fire_gt.count(),
            (0..48)
                .flat_map(|y| (0..64).map(move |x| (x, y)))
                .filter(|&(x, y)| {
                    let (dx, dy) = (x as f64 + 0.5 - 32.0, y as f64 + 0.5 - 24.0);
                    dx * dx + dy * dy <= 25.0
                })
                .count()
        );
    }

    #[test]
    fn values_survive_f32() {
        let s = generate_scene(&small(2)).unwrap();
        for b in s.scene.bands().chain(s.reference_swir.bands()) {
            assert!(b.values().iter().all(|v| f64::from(*v as f32) == *v));
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(generate_scene(&SynthConfig::with_size(30, 32, 0)).is_err());
        let cfg = SynthConfig {
            smoke_opacity: 1.5,
            ..small(0)
        };
        assert!(generate_scene(&cfg).is_err());
    }

    #[test]
    fn written_files_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(4);
        let s = generate_scene(&cfg).unwrap();
        let manifest = write_synth(dir.path(), &cfg, &s).unwrap();
        assert_eq!(manifest.scene.len(), 2);
        let mut scene = load_scene(dir.path()).unwrap();
        scene.acquisition_label = s.scene.acquisition_label.clone();
        assert_eq!(scene, s.scene);
        let gt = load_scene(dir.path().join(&manifest.fire_gt)).unwrap();
        assert_eq!(
            BinaryMap::from_band(gt.band(FIRE_GT_BAND).unwrap()),
            s.fire_gt
        );
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let back: SynthManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, manifest);
    }
}
