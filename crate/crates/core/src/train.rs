//! Reduced-resolution training pairs, patch sampling, the training loop and
//! full-resolution inference.
//!
//! Training follows the reduced-resolution scheme: every input is degraded by
//! the scale ratio so that the original SWIR bands can serve as the target.
//! The network input is the bicubic re-upsampled SWIR stacked with the
//! degraded guide bands, all on the native SWIR grid. At inference time the
//! same network sees bicubic-upsampled SWIR next to the native guide bands.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    loss::l1_raw, AdamState, Arch, ForwardCache, Gradients, ModelMeta, ModelParams, Tensor3,
};
use crate::raster::{BandGrid, Scene};
use crate::resample::{downsample_box, upsample_bicubic, ScaleFactor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub patch: usize,
    pub patch_count: usize,
    pub train_fraction: f64,
    pub batch: usize,
    pub epochs: usize,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub guide_bands: Vec<String>,
    pub swir_bands: Vec<String>,
    pub ratio: usize,
    /// Output channels of the two hidden layers.
    pub hidden_widths: Vec<usize>,
    /// Kernel size of each of the three layers.
    pub kernels: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch: 17,
            patch_count: 10_000,
            train_fraction: 0.8,
            batch: 32,
            epochs: 200,
            eta: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            guide_bands: vec!["B08".into()],
            swir_bands: vec!["B11".into(), "B12".into()],
            ratio: 2,
            hidden_widths: vec![48, 32],
            kernels: vec![3, 3, 3],
        }
    }
}

impl TrainConfig {
    /// Adds the 10 m visible bands to the guide set.
    pub fn with_rgb_guide(mut self) -> Self {
        for b in ["B02", "B03", "B04"] {
            if !self.guide_bands.iter().any(|g| g == b) {
                self.guide_bands.push(b.into());
            }
        }
        self
    }

    pub fn arch(&self) -> Arch {
        let mut widths = self.hidden_widths.clone();
        widths.push(self.swir_bands.len());
        Arch {
            in_channels: self.swir_bands.len() + self.guide_bands.len(),
            widths,
            kernels: self.kernels.clone(),
        }
    }

    pub fn meta(&self, provenance: impl Into<String>) -> ModelMeta {
        ModelMeta {
            swir_bands: self.swir_bands.clone(),
            guide_bands: self.guide_bands.clone(),
            ratio: self.ratio,
            provenance: provenance.into(),
        }
    }

    pub fn train_count(&self) -> usize {
        (self.patch_count as f64 * self.train_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let arch = self.arch();
        arch.validate()?;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.swir_bands.is_empty() {
            return bad("at least one SWIR band is required".into());
        }
        if self.patch.is_multiple_of(2) || self.patch < arch.max_kernel() {
            return bad(format!(
                "patch size {} must be odd and at least the kernel size {}",
                self.patch,
                arch.max_kernel()
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train fraction {} not in (0, 1)",
                self.train_fraction
            ));
        }
        let n_train = self.train_count();
        if n_train == 0 || n_train >= self.patch_count {
            return bad(format!(
                "{} patches cannot be split into non-empty training and validation sets",
                self.patch_count
            ));
        }
        if self.batch == 0 || self.batch > n_train {
            return bad(format!(
                "batch {} must be between 1 and the {n_train} training patches",
                self.batch
            ));
        }
        if self.ratio < 2 {
            return bad(format!("scale ratio {} must be at least 2", self.ratio));
        }
        if !(self.eta.is_finite() && self.eta > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return bad("invalid ADAM hyper-parameters".into());
        }
        Ok(())
    }
}

/// Network input and target on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaldPair {
    pub input: Tensor3,
    pub target: Tensor3,
}

impl WaldPair {
    pub fn new(input: Tensor3, target: Tensor3) -> Result<Self> {
        if (input.height(), input.width()) != (target.height(), target.width()) {
            return Err(Error::ShapeMismatch(format!(
                "input {:?} and target {:?} differ spatially",
                input.shape(),
                target.shape()
            )));
        }
        if input.channels() < target.channels() {
            return Err(Error::ShapeMismatch(
                "input must carry at least the target channels".into(),
            ));
        }
        Ok(Self { input, target })
    }
}

fn bands_at<'a>(scene: &'a Scene, names: &[String]) -> Result<Vec<&'a BandGrid>> {
    names.iter().map(|n| scene.band(n)).collect()
}

/// Checks that every SWIR band sits on the ratio-times-coarser grid of the
/// guide bands and returns the common SWIR band shape.
fn check_grids(swir: &[&BandGrid], guide: &[&BandGrid], ratio: usize) -> Result<(usize, usize)> {
    let first = swir[0];
    for b in swir {
        if !b.same_shape(first) || b.gsd_m() != first.gsd_m() {
            return Err(Error::ShapeMismatch(format!(
                "SWIR bands {} and {} differ in grid",
                first.name(),
                b.name()
            )));
        }
    }
    for g in guide {
        if g.width() != ratio * first.width() || g.height() != ratio * first.height() {
            return Err(Error::ShapeMismatch(format!(
                "guide band {} is {}x{}, expected {ratio}x the {}x{} SWIR grid",
                g.name(),
                g.width(),
                g.height(),
                first.width(),
                first.height()
            )));
        }
        if (first.gsd_m() - ratio as f64 * g.gsd_m()).abs() > 1e-9 * first.gsd_m() {
            return Err(Error::ShapeMismatch(format!(
                "SWIR gsd {} is not {ratio}x guide gsd {}",
                first.gsd_m(),
                g.gsd_m()
            )));
        }
    }
    Ok((first.width(), first.height()))
}

/// Builds the reduced-resolution training pair of a scene.
pub fn make_wald_pair(scene: &Scene, cfg: &TrainConfig) -> Result<WaldPair> {
    let swir = bands_at(scene, &cfg.swir_bands)?;
    let guide = bands_at(scene, &cfg.guide_bands)?;
    let r = ScaleFactor::new(cfg.ratio)?;
    let (w, h) = check_grids(&swir, &guide, cfg.ratio)?;
    if w % cfg.ratio != 0 || h % cfg.ratio != 0 {
        return Err(Error::ShapeMismatch(format!(
            "SWIR grid {w}x{h} is not divisible by {}",
            cfg.ratio
        )));
    }
    let mut planes: Vec<Vec<f64>> = Vec::with_capacity(swir.len() + guide.len());
    for b in &swir {
        planes.push(upsample_bicubic(&downsample_box(b, r)?, r)?.into_values());
    }
    for g in &guide {
        planes.push(downsample_box(g, r)?.into_values());
    }
    let refs: Vec<&[f64]> = planes.iter().map(Vec::as_slice).collect();
    let input = Tensor3::from_planes(h, w, &refs)?;
    let targets: Vec<&[f64]> = swir.iter().map(|b| b.values()).collect();
    let target = Tensor3::from_planes(h, w, &targets)?;
    WaldPair::new(input, target)
}

/// One training sample cropped out of a [`WaldPair`].
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Top-left corner `(y, x)` in the source pair.
    pub origin: (usize, usize),
    pub input: Tensor3,
    pub target: Tensor3,
}

fn draw_patches(
    pair: &WaldPair,
    size: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Patch>> {
    let (h, w) = (pair.input.height(), pair.input.width());
    if h < size || w < size {
        return Err(Error::ShapeMismatch(format!(
            "{h}x{w} image is smaller than the {size}x{size} patch"
        )));
    }
    (0..count)
        .map(|_| {
            let y = rng.gen_range(0..=h - size);
            let x = rng.gen_range(0..=w - size);
            Ok(Patch {
                origin: (y, x),
                input: pair.input.crop(y, x, size, size)?,
                target: pair.target.crop(y, x, size, size)?,
            })
        })
        .collect()
}

/// Draws `cfg.patch_count` corners uniformly, with replacement.
pub fn extract_patches(pair: &WaldPair, cfg: &TrainConfig, seed: u64) -> Result<Vec<Patch>> {
    draw_patches(
        pair,
        cfg.patch,
        cfg.patch_count,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub adam: AdamState,
    /// Validation loss of the starting parameters.
    pub initial_val_loss: f64,
    pub history: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        history_csv(&self.history)
    }
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for h in history {
        out.push_str(&format!("{},{},{}\n", h.epoch, h.train_loss, h.val_loss));
    }
    out
}

/// Training aborts once the validation loss exceeds this multiple of its
/// starting value.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

fn mean_loss(
    params: &ModelParams,
    patches: &[&Patch],
    cache: &mut ForwardCache,
    scratch: &mut Vec<f64>,
) -> f64 {
    let mut total = 0.0;
    for p in patches {
        let out = cache.forward(params, p.input.data(), p.input.height(), p.input.width());
        scratch.resize(out.len(), 0.0);
        total += l1_raw(out, p.target.data(), 1.0, scratch);
    }
    total / patches.len() as f64
}

/// Trains from `init` (fine-tuning) or from a seeded fresh initialisation.
pub fn train(
    pairs: &[WaldPair],
    cfg: &TrainConfig,
    init: Option<ModelParams>,
) -> Result<TrainOutcome> {
    train_with_progress(pairs, cfg, init, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress(
    pairs: &[WaldPair],
    cfg: &TrainConfig,
    init: Option<ModelParams>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    let arch = cfg.arch();
    for p in pairs {
        if p.input.channels() != arch.in_channels || p.target.channels() != arch.out_channels() {
            return Err(Error::ShapeMismatch(format!(
                "pair has {} input / {} target channels, configuration expects {} / {}",
                p.input.channels(),
                p.target.channels(),
                arch.in_channels,
                arch.out_channels()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = match init {
        Some(p) => {
            p.validate()?;
            if p.in_channels() != arch.in_channels || p.out_channels() != arch.out_channels() {
                return Err(Error::InvalidArchitecture(format!(
                    "initial model maps {} -> {} channels, data needs {} -> {}",
                    p.in_channels(),
                    p.out_channels(),
                    arch.in_channels,
                    arch.out_channels()
                )));
            }
            p
        }
        None => ModelParams::init(&arch, cfg.meta(""), rng.gen())?,
    };
    params.meta = ModelMeta {
        provenance: format!(
            "trained {} epochs on {} pair(s), seed {}",
            cfg.epochs,
            pairs.len(),
            cfg.seed
        ),
        ..cfg.meta("")
    };

    let n = pairs.len();
    let mut patches = Vec::with_capacity(cfg.patch_count);
    for (i, pair) in pairs.iter().enumerate() {
        let count = cfg.patch_count / n + usize::from(i < cfg.patch_count % n);
        let mut pair_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        patches.extend(draw_patches(pair, cfg.patch, count, &mut pair_rng)?);
    }
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.shuffle(&mut rng);
    let (train_idx, val_idx) = order.split_at(cfg.train_count());
    let mut train_idx = train_idx.to_vec();
    let val: Vec<&Patch> = val_idx.iter().map(|&i| &patches[i]).collect();

    let mut adam = AdamState::new(&params, cfg.eta, cfg.beta1, cfg.beta2)?;
    let mut grads = Gradients::zeros_like(&params);
    let mut cache = ForwardCache::new();
    let mut loss_grad = Vec::new();
    let initial_val_loss = mean_loss(&params, &val, &mut cache, &mut loss_grad);
    let batch_scale = 1.0 / cfg.batch as f64;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in train_idx.chunks_exact(cfg.batch) {
            grads.fill_zero();
            let mut batch_loss = 0.0;
            // samples are accumulated in ascending position within the batch
            for &i in batch {
                let p = &patches[i];
                let out = cache.forward(&params, p.input.data(), p.input.height(), p.input.width());
                loss_grad.resize(out.len(), 0.0);
                batch_loss += l1_raw(out, p.target.data(), batch_scale, &mut loss_grad);
                cache.backward(&params, &loss_grad, &mut grads);
            }
            let batch_loss = batch_loss * batch_scale;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss in epoch {epoch}, batch {batches}"
                )));
            }
            adam.step(&mut params, &grads)?;
            epoch_loss += batch_loss;
            batches += 1;
        }
        let val_loss = mean_loss(&params, &val, &mut cache, &mut loss_grad);
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite validation loss in epoch {epoch}"
            )));
        }
        if initial_val_loss > 0.0 && val_loss > DIVERGENCE_FACTOR * initial_val_loss {
            return Err(Error::Diverged(format!(
                "validation loss {val_loss} in epoch {epoch} exceeds {DIVERGENCE_FACTOR}x the initial {initial_val_loss}"
            )));
        }
        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss / batches as f64,
            val_loss,
        };
        on_epoch(&stats);
        history.push(stats);
    }

    Ok(TrainOutcome {
        params,
        adam,
        initial_val_loss,
        history,
    })
}

/// Side length of the output tiles used for full-scene inference.
const TILE: usize = 96;

/// Runs the network over an arbitrarily large input in overlapping tiles.
/// Every tile carries a halo as wide as the receptive field radius, so the
/// result equals a single whole-image pass.
pub fn forward_tiled(params: &ModelParams, input: &Tensor3) -> Result<Tensor3> {
    params.validate()?;
    if input.channels() != params.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} input channels, got {}",
            params.in_channels(),
            input.channels()
        )));
    }
    let halo: usize = params.layers.iter().map(|l| l.kernel / 2).sum();
    let (h, w) = (input.height(), input.width());
    let m = params.out_channels();
    let mut out = vec![0.0; h * w * m];
    let mut cache = ForwardCache::new();
    for ty in (0..h).step_by(TILE) {
        for tx in (0..w).step_by(TILE) {
            let (y1, x1) = ((ty + TILE).min(h), (tx + TILE).min(w));
            let (hy0, hx0) = (ty.saturating_sub(halo), tx.saturating_sub(halo));
            let (hy1, hx1) = ((y1 + halo).min(h), (x1 + halo).min(w));
            let tile = input.crop(hy0, hx0, hy1 - hy0, hx1 - hx0)?;
            let tw = hx1 - hx0;
            let res = cache.forward(params, tile.data(), hy1 - hy0, tw);
            for y in ty..y1 {
                let src = &res[((y - hy0) * tw + (tx - hx0)) * m..][..(x1 - tx) * m];
                out[(y * w + tx) * m..][..(x1 - tx) * m].copy_from_slice(src);
            }
        }
    }
    Tensor3::new(h, w, m, out)
}

/// Super-resolves every SWIR band named in the model metadata onto the guide
/// grid. Output bands are called `<band>_sr` and clamped at zero.
pub fn super_resolve(scene: &Scene, params: &ModelParams) -> Result<Vec<BandGrid>> {
    params.validate()?;
    let meta = &params.meta;
    if meta.swir_bands.is_empty() {
        return Err(Error::InvalidArchitecture(
            "model does not record its input bands".into(),
        ));
    }
    let swir = bands_at(scene, &meta.swir_bands)?;
    let guide = bands_at(scene, &meta.guide_bands)?;
    let ratio = meta.ratio.max(1);
    check_grids(&swir, &guide, ratio)?;
    let r = ScaleFactor::new(ratio)?;
    let up: Vec<BandGrid> = swir
        .iter()
        .map(|b| upsample_bicubic(b, r))
        .collect::<Result<_>>()?;
    let (h, w) = (up[0].height(), up[0].width());
    let mut planes: Vec<&[f64]> = up.iter().map(|b| b.values()).collect();
    planes.extend(guide.iter().map(|g| g.values()));
    let input = Tensor3::from_planes(h, w, &planes)?;
    let out = forward_tiled(params, &input)?;
    let gsd = guide.first().map_or(up[0].gsd_m(), |g| g.gsd_m());
    meta.swir_bands
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let values = out.plane(c).into_iter().map(|v| v.max(0.0)).collect();
            BandGrid::new(format!("{name}_sr"), w, h, gsd, values)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model_forward;

    fn textured(name: &str, w: usize, h: usize, gsd: f64, phase: f64) -> BandGrid {
        let values = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                0.3 + 0.1 * (0.7 * x + phase).sin() * (0.4 * y).cos()
                    + 0.05 * (1.3 * y + x * 0.2).sin()
            })
            .collect();
        BandGrid::new(name, w, h, gsd, values).unwrap()
    }

    fn scene(n: usize) -> Scene {
        Scene::from_bands(
            "t",
            [
                textured("B08", 2 * n, 2 * n, 10.0, 0.0),
                textured("B11", n, n, 20.0, 0.5),
                textured("B12", n, n, 20.0, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn constant_scene_pair_is_constant() {
        let s = Scene::from_bands(
            "",
            [
                BandGrid::filled("B08", 16, 16, 10.0, 0.25).unwrap(),
                BandGrid::filled("B11", 8, 8, 20.0, 0.25).unwrap(),
                BandGrid::filled("B12", 8, 8, 20.0, 0.25).unwrap(),
            ],
        )
        .unwrap();
        let pair = make_wald_pair(&s, &TrainConfig::default()).unwrap();
        assert_eq!(pair.input.channels(), 3);
        assert_eq!(pair.target.channels(), 2);
        assert!(pair.input.data().iter().all(|v| (v - 0.25).abs() < 1e-12));
        assert!(pair.target.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn pair_matches_composed_resamplers() {
        let s = scene(8);
        let pair = make_wald_pair(&s, &TrainConfig::default()).unwrap();
        let b11 = s.band("B11").unwrap();
        let small = crate::resample::downsample_plane(b11.values(), 8, 8, 2);
        let up = crate::resample::upsample_bicubic_plane(&small, 4, 4, 2);
        for (a, b) in pair.input.plane(0).iter().zip(&up) {
            assert_eq!(*a, b.max(0.0));
        }
        let guide = crate::resample::downsample_plane(s.band("B08").unwrap().values(), 16, 16, 2);
        assert_eq!(pair.input.plane(2), guide);
    }

    #[test]
    fn pair_errors() {
        let s = scene(8);
        let cfg = TrainConfig {
            guide_bands: vec!["B04".into()],
            ..TrainConfig::default()
        };
        assert!(matches!(
            make_wald_pair(&s, &cfg),
            Err(Error::MissingBand(_))
        ));
        let odd = Scene::from_bands(
            "",
            [
                textured("B08", 10, 10, 10.0, 0.0),
                textured("B11", 5, 5, 20.0, 0.0),
                textured("B12", 5, 5, 20.0, 0.0),
            ],
        )
        .unwrap();
        assert!(make_wald_pair(&odd, &TrainConfig::default()).is_err());
    }

    #[test]
    fn patch_equal_to_image() {
        let s = scene(34);
        let pair = make_wald_pair(&s, &TrainConfig::default()).unwrap();
        let whole = WaldPair::new(
            pair.input.crop(0, 0, 17, 17).unwrap(),
            pair.target.crop(0, 0, 17, 17).unwrap(),
        )
        .unwrap();
        let cfg = TrainConfig {
            patch_count: 20,
            ..TrainConfig::default()
        };
        for p in extract_patches(&whole, &cfg, 3).unwrap() {
            assert_eq!(p.origin, (0, 0));
            assert_eq!(p.input, whole.input);
        }
        let tiny = WaldPair::new(Tensor3::zeros(16, 16, 3), Tensor3::zeros(16, 16, 2)).unwrap();
        assert!(extract_patches(&tiny, &cfg, 0).is_err());
    }

    #[test]
    fn patches_deterministic_per_seed() {
        let pair = make_wald_pair(&scene(32), &TrainConfig::default()).unwrap();
        let cfg = TrainConfig {
            patch_count: 50,
            ..TrainConfig::default()
        };
        assert_eq!(
            extract_patches(&pair, &cfg, 9).unwrap(),
            extract_patches(&pair, &cfg, 9).unwrap()
        );
        assert_ne!(
            extract_patches(&pair, &cfg, 9).unwrap(),
            extract_patches(&pair, &cfg, 10).unwrap()
        );
    }

    #[test]
    fn tiled_forward_matches_whole_image() {
        let cfg = TrainConfig::default();
        let p = ModelParams::init(&cfg.arch(), cfg.meta(""), 4).unwrap();
        let (h, w) = (TILE + 37, 2 * TILE + 5);
        let data = (0..h * w * 3)
            .map(|i| ((i * 7919) % 1000) as f64 / 1000.0)
            .collect();
        let input = Tensor3::new(h, w, 3, data).unwrap();
        let tiled = forward_tiled(&p, &input).unwrap();
        let whole = model_forward(&input, &p).unwrap();
        for (a, b) in tiled.data().iter().zip(whole.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let even = TrainConfig {
            patch: 16,
            ..TrainConfig::default()
        };
        assert!(even.validate().is_err());
        let frac = TrainConfig {
            train_fraction: 1.0,
            ..TrainConfig::default()
        };
        assert!(frac.validate().is_err());
        let big_batch = TrainConfig {
            patch_count: 40,
            batch: 33,
            ..TrainConfig::default()
        };
        assert!(big_batch.validate().is_err());
        let rgb = TrainConfig::default().with_rgb_guide();
        assert_eq!(rgb.arch().in_channels, 6);
    }

    #[test]
    fn empty_pairs_rejected() {
        assert!(train(&[], &TrainConfig::default(), None).is_err());
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            patch: 9,
            patch_count: 200,
            batch: 16,
            epochs: 2,
            hidden_widths: vec![6, 4],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn identity_start_is_stationary() {
        let pair = make_wald_pair(&scene(32), &TrainConfig::default()).unwrap();
        // target equal to the SWIR input channels
        let target =
            Tensor3::from_planes(32, 32, &[&pair.input.plane(0), &pair.input.plane(1)]).unwrap();
        let pair = WaldPair::new(pair.input, target).unwrap();
        let cfg = small_cfg();
        let init = ModelParams::delta_identity(&cfg.arch(), cfg.meta("")).unwrap();
        let out = train(&[pair], &cfg, Some(init.clone())).unwrap();
        assert_eq!(out.initial_val_loss, 0.0);
        assert!(out
            .history
            .iter()
            .all(|h| h.val_loss == 0.0 && h.train_loss == 0.0));
        assert_eq!(out.params.layers, init.layers);
        assert_eq!(out.adam.step, 2 * (160 / 16));
    }

    #[test]
    fn runs_are_bit_identical() {
        let pairs = [make_wald_pair(&scene(32), &TrainConfig::default()).unwrap()];
        let a = train(&pairs, &small_cfg(), None).unwrap();
        let b = train(&pairs, &small_cfg(), None).unwrap();
        assert_eq!(a.history, b.history);
        for (x, y) in a
            .params
            .tensors()
            .flatten()
            .zip(b.params.tensors().flatten())
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let c = train(
            &pairs,
            &TrainConfig {
                seed: 1,
                ..small_cfg()
            },
            None,
        )
        .unwrap();
        assert_ne!(a.history, c.history);
        assert!(a
            .history
            .iter()
            .all(|h| h.val_loss <= DIVERGENCE_FACTOR * a.initial_val_loss));
    }

    #[test]
    fn recovers_affine_map() {
        // y = 0.5 a + 0.3 b + 0.1 on a 1x1-kernel network with unit-wide hidden layers
        let (h, w) = (24, 24);
        let a: Vec<f64> = (0..h * w)
            .map(|i| ((i * 37) % 101) as f64 / 100.0)
            .collect();
        let b: Vec<f64> = (0..h * w).map(|i| ((i * 53) % 89) as f64 / 88.0).collect();
        let y: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(p, q)| 0.5 * p + 0.3 * q + 0.1)
            .collect();
        let pair = WaldPair::new(
            Tensor3::from_planes(h, w, &[&a, &b]).unwrap(),
            Tensor3::from_planes(h, w, &[&y]).unwrap(),
        )
        .unwrap();
        let cfg = TrainConfig {
            patch: 5,
            patch_count: 400,
            batch: 8,
            epochs: 200,
            swir_bands: vec!["S".into()],
            guide_bands: vec!["G".into()],
            hidden_widths: vec![1, 1],
            kernels: vec![1, 1, 1],
            ..TrainConfig::default()
        };
        // positive start keeps both ReLUs active on non-negative data
        let mut init = ModelParams::delta_identity(&cfg.arch(), cfg.meta("")).unwrap();
        init.layers[0].kernels = vec![0.3, 0.3];
        let out = train(&[pair], &cfg, Some(init)).unwrap();
        let last = out.history.last().unwrap();
        assert!(
            last.train_loss < 1e-3,
            "final train loss {}",
            last.train_loss
        );
        assert!(
            last.val_loss < 1e-3,
            "final validation loss {}",
            last.val_loss
        );
    }

    #[test]
    fn runaway_learning_rate_aborts() {
        let pairs = [make_wald_pair(&scene(32), &TrainConfig::default()).unwrap()];
        let cfg = TrainConfig {
            eta: 50.0,
            ..small_cfg()
        };
        assert!(matches!(train(&pairs, &cfg, None), Err(Error::Diverged(_))));
    }

    #[test]
    fn corners_are_uniform() {
        let pair = WaldPair::new(Tensor3::zeros(100, 100, 3), Tensor3::zeros(100, 100, 2)).unwrap();
        let cfg = TrainConfig::default();
        let patches = extract_patches(&pair, &cfg, 12).unwrap();
        assert_eq!(patches.len(), 10_000);
        // 84x84 valid corners binned into 12x12 blocks of 7x7
        let mut counts = [0usize; 144];
        for p in &patches {
            counts[(p.origin.0 / 7) * 12 + p.origin.1 / 7] += 1;
        }
        let expected = 10_000.0 / 144.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // Wilson-Hilferty upper 1% point for 143 degrees of freedom
        let df = 143.0f64;
        let crit = df * (1.0 - 2.0 / (9.0 * df) + 2.326_348 * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }

    #[test]
    fn delta_identity_resolves_to_bicubic() {
        let s = scene(16);
        let cfg = TrainConfig::default();
        let p = ModelParams::delta_identity(&cfg.arch(), cfg.meta("")).unwrap();
        let out = super_resolve(&s, &p).unwrap();
        for (band, name) in out.iter().zip(["B11", "B12"]) {
            let bic = upsample_bicubic(s.band(name).unwrap(), ScaleFactor::TWO).unwrap();
            assert_eq!(band.name(), format!("{name}_sr"));
            assert_eq!(band.values(), bic.values());
            assert_eq!((band.width(), band.height(), band.gsd_m()), (32, 32, 10.0));
        }
    }
}
