//! High-pass-filter fusion: bicubic SWIR plus the detail of the 10 m guide.

use crate::raster::BandGrid;
use crate::resample::{upsample_bicubic, ScaleFactor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainMode {
    /// Inject the guide detail unscaled.
    #[default]
    Unit,
    /// Scale the detail so its spread matches the upsampled SWIR band.
    StdMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HpfConfig {
    pub box_size: usize,
    pub gain_mode: GainMode,
}

impl Default for HpfConfig {
    fn default() -> Self {
        Self {
            box_size: 5,
            gain_mode: GainMode::Unit,
        }
    }
}

impl HpfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.box_size < 3 || self.box_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "box size must be odd and >= 3, got {}",
                self.box_size
            )));
        }
        Ok(())
    }
}

/// `v - mean(box around v)` with clamp-to-edge borders, evaluated as the mean
/// of centre-minus-neighbour differences so flat regions give exactly zero.
pub fn high_pass_plane(values: &[f64], width: usize, height: usize, box_size: usize) -> Vec<f64> {
    let half = (box_size / 2) as isize;
    let n = (box_size * box_size) as f64;
    let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let centre = values[y * width + x];
            let mut acc = 0.0;
            for dy in -half..=half {
                let row = clamp(y as isize + dy, height) * width;
                for dx in -half..=half {
                    acc += centre - values[row + clamp(x as isize + dx, width)];
                }
            }
            out[y * width + x] = acc / n;
        }
    }
    out
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Fuses a 20 m band with a 10 m guide. Output is clamped at zero.
pub fn hpf_fuse(swir: &BandGrid, guide: &BandGrid, cfg: &HpfConfig) -> Result<BandGrid> {
    cfg.validate()?;
    if guide.width() != 2 * swir.width() || guide.height() != 2 * swir.height() {
        return Err(Error::ShapeMismatch(format!(
            "guide {} is {}x{}, expected twice the {}x{} of {}",
            guide.name(),
            guide.width(),
            guide.height(),
            swir.width(),
            swir.height(),
            swir.name()
        )));
    }
    let up = upsample_bicubic(swir, ScaleFactor::TWO)?;
    let detail = high_pass_plane(guide.values(), guide.width(), guide.height(), cfg.box_size);
    let gain = match cfg.gain_mode {
        GainMode::Unit => 1.0,
        GainMode::StdMatch => {
            let sd = std_dev(&detail);
            if sd == 0.0 {
                0.0
            } else {
                std_dev(up.values()) / sd
            }
        }
    };
    let values = up
        .values()
        .iter()
        .zip(&detail)
        .map(|(u, d)| (u + gain * d).max(0.0))
        .collect();
    BandGrid::new(swir.name(), up.width(), up.height(), guide.gsd_m(), values)
}
