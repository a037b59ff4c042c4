//! Integer-ratio resampling: block-mean decimation plus nearest and bicubic
//! upsampling.
//!
//! The `*_plane` functions work on raw row-major `f64` planes and are exact
//! implementations of the kernels. The [`BandGrid`] wrappers additionally
//! clamp bicubic output at zero, since cubic convolution can undershoot
//! next to sharp edges and reflectance is non-negative.

use crate::raster::BandGrid;
use crate::{Error, Result};

/// Integer resolution ratio between a coarse and a fine grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScaleFactor(usize);

impl ScaleFactor {
    pub const TWO: ScaleFactor = ScaleFactor(2);

    pub fn new(ratio: usize) -> Result<Self> {
        if ratio == 0 {
            return Err(Error::InvalidArgument("scale ratio must be >= 1".into()));
        }
        Ok(Self(ratio))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Cubic convolution kernel with `a = -0.5`.
#[inline]
pub fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

pub fn downsample_plane(values: &[f64], width: usize, height: usize, ratio: usize) -> Vec<f64> {
    let (ow, oh) = (width / ratio, height / ratio);
    let norm = (ratio * ratio) as f64;
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for dy in 0..ratio {
                let row = &values[(oy * ratio + dy) * width + ox * ratio..][..ratio];
                acc += row.iter().sum::<f64>();
            }
            out[oy * ow + ox] = acc / norm;
        }
    }
    out
}

/// Block mean over `ratio x ratio` cells; the output gsd is scaled up by `ratio`.
pub fn downsample_box(band: &BandGrid, ratio: ScaleFactor) -> Result<BandGrid> {
    let r = ratio.get();
    if !band.width().is_multiple_of(r) || !band.height().is_multiple_of(r) {
        return Err(Error::ShapeMismatch(format!(
            "band {} of size {}x{} is not divisible by {r}",
            band.name(),
            band.width(),
            band.height()
        )));
    }
    let values = downsample_plane(band.values(), band.width(), band.height(), r);
    BandGrid::new(
        band.name(),
        band.width() / r,
        band.height() / r,
        band.gsd_m() * r as f64,
        values,
    )
}

pub fn upsample_nearest_plane(
    values: &[f64],
    width: usize,
    height: usize,
    ratio: usize,
) -> Vec<f64> {
    let ow = width * ratio;
    let mut out = Vec::with_capacity(ow * height * ratio);
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        let start = out.len();
        for &v in row {
            out.extend(std::iter::repeat_n(v, ratio));
        }
        for _ in 1..ratio {
            out.extend_from_within(start..start + ow);
        }
    }
    out
}

/// Replicates every pixel into a `ratio x ratio` block.
pub fn upsample_nearest(band: &BandGrid, ratio: ScaleFactor) -> BandGrid {
    let r = ratio.get();
    let values = upsample_nearest_plane(band.values(), band.width(), band.height(), r);
    BandGrid::new(
        band.name(),
        band.width() * r,
        band.height() * r,
        band.gsd_m() / r as f64,
        values,
    )
    .expect("replication preserves grid invariants")
}

/// Source taps and weights for every output coordinate along one axis.
fn cubic_taps(len: usize, ratio: usize) -> Vec<([usize; 4], [f64; 4])> {
    let last = len as isize - 1;
    (0..len * ratio)
        .map(|o| {
            let src = (o as f64 + 0.5) / ratio as f64 - 0.5;
            let base = src.floor();
            let frac = src - base;
            let base = base as isize;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let off = k as isize - 1;
                idx[k] = (base + off).clamp(0, last) as usize;
                w[k] = cubic_weight(frac - off as f64);
            }
            (idx, w)
        })
        .collect()
}

/// Separable cubic convolution upsampling with clamp-to-edge borders.
///
/// Output pixel `o` samples the source at `(o + 0.5) / ratio - 0.5`, so the
/// `ratio x ratio` outputs of a block sit symmetrically around the source
/// pixel centre. Horizontal pass first, then vertical.
pub fn upsample_bicubic_plane(
    values: &[f64],
    width: usize,
    height: usize,
    ratio: usize,
) -> Vec<f64> {
    let ow = width * ratio;
    let oh = height * ratio;
    let xt = cubic_taps(width, ratio);
    let yt = cubic_taps(height, ratio);

    let mut horiz = vec![0.0; ow * height];
    for y in 0..height {
        let src = &values[y * width..(y + 1) * width];
        let dst = &mut horiz[y * ow..(y + 1) * ow];
        for (d, (idx, w)) in dst.iter_mut().zip(&xt) {
            *d = w[0] * src[idx[0]] + w[1] * src[idx[1]] + w[2] * src[idx[2]] + w[3] * src[idx[3]];
        }
    }

    let mut out = vec![0.0; ow * oh];
    for (oy, (idx, w)) in yt.iter().enumerate() {
        let rows = idx.map(|i| &horiz[i * ow..(i + 1) * ow]);
        let dst = &mut out[oy * ow..(oy + 1) * ow];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = w[0] * rows[0][x] + w[1] * rows[1][x] + w[2] * rows[2][x] + w[3] * rows[3][x];
        }
    }
    out
}

/// Bicubic upsampling of a band; negative undershoot is clamped to zero.
pub fn upsample_bicubic(band: &BandGrid, ratio: ScaleFactor) -> Result<BandGrid> {
    if band.width() < 2 || band.height() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "bicubic upsampling needs at least 2x2 pixels, band {} is {}x{}",
            band.name(),
            band.width(),
            band.height()
        )));
    }
    let r = ratio.get();
    let mut values = upsample_bicubic_plane(band.values(), band.width(), band.height(), r);
    for v in &mut values {
        *v = v.max(0.0);
    }
    BandGrid::new(
        band.name(),
        band.width() * r,
        band.height() * r,
        band.gsd_m() / r as f64,
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, values: Vec<f64>) -> BandGrid {
        BandGrid::new("B", w, h, 20.0, values).unwrap()
    }

    /// Direct evaluation of the kernel sum at one output pixel, independent of
    /// the separable implementation.
    fn bicubic_oracle(src: &[f64], w: usize, h: usize, r: usize, ox: usize, oy: usize) -> f64 {
        let kernel = |t: f64| {
            let a = -0.5;
            let t = t.abs();
            if t <= 1.0 {
                (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
            } else if t < 2.0 {
                a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
            } else {
                0.0
            }
        };
        let sx = (ox as f64 + 0.5) / r as f64 - 0.5;
        let sy = (oy as f64 + 0.5) / r as f64 - 0.5;
        let mut acc = 0.0;
        for j in (sy.floor() as i64 - 1)..=(sy.floor() as i64 + 2) {
            for i in (sx.floor() as i64 - 1)..=(sx.floor() as i64 + 2) {
                let ci = i.clamp(0, w as i64 - 1) as usize;
                let cj = j.clamp(0, h as i64 - 1) as usize;
                acc += kernel(sx - i as f64) * kernel(sy - j as f64) * src[cj * w + ci];
            }
        }
        acc
    }

    #[test]
    fn box_mean_of_four() {
        let g = grid(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let d = downsample_box(&g, ScaleFactor::TWO).unwrap();
        assert_eq!(d.values(), &[2.5]);
        assert_eq!(d.gsd_m(), 40.0);
    }

    #[test]
    fn box_row_index_grid() {
        let values: Vec<f64> = (0..16).map(|i| (i / 4) as f64).collect();
        let d = downsample_box(&grid(4, 4, values), ScaleFactor::TWO).unwrap();
        assert_eq!(d.values(), &[0.5, 0.5, 2.5, 2.5]);
    }

    #[test]
    fn box_rejects_indivisible() {
        assert!(downsample_box(&grid(3, 2, vec![0.0; 6]), ScaleFactor::TWO).is_err());
    }

    #[test]
    fn nearest_replicates() {
        let up = upsample_nearest(&grid(2, 1, vec![1.0, 2.0]), ScaleFactor::TWO);
        assert_eq!(up.values(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!((up.width(), up.height(), up.gsd_m()), (4, 2, 10.0));
        let g = grid(2, 1, vec![1.0, 2.0]);
        assert_eq!(upsample_nearest(&g, ScaleFactor::new(1).unwrap()), g);
    }

    #[test]
    fn bicubic_constant_preserved() {
        let up = upsample_bicubic(&grid(5, 3, vec![0.37; 15]), ScaleFactor::TWO).unwrap();
        assert!(up.values().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn bicubic_reproduces_linear_ramp() {
        let (w, h, r) = (12, 4, 2);
        let values: Vec<f64> = (0..w * h).map(|i| (i % w) as f64).collect();
        let up = upsample_bicubic_plane(&values, w, h, r);
        let ow = w * r;
        // interior: all four taps are in range, no clamping
        for oy in 0..h * r {
            for ox in 4..ow - 4 {
                let expected = (ox as f64 + 0.5) / r as f64 - 0.5;
                assert!((up[oy * ow + ox] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bicubic_matches_kernel_sum_oracle() {
        let src = [
            0.81, 0.12, 0.55, 0.34, 0.09, 0.67, 0.73, 0.21, 0.46, 0.98, 0.05, 0.62, 0.29, 0.44,
            0.87, 0.16,
        ];
        let up = upsample_bicubic_plane(&src, 4, 4, 2);
        for (ox, oy) in [(3, 3), (4, 4), (3, 4), (0, 0), (7, 7), (1, 6)] {
            let want = bicubic_oracle(&src, 4, 4, 2, ox, oy);
            assert!((up[oy * 8 + ox] - want).abs() < 1e-12, "({ox},{oy})");
        }
    }

    #[test]
    fn bicubic_rejects_degenerate() {
        assert!(upsample_bicubic(&grid(1, 4, vec![0.0; 4]), ScaleFactor::TWO).is_err());
    }

    #[test]
    fn bicubic_monotone_ramp_no_overshoot() {
        // Away from the borders (where clamping flattens the ramp) the output
        // stays inside the data range and is itself monotone.
        let (w, h) = (9, 3);
        let values: Vec<f64> = (0..w * h).map(|i| 0.1 * (i % w) as f64).collect();
        let up = upsample_bicubic_plane(&values, w, h, 2);
        let ow = 2 * w;
        for y in 0..2 * h {
            let row = &up[y * ow + 4..(y + 1) * ow - 4];
            assert!(row.iter().all(|&v| (-1e-12..=0.8 + 1e-12).contains(&v)));
            assert!(row.windows(2).all(|p| p[1] >= p[0]));
        }
    }

    proptest! {
        #[test]
        fn box_preserves_mean(values in prop::collection::vec(0.0f64..1.0, 36)) {
            let g = grid(6, 6, values);
            let d = downsample_box(&g, ScaleFactor::new(3).unwrap()).unwrap();
            prop_assert!((g.mean() - d.mean()).abs() < 1e-12);
        }

        #[test]
        fn nearest_then_box_is_identity(values in prop::collection::vec(0.0f64..1.0, 12), r in 1usize..=2) {
            let g = grid(4, 3, values);
            let s = ScaleFactor::new(r).unwrap();
            let back = downsample_box(&upsample_nearest(&g, s), s).unwrap();
            prop_assert_eq!(back.values(), g.values());
        }

        #[test]
        fn bicubic_overshoot_bounded(values in prop::collection::vec(0.0f64..1.0, 25)) {
            let up = upsample_bicubic_plane(&values, 5, 5, 2);
            let (lo, hi) = values.iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            let eps = 0.25 * (hi - lo);
            prop_assert!(up.iter().all(|&v| v >= lo - eps && v <= hi + eps));
        }
    }
}
