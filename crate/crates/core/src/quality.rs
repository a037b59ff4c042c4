//! Reference-based quality metrics: SAM, Q-index, ERGAS and HCC.

use serde::{Deserialize, Serialize};

use crate::raster::{BandGrid, Scene};
use crate::{Error, Result};

/// Window used by [`q_index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QWindow {
    #[default]
    Global,
    /// Mean over every `w x w` window.
    Sliding(usize),
}

fn check_pair(reference: &BandGrid, estimate: &BandGrid) -> Result<()> {
    if reference.same_shape(estimate) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{} is {}x{} but {} is {}x{}",
            reference.name(),
            reference.width(),
            reference.height(),
            estimate.name(),
            estimate.width(),
            estimate.height()
        )))
    }
}

fn check_stacks(reference: &[&BandGrid], estimate: &[&BandGrid]) -> Result<()> {
    if reference.is_empty() || reference.len() != estimate.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} reference bands against {} estimate bands",
            reference.len(),
            estimate.len()
        )));
    }
    let first = reference[0];
    for b in reference.iter().chain(estimate) {
        check_pair(first, b)?;
    }
    Ok(())
}

/// Mean spectral angle in radians. Pixels where either vector is all zero
/// contribute an angle of 0.
pub fn sam(reference: &[&BandGrid], estimate: &[&BandGrid]) -> Result<f64> {
    check_stacks(reference, estimate)?;
    let n = reference[0].values().len();
    let mut total = 0.0;
    for i in 0..n {
        let (mut dot, mut rr, mut ee) = (0.0, 0.0, 0.0);
        for (r, e) in reference.iter().zip(estimate) {
            let (r, e) = (r.values()[i], e.values()[i]);
            dot += r * e;
            rr += r * r;
            ee += e * e;
        }
        if rr > 0.0 && ee > 0.0 {
            total += (dot / (rr * ee).sqrt()).clamp(-1.0, 1.0).acos();
        }
    }
    Ok(total / n as f64)
}

/// Q-index of two equally long samples. Sample normalisation cancels in the
/// ratio, so only centred sums are formed.
fn q_of(x: impl Iterator<Item = f64> + Clone, y: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count() as f64;
    let mx = x.clone().sum::<f64>() / n;
    let my = y.clone().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy == 0.0 {
        return if mx == my { 1.0 } else { 0.0 };
    }
    let contrast = 2.0 * sxy / (sxx + syy);
    let lum_den = mx * mx + my * my;
    let luminance = if lum_den == 0.0 {
        1.0
    } else {
        2.0 * mx * my / lum_den
    };
    contrast * luminance
}

/// Universal image quality index.
pub fn q_index(reference: &BandGrid, estimate: &BandGrid, window: QWindow) -> Result<f64> {
    check_pair(reference, estimate)?;
    let (x, y) = (reference.values(), estimate.values());
    match window {
        QWindow::Global => Ok(q_of(x.iter().copied(), y.iter().copied())),
        QWindow::Sliding(w) => {
            let (width, height) = (reference.width(), reference.height());
            if w == 0 || w > width || w > height {
                return Err(Error::InvalidArgument(format!(
                    "window {w} does not fit a {width}x{height} image"
                )));
            }
            let mut total = 0.0;
            let mut count = 0usize;
            for y0 in 0..=height - w {
                for x0 in 0..=width - w {
                    let idx =
                        (y0..y0 + w).flat_map(move |r| (x0..x0 + w).map(move |c| r * width + c));
                    total += q_of(idx.clone().map(|i| x[i]), idx.map(|i| y[i]));
                    count += 1;
                }
            }
            Ok(total / count as f64)
        }
    }
}

fn rmse(reference: &BandGrid, estimate: &BandGrid) -> f64 {
    let n = reference.values().len() as f64;
    let sq: f64 = reference
        .values()
        .iter()
        .zip(estimate.values())
        .map(|(r, e)| (r - e) * (r - e))
        .sum();
    (sq / n).sqrt()
}

fn relative_rmse(reference: &BandGrid, estimate: &BandGrid) -> Result<f64> {
    let mu = reference.mean();
    if mu == 0.0 {
        return Err(Error::InvalidValue(format!(
            "band {} has zero mean",
            reference.name()
        )));
    }
    Ok(rmse(reference, estimate) / mu)
}

/// ERGAS with `ratio` = fine gsd / coarse gsd (0.5 for 10 m against 20 m).
pub fn ergas(reference: &[&BandGrid], estimate: &[&BandGrid], ratio: f64) -> Result<f64> {
    check_stacks(reference, estimate)?;
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ratio must be positive, got {ratio}"
        )));
    }
    let mut acc = 0.0;
    for (r, e) in reference.iter().zip(estimate) {
        let rel = relative_rmse(r, e)?;
        acc += rel * rel;
    }
    Ok(100.0 * ratio * (acc / reference.len() as f64).sqrt())
}

/// 3x3 Laplacian with edge-replicating borders.
fn laplacian(band: &BandGrid) -> Vec<f64> {
    let (w, h) = (band.width(), band.height());
    let v = band.values();
    let at = |x: usize, y: usize| v[y * w + x];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let n = at(x, y.saturating_sub(1));
            let s = at(x, (y + 1).min(h - 1));
            let wv = at(x.saturating_sub(1), y);
            let e = at((x + 1).min(w - 1), y);
            out.push(4.0 * at(x, y) - n - s - wv - e);
        }
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Correlation of the Laplacian-filtered images.
pub fn hcc(reference: &BandGrid, estimate: &BandGrid) -> Result<f64> {
    check_pair(reference, estimate)?;
    if reference.width() < 3 || reference.height() < 3 {
        return Err(Error::InvalidArgument(format!(
            "high-pass correlation needs at least 3x3 pixels, got {}x{}",
            reference.width(),
            reference.height()
        )));
    }
    Ok(pearson(&laplacian(reference), &laplacian(estimate)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandQuality {
    pub band: String,
    pub q: f64,
    pub ergas: f64,
    pub hcc: f64,
}

/// Metrics of one estimate. `q_index`, `ergas` and `hcc` are arithmetic means
/// of the per-band rows; `ergas_multiband` is the joint ERGAS over all bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub method: String,
    pub sam: f64,
    pub q_index: f64,
    pub ergas: f64,
    pub hcc: f64,
    pub ergas_multiband: f64,
    pub bands: Vec<BandQuality>,
}

pub const REPORT_CSV_HEADER: &str = "method,band,sam,q,ergas,hcc";

impl QualityReport {
    /// CSV rows without the header: one per band, then `avg`.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for b in &self.bands {
            s.push_str(&format!(
                "{},{},,{},{},{}\n",
                self.method, b.band, b.q, b.ergas, b.hcc
            ));
        }
        s.push_str(&format!(
            "{},avg,{},{},{},{}\n",
            self.method, self.sam, self.q_index, self.ergas, self.hcc
        ));
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// CSV document holding several reports.
pub fn reports_csv(reports: &[QualityReport]) -> String {
    let mut s = format!("{REPORT_CSV_HEADER}\n");
    for r in reports {
        s.push_str(&r.csv_rows());
    }
    s
}

/// Applies all four metrics to matching band stacks.
pub fn evaluate_all(
    method: &str,
    reference: &[&BandGrid],
    estimate: &[&BandGrid],
    ratio: f64,
    window: QWindow,
) -> Result<QualityReport> {
    let sam_v = sam(reference, estimate)?;
    let ergas_multiband = ergas(reference, estimate, ratio)?;
    let mut bands = Vec::with_capacity(reference.len());
    for (r, e) in reference.iter().zip(estimate) {
        bands.push(BandQuality {
            band: r.name().to_string(),
            q: q_index(r, e, window)?,
            ergas: ergas(&[*r], &[*e], ratio)?,
            hcc: hcc(r, e)?,
        });
    }
    let k = bands.len() as f64;
    let mean = |f: fn(&BandQuality) -> f64| bands.iter().map(f).sum::<f64>() / k;
    Ok(QualityReport {
        method: method.to_string(),
        sam: sam_v,
        q_index: mean(|b| b.q),
        ergas: mean(|b| b.ergas),
        hcc: mean(|b| b.hcc),
        ergas_multiband,
        bands,
    })
}

/// Pairs the bands of two scenes by name and evaluates them. An estimate
/// band `<name>_sr` stands in for a missing `<name>`.
pub fn evaluate_scenes(
    method: &str,
    reference: &Scene,
    estimate: &Scene,
    ratio: f64,
    window: QWindow,
) -> Result<QualityReport> {
    let mut refs = Vec::new();
    let mut ests = Vec::new();
    for r in reference.bands() {
        let e = estimate
            .get(r.name())
            .or_else(|| estimate.get(&format!("{}_sr", r.name())))
            .ok_or_else(|| Error::MissingBand(format!("estimate lacks band {}", r.name())))?;
        refs.push(r);
        ests.push(e);
    }
    if refs.is_empty() {
        return Err(Error::InvalidArgument(
            "reference scene has no bands".into(),
        ));
    }
    evaluate_all(method, &refs, &ests, ratio, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(w: usize, h: usize, v: Vec<f64>) -> BandGrid {
        BandGrid::new("B", w, h, 10.0, v).unwrap()
    }

    fn refs(v: &[BandGrid]) -> Vec<&BandGrid> {
        v.iter().collect()
    }

    fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BandGrid {
        grid(w, h, (0..w * h).map(|_| rng.gen_range(0.01..1.0)).collect())
    }

    // scalar reference implementations written straight from the formulas

    fn sam_oracle(r: &[Vec<f64>], e: &[Vec<f64>]) -> f64 {
        let n = r[0].len();
        let mut acc = 0.0;
        for i in 0..n {
            let dot: f64 = (0..r.len()).map(|b| r[b][i] * e[b][i]).sum();
            let nr: f64 = (0..r.len()).map(|b| r[b][i].powi(2)).sum::<f64>().sqrt();
            let ne: f64 = (0..r.len()).map(|b| e[b][i].powi(2)).sum::<f64>().sqrt();
            if nr > 0.0 && ne > 0.0 {
                acc += (dot / (nr * ne)).clamp(-1.0, 1.0).acos();
            }
        }
        acc / n as f64
    }

    fn q_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let vx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let vy = y.iter().map(|a| (a - my).powi(2)).sum::<f64>() / (n - 1.0);
        let cxy = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - mx) * (b - my))
            .sum::<f64>()
            / (n - 1.0);
        4.0 * cxy * mx * my / ((vx + vy) * (mx * mx + my * my))
    }

    fn ergas_oracle(r: &[Vec<f64>], e: &[Vec<f64>], ratio: f64) -> f64 {
        let mut acc = 0.0;
        for (rb, eb) in r.iter().zip(e) {
            let n = rb.len() as f64;
            let mse = rb.iter().zip(eb).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
            let mu = rb.iter().sum::<f64>() / n;
            acc += mse / (mu * mu);
        }
        100.0 * ratio * (acc / r.len() as f64).sqrt()
    }

    fn hcc_oracle(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
        let filt = |v: &[f64]| {
            let px = |xx: isize, yy: isize| {
                let cx = xx.clamp(0, w as isize - 1) as usize;
                let cy = yy.clamp(0, h as isize - 1) as usize;
                v[cy * w + cx]
            };
            let mut out = vec![];
            for yy in 0..h as isize {
                for xx in 0..w as isize {
                    out.push(
                        4.0 * px(xx, yy)
                            - px(xx - 1, yy)
                            - px(xx + 1, yy)
                            - px(xx, yy - 1)
                            - px(xx, yy + 1),
                    );
                }
            }
            out
        };
        let (a, b) = (filt(x), filt(y));
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - ma) * (q - mb))
            .sum::<f64>();
        let va = a.iter().map(|p| (p - ma).powi(2)).sum::<f64>();
        let vb = b.iter().map(|q| (q - mb).powi(2)).sum::<f64>();
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn sam_examples() {
        let r = [grid(1, 1, vec![1.0]), grid(1, 1, vec![0.0])];
        let e = [grid(1, 1, vec![0.0]), grid(1, 1, vec![1.0])];
        let v = sam(&[&r[0], &r[1]], &[&e[0], &e[1]]).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-15);

        let r = [grid(2, 1, vec![1.0, 1.0]), grid(2, 1, vec![0.0, 2.0])];
        let e = [grid(2, 1, vec![0.0, 2.0]), grid(2, 1, vec![1.0, 4.0])];
        let v = sam(&[&r[0], &r[1]], &[&e[0], &e[1]]).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_4).abs() < 1e-15);

        let z = grid(2, 1, vec![0.0, 0.0]);
        assert_eq!(sam(&[&z], &[&r[0]]).unwrap(), 0.0);
        assert!(matches!(
            sam(&[&r[0]], &[&grid(1, 2, vec![1.0, 1.0])]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn q_examples() {
        let x = grid(2, 1, vec![1.0, 0.0]);
        let y = grid(2, 1, vec![0.0, 1.0]);
        assert_eq!(q_of([1.0, -1.0].into_iter(), [-1.0, 1.0].into_iter()), -1.0);
        assert_eq!(q_index(&x, &y, QWindow::Global).unwrap(), -1.0);

        let a = grid(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let b = grid(4, 1, vec![2.0, 4.0, 6.0, 8.0]);
        let q = q_index(&a, &b, QWindow::Global).unwrap();
        assert!((q - q_oracle(a.values(), b.values())).abs() < 1e-12);
        // sxy = 10, sxx = 5, syy = 20, means 2.5 and 5
        assert!((q - (20.0 / 25.0) * (25.0 / 31.25)).abs() < 1e-12);

        assert_eq!(q_index(&a, &a, QWindow::Global).unwrap(), 1.0);
        let c1 = grid(2, 2, vec![0.3; 4]);
        let c2 = grid(2, 2, vec![0.4; 4]);
        assert_eq!(q_index(&c1, &c1, QWindow::Global).unwrap(), 1.0);
        assert_eq!(q_index(&c1, &c2, QWindow::Global).unwrap(), 0.0);
    }

    #[test]
    fn q_sliding_averages_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = (random_grid(&mut rng, 6, 5), random_grid(&mut rng, 6, 5));
        let got = q_index(&a, &b, QWindow::Sliding(3)).unwrap();
        let mut acc = 0.0;
        for y0 in 0..3 {
            for x0 in 0..4 {
                let pick = |g: &BandGrid| -> Vec<f64> {
                    (y0..y0 + 3)
                        .flat_map(|y| (x0..x0 + 3).map(move |x| (x, y)))
                        .map(|(x, y)| g.get(x, y))
                        .collect()
                };
                acc += q_oracle(&pick(&a), &pick(&b));
            }
        }
        assert!((got - acc / 12.0).abs() < 1e-12);
        assert!(matches!(
            q_index(&a, &b, QWindow::Sliding(6)),
            Err(Error::InvalidArgument(_))
        ));
        assert_eq!(q_index(&a, &a, QWindow::Sliding(5)).unwrap(), 1.0);
    }

    #[test]
    fn ergas_examples() {
        let r = grid(2, 2, vec![1.0; 4]);
        let e = grid(2, 2, vec![1.1; 4]);
        assert!((ergas(&[&r], &[&e], 0.5).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(ergas(&[&r], &[&r], 0.5).unwrap(), 0.0);

        // relative errors 0.1 and 0.2: 100 * 0.5 * sqrt((0.01 + 0.04) / 2)
        let r2 = grid(2, 2, vec![2.0; 4]);
        let e2 = grid(2, 2, vec![2.4; 4]);
        let v = ergas(&[&r, &r2], &[&e, &e2], 0.5).unwrap();
        assert!((v - 50.0 * 0.025f64.sqrt()).abs() < 1e-12);

        let z = grid(2, 2, vec![0.0; 4]);
        assert!(matches!(
            ergas(&[&z], &[&r], 0.5),
            Err(Error::InvalidValue(_))
        ));
    }

    #[test]
    fn hcc_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_grid(&mut rng, 8, 8);
        assert_eq!(hcc(&x, &x).unwrap(), 1.0);
        let shifted = x
            .with_values("B", x.values().iter().map(|v| v + 0.25).collect())
            .unwrap();
        assert!((hcc(&x, &shifted).unwrap() - 1.0).abs() < 1e-12);

        let mut vals = x.values().to_vec();
        for i in (1..vals.len()).rev() {
            vals.swap(i, rng.gen_range(0..=i));
        }
        let shuffled = x.with_values("B", vals).unwrap();
        let v = hcc(&x, &shuffled).unwrap();
        assert!(v.abs() < 0.5, "{v}");
        assert!((v - hcc_oracle(x.values(), shuffled.values(), 8, 8)).abs() < 1e-12);

        let flat = grid(3, 3, vec![0.5; 9]);
        assert_eq!(
            hcc(&flat, &grid(3, 3, (0..9).map(f64::from).collect())).unwrap(),
            0.0
        );
        assert!(hcc(&grid(2, 2, vec![1.0; 4]), &grid(2, 2, vec![1.0; 4])).is_err());
    }

    #[test]
    fn metrics_match_oracles_on_random_stacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let r: Vec<BandGrid> = (0..2).map(|_| random_grid(&mut rng, 16, 16)).collect();
            let e: Vec<BandGrid> = (0..2).map(|_| random_grid(&mut rng, 16, 16)).collect();
            let rv: Vec<Vec<f64>> = r.iter().map(|g| g.values().to_vec()).collect();
            let ev: Vec<Vec<f64>> = e.iter().map(|g| g.values().to_vec()).collect();
            let (rr, er): (Vec<&BandGrid>, Vec<&BandGrid>) =
                (r.iter().collect(), e.iter().collect());
            assert!((sam(&rr, &er).unwrap() - sam_oracle(&rv, &ev)).abs() < 1e-9);
            assert!((ergas(&rr, &er, 0.5).unwrap() - ergas_oracle(&rv, &ev, 0.5)).abs() < 1e-9);
            for b in 0..2 {
                assert!(
                    (q_index(&r[b], &e[b], QWindow::Global).unwrap() - q_oracle(&rv[b], &ev[b]))
                        .abs()
                        < 1e-9
                );
                assert!(
                    (hcc(&r[b], &e[b]).unwrap() - hcc_oracle(&rv[b], &ev[b], 16, 16)).abs() < 1e-9
                );
            }
        }
    }

    #[test]
    fn identity_report() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r: Vec<BandGrid> = (0..2)
            .map(|i| random_grid(&mut rng, 9, 7).with_name(format!("B1{}", i + 1)))
            .collect();
        let rr: Vec<&BandGrid> = r.iter().collect();
        let rep = evaluate_all("ref", &rr, &rr, 0.5, QWindow::Global).unwrap();
        assert_eq!(
            (rep.sam, rep.q_index, rep.ergas, rep.hcc),
            (0.0, 1.0, 0.0, 1.0)
        );
        assert_eq!(rep.bands.len(), 2);
        let csv = reports_csv(&[rep]);
        assert_eq!(csv.lines().next(), Some(REPORT_CSV_HEADER));
        assert_eq!(csv.lines().last(), Some("ref,avg,0,1,0,1"));
    }

    #[test]
    fn average_row_is_band_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r: Vec<BandGrid> = (0..3).map(|_| random_grid(&mut rng, 8, 8)).collect();
        let e: Vec<BandGrid> = (0..3).map(|_| random_grid(&mut rng, 8, 8)).collect();
        let rep = evaluate_all(
            "x",
            &r.iter().collect::<Vec<_>>(),
            &e.iter().collect::<Vec<_>>(),
            0.5,
            QWindow::Global,
        )
        .unwrap();
        let mean = |f: fn(&BandQuality) -> f64| rep.bands.iter().map(f).sum::<f64>() / 3.0;
        assert_eq!(rep.q_index, mean(|b| b.q));
        assert_eq!(rep.ergas, mean(|b| b.ergas));
        assert_eq!(rep.hcc, mean(|b| b.hcc));
    }

    #[test]
    fn scenes_pair_sr_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_grid(&mut rng, 6, 6);
        let reference = Scene::from_bands("", vec![g.clone().with_name("B11")]).unwrap();
        let estimate = Scene::from_bands("", vec![g.with_name("B11_sr")]).unwrap();
        let rep = evaluate_scenes("sr", &reference, &estimate, 0.5, QWindow::Global).unwrap();
        assert_eq!(rep.bands[0].band, "B11");
        let empty = Scene::new("");
        assert!(matches!(
            evaluate_scenes("sr", &reference, &empty, 0.5, QWindow::Global),
            Err(Error::MissingBand(_))
        ));
    }

    proptest! {
        #[test]
        fn pixel_permutation_invariance(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r: Vec<BandGrid> = (0..2).map(|_| random_grid(&mut rng, 5, 4)).collect();
            let e: Vec<BandGrid> = (0..2).map(|_| random_grid(&mut rng, 5, 4)).collect();
            let mut perm: Vec<usize> = (0..20).collect();
            for i in (1..20).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let permute = |g: &BandGrid| g.with_values("B", perm.iter().map(|&i| g.values()[i]).collect()).unwrap();
            let (rp, ep): (Vec<BandGrid>, Vec<BandGrid>) = (r.iter().map(permute).collect(), e.iter().map(permute).collect());
            let d_sam = sam(&refs(&r), &refs(&e)).unwrap() - sam(&refs(&rp), &refs(&ep)).unwrap();
            let d_erg = ergas(&refs(&r), &refs(&e), 0.5).unwrap() - ergas(&refs(&rp), &refs(&ep), 0.5).unwrap();
            let d_q = q_index(&r[0], &e[0], QWindow::Global).unwrap() - q_index(&rp[0], &ep[0], QWindow::Global).unwrap();
            prop_assert!(d_sam.abs() < 1e-12 && d_erg.abs() < 1e-12 && d_q.abs() < 1e-12);
        }

        #[test]
        fn ergas_linear_in_ratio(seed in 0u64..1000, ratio in 0.1f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (r, e) = (random_grid(&mut rng, 4, 4), random_grid(&mut rng, 4, 4));
            let one = ergas(&[&r], &[&e], 1.0).unwrap();
            prop_assert!((ergas(&[&r], &[&e], ratio).unwrap() - ratio * one).abs() < 1e-9 * one.max(1.0));
        }
    }
}
