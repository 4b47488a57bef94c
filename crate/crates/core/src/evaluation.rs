//! Full-reference metrics and the evaluation report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::datasets::{load_image, save_png, MicroDatasetManifest};
use crate::error::{Error, Result};
use crate::imaging::{resize_bicubic, Image, Scale, CHANNELS};
use crate::srn::Upscaler;

/// Value reported when two images are identical.
pub const PSNR_CAP_DB: f64 = 100.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dim(format!("images {:?} and {:?} differ", a.dims(), b.dims())));
    }
    Ok(())
}

/// Peak signal-to-noise ratio for peak 1, in dB, capped at 100.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable weighted sums of `f(a, b)` over every fully contained window.
fn windowed(plane_a: &[f64], plane_b: &[f64], h: usize, w: usize, g: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let vals: Vec<f64> = plane_a.iter().zip(plane_b).map(|(&x, &y)| f(x, y)).collect();
    let mut rows = vec![0.0; oh * w];
    for y in 0..oh {
        for x in 0..w {
            rows[y * w + x] = (0..k).map(|i| g[i] * vals[(y + i) * w + x]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|j| g[j] * rows[y * w + x + j]).sum();
        }
    }
    out
}

/// Mean structural similarity over channels and every valid 11×11
/// Gaussian window (σ = 1.5, K1 = 0.01, K2 = 0.03, peak 1).
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dim(format!(
            "SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {h}×{w}"
        )));
    }
    let g = gaussian_window();
    let plane = |img: &Image, c: usize| -> Vec<f64> { img.data().iter().skip(c).step_by(CHANNELS).map(|&v| v as f64).collect() };
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..CHANNELS {
        let (pa, pb) = (plane(a, c), plane(b, c));
        let mu_a = windowed(&pa, &pb, h, w, &g, |x, _| x);
        let mu_b = windowed(&pa, &pb, h, w, &g, |_, y| y);
        let aa = windowed(&pa, &pb, h, w, &g, |x, _| x * x);
        let bb = windowed(&pa, &pb, h, w, &g, |_, y| y * y);
        let ab = windowed(&pa, &pb, h, w, &g, |x, y| x * y);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = aa[i] - ma * ma;
            let var_b = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub name: String,
    pub psnr_sr: f64,
    pub ssim_sr: f64,
    pub psnr_bicubic: f64,
    pub ssim_bicubic: f64,
}

/// Column-wise aggregate of the four metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub psnr_sr: f64,
    pub ssim_sr: f64,
    pub psnr_bicubic: f64,
    pub ssim_bicubic: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub mean: Aggregate,
    pub median: Aggregate,
    pub grids: Vec<PathBuf>,
    pub fingerprint: String,
}

impl MetricsReport {
    fn column(&self, f: impl Fn(&MetricsRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn from_rows(rows: Vec<MetricsRow>, grids: Vec<PathBuf>, fingerprint: String) -> Self {
        let mut r = MetricsReport {
            rows,
            mean: Aggregate {
                psnr_sr: 0.0,
                ssim_sr: 0.0,
                psnr_bicubic: 0.0,
                ssim_bicubic: 0.0,
            },
            median: Aggregate {
                psnr_sr: 0.0,
                ssim_sr: 0.0,
                psnr_bicubic: 0.0,
                ssim_bicubic: 0.0,
            },
            grids,
            fingerprint,
        };
        let agg = |f: &dyn Fn(&[f64]) -> f64| Aggregate {
            psnr_sr: f(&r.column(|x| x.psnr_sr)),
            ssim_sr: f(&r.column(|x| x.ssim_sr)),
            psnr_bicubic: f(&r.column(|x| x.psnr_bicubic)),
            ssim_bicubic: f(&r.column(|x| x.ssim_bicubic)),
        };
        let (m, md) = (agg(&mean), agg(&median));
        r.mean = m;
        r.median = md;
        r
    }

    /// Median over rows of `psnr_sr − psnr_bicubic`.
    pub fn median_psnr_gain(&self) -> f64 {
        median(&self.column(|x| x.psnr_sr - x.psnr_bicubic))
    }

    /// Median over rows of `ssim_sr − ssim_bicubic`.
    pub fn median_ssim_gain(&self) -> f64 {
        median(&self.column(|x| x.ssim_sr - x.ssim_bicubic))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,psnr_sr,ssim_sr,psnr_bicubic,ssim_bicubic\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.name, r.psnr_sr, r.ssim_sr, r.psnr_bicubic, r.ssim_bicubic
            );
        }
        for (label, a) in [("mean", &self.mean), ("median", &self.median)] {
            let _ = writeln!(
                s,
                "{label},{:.6},{:.6},{:.6},{:.6}",
                a.psnr_sr, a.ssim_sr, a.psnr_bicubic, a.ssim_bicubic
            );
        }
        s
    }
}

/// `[LR nearest ×4 | bicubic ×4 | SR | HR]` separated by 2-pixel white bars.
pub fn render_grid(lr: &Image, bicubic: &Image, sr: &Image, hr: &Image) -> Result<Image> {
    const GAP: usize = 2;
    let enlarged = lr.enlarge_nearest(4);
    let tiles = [&enlarged, bicubic, sr, hr];
    let (h, w) = hr.dims();
    if tiles.iter().any(|t| t.dims() != (h, w)) {
        return Err(Error::dim("grid tiles must share the HR size"));
    }
    let total_w = 4 * w + 3 * GAP;
    Ok(Image::from_fn(h, total_w, |y, x, c| {
        let (tile, off) = (x / (w + GAP), x % (w + GAP));
        if off >= w {
            1.0
        } else {
            tiles[tile].get(y, off, c)
        }
    }))
}

/// Score `upscaler` and the bicubic baseline on every paired eval triplet
/// of the dataset at `data_root`, writing `report.csv`, `header.txt` and
/// `grids/<name>.png` into `out_dir`.
pub fn evaluate_pipeline(
    upscaler: &dyn Upscaler,
    data_root: &Path,
    manifest: &MicroDatasetManifest,
    out_dir: &Path,
    fingerprint: &str,
) -> Result<MetricsReport> {
    if !manifest.paired_eval || manifest.eval.is_empty() {
        return Err(Error::Manifest("dataset has no paired evaluation split".into()));
    }
    let grid_dir = out_dir.join("grids");
    std::fs::create_dir_all(&grid_dir).map_err(|e| Error::io(&grid_dir, e))?;
    let mut rows = Vec::new();
    let mut grids = Vec::new();
    for rec in &manifest.eval {
        let hr_path = data_root.join(&rec.hr);
        if !hr_path.is_file() {
            return Err(Error::Manifest(format!(
                "ground truth {} for `{}` is missing",
                hr_path.display(),
                rec.name
            )));
        }
        let hr = load_image(&hr_path)?;
        let lr = load_image(&data_root.join(&rec.lr))?;
        let sr = upscaler.upscale(&lr)?;
        let bicubic = resize_bicubic(&lr, Scale::FOUR)?;
        if sr.dims() != hr.dims() || bicubic.dims() != hr.dims() {
            return Err(Error::dim(format!(
                "`{}`: outputs {:?} / {:?} do not match HR {:?}",
                rec.name,
                sr.dims(),
                bicubic.dims(),
                hr.dims()
            )));
        }
        rows.push(MetricsRow {
            name: rec.name.clone(),
            psnr_sr: psnr(&sr, &hr)?,
            ssim_sr: ssim(&sr, &hr)?,
            psnr_bicubic: psnr(&bicubic, &hr)?,
            ssim_bicubic: ssim(&bicubic, &hr)?,
        });
        let grid_path = grid_dir.join(format!("{}.png", rec.name));
        save_png(&render_grid(&lr, &bicubic, &sr, &hr)?, &grid_path)?;
        grids.push(grid_path);
    }
    let report = MetricsReport::from_rows(rows, grids, fingerprint.to_string());
    let write = |name: &str, text: String| {
        let p = out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.csv", report.to_csv())?;
    write(
        "header.txt",
        format!(
            "config_fingerprint = {fingerprint}\n\
             color_space = RGB, no luma conversion\n\
             psnr = 10*log10(1/MSE) over all RGB samples, peak 1, capped at {PSNR_CAP_DB} dB\n\
             ssim = mean over channels of single-scale SSIM, 11x11 Gaussian window sigma 1.5, K1 0.01, K2 0.03, valid windows only\n\
             baseline = bicubic x4 (Catmull-Rom) of the rainy LR input\n\
             grid = [LR nearest x4 | bicubic x4 | SR | clean HR], 2 px white separators\n"
        ),
    )?;
    Ok(report)
}
