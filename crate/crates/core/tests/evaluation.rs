mod common;

use std::path::Path;

use common::{brute_psnr, brute_ssim, noisy, random_image};
use rainsr::datasets::{load_image, make_micro_dataset, MicroSizes, RainParams};
use rainsr::evaluation::*;
use rainsr::imaging::Image;
use rainsr::srn::{Bicubic, Upscaler};
use rainsr::Error;

#[test]
fn psnr_closed_forms() {
    let a = random_image(8, 8, 1);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    let zeros = Image::filled(4, 4, 0.0).unwrap();
    let ones = Image::filled(4, 4, 1.0).unwrap();
    assert_eq!(psnr(&zeros, &ones).unwrap(), 0.0);
    let x = Image::filled(1, 2, 0.0).unwrap();
    let y = Image::new(1, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    assert!((psnr(&x, &y).unwrap() - 10.0 * 2f64.log10()).abs() < 1e-12);
    assert!(matches!(psnr(&x, &zeros), Err(Error::Dimension(_))));
}

#[test]
fn psnr_falls_as_noise_grows() {
    let a = random_image(32, 32, 2);
    let values: Vec<f64> = [0.01, 0.05, 0.1].iter().map(|&s| psnr(&a, &noisy(&a, s, 3)).unwrap()).collect();
    assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
}

#[test]
fn ssim_closed_forms() {
    let a = random_image(16, 20, 4);
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    let zeros = Image::filled(12, 12, 0.0).unwrap();
    let ones = Image::filled(12, 12, 1.0).unwrap();
    let want = 1e-4 / (1.0 + 1e-4);
    assert!((ssim(&zeros, &ones).unwrap() - want).abs() < 1e-12);
    let small = Image::filled(10, 12, 0.0).unwrap();
    assert!(matches!(ssim(&small, &small), Err(Error::Dimension(_))));
    assert!(matches!(ssim(&zeros, &a), Err(Error::Dimension(_))));
}

#[test]
fn ssim_is_symmetric() {
    for seed in 0..5 {
        let (a, b) = (random_image(20, 24, seed), random_image(20, 24, seed + 100));
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
    }
}

#[test]
fn metrics_match_brute_force_references() {
    for seed in 0..5 {
        let a = random_image(32, 32, seed);
        let b = noisy(&a, 0.2, seed + 50);
        assert!((psnr(&a, &b).unwrap() - brute_psnr(&a, &b)).abs() <= 1e-6);
        assert!((ssim(&a, &b).unwrap() - brute_ssim(&a, &b)).abs() <= 1e-6);
    }
}

#[test]
fn median_and_aggregates() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    let rows: Vec<MetricsRow> = (0..4)
        .map(|i| MetricsRow {
            name: format!("{i}"),
            psnr_sr: 20.0 + i as f64,
            ssim_sr: 0.5,
            psnr_bicubic: 19.0,
            ssim_bicubic: 0.4 + 0.01 * i as f64,
        })
        .collect();
    let r = MetricsReport::from_rows(rows, Vec::new(), "fp".into());
    assert_eq!(r.mean.psnr_sr, 21.5);
    assert_eq!(r.median.psnr_sr, 21.5);
    assert!((r.median_psnr_gain() - 2.5).abs() < 1e-12);
    assert!((r.median_ssim_gain() - 0.085).abs() < 1e-12);
    assert!(r.to_csv().lines().count() == 1 + 4 + 2);
}

fn eval_dataset(root: &Path) -> rainsr::datasets::MicroDatasetManifest {
    let sizes = MicroSizes {
        sunny: 1,
        rainy: 1,
        real_lr: 1,
        eval: 3,
        height: 48,
        width: 48,
    };
    make_micro_dataset(root, 7, &sizes, &RainParams::desk(0)).unwrap()
}

/// Returns the stored clean HR for each known LR input.
struct Oracle(Vec<(Image, Image)>);

impl Upscaler for Oracle {
    fn upscale(&self, lr: &Image) -> rainsr::Result<Image> {
        Ok(self.0.iter().find(|(l, _)| l == lr).expect("known LR").1.clone())
    }
}

#[test]
fn bicubic_stub_ties_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = eval_dataset(dir.path());
    let out = dir.path().join("report");
    let r = evaluate_pipeline(&Bicubic, dir.path(), &manifest, &out, "abc").unwrap();
    assert_eq!(r.rows.len(), 3);
    for row in &r.rows {
        assert_eq!(row.psnr_sr, row.psnr_bicubic);
        assert_eq!(row.ssim_sr, row.ssim_bicubic);
    }
    assert!(out.join("report.csv").is_file());
    assert!(std::fs::read_to_string(out.join("header.txt")).unwrap().contains("abc"));
    for g in &r.grids {
        let grid = load_image(g).unwrap();
        assert_eq!(grid.dims(), (48, 4 * 48 + 6));
    }
}

#[test]
fn ground_truth_stub_hits_caps_and_report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = eval_dataset(dir.path());
    let known = manifest
        .eval
        .iter()
        .map(|e| {
            (
                load_image(&dir.path().join(&e.lr)).unwrap(),
                load_image(&dir.path().join(&e.hr)).unwrap(),
            )
        })
        .collect();
    let oracle = Oracle(known);
    let a = evaluate_pipeline(&oracle, dir.path(), &manifest, &dir.path().join("a"), "x").unwrap();
    let b = evaluate_pipeline(&oracle, dir.path(), &manifest, &dir.path().join("b"), "x").unwrap();
    for row in &a.rows {
        assert_eq!(row.psnr_sr, PSNR_CAP_DB);
        assert_eq!(row.ssim_sr, 1.0);
    }
    assert_eq!(a.rows, b.rows);
    let read = |d: &str, f: &str| std::fs::read(dir.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "report.csv"), read("b", "report.csv"));
    assert_eq!(read("a", "grids/0000.png"), read("b", "grids/0000.png"));
}

#[test]
fn missing_ground_truth_is_a_manifest_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = eval_dataset(dir.path());
    std::fs::remove_file(dir.path().join(&manifest.eval[1].hr)).unwrap();
    let err = evaluate_pipeline(&Bicubic, dir.path(), &manifest, &dir.path().join("r"), "").unwrap_err();
    assert!(matches!(err, Error::Manifest(_)), "{err}");
}

#[test]
fn grid_layout() {
    let lr = Image::filled(4, 4, 0.2).unwrap();
    let hr = Image::filled(16, 16, 0.8).unwrap();
    let bic = Bicubic.upscale(&lr).unwrap();
    let g = render_grid(&lr, &bic, &hr, &hr).unwrap();
    assert_eq!(g.dims(), (16, 70));
    assert_eq!(g.get(3, 16, 0), 1.0);
    assert_eq!(g.get(3, 17, 2), 1.0);
    assert!((g.get(3, 5, 1) - 0.2).abs() < 1e-6);
    assert!((g.get(3, 69, 1) - 0.8).abs() < 1e-6);
}
