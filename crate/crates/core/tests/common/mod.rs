#![allow(dead_code)]

use rainsr::imaging::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w * 3).map(|_| rng.gen::<f32>()).collect();
    Image::new(h, w, data).unwrap()
}

/// `b` = `a` plus uniform noise of the given amplitude, clamped.
pub fn noisy(a: &Image, amplitude: f32, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = a.dims();
    let data = a
        .data()
        .iter()
        .map(|v| (v + amplitude * rng.gen_range(-1.0f32..1.0)).clamp(0.0, 1.0))
        .collect();
    Image::new(h, w, data).unwrap()
}

/// Textbook PSNR with peak 1: plain loops, no early exits except the cap.
pub fn brute_psnr(a: &Image, b: &Image) -> f64 {
    let (h, w) = a.dims();
    let mut sse = 0.0;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let d = a.get(y, x, c) as f64 - b.get(y, x, c) as f64;
                sse += d * d;
            }
        }
    }
    let mse = sse / (h * w * 3) as f64;
    if mse == 0.0 {
        100.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(100.0)
    }
}

/// Single-scale SSIM with a full 2-D 11×11 Gaussian (σ 1.5) evaluated
/// directly at every window fully inside the image, per channel, then
/// averaged.
pub fn brute_ssim(a: &Image, b: &Image) -> f64 {
    let (h, w) = a.dims();
    let k = 11usize;
    let sigma = 1.5f64;
    let mut kernel = vec![0.0; k * k];
    for dy in 0..k {
        for dx in 0..k {
            let (fy, fx) = (dy as f64 - 5.0, dx as f64 - 5.0);
            kernel[dy * k + dx] = (-(fy * fy + fx * fx) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut per_channel = Vec::new();
    for c in 0..3 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..k {
                    for dx in 0..k {
                        let g = kernel[dy * k + dx];
                        let va = a.get(y0 + dy, x0 + dx, c) as f64;
                        let vb = b.get(y0 + dy, x0 + dx, c) as f64;
                        ma += g * va;
                        mb += g * vb;
                        saa += g * va * va;
                        sbb += g * vb * vb;
                        sab += g * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        per_channel.push(acc / count as f64);
    }
    per_channel.iter().sum::<f64>() / 3.0
}
