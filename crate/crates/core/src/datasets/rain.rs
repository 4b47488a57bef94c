use rand::Rng;

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::rng::rng_from;

/// Procedural rain: additive anti-aliased streaks over a contrast-dimmed
/// image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RainParams {
    pub streak_count: usize,
    pub length_px: f64,
    pub width_px: f64,
    /// Streak direction, clockwise from vertical.
    pub angle_deg: f64,
    /// Peak intensity added by one streak.
    pub opacity: f64,
    /// Blend weight toward mid-gray, in `[0,1)`.
    pub contrast_dim: f64,
    pub seed: u64,
}

impl RainParams {
    /// Settings used for the desk micro-dataset at 64×64.
    pub fn desk(seed: u64) -> Self {
        RainParams {
            streak_count: 40,
            length_px: 9.0,
            width_px: 1.0,
            angle_deg: 15.0,
            opacity: 0.35,
            contrast_dim: 0.25,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.length_px, self.width_px, self.angle_deg, self.opacity, self.contrast_dim]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.length_px < 0.0 || self.width_px < 0.0 {
            return Err(Error::Range(format!("invalid streak geometry {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::Range(format!("opacity {} outside [0,1]", self.opacity)));
        }
        if !(0.0..1.0).contains(&self.contrast_dim) {
            return Err(Error::Range(format!("contrast_dim {} outside [0,1)", self.contrast_dim)));
        }
        Ok(())
    }
}

/// One streak as a segment in continuous pixel coordinates, where pixel
/// `(y, x)` has its center at `(x + 0.5, y + 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Streak {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Streak {
    /// Euclidean distance from `(x, y)` to the segment.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (self.x1 - self.x0, self.y1 - self.y0);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((x - self.x0) * dx + (y - self.y0) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (self.x0 + t * dx, self.y0 + t * dy);
        ((x - px).powi(2) + (y - py).powi(2)).sqrt()
    }
}

/// Streak segments for an `height×width` image. Centers are uniform over
/// the image; all streaks share length and direction.
pub fn streaks(p: &RainParams, height: usize, width: usize) -> Vec<Streak> {
    let mut rng = rng_from(p.seed);
    let theta = p.angle_deg.to_radians();
    let (hx, hy) = (0.5 * p.length_px * theta.sin(), 0.5 * p.length_px * theta.cos());
    (0..p.streak_count)
        .map(|_| {
            let cx = rng.gen::<f64>() * width as f64;
            let cy = rng.gen::<f64>() * height as f64;
            Streak {
                x0: cx - hx,
                y0: cy - hy,
                x1: cx + hx,
                y1: cy + hy,
            }
        })
        .collect()
}

/// Summed streak intensity per pixel (row-major, one channel).
///
/// A pixel at distance `d` from a streak receives
/// `opacity · clamp(width/2 + 0.5 − d, 0, 1)`.
pub fn rain_layer(p: &RainParams, height: usize, width: usize) -> Vec<f64> {
    let mut layer = vec![0.0; height * width];
    if p.opacity == 0.0 {
        return layer;
    }
    let reach = 0.5 * p.width_px + 0.5;
    for s in streaks(p, height, width) {
        let x_lo = (s.x0.min(s.x1) - reach).floor().max(0.0) as usize;
        let y_lo = (s.y0.min(s.y1) - reach).floor().max(0.0) as usize;
        let x_hi = ((s.x0.max(s.x1) + reach).ceil().max(0.0) as usize).min(width);
        let y_hi = ((s.y0.max(s.y1) + reach).ceil().max(0.0) as usize).min(height);
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let cover = (reach - s.distance(x as f64 + 0.5, y as f64 + 0.5)).clamp(0.0, 1.0);
                layer[y * width + x] += p.opacity * cover;
            }
        }
    }
    layer
}

/// `clamp((1 − contrast_dim)·img + contrast_dim·0.5 + S)` with `S` from
/// [`rain_layer`].
pub fn synth_rain(img: &Image, p: &RainParams) -> Result<Image> {
    p.validate()?;
    let (h, w) = img.dims();
    let layer = rain_layer(p, h, w);
    let keep = 1.0 - p.contrast_dim;
    let gray = p.contrast_dim * 0.5;
    Ok(Image::from_fn(h, w, |y, x, c| {
        (keep * img.get(y, x, c) as f64 + gray + layer[y * w + x]) as f32
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noisy(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |y, x, c| ((y * 31 + x * 17 + c * 7) % 23) as f32 / 22.0)
    }

    #[test]
    fn identity_cases() {
        let img = noisy(20, 24);
        let none = RainParams {
            streak_count: 0,
            contrast_dim: 0.0,
            ..RainParams::desk(3)
        };
        assert_eq!(synth_rain(&img, &none).unwrap(), img);
        let clear = RainParams {
            opacity: 0.0,
            contrast_dim: 0.0,
            ..RainParams::desk(3)
        };
        assert_eq!(synth_rain(&img, &clear).unwrap(), img);
    }

    #[test]
    fn rejects_bad_params() {
        let img = noisy(8, 8);
        for p in [
            RainParams { contrast_dim: 1.0, ..RainParams::desk(0) },
            RainParams { opacity: 1.5, ..RainParams::desk(0) },
            RainParams { width_px: f64::NAN, ..RainParams::desk(0) },
        ] {
            assert!(matches!(synth_rain(&img, &p), Err(Error::Range(_))));
        }
    }

    /// Supersampled coverage of the streak capsule (points within
    /// width/2 of the segment) over pixel `(y, x)`.
    fn capsule_area(s: &Streak, half_width: f64, y: usize, x: usize) -> f64 {
        const N: usize = 16;
        let mut hits = 0;
        for i in 0..N {
            for j in 0..N {
                let py = y as f64 + (i as f64 + 0.5) / N as f64;
                let px = x as f64 + (j as f64 + 0.5) / N as f64;
                if s.distance(px, py) <= half_width {
                    hits += 1;
                }
            }
        }
        hits as f64 / (N * N) as f64
    }

    #[test]
    fn streak_pixel_count_against_mask_oracle() {
        let img = Image::filled(32, 32, 0.0).unwrap();
        let p = RainParams {
            streak_count: 5,
            length_px: 9.0,
            width_px: 1.0,
            angle_deg: 15.0,
            opacity: 0.4,
            contrast_dim: 0.0,
            seed: 11,
        };
        let out = synth_rain(&img, &p).unwrap();
        let lit: Vec<bool> = (0..32 * 32).map(|i| out.data()[i * 3] > 0.01).collect();
        let count = lit.iter().filter(|&&b| b).count();
        assert!((22..=135).contains(&count), "{count} lit pixels");

        // Oracle: a pixel whose center lies on a streak must be lit; a lit
        // pixel must overlap the streak dilated by half a pixel diagonal.
        let segs = streaks(&p, 32, 32);
        for y in 0..32 {
            for x in 0..32 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let center_on = segs.iter().any(|s| s.distance(cx, cy) <= 0.5);
                let touches = segs.iter().any(|s| capsule_area(s, 0.5 + std::f64::consts::FRAC_1_SQRT_2, y, x) > 0.0);
                if center_on {
                    assert!(lit[y * 32 + x], "center pixel ({y},{x}) unlit");
                }
                if lit[y * 32 + x] {
                    assert!(touches, "lit pixel ({y},{x}) far from every streak");
                }
            }
        }
        let oracle_core = (0..32 * 32)
            .filter(|i| segs.iter().any(|s| capsule_area(s, 0.5, i / 32, i % 32) >= 0.5))
            .count();
        assert!(count >= oracle_core, "{count} < {oracle_core}");
    }

    #[test]
    fn streaks_are_bright_and_pure() {
        let img = noisy(16, 16);
        let p = RainParams::desk(5);
        let a = synth_rain(&img, &p).unwrap();
        assert_eq!(a, synth_rain(&img, &p).unwrap());
        assert_ne!(a, synth_rain(&img, &RainParams::desk(6)).unwrap());
    }

    proptest! {
        #[test]
        fn never_darker_than_dimmed_input(seed in any::<u64>(), dim in 0.0f64..0.9, count in 0usize..30) {
            let img = noisy(12, 20);
            let p = RainParams { streak_count: count, contrast_dim: dim, seed, ..RainParams::desk(0) };
            let out = synth_rain(&img, &p).unwrap();
            for (o, v) in out.data().iter().zip(img.data()) {
                let floor = (1.0 - dim) * *v as f64 + dim * 0.5;
                prop_assert!(*o as f64 >= floor - 1e-6);
            }
        }
    }
}
