//! The canonical RGB raster, Catmull-Rom resampling, patch sampling and
//! conversions between the `[0,1]` image range and the `[-1,1]` model range.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::tensor::{Real, Tensor};

pub const CHANNELS: usize = 3;

/// H×W×3 raster with every sample finite and in `[0,1]`, channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim(format!("empty image {height}×{width}")));
        }
        if data.len() != height * width * CHANNELS {
            return Err(Error::dim(format!(
                "{height}×{width}×3 image needs {} samples, got {}",
                height * width * CHANNELS,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Range(format!("image sample {bad} outside [0,1]")));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width * CHANNELS])
    }

    /// Build from a per-pixel function; results are clamped into `[0,1]`.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f32) -> Self {
        assert!(height > 0 && width > 0);
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(clamp_unit(f(y, x, c)));
                }
            }
        }
        Image {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    /// Top-left-anchored sub-rectangle.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::dim(format!(
                "crop {height}×{width} at ({top},{left}) exceeds {}×{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in top..top + height {
            let start = (y * self.width + left) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + width * CHANNELS]);
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn enlarge_nearest(&self, factor: usize) -> Image {
        Image::from_fn(self.height * factor, self.width * factor, |y, x, c| {
            self.get(y / factor, x / factor, c)
        })
    }
}

#[inline]
fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// A positive rational scale factor `num/den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scale {
    num: usize,
    den: usize,
}

impl Scale {
    pub const ONE: Scale = Scale { num: 1, den: 1 };
    pub const QUARTER: Scale = Scale { num: 1, den: 4 };
    pub const FOUR: Scale = Scale { num: 4, den: 1 };

    pub fn new(num: usize, den: usize) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::dim(format!("scale {num}/{den} is not positive")));
        }
        Ok(Scale { num, den })
    }

    pub fn num(&self) -> usize {
        self.num
    }

    pub fn den(&self) -> usize {
        self.den
    }

    /// Scaled length; fails unless it is a positive integer.
    pub fn apply(&self, len: usize) -> Result<usize> {
        let scaled = len * self.num;
        if scaled % self.den != 0 || scaled == 0 {
            return Err(Error::dim(format!(
                "{len}·{}/{} is not a positive integer",
                self.num, self.den
            )));
        }
        Ok(scaled / self.den)
    }
}

/// Catmull-Rom cubic (a = −0.5).
pub fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Normalized source taps `(index, weight)` for each output position along
/// one axis. The kernel is stretched by the reduction ratio when shrinking
/// and source indices are clamped to the edge.
pub fn cubic_taps(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = in_len as f64 / out_len as f64;
    let stretch = ratio.max(1.0);
    let support = 2.0 * stretch;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * ratio;
            let lo = (center - support).floor() as i64 - 1;
            let hi = (center + support).ceil() as i64 + 1;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for i in lo..=hi {
                let w = catmull_rom((i as f64 + 0.5 - center) / stretch);
                if w == 0.0 {
                    continue;
                }
                total += w;
                let idx = i.clamp(0, in_len as i64 - 1) as usize;
                match taps.iter_mut().find(|(j, _)| *j == idx) {
                    Some(t) => t.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Separable resampling of a `rows × cols` plane held in f64.
fn resample_plane(
    src: &[f64],
    rows: usize,
    cols: usize,
    row_taps: &[Vec<(usize, f64)>],
    col_taps: &[Vec<(usize, f64)>],
) -> Vec<f64> {
    let out_cols = col_taps.len();
    let mut tmp = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let line = &src[r * cols..(r + 1) * cols];
        for (oc, taps) in col_taps.iter().enumerate() {
            tmp[r * out_cols + oc] = taps.iter().map(|&(i, w)| line[i] * w).sum();
        }
    }
    let mut out = vec![0.0; row_taps.len() * out_cols];
    for (or, taps) in row_taps.iter().enumerate() {
        let dst = &mut out[or * out_cols..(or + 1) * out_cols];
        for &(i, w) in taps {
            for (d, s) in dst.iter_mut().zip(&tmp[i * out_cols..(i + 1) * out_cols]) {
                *d += w * s;
            }
        }
    }
    out
}

/// Bicubic resize by a rational factor; output is clamped to `[0,1]`.
pub fn resize_bicubic(img: &Image, scale: Scale) -> Result<Image> {
    let out_h = scale.apply(img.height)?;
    let out_w = scale.apply(img.width)?;
    if scale == Scale::ONE {
        return Ok(img.clone());
    }
    let row_taps = cubic_taps(img.height, out_h);
    let col_taps = cubic_taps(img.width, out_w);
    let mut data = vec![0.0f32; out_h * out_w * CHANNELS];
    for c in 0..CHANNELS {
        let plane: Vec<f64> = img.data.iter().skip(c).step_by(CHANNELS).map(|&v| v as f64).collect();
        let out = resample_plane(&plane, img.height, img.width, &row_taps, &col_taps);
        for (i, v) in out.into_iter().enumerate() {
            data[i * CHANNELS + c] = (v as f32).clamp(0.0, 1.0);
        }
    }
    Ok(Image {
        height: out_h,
        width: out_w,
        data,
    })
}

/// Linear (unclamped) bicubic resampling of an N×C×H×W tensor, plus its
/// adjoint. Used for the hard residual paths inside the networks.
#[derive(Clone, Debug)]
pub struct CubicResampler {
    in_hw: (usize, usize),
    row_taps: Vec<Vec<(usize, f64)>>,
    col_taps: Vec<Vec<(usize, f64)>>,
}

impl CubicResampler {
    pub fn new(in_h: usize, in_w: usize, scale: Scale) -> Result<Self> {
        let out_h = scale.apply(in_h)?;
        let out_w = scale.apply(in_w)?;
        Ok(CubicResampler {
            in_hw: (in_h, in_w),
            row_taps: cubic_taps(in_h, out_h),
            col_taps: cubic_taps(in_w, out_w),
        })
    }

    pub fn out_hw(&self) -> (usize, usize) {
        (self.row_taps.len(), self.col_taps.len())
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if (h, w) != self.in_hw {
            return Err(Error::dim(format!(
                "resampler built for {:?}, got {h}×{w}",
                self.in_hw
            )));
        }
        let (oh, ow) = self.out_hw();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in x.data().chunks(h * w) {
            let src: Vec<f64> = plane.iter().map(|v| v.as_f64()).collect();
            let res = resample_plane(&src, h, w, &self.row_taps, &self.col_taps);
            out.extend(res.into_iter().map(T::from_f64));
        }
        Tensor::from_vec(&[n, c, oh, ow], out)
    }

    /// Transpose of [`forward`](Self::forward) applied to an output gradient.
    pub fn adjoint<T: Real>(&self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, oh, ow) = dy.dims4()?;
        if (oh, ow) != self.out_hw() {
            return Err(Error::dim("resampler adjoint shape mismatch"));
        }
        let (h, w) = self.in_hw;
        let mut out = Vec::with_capacity(n * c * h * w);
        for plane in dy.data().chunks(oh * ow) {
            // rows first: tmp (h × ow)
            let mut tmp = vec![0.0f64; h * ow];
            for (or, taps) in self.row_taps.iter().enumerate() {
                for &(i, wgt) in taps {
                    for oc in 0..ow {
                        tmp[i * ow + oc] += wgt * plane[or * ow + oc].as_f64();
                    }
                }
            }
            let mut res = vec![0.0f64; h * w];
            for r in 0..h {
                for (oc, taps) in self.col_taps.iter().enumerate() {
                    let g = tmp[r * ow + oc];
                    for &(i, wgt) in taps {
                        res[r * w + i] += wgt * g;
                    }
                }
            }
            out.extend(res.into_iter().map(T::from_f64));
        }
        Tensor::from_vec(&[n, c, h, w], out)
    }
}

/// Bilinear resize (half-pixel centers, edge clamp) of an N×C×H×W tensor.
pub fn resize_bilinear<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::dim("bilinear target must be non-empty"));
    }
    let axis = |in_len: usize, out_len: usize| -> Vec<(usize, usize, f64)> {
        let ratio = in_len as f64 / out_len as f64;
        (0..out_len)
            .map(|o| {
                let s = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
                let i0 = (s.floor() as usize).min(in_len - 1);
                let i1 = (i0 + 1).min(in_len - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = axis(h, out_h);
    let xs = axis(w, out_w);
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for plane in x.data().chunks(h * w) {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let p = |y: usize, xx: usize| plane[y * w + xx].as_f64();
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(T::from_f64(top * (1.0 - fy) + bot * fy));
            }
        }
    }
    Tensor::from_vec(&[n, c, out_h, out_w], out)
}

/// Largest top-left crop whose dimensions are multiples of `m`.
pub fn crop_to_multiple(img: &Image, m: usize) -> Result<Image> {
    if m == 0 {
        return Err(Error::dim("crop multiple must be positive"));
    }
    if img.height < m || img.width < m {
        return Err(Error::dim(format!(
            "{}×{} image is smaller than multiple {m}",
            img.height, img.width
        )));
    }
    let h = img.height / m * m;
    let w = img.width / m * m;
    if (h, w) == img.dims() {
        return Ok(img.clone());
    }
    img.crop(0, 0, h, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchSampleSpec {
    pub patch_size: usize,
    pub count: usize,
    pub seed: u64,
}

/// Top-left corners of the patches [`extract_patches`] would cut.
///
/// Rows then columns are drawn uniformly over the valid range with a
/// `ChaCha8Rng` seeded from `spec.seed`.
pub fn patch_positions(height: usize, width: usize, spec: &PatchSampleSpec) -> Result<Vec<(usize, usize)>> {
    if spec.patch_size == 0 || spec.patch_size > height.min(width) {
        return Err(Error::dim(format!(
            "patch size {} does not fit in {height}×{width}",
            spec.patch_size
        )));
    }
    let mut rng = rng_from(spec.seed);
    let max_top = height - spec.patch_size;
    let max_left = width - spec.patch_size;
    Ok((0..spec.count)
        .map(|_| {
            let top = rng.gen_range(0..=max_top as u64) as usize;
            let left = rng.gen_range(0..=max_left as u64) as usize;
            (top, left)
        })
        .collect())
}

pub fn extract_patches(img: &Image, spec: &PatchSampleSpec) -> Result<Vec<Image>> {
    patch_positions(img.height, img.width, spec)?
        .into_iter()
        .map(|(top, left)| img.crop(top, left, spec.patch_size, spec.patch_size))
        .collect()
}

/// Map an image into a 1×3×H×W tensor in `[-1,1]`.
///
/// With `T = f64` the map is exactly invertible for every sample that is 0
/// or at least 2⁻³⁰; with `T = f32` the round trip is within one ulp.
pub fn to_model_range<T: Real>(img: &Image) -> Result<Tensor<T>> {
    images_to_batch(std::slice::from_ref(img))
}

/// Stack equally-sized images into an N×3×H×W model-range batch.
pub fn images_to_batch<T: Real>(imgs: &[Image]) -> Result<Tensor<T>> {
    let first = imgs
        .first()
        .ok_or_else(|| Error::dim("cannot batch zero images"))?;
    let (h, w) = first.dims();
    let mut data = vec![T::zero(); imgs.len() * CHANNELS * h * w];
    for (n, img) in imgs.iter().enumerate() {
        if img.dims() != (h, w) {
            return Err(Error::dim(format!(
                "batch mixes {h}×{w} and {}×{}",
                img.height, img.width
            )));
        }
        for (i, &v) in img.data.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range(format!("sample {v} outside [0,1]")));
            }
            let c = i % CHANNELS;
            let p = i / CHANNELS;
            data[((n * CHANNELS + c) * h * w) + p] = T::from_f64(2.0 * v as f64 - 1.0);
        }
    }
    Tensor::from_vec(&[imgs.len(), CHANNELS, h, w], data)
}

/// Inverse of [`to_model_range`] for sample `index` of a batch, clamping
/// into `[0,1]`.
pub fn from_model_range<T: Real>(t: &Tensor<T>, index: usize) -> Result<Image> {
    let (n, c, h, w) = t.dims4()?;
    if c != CHANNELS || index >= n {
        return Err(Error::dim(format!(
            "cannot take image {index} from tensor {:?}",
            t.shape()
        )));
    }
    let base = index * c * h * w;
    let src = t.data();
    let mut data = vec![0.0f32; h * w * CHANNELS];
    for ch in 0..CHANNELS {
        for p in 0..h * w {
            let v = src[base + ch * h * w + p].as_f64();
            data[p * CHANNELS + ch] = clamp_unit(((v + 1.0) / 2.0) as f32);
        }
    }
    Ok(Image {
        height: h,
        width: w,
        data,
    })
}

pub fn batch_to_images<T: Real>(t: &Tensor<T>) -> Result<Vec<Image>> {
    let (n, ..) = t.dims4()?;
    (0..n).map(|i| from_model_range(t, i)).collect()
}

/// Model-range value of a single image sample.
pub fn to_model_value(v: f32) -> Result<f32> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Range(format!("{v} outside [0,1]")));
    }
    Ok(2.0 * v - 1.0)
}

pub fn from_model_value(v: f32) -> f32 {
    clamp_unit((v + 1.0) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_rows(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |_, x, _| x as f32 / (w - 1) as f32)
    }

    /// Direct 2-D evaluation of the stretched Catmull-Rom filter with edge
    /// clamping, written without the separable tap tables.
    fn direct_oracle(img: &Image, out_h: usize, out_w: usize) -> Vec<f64> {
        let (h, w) = img.dims();
        let ry = h as f64 / out_h as f64;
        let rx = w as f64 / out_w as f64;
        let (sy, sx) = (ry.max(1.0), rx.max(1.0));
        let mut out = Vec::new();
        for oy in 0..out_h {
            for ox in 0..out_w {
                let cy = (oy as f64 + 0.5) * ry;
                let cx = (ox as f64 + 0.5) * rx;
                for c in 0..CHANNELS {
                    let (mut acc, mut norm) = (0.0, 0.0);
                    for iy in -20i64..(h as i64 + 20) {
                        for ix in -20i64..(w as i64 + 20) {
                            let wgt = catmull_rom((iy as f64 + 0.5 - cy) / sy)
                                * catmull_rom((ix as f64 + 0.5 - cx) / sx);
                            if wgt == 0.0 {
                                continue;
                            }
                            let yy = iy.clamp(0, h as i64 - 1) as usize;
                            let xx = ix.clamp(0, w as i64 - 1) as usize;
                            acc += wgt * img.get(yy, xx, c) as f64;
                            norm += wgt;
                        }
                    }
                    out.push((acc / norm).clamp(0.0, 1.0));
                }
            }
        }
        out
    }

    #[test]
    fn catmull_rom_knots() {
        assert_eq!(catmull_rom(0.0), 1.0);
        assert_eq!(catmull_rom(1.0), 0.0);
        assert_eq!(catmull_rom(2.0), 0.0);
        assert!((catmull_rom(0.5) - 0.5625).abs() < 1e-15);
        assert!((catmull_rom(1.5) + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn constant_image_survives_quarter_scale() {
        let img = Image::filled(8, 8, 0.5).unwrap();
        let out = resize_bicubic(&img, Scale::QUARTER).unwrap();
        assert_eq!(out.dims(), (2, 2));
        assert!(out.data().iter().all(|&v| (v - 0.5).abs() <= 1e-12));
    }

    #[test]
    fn unit_scale_is_identity() {
        let img = Image::from_fn(5, 7, |y, x, c| ((y * 7 + x + c) % 11) as f32 / 10.0);
        assert_eq!(resize_bicubic(&img, Scale::ONE).unwrap(), img);
        // the generic path is also exact at ratio 1
        let taps = cubic_taps(7, 7);
        for (o, t) in taps.iter().enumerate() {
            assert_eq!(t, &vec![(o, 1.0)]);
        }
    }

    #[test]
    fn ramp_half_scale_matches_direct_oracle() {
        let img = ramp_rows(4, 4);
        let out = resize_bicubic(&img, Scale::new(1, 2).unwrap()).unwrap();
        let want = direct_oracle(&img, 2, 2);
        for (a, b) in out.data().iter().zip(&want) {
            assert!((*a as f64 - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn random_images_match_direct_oracle_both_directions() {
        let img = Image::from_fn(8, 12, |y, x, c| ((y * 31 + x * 17 + c * 7) % 13) as f32 / 12.0);
        for scale in [Scale::QUARTER, Scale::new(1, 2).unwrap(), Scale::FOUR] {
            let out = resize_bicubic(&img, scale).unwrap();
            let want = direct_oracle(&img, out.height(), out.width());
            for (a, b) in out.data().iter().zip(&want) {
                assert!((*a as f64 - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn down_then_up_stays_near_smooth_ramp() {
        let img = Image::from_fn(32, 32, |y, x, c| {
            (0.2 + 0.6 * (x as f32 + 0.5 * y as f32) / 48.0 + 0.05 * c as f32).min(1.0)
        });
        let lr = resize_bicubic(&img, Scale::QUARTER).unwrap();
        let back = resize_bicubic(&lr, Scale::FOUR).unwrap();
        let linf = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(linf <= 0.25, "L∞ {linf}");
    }

    #[test]
    fn non_integral_output_is_a_dimension_error() {
        let img = Image::filled(6, 6, 0.1).unwrap();
        assert!(matches!(
            resize_bicubic(&img, Scale::QUARTER),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn crop_to_multiple_cases() {
        let img = Image::from_fn(65, 67, |y, x, _| ((y + x) % 5) as f32 / 4.0);
        let out = crop_to_multiple(&img, 4).unwrap();
        assert_eq!(out.dims(), (64, 64));
        assert_eq!(out.get(10, 20, 1), img.get(10, 20, 1));
        let sq = Image::filled(64, 64, 0.3).unwrap();
        assert_eq!(crop_to_multiple(&sq, 4).unwrap(), sq);
        let small = Image::filled(3, 9, 0.3).unwrap();
        assert!(matches!(crop_to_multiple(&small, 4), Err(Error::Dimension(_))));
    }

    #[test]
    fn whole_image_patch() {
        let img = Image::from_fn(6, 6, |y, x, _| (y * 6 + x) as f32 / 35.0);
        let spec = PatchSampleSpec {
            patch_size: 6,
            count: 1,
            seed: 9,
        };
        assert_eq!(extract_patches(&img, &spec).unwrap(), vec![img]);
    }

    #[test]
    fn patches_are_deterministic_and_cover_the_grid() {
        let img = Image::from_fn(32, 32, |y, x, _| (y * 32 + x) as f32 / 1023.0);
        let spec = PatchSampleSpec {
            patch_size: 8,
            count: 1000,
            seed: 3,
        };
        let a = extract_patches(&img, &spec).unwrap();
        assert_eq!(a, extract_patches(&img, &spec).unwrap());
        let pos = patch_positions(32, 32, &spec).unwrap();
        let mut rows = [0usize; 25];
        let mut cols = [0usize; 25];
        let mut joint = [[false; 25]; 25];
        for ((top, left), patch) in pos.iter().zip(&a) {
            assert!(top + 8 <= 32 && left + 8 <= 32);
            assert_eq!(patch.get(0, 0, 0), img.get(*top, *left, 0));
            rows[*top] += 1;
            cols[*left] += 1;
            joint[*top][*left] = true;
        }
        // Each coordinate histogram covers the valid range.
        let row_cover = rows.iter().filter(|&&n| n > 0).count();
        let col_cover = cols.iter().filter(|&&n| n > 0).count();
        assert!(row_cover as f64 >= 0.9 * 25.0 && col_cover as f64 >= 0.9 * 25.0);
        // Joint cells: 1000 uniform draws over 625 cells cover 1 - e^-1.6 ≈ 80% on average.
        let covered = joint.iter().flatten().filter(|s| **s).count();
        assert!(covered as f64 >= 0.75 * 625.0, "covered {covered}");
    }

    #[test]
    fn oversized_patch_is_rejected() {
        let img = Image::filled(8, 8, 0.0).unwrap();
        let spec = PatchSampleSpec {
            patch_size: 9,
            count: 1,
            seed: 0,
        };
        assert!(matches!(extract_patches(&img, &spec), Err(Error::Dimension(_))));
    }

    #[test]
    fn model_range_endpoints_and_clamp() {
        assert_eq!(to_model_value(0.0).unwrap(), -1.0);
        assert_eq!(to_model_value(1.0).unwrap(), 1.0);
        assert_eq!(to_model_value(0.5).unwrap(), 0.0);
        assert_eq!(from_model_value(1.7 * 2.0 - 1.0), 1.0);
        assert!(matches!(to_model_value(1.2), Err(Error::Range(_))));
        let t = Tensor::<f32>::full(&[1, 3, 1, 1], 2.4);
        assert_eq!(from_model_range(&t, 0).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn resampler_adjoint_is_transpose() {
        let r = CubicResampler::new(8, 8, Scale::QUARTER).unwrap();
        let x = Tensor::<f64>::from_vec(&[1, 1, 8, 8], (0..64).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let y = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![0.3, -1.2, 0.7, 2.0]).unwrap();
        let ax = r.forward(&x).unwrap();
        let aty = r.adjoint(&y).unwrap();
        let lhs: f64 = ax.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn bilinear_of_constant_is_constant() {
        let t = Tensor::<f32>::full(&[1, 1, 2, 2], 0.25);
        let up = resize_bilinear(&t, 16, 16).unwrap();
        assert!(up.data().iter().all(|&v| v == 0.25));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn roundtrip_model_range(vals in proptest::collection::vec(0u8..=255, 2 * 3 * 3)) {
                let img = Image::new(2, 3, vals.iter().map(|&v| v as f32 / 255.0).collect()).unwrap();
                let back = from_model_range(&to_model_range::<f64>(&img).unwrap(), 0).unwrap();
                prop_assert_eq!(back, img);
            }

            #[test]
            fn roundtrip_model_range_f32_within_ulp(vals in proptest::collection::vec(0.0f32..=1.0, 2 * 3 * 3)) {
                let img = Image::new(2, 3, vals).unwrap();
                let back = from_model_range(&to_model_range::<f32>(&img).unwrap(), 0).unwrap();
                for (a, b) in back.data().iter().zip(img.data()) {
                    prop_assert!((a - b).abs() <= 6e-8);
                }
            }

            #[test]
            fn resize_leaves_input_untouched(h in 1usize..6, w in 1usize..6, v in 0.0f32..1.0) {
                let img = Image::from_fn(h * 4, w * 4, |y, x, c| (v + (y + x + c) as f32 * 0.01).min(1.0));
                let copy = img.clone();
                let out = resize_bicubic(&img, Scale::QUARTER).unwrap();
                prop_assert_eq!(out.dims(), (h, w));
                prop_assert_eq!(img, copy);
            }
        }
    }
}
