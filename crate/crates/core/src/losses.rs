//! Scalar objectives with their gradients. Every function returns the loss
//! value (accumulated in f64) and the gradient with respect to its first
//! argument.

use crate::error::{Error, Result};
use crate::imaging::{CubicResampler, Scale};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Real,
    Fake,
}

impl Target {
    fn value(self) -> f64 {
        match self {
            Target::Real => 1.0,
            Target::Fake => 0.0,
        }
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

/// Least-squares adversarial loss: mean of `(out - target)²`.
pub fn loss_adv_ls<T: Real>(disc_out: &Tensor<T>, target: Target) -> (f64, Tensor<T>) {
    let t = target.value();
    let n = disc_out.len() as f64;
    let mut sum = 0.0;
    let grad = disc_out.map(|v| {
        let d = v.as_f64() - t;
        T::from_f64(2.0 * d / n)
    });
    for v in disc_out.data() {
        sum += (v.as_f64() - t).powi(2);
    }
    (sum / n, grad)
}

/// Mean absolute difference; gradient with respect to `a`.
pub fn loss_l1<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape(a, b)?;
    let n = a.len() as f64;
    let step = T::from_f64(1.0 / n);
    let mut sum = 0.0;
    let mut grad = Tensor::zeros(a.shape());
    for ((g, &x), &y) in grad.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        let d = x - y;
        sum += d.as_f64().abs();
        *g = if d > T::zero() {
            step
        } else if d < T::zero() {
            -step
        } else {
            T::zero()
        };
    }
    Ok((sum / n, grad))
}

/// 3×3 box filter with edge-replicated borders.
pub fn blur3<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let ninth = 1.0 / 9.0;
    let mut out = Vec::with_capacity(x.len());
    for plane in x.data().chunks(h * w) {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for dy in [-1i64, 0, 1] {
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    for dx in [-1i64, 0, 1] {
                        let xc = (xx as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        acc += plane[yy * w + xc].as_f64();
                    }
                }
                out.push(T::from_f64(acc * ninth));
            }
        }
    }
    Tensor::from_vec(&[n, c, h, w], out)
}

fn blur3_adjoint<T: Real>(g: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = g.dims4()?;
    let ninth = 1.0 / 9.0;
    let mut out = vec![0.0f64; g.len()];
    for (gp, op) in g.data().chunks(h * w).zip(out.chunks_mut(h * w)) {
        for y in 0..h {
            for xx in 0..w {
                let v = gp[y * w + xx].as_f64() * ninth;
                for dy in [-1i64, 0, 1] {
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    for dx in [-1i64, 0, 1] {
                        let xc = (xx as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        op[yy * w + xc] += v;
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, c, h, w], out.into_iter().map(T::from_f64).collect())
}

/// Bicubic ÷4 of a model-range batch, clamped to `[-1,1]` (the model-range
/// image of `resize_bicubic(img, 1/4)`).
pub fn bicubic_anchor<T: Real>(src_hr: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, _, h, w) = src_hr.dims4()?;
    let r = CubicResampler::new(h, w, Scale::QUARTER)?;
    Ok(r.forward(src_hr)?.map(|v| v.max(-T::one()).min(T::one())))
}

/// L1 between box-blurred DSN output and box-blurred bicubic anchor of the
/// HR source; gradient with respect to `dsn_out`.
pub fn loss_content_lowfreq<T: Real>(dsn_out: &Tensor<T>, src_hr: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let (n, c, h, w) = dsn_out.dims4()?;
    let (sn, sc, sh, sw) = src_hr.dims4()?;
    if (sn, sc, sh, sw) != (n, c, 4 * h, 4 * w) {
        return Err(Error::dim(format!(
            "DSN output {:?} is not a quarter of source {:?}",
            dsn_out.shape(),
            src_hr.shape()
        )));
    }
    let anchor = bicubic_anchor(src_hr)?;
    let (value, g) = loss_l1(&blur3(dsn_out)?, &blur3(&anchor)?)?;
    Ok((value, blur3_adjoint(&g)?))
}

/// Per-pixel weighted L1. `weight_map` is N×1×(H/4)×(W/4) in `[0,1]`; it is
/// nearest-upscaled by 4, and the weighted sum is divided by the sum of
/// weights so a uniform map reduces to plain L1. An all-zero map falls back
/// to uniform weights.
pub fn loss_pix_weighted<T: Real>(
    sr: &Tensor<T>,
    hr: &Tensor<T>,
    weight_map: Option<&Tensor<T>>,
) -> Result<(f64, Tensor<T>)> {
    same_shape(sr, hr)?;
    let Some(wm) = weight_map else {
        return loss_l1(sr, hr);
    };
    let (n, c, h, w) = sr.dims4()?;
    if wm.shape() != [n, 1, h / 4, w / 4] || h % 4 != 0 || w % 4 != 0 {
        return Err(Error::dim(format!(
            "weight map {:?} does not match SR batch {:?} at ÷4",
            wm.shape(),
            sr.shape()
        )));
    }
    let (lh, lw) = (h / 4, w / 4);
    let weight_at = |ni: usize, y: usize, x: usize| wm.data()[(ni * lh + y / 4) * lw + x / 4].as_f64();
    let mut total_w = 0.0;
    for ni in 0..n {
        for y in 0..h {
            for x in 0..w {
                total_w += weight_at(ni, y, x);
            }
        }
    }
    total_w *= c as f64;
    if total_w <= 0.0 {
        return loss_l1(sr, hr);
    }
    let mut sum = 0.0;
    let mut grad = Tensor::zeros(sr.shape());
    let g = grad.data_mut();
    for ni in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let idx = ((ni * c + ch) * h + y) * w + x;
                    let wt = weight_at(ni, y, x);
                    let d = sr.data()[idx].as_f64() - hr.data()[idx].as_f64();
                    sum += wt * d.abs();
                    g[idx] = T::from_f64(wt * d.signum() * if d == 0.0 { 0.0 } else { 1.0 } / total_w);
                }
            }
        }
    }
    Ok((sum / total_w, grad))
}
