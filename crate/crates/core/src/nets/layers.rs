//! Layer kernels with explicit forward and adjoint passes over N×C×H×W
//! tensors. Convolutions lower to one GEMM per pass via batched im2col.

use crate::error::{Error, Result};
use crate::tensor::{mm, Real, Tensor};

use super::params::ParamStore;

pub(crate) const LEAKY_SLOPE: f64 = 0.2;
pub(crate) const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub(crate) struct ConvOp {
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Conv(ConvOp),
    InstanceNorm,
    Relu,
    LeakyRelu,
    Tanh,
    Upsample2x,
    Residual(Vec<Op>),
}

pub(crate) enum Cache<T> {
    Conv(Tensor<T>),
    Norm { normalized: Tensor<T>, inv_std: Vec<T> },
    Act(Tensor<T>),
    Tanh(Tensor<T>),
    Upsample,
    Residual(Vec<Cache<T>>),
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

impl ConvOp {
    fn geometry<T: Real>(&self, x: &Tensor<T>) -> Result<Geometry> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.cin {
            return Err(Error::dim(format!("conv expects {} channels, got {c}", self.cin)));
        }
        if h + 2 * self.pad < self.k || w + 2 * self.pad < self.k {
            return Err(Error::dim(format!("{h}×{w} input too small for {0}×{0} conv", self.k)));
        }
        let ho = (h + 2 * self.pad - self.k) / self.stride + 1;
        let wo = (w + 2 * self.pad - self.k) / self.stride + 1;
        Ok(Geometry { n, c, h, w, ho, wo })
    }

    /// Valid output range `[lo, hi)` along one axis for kernel offset `kofs`.
    #[inline]
    fn valid_range(&self, kofs: usize, in_len: usize, out_len: usize) -> (usize, usize) {
        // in = out*stride + kofs - pad must lie in [0, in_len)
        let s = self.stride;
        let lo = if kofs >= self.pad {
            0
        } else {
            (self.pad - kofs).div_ceil(s)
        };
        let hi_num = in_len + self.pad;
        let hi = if hi_num > kofs {
            ((hi_num - kofs - 1) / s + 1).min(out_len)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    /// Fills every element of `col` (K × N·Ho·Wo), zeros where the kernel
    /// overlaps padding.
    fn im2col<T: Real>(&self, x: &[T], g: &Geometry, col: &mut [T]) {
        let k = self.k;
        let plane_out = g.ho * g.wo;
        let cols = g.n * plane_out;
        let zero = T::zero();
        for ci in 0..g.c {
            for ky in 0..k {
                let (oy_lo, oy_hi) = self.valid_range(ky, g.h, g.ho);
                for kx in 0..k {
                    let (ox_lo, ox_hi) = self.valid_range(kx, g.w, g.wo);
                    let row = (ci * k + ky) * k + kx;
                    let dst_row = &mut col[row * cols..(row + 1) * cols];
                    for ni in 0..g.n {
                        let src = &x[(ni * g.c + ci) * g.h * g.w..(ni * g.c + ci + 1) * g.h * g.w];
                        let dst = &mut dst_row[ni * plane_out..(ni + 1) * plane_out];
                        dst[..oy_lo * g.wo].fill(zero);
                        dst[oy_hi * g.wo..].fill(zero);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * self.stride + ky - self.pad;
                            let src_row = &src[iy * g.w..(iy + 1) * g.w];
                            let dst_line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                            dst_line[..ox_lo].fill(zero);
                            dst_line[ox_hi..].fill(zero);
                            if self.stride == 1 {
                                let ix0 = ox_lo + kx - self.pad;
                                dst_line[ox_lo..ox_hi]
                                    .copy_from_slice(&src_row[ix0..ix0 + (ox_hi - ox_lo)]);
                            } else {
                                for ox in ox_lo..ox_hi {
                                    dst_line[ox] = src_row[ox * self.stride + kx - self.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, col: &[T], g: &Geometry, dx: &mut [T]) {
        let k = self.k;
        let plane_out = g.ho * g.wo;
        let cols = g.n * plane_out;
        for ci in 0..g.c {
            for ky in 0..k {
                let (oy_lo, oy_hi) = self.valid_range(ky, g.h, g.ho);
                for kx in 0..k {
                    let (ox_lo, ox_hi) = self.valid_range(kx, g.w, g.wo);
                    let row = (ci * k + ky) * k + kx;
                    let src_row = &col[row * cols..(row + 1) * cols];
                    for ni in 0..g.n {
                        let dst = &mut dx[(ni * g.c + ci) * g.h * g.w..(ni * g.c + ci + 1) * g.h * g.w];
                        let src = &src_row[ni * plane_out..(ni + 1) * plane_out];
                        for oy in oy_lo..oy_hi {
                            let iy = oy * self.stride + ky - self.pad;
                            let dst_line = &mut dst[iy * g.w..(iy + 1) * g.w];
                            let src_line = &src[oy * g.wo..(oy + 1) * g.wo];
                            for ox in ox_lo..ox_hi {
                                let ix = ox * self.stride + kx - self.pad;
                                dst_line[ix] = dst_line[ix] + src_line[ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Stride-1 convolutions with few output channels run as
    /// shifted-plane multiply-adds; the rest go through im2col + GEMM.
    fn direct(&self) -> bool {
        self.stride == 1 && self.cout <= 4
    }

    fn forward<T: Real>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(x)?;
        let w = params.value(self.weight).data();
        let b = params.value(self.bias).data();
        let mut out = vec![T::zero(); g.n * self.cout * g.ho * g.wo];
        if self.direct() {
            self.forward_direct(w, b, x.data(), &g, &mut out);
        } else {
            self.forward_gemm(w, b, x.data(), &g, &mut out);
        }
        Tensor::from_vec(&[g.n, self.cout, g.ho, g.wo], out)
    }

    fn forward_gemm<T: Real>(&self, wts: &[T], bias: &[T], x: &[T], g: &Geometry, out: &mut [T]) {
        let kk = self.cin * self.k * self.k;
        let plane_out = g.ho * g.wo;
        let cols = g.n * plane_out;
        T::with_scratch(0, kk * cols, |col| {
            self.im2col(x, g, col);
            T::with_scratch(1, self.cout * cols, |out_mat| {
                mm::ab(self.cout, kk, cols, wts, col, T::zero(), out_mat);
                for ni in 0..g.n {
                    for co in 0..self.cout {
                        let src = &out_mat[co * cols + ni * plane_out..co * cols + (ni + 1) * plane_out];
                        let dst = &mut out[(ni * self.cout + co) * plane_out..(ni * self.cout + co + 1) * plane_out];
                        let b = bias[co];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = s + b;
                        }
                    }
                }
            })
        })
    }

    fn forward_direct<T: Real>(&self, wts: &[T], bias: &[T], x: &[T], g: &Geometry, out: &mut [T]) {
        let k = self.k;
        let kk = self.cin * k * k;
        let (plane_in, plane_out) = (g.h * g.w, g.ho * g.wo);
        for ni in 0..g.n {
            for co in 0..self.cout {
                let dst = &mut out[(ni * self.cout + co) * plane_out..(ni * self.cout + co + 1) * plane_out];
                dst.fill(bias[co]);
                for ci in 0..g.c {
                    let src = &x[(ni * g.c + ci) * plane_in..(ni * g.c + ci + 1) * plane_in];
                    for ky in 0..k {
                        let (oy_lo, oy_hi) = self.valid_range(ky, g.h, g.ho);
                        for kx in 0..k {
                            let (ox_lo, ox_hi) = self.valid_range(kx, g.w, g.wo);
                            let len = ox_hi - ox_lo;
                            if len == 0 {
                                continue;
                            }
                            let wv = wts[co * kk + (ci * k + ky) * k + kx];
                            for oy in oy_lo..oy_hi {
                                let iy = oy + ky - self.pad;
                                let s0 = iy * g.w + ox_lo + kx - self.pad;
                                let d0 = oy * g.wo + ox_lo;
                                axpy(wv, &src[s0..s0 + len], &mut dst[d0..d0 + len]);
                            }
                        }
                    }
                }
            }
        }
    }

    fn backward<T: Real>(
        &self,
        params: &mut ParamStore<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_dx: bool,
    ) -> Result<Option<Tensor<T>>> {
        let g = self.geometry(x)?;
        if dy.shape() != [g.n, self.cout, g.ho, g.wo] {
            return Err(Error::dim("conv output gradient has the wrong shape"));
        }
        let plane_out = g.ho * g.wo;
        {
            let db = params.grad_mut(self.bias).data_mut();
            for (i, plane) in dy.data().chunks(plane_out).enumerate() {
                let co = i % self.cout;
                let mut s = T::zero();
                for &v in plane {
                    s = s + v;
                }
                db[co] = db[co] + s;
            }
        }
        let mut dx = if need_dx {
            Some(vec![T::zero(); g.n * g.c * g.h * g.w])
        } else {
            None
        };
        if self.direct() {
            self.backward_direct(params, x.data(), dy.data(), &g, dx.as_deref_mut());
        } else {
            self.backward_gemm(params, x.data(), dy.data(), &g, dx.as_deref_mut());
        }
        match dx {
            Some(dx) => Ok(Some(Tensor::from_vec(&[g.n, g.c, g.h, g.w], dx)?)),
            None => Ok(None),
        }
    }

    fn backward_gemm<T: Real>(
        &self,
        params: &mut ParamStore<T>,
        x: &[T],
        dy: &[T],
        g: &Geometry,
        dx: Option<&mut [T]>,
    ) {
        let kk = self.cin * self.k * self.k;
        let plane_out = g.ho * g.wo;
        let cols = g.n * plane_out;
        T::with_scratch(1, self.cout * cols, |dy_mat| {
            for ni in 0..g.n {
                for co in 0..self.cout {
                    let src = &dy[(ni * self.cout + co) * plane_out..(ni * self.cout + co + 1) * plane_out];
                    dy_mat[co * cols + ni * plane_out..co * cols + (ni + 1) * plane_out].copy_from_slice(src);
                }
            }
            T::with_scratch(0, kk * cols, |col| {
                self.im2col(x, g, col);
                mm::abt(self.cout, cols, kk, dy_mat, col, T::one(), params.grad_mut(self.weight).data_mut());
                if let Some(dx) = dx {
                    mm::atb(kk, self.cout, cols, params.value(self.weight).data(), dy_mat, T::zero(), col);
                    self.col2im(col, g, dx);
                }
            })
        })
    }

    fn backward_direct<T: Real>(
        &self,
        params: &mut ParamStore<T>,
        x: &[T],
        dy: &[T],
        g: &Geometry,
        mut dx: Option<&mut [T]>,
    ) {
        let k = self.k;
        let kk = self.cin * k * k;
        let (plane_in, plane_out) = (g.h * g.w, g.ho * g.wo);
        let wts = params.value(self.weight).data().to_vec();
        let dw = params.grad_mut(self.weight).data_mut();
        for co in 0..self.cout {
            for ci in 0..g.c {
                for ky in 0..k {
                    let (oy_lo, oy_hi) = self.valid_range(ky, g.h, g.ho);
                    for kx in 0..k {
                        let (ox_lo, ox_hi) = self.valid_range(kx, g.w, g.wo);
                        let len = ox_hi - ox_lo;
                        if len == 0 {
                            continue;
                        }
                        let widx = co * kk + (ci * k + ky) * k + kx;
                        let wv = wts[widx];
                        let mut acc = T::zero();
                        for ni in 0..g.n {
                            let src = &x[(ni * g.c + ci) * plane_in..(ni * g.c + ci + 1) * plane_in];
                            let grad = &dy[(ni * self.cout + co) * plane_out..(ni * self.cout + co + 1) * plane_out];
                            for oy in oy_lo..oy_hi {
                                let iy = oy + ky - self.pad;
                                let s0 = iy * g.w + ox_lo + kx - self.pad;
                                let d0 = oy * g.wo + ox_lo;
                                acc = acc + dot(&grad[d0..d0 + len], &src[s0..s0 + len]);
                            }
                            if let Some(dx) = dx.as_deref_mut() {
                                let dxp = &mut dx[(ni * g.c + ci) * plane_in..(ni * g.c + ci + 1) * plane_in];
                                for oy in oy_lo..oy_hi {
                                    let iy = oy + ky - self.pad;
                                    let s0 = iy * g.w + ox_lo + kx - self.pad;
                                    let d0 = oy * g.wo + ox_lo;
                                    axpy(wv, &grad[d0..d0 + len], &mut dxp[s0..s0 + len]);
                                }
                            }
                        }
                        dw[widx] = dw[widx] + acc;
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + a * xv;
    }
}

/// Dot product with eight fixed lanes, summed in lane order.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            lanes[l] = lanes[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    let mut s = T::zero();
    for l in lanes {
        s = s + l;
    }
    s + tail
}

fn instance_norm<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
    let (_, _, h, w) = x.dims4()?;
    let plane = h * w;
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.len() / plane);
    for p in out.data_mut().chunks_mut(plane) {
        let mean = p.iter().map(|v| v.as_f64()).sum::<f64>() / plane as f64;
        let var = p.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / plane as f64;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        let (mean_t, inv_t) = (T::from_f64(mean), T::from_f64(inv));
        for v in p.iter_mut() {
            *v = (*v - mean_t) * inv_t;
        }
        inv_std.push(inv_t);
    }
    Ok((out, inv_std))
}

fn instance_norm_backward<T: Real>(y: &Tensor<T>, inv_std: &[T], dy: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, _, h, w) = y.dims4()?;
    let plane = h * w;
    let inv_n = 1.0 / plane as f64;
    let mut dx = dy.clone();
    for ((d, yp), &inv) in dx
        .data_mut()
        .chunks_mut(plane)
        .zip(y.data().chunks(plane))
        .zip(inv_std)
    {
        let mean_dy = d.iter().map(|v| v.as_f64()).sum::<f64>() * inv_n;
        let mean_dyy = d.iter().zip(yp).map(|(a, b)| a.as_f64() * b.as_f64()).sum::<f64>() * inv_n;
        let (m1, m2) = (T::from_f64(mean_dy), T::from_f64(mean_dyy));
        for (dv, &yv) in d.iter_mut().zip(yp) {
            *dv = inv * (*dv - m1 - yv * m2);
        }
    }
    Ok(dx)
}

fn upsample2x<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); n * c * oh * ow];
    for (src, dst) in x.data().chunks(h * w).zip(out.chunks_mut(oh * ow)) {
        for oy in 0..oh {
            let srow = &src[(oy / 2) * w..(oy / 2 + 1) * w];
            let drow = &mut dst[oy * ow..(oy + 1) * ow];
            for (ox, d) in drow.iter_mut().enumerate() {
                *d = srow[ox / 2];
            }
        }
    }
    Tensor::from_vec(&[n, c, oh, ow], out)
}

fn upsample2x_backward<T: Real>(dy: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, oh, ow) = dy.dims4()?;
    let (h, w) = (oh / 2, ow / 2);
    let mut out = vec![T::zero(); n * c * h * w];
    for (src, dst) in dy.data().chunks(oh * ow).zip(out.chunks_mut(h * w)) {
        for oy in 0..oh {
            for ox in 0..ow {
                let d = &mut dst[(oy / 2) * w + ox / 2];
                *d = *d + src[oy * ow + ox];
            }
        }
    }
    Tensor::from_vec(&[n, c, h, w], out)
}

/// Runs `ops` on `x`, keeping intermediates when `record` is set.
/// Piecewise-linear activation masks. `Record` captures which inputs were
/// positive; `Replay` forces the same branches on later passes, so finite
/// differences see the linear piece the analytic gradient describes.
pub(crate) enum Pins<'a> {
    Off,
    Record(Vec<Vec<bool>>),
    Replay(&'a [Vec<bool>], usize),
}

impl Pins<'_> {
    fn activate<T: Real>(&mut self, x: &Tensor<T>, negative_slope: T) -> Result<Tensor<T>> {
        let apply = |v: T, pos: bool| if pos { v } else { v * negative_slope };
        match self {
            Pins::Off => Ok(x.map(|v| apply(v, v > T::zero()))),
            Pins::Record(masks) => {
                masks.push(x.data().iter().map(|&v| v > T::zero()).collect());
                Ok(x.map(|v| apply(v, v > T::zero())))
            }
            Pins::Replay(masks, next) => {
                let mask = masks
                    .get(*next)
                    .filter(|m| m.len() == x.len())
                    .ok_or_else(|| Error::State("activation pins do not match this network".into()))?;
                *next += 1;
                let data = x.data().iter().zip(mask).map(|(&v, &pos)| apply(v, pos)).collect();
                Tensor::from_vec(x.shape(), data)
            }
        }
    }
}

pub(crate) fn forward_ops<T: Real>(
    ops: &[Op],
    params: &ParamStore<T>,
    x: &Tensor<T>,
    record: bool,
    pins: &mut Pins<'_>,
) -> Result<(Tensor<T>, Vec<Cache<T>>)> {
    let mut caches = Vec::with_capacity(if record { ops.len() } else { 0 });
    let mut cur = x.clone();
    for op in ops {
        let (next, cache) = match op {
            Op::Conv(conv) => {
                let y = conv.forward(params, &cur)?;
                (y, Cache::Conv(cur))
            }
            Op::InstanceNorm => {
                let (y, inv_std) = instance_norm(&cur)?;
                let cache = if record {
                    Cache::Norm {
                        normalized: y.clone(),
                        inv_std,
                    }
                } else {
                    Cache::Upsample
                };
                (y, cache)
            }
            Op::Relu => {
                let y = pins.activate(&cur, T::zero())?;
                (y, Cache::Act(cur))
            }
            Op::LeakyRelu => {
                let y = pins.activate(&cur, T::from_f64(LEAKY_SLOPE))?;
                (y, Cache::Act(cur))
            }
            Op::Tanh => {
                let y = cur.map(|v| v.tanh());
                let cache = if record { Cache::Tanh(y.clone()) } else { Cache::Upsample };
                (y, cache)
            }
            Op::Upsample2x => (upsample2x(&cur)?, Cache::Upsample),
            Op::Residual(inner) => {
                let (mut y, inner_caches) = forward_ops(inner, params, &cur, record, pins)?;
                if y.shape() != cur.shape() {
                    return Err(Error::dim("residual branch changed the tensor shape"));
                }
                y.add_assign(&cur);
                (y, Cache::Residual(inner_caches))
            }
        };
        if record {
            caches.push(cache);
        }
        cur = next;
    }
    Ok((cur, caches))
}

/// Adjoint of [`forward_ops`]: accumulates parameter gradients and returns
/// the input gradient when `need_dx` is set.
pub(crate) fn backward_ops<T: Real>(
    ops: &[Op],
    params: &mut ParamStore<T>,
    caches: Vec<Cache<T>>,
    dy: Tensor<T>,
    need_dx: bool,
) -> Result<Option<Tensor<T>>> {
    if caches.len() != ops.len() {
        return Err(Error::State("intermediates do not match the network".into()));
    }
    let mut grad = dy;
    for (idx, (op, cache)) in ops.iter().zip(caches).enumerate().rev() {
        let want = need_dx || idx > 0;
        grad = match (op, cache) {
            (Op::Conv(conv), Cache::Conv(x)) => match conv.backward(params, &x, &grad, want)? {
                Some(dx) => dx,
                None => return Ok(None),
            },
            (Op::InstanceNorm, Cache::Norm { normalized, inv_std }) => {
                instance_norm_backward(&normalized, &inv_std, &grad)?
            }
            (Op::Relu, Cache::Act(x)) => {
                let mut g = grad;
                for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
                    if xv <= T::zero() {
                        *gv = T::zero();
                    }
                }
                g
            }
            (Op::LeakyRelu, Cache::Act(x)) => {
                let slope = T::from_f64(LEAKY_SLOPE);
                let mut g = grad;
                for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
                    if xv <= T::zero() {
                        *gv = *gv * slope;
                    }
                }
                g
            }
            (Op::Tanh, Cache::Tanh(y)) => {
                let mut g = grad;
                for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv = *gv * (T::one() - yv * yv);
                }
                g
            }
            (Op::Upsample2x, Cache::Upsample) => upsample2x_backward(&grad)?,
            (Op::Residual(inner), Cache::Residual(inner_caches)) => {
                let mut dx = backward_ops(inner, params, inner_caches, grad.clone(), true)?
                    .expect("input gradient requested");
                dx.add_assign(&grad);
                dx
            }
            _ => return Err(Error::State("intermediate does not match its layer".into())),
        };
    }
    Ok(Some(grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_store(cin: usize, cout: usize, k: usize, w: Vec<f64>, b: Vec<f64>) -> ParamStore<f64> {
        let mut p = ParamStore::new(0);
        p.push("w", Tensor::from_vec(&[cout, cin * k * k], w).unwrap()).unwrap();
        p.push("b", Tensor::from_vec(&[cout], b).unwrap()).unwrap();
        p
    }

    /// Direct nested-loop convolution.
    fn naive_conv(op: &ConvOp, p: &ParamStore<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (n, c, h, w) = x.dims4().unwrap();
        let ho = (h + 2 * op.pad - op.k) / op.stride + 1;
        let wo = (w + 2 * op.pad - op.k) / op.stride + 1;
        let wt = p.value(op.weight).data();
        let b = p.value(op.bias).data();
        let mut out = vec![0.0; n * op.cout * ho * wo];
        for ni in 0..n {
            for co in 0..op.cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[co];
                        for ci in 0..c {
                            for ky in 0..op.k {
                                for kx in 0..op.k {
                                    let iy = (oy * op.stride + ky) as i64 - op.pad as i64;
                                    let ix = (ox * op.stride + kx) as i64 - op.pad as i64;
                                    if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                        continue;
                                    }
                                    acc += wt[co * c * op.k * op.k + (ci * op.k + ky) * op.k + kx]
                                        * x.data()[((ni * c + ci) * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        out[((ni * op.cout + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        Tensor::from_vec(&[n, op.cout, ho, wo], out).unwrap()
    }

    #[test]
    fn conv_matches_naive_loops_for_all_layer_shapes() {
        let shapes = [(7, 1, 3), (3, 2, 1), (4, 2, 1), (3, 1, 1), (1, 1, 0)];
        for (&(k, stride, pad), &(cin, cout)) in shapes.iter().flat_map(|s| [(s, &(2, 3)), (s, &(6, 5))]) {
            let op = ConvOp {
                weight: 0,
                bias: 1,
                cin,
                cout,
                k,
                stride,
                pad,
            };
            let wv: Vec<f64> = (0..cout * cin * k * k).map(|i| ((i * 7 % 13) as f64 - 6.0) / 10.0).collect();
            let p = conv_store(cin, cout, k, wv, (0..cout).map(|i| 0.1 * i as f64 - 0.2).collect());
            let x = Tensor::from_vec(&[2, cin, 8, 8], (0..128 * cin).map(|i| ((i * 11 % 17) as f64) / 17.0).collect()).unwrap();
            let fast = op.forward(&p, &x).unwrap();
            let slow = naive_conv(&op, &p, &x);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_the_adjoint() {
        for &(stride, cin, cout) in &[(2, 2, 2), (1, 2, 3), (1, 6, 5)] {
            check_adjoint(stride, cin, cout);
        }
    }

    fn check_adjoint(stride: usize, cin: usize, cout: usize) {
        let op = ConvOp {
            weight: 0,
            bias: 1,
            cin,
            cout,
            k: 3,
            stride,
            pad: 1,
        };
        let wv: Vec<f64> = (0..cout * cin * 9).map(|i| ((i * 5 % 11) as f64 - 5.0) / 7.0).collect();
        let mut p = conv_store(cin, cout, 3, wv, vec![0.0; cout]);
        let x = Tensor::from_vec(&[2, cin, 6, 6], (0..72 * cin).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let o = 6 / stride;
        let dy = Tensor::from_vec(&[2, cout, o, o], (0..2 * cout * o * o).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let y = op.forward(&p, &x).unwrap();
        let dx = op.backward(&mut p, &x, &dy, true).unwrap().unwrap();
        // <conv(x), dy> is linear in x with zero bias: equals <x, dx>
        let lhs: f64 = y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        // and also linear in w
        let rhs_w: f64 = p.value(0).data().iter().zip(p.grad(0).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_w).abs() < 1e-12);
    }

    #[test]
    fn upsample_adjoint() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample2x(&x).unwrap();
        assert_eq!(y.data()[..4], [1.0, 1.0, 2.0, 2.0]);
        let back = upsample2x_backward(&Tensor::full(&[1, 1, 4, 4], 1.0f64)).unwrap();
        assert_eq!(back.data(), &[4.0; 4]);
    }
}
