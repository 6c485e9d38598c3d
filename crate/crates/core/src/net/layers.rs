//! Network layers with explicit forward and backward passes.
//!
//! Inner loops run over contiguous slices with multi-accumulator
//! reductions; summation order is fixed, so results are deterministic.

use super::scalar::Scalar;
use super::tensor::{Feat2, Feat3};

/// Output index range [lo, hi) for which `o*stride + k_off - pad` lands
/// inside [0, in_size).
#[inline]
fn valid_range(k_off: usize, pad: usize, stride: usize, in_size: usize, out_size: usize) -> (usize, usize) {
    let lo = if k_off >= pad {
        0
    } else {
        (pad - k_off).div_ceil(stride)
    };
    if k_off > in_size - 1 + pad {
        return (0, 0);
    }
    let hi = ((in_size - 1 + pad - k_off) / stride + 1).min(out_size);
    (lo, hi.max(lo))
}

// ---------------------------------------------------------------------------
// Slice kernels
// ---------------------------------------------------------------------------

/// Four-accumulator dot product.
#[inline]
fn dot4<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::ZERO; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = T::ZERO;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// `y[i] += a * x[i]`.
#[inline]
fn axpy<T: Scalar>(y: &mut [T], x: &[T], a: T) {
    for (yv, xv) in y.iter_mut().zip(x.iter()) {
        *yv += a * *xv;
    }
}

/// `sum_i g[i] * x[2 i]`.
#[inline]
fn dot_gather2<T: Scalar>(g: &[T], x: &[T]) -> T {
    let n = g.len();
    if x.len() >= 2 * n {
        let mut acc0 = T::ZERO;
        let mut acc1 = T::ZERO;
        let mut cg = g.chunks_exact(2);
        let mut cx = x[..2 * n].chunks_exact(4);
        for (gc, xc) in (&mut cg).zip(&mut cx) {
            acc0 += gc[0] * xc[0];
            acc1 += gc[1] * xc[2];
        }
        let mut tail = T::ZERO;
        let xr = cx.remainder();
        for (k, gv) in cg.remainder().iter().enumerate() {
            tail += *gv * xr[2 * k];
        }
        return acc0 + acc1 + tail;
    }
    let mut acc = T::ZERO;
    for (i, gv) in g.iter().enumerate() {
        acc += *gv * x[2 * i];
    }
    acc
}

/// `y[i] += a * x[2 i]`.
#[inline]
fn axpy_gather2<T: Scalar>(y: &mut [T], x: &[T], a: T) {
    let n = y.len();
    if x.len() >= 2 * n {
        let mut cy = y.chunks_exact_mut(2);
        let mut cx = x[..2 * n].chunks_exact(4);
        for (yc, xc) in (&mut cy).zip(&mut cx) {
            yc[0] += a * xc[0];
            yc[1] += a * xc[2];
        }
        let xr = cx.remainder();
        for (k, yv) in cy.into_remainder().iter_mut().enumerate() {
            *yv += a * xr[2 * k];
        }
        return;
    }
    for (i, yv) in y.iter_mut().enumerate() {
        *yv += a * x[2 * i];
    }
}

/// `y[2 i] += a * g[i]`.
#[inline]
fn axpy_scatter2<T: Scalar>(y: &mut [T], g: &[T], a: T) {
    let n = g.len();
    if y.len() >= 2 * n {
        let mut cy = y[..2 * n].chunks_exact_mut(4);
        let mut cg = g.chunks_exact(2);
        for (yc, gc) in (&mut cy).zip(&mut cg) {
            yc[0] += a * gc[0];
            yc[2] += a * gc[1];
        }
        let yr = cy.into_remainder();
        for (k, gv) in cg.remainder().iter().enumerate() {
            yr[2 * k] += a * *gv;
        }
        return;
    }
    for (i, gv) in g.iter().enumerate() {
        y[2 * i] += a * *gv;
    }
}

// ---------------------------------------------------------------------------
// 2-D convolution
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// [out_c][in_c][k][k]
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: vec![T::ZERO; out_c * in_c * k * k],
            bias: vec![T::ZERO; out_c],
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    #[inline]
    fn w_idx(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.in_c + ic) * self.k + ky) * self.k + kx
    }

    pub fn forward(&self, x: &Feat2<T>) -> Feat2<T> {
        let (oh, ow) = self.out_dims(x.h, x.w);
        let mut out = Feat2::zeros(self.out_c, oh, ow);
        for oc in 0..self.out_c {
            let base = oc * oh * ow;
            for v in &mut out.data[base..base + oh * ow] {
                *v = self.bias[oc];
            }
            for ic in 0..self.in_c {
                let xch = ic * x.h * x.w;
                for ky in 0..self.k {
                    let (oy_lo, oy_hi) = valid_range(ky, self.pad, self.stride, x.h, oh);
                    for kx in 0..self.k {
                        let wv = self.weight[self.w_idx(oc, ic, ky, kx)];
                        let (ox_lo, ox_hi) = valid_range(kx, self.pad, self.stride, x.w, ow);
                        if ox_hi <= ox_lo {
                            continue;
                        }
                        for oy in oy_lo..oy_hi {
                            let iy = oy * self.stride + ky - self.pad;
                            let ix0 = ox_lo * self.stride + kx - self.pad;
                            let xrow = &x.data[xch + iy * x.w + ix0..];
                            let orow =
                                &mut out.data[base + oy * ow + ox_lo..base + oy * ow + ox_hi];
                            match self.stride {
                                1 => axpy(orow, xrow, wv),
                                2 => axpy_gather2(orow, xrow, wv),
                                s => {
                                    for (o, xv) in orow.iter_mut().zip(xrow.iter().step_by(s)) {
                                        *o += wv * *xv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Gradients w.r.t. input, weights and bias. `gw`/`gb` are accumulated.
    pub fn backward(
        &self,
        x: &Feat2<T>,
        gout: &Feat2<T>,
        gw: &mut [T],
        gb: &mut [T],
    ) -> Feat2<T> {
        let (oh, ow) = (gout.h, gout.w);
        let mut gx = Feat2::zeros(x.c, x.h, x.w);
        for oc in 0..self.out_c {
            let base = oc * oh * ow;
            let mut b_acc = T::ZERO;
            for v in &gout.data[base..base + oh * ow] {
                b_acc += *v;
            }
            gb[oc] += b_acc;
            for ic in 0..self.in_c {
                let xch = ic * x.h * x.w;
                for ky in 0..self.k {
                    let (oy_lo, oy_hi) = valid_range(ky, self.pad, self.stride, x.h, oh);
                    for kx in 0..self.k {
                        let wi = self.w_idx(oc, ic, ky, kx);
                        let wv = self.weight[wi];
                        let (ox_lo, ox_hi) = valid_range(kx, self.pad, self.stride, x.w, ow);
                        if ox_hi <= ox_lo {
                            continue;
                        }
                        let mut w_acc = T::ZERO;
                        for oy in oy_lo..oy_hi {
                            let iy = oy * self.stride + ky - self.pad;
                            let ix0 = ox_lo * self.stride + kx - self.pad;
                            let xbase = xch + iy * x.w + ix0;
                            let orow = base + oy * ow;
                            let grow = &gout.data[orow + ox_lo..orow + ox_hi];
                            match self.stride {
                                1 => {
                                    w_acc += dot4(grow, &x.data[xbase..xbase + grow.len()]);
                                    axpy(&mut gx.data[xbase..xbase + grow.len()], grow, wv);
                                }
                                2 => {
                                    w_acc += dot_gather2(grow, &x.data[xbase..]);
                                    axpy_scatter2(&mut gx.data[xbase..], grow, wv);
                                }
                                s => {
                                    let xs = &x.data[xbase..];
                                    let gxs = &mut gx.data[xbase..];
                                    for ((g, xv), gxv) in grow
                                        .iter()
                                        .zip(xs.iter().step_by(s))
                                        .zip(gxs.iter_mut().step_by(s))
                                    {
                                        w_acc += *g * *xv;
                                        *gxv += wv * *g;
                                    }
                                }
                            }
                        }
                        gw[wi] += w_acc;
                    }
                }
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// 3-D convolution (stride 1)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub pad: usize,
    /// [out_c][in_c][k (x)][k (y)][k (z)]
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv3d<T> {
    pub fn new(in_c: usize, out_c: usize, k: usize, pad: usize) -> Self {
        Self {
            in_c,
            out_c,
            k,
            pad,
            weight: vec![T::ZERO; out_c * in_c * k * k * k],
            bias: vec![T::ZERO; out_c],
        }
    }

    pub fn out_dims(&self, n: (usize, usize, usize)) -> (usize, usize, usize) {
        (
            n.0 + 2 * self.pad - self.k + 1,
            n.1 + 2 * self.pad - self.k + 1,
            n.2 + 2 * self.pad - self.k + 1,
        )
    }

    #[inline]
    fn w_idx(&self, oc: usize, ic: usize, kx: usize, ky: usize, kz: usize) -> usize {
        (((oc * self.in_c + ic) * self.k + kx) * self.k + ky) * self.k + kz
    }

    pub fn forward(&self, x: &Feat3<T>) -> Feat3<T> {
        let (ox_n, oy_n, oz_n) = self.out_dims((x.nx, x.ny, x.nz));
        let mut out = Feat3::zeros(self.out_c, ox_n, oy_n, oz_n);
        let ovol = ox_n * oy_n * oz_n;
        for oc in 0..self.out_c {
            let base = oc * ovol;
            for v in &mut out.data[base..base + ovol] {
                *v = self.bias[oc];
            }
            for ic in 0..self.in_c {
                let xch = ic * x.nx * x.ny * x.nz;
                for kz in 0..self.k {
                    let (z_lo, z_hi) = valid_range(kz, self.pad, 1, x.nz, oz_n);
                    for ky in 0..self.k {
                        let (y_lo, y_hi) = valid_range(ky, self.pad, 1, x.ny, oy_n);
                        for kx in 0..self.k {
                            let wv = self.weight[self.w_idx(oc, ic, kx, ky, kz)];
                            let (x_lo, x_hi) = valid_range(kx, self.pad, 1, x.nx, ox_n);
                            if x_hi <= x_lo {
                                continue;
                            }
                            let len = x_hi - x_lo;
                            // Rows along x are contiguous in both tensors.
                            for ozi in z_lo..z_hi {
                                let izi = ozi + kz - self.pad;
                                for oyi in y_lo..y_hi {
                                    let iyi = oyi + ky - self.pad;
                                    let x0 =
                                        xch + (izi * x.ny + iyi) * x.nx + x_lo + kx - self.pad;
                                    let o0 = base + (ozi * oy_n + oyi) * ox_n + x_lo;
                                    axpy(&mut out.data[o0..o0 + len], &x.data[x0..x0 + len], wv);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        x: &Feat3<T>,
        gout: &Feat3<T>,
        gw: &mut [T],
        gb: &mut [T],
    ) -> Feat3<T> {
        let (ox_n, oy_n, oz_n) = (gout.nx, gout.ny, gout.nz);
        let ovol = ox_n * oy_n * oz_n;
        let mut gx = Feat3::zeros(x.c, x.nx, x.ny, x.nz);
        for oc in 0..self.out_c {
            let base = oc * ovol;
            let mut b_acc = T::ZERO;
            for v in &gout.data[base..base + ovol] {
                b_acc += *v;
            }
            gb[oc] += b_acc;
            for ic in 0..self.in_c {
                let xch = ic * x.nx * x.ny * x.nz;
                for kz in 0..self.k {
                    let (z_lo, z_hi) = valid_range(kz, self.pad, 1, x.nz, oz_n);
                    for ky in 0..self.k {
                        let (y_lo, y_hi) = valid_range(ky, self.pad, 1, x.ny, oy_n);
                        for kx in 0..self.k {
                            let wi = self.w_idx(oc, ic, kx, ky, kz);
                            let wv = self.weight[wi];
                            let (x_lo, x_hi) = valid_range(kx, self.pad, 1, x.nx, ox_n);
                            if x_hi <= x_lo {
                                continue;
                            }
                            let len = x_hi - x_lo;
                            let mut w_acc = T::ZERO;
                            for ozi in z_lo..z_hi {
                                let izi = ozi + kz - self.pad;
                                for oyi in y_lo..y_hi {
                                    let iyi = oyi + ky - self.pad;
                                    let x0 =
                                        xch + (izi * x.ny + iyi) * x.nx + x_lo + kx - self.pad;
                                    let o0 = base + (ozi * oy_n + oyi) * ox_n + x_lo;
                                    let grow = &gout.data[o0..o0 + len];
                                    w_acc += dot4(grow, &x.data[x0..x0 + len]);
                                    axpy(&mut gx.data[x0..x0 + len], grow, wv);
                                }
                            }
                            gw[wi] += w_acc;
                        }
                    }
                }
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// 3-D max pooling (2x2x2)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MaxPool3Out<T> {
    pub out: Feat3<T>,
    /// Flat input index of the maximum per output cell.
    pub argmax: Vec<usize>,
}

pub fn maxpool3<T: Scalar>(x: &Feat3<T>) -> MaxPool3Out<T> {
    let (nx, ny, nz) = (x.nx / 2, x.ny / 2, x.nz / 2);
    let mut out = Feat3::zeros(x.c, nx, ny, nz);
    let mut argmax = vec![0usize; x.c * nx * ny * nz];
    for c in 0..x.c {
        for oxi in 0..nx {
            for oyi in 0..ny {
                for ozi in 0..nz {
                    let mut best = T::from_f64(f64::NEG_INFINITY);
                    let mut best_i = 0usize;
                    for dx in 0..2 {
                        for dy in 0..2 {
                            for dz in 0..2 {
                                let i =
                                    x.idx(c, 2 * oxi + dx, 2 * oyi + dy, 2 * ozi + dz);
                                if x.data[i] > best {
                                    best = x.data[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    let o = out.idx(c, oxi, oyi, ozi);
                    out.data[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
    }
    MaxPool3Out { out, argmax }
}

pub fn maxpool3_backward<T: Scalar>(
    pool: &MaxPool3Out<T>,
    x_shape: (usize, usize, usize, usize),
    gout: &Feat3<T>,
) -> Feat3<T> {
    let mut gx = Feat3::zeros(x_shape.0, x_shape.1, x_shape.2, x_shape.3);
    for (o, g) in gout.data.iter().enumerate() {
        gx.data[pool.argmax[o]] += *g;
    }
    gx
}

// ---------------------------------------------------------------------------
// ReLU, pooling, fully connected
// ---------------------------------------------------------------------------

pub fn relu_slice<T: Scalar>(x: &mut [T]) {
    for v in x {
        *v = v.maxv(T::ZERO);
    }
}

/// Gradient of ReLU given the pre-activation input.
pub fn relu_backward_slice<T: Scalar>(pre: &[T], g: &mut [T]) {
    for (gv, xv) in g.iter_mut().zip(pre.iter()) {
        if *xv <= T::ZERO {
            *gv = T::ZERO;
        }
    }
}

/// Global average pool of each channel.
pub fn global_avg_pool<T: Scalar>(x: &Feat2<T>) -> Vec<T> {
    let n = x.h * x.w;
    let inv = T::from_f64(1.0 / n as f64);
    (0..x.c)
        .map(|c| {
            let mut acc = T::ZERO;
            for v in x.channel(c) {
                acc += *v;
            }
            acc * inv
        })
        .collect()
}

pub fn global_avg_pool_backward<T: Scalar>(g: &[T], c: usize, h: usize, w: usize) -> Feat2<T> {
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut gx = Feat2::zeros(c, h, w);
    for ch in 0..c {
        let gv = g[ch] * inv;
        let base = ch * h * w;
        for v in &mut gx.data[base..base + h * w] {
            *v = gv;
        }
    }
    gx
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// [out_dim][in_dim]
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![T::ZERO; out_dim * in_dim],
            bias: vec![T::ZERO; out_dim],
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.in_dim);
        (0..self.out_dim)
            .map(|o| self.bias[o] + dot4(&self.weight[o * self.in_dim..(o + 1) * self.in_dim], x))
            .collect()
    }

    pub fn backward(&self, x: &[T], gout: &[T], gw: &mut [T], gb: &mut [T]) -> Vec<T> {
        let mut gx = vec![T::ZERO; self.in_dim];
        for o in 0..self.out_dim {
            let g = gout[o];
            gb[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
            axpy(grow, x, g);
            axpy(&mut gx, row, g);
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy
// ---------------------------------------------------------------------------

/// Numerically stable softmax probabilities.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut max = logits[0];
    for v in logits {
        max = max.maxv(*v);
    }
    let mut exp: Vec<T> = logits.iter().map(|v| (*v - max).exp()).collect();
    let mut sum = T::ZERO;
    for e in &exp {
        sum += *e;
    }
    for e in &mut exp {
        *e = *e / sum;
    }
    exp
}

/// Loss and logit gradient of softmax cross-entropy for one target class.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let p = softmax(logits);
    let eps = T::from_f64(1e-30);
    let loss = -(p[target].maxv(eps)).ln();
    let mut grad = p;
    grad[target] -= T::ONE;
    (loss, grad)
}
