//! Forward and backward kernels for the graph operators.
//!
//! Convolutions lower to im2col plus GEMM, processed in image chunks so the
//! packing scratch stays small. Reductions accumulate in f64 regardless of
//! the element type; everything is sequential and bit-deterministic.

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Reusable packing buffers for convolution lowering.
pub struct ConvScratch<T> {
    col: Vec<T>,
    io: Vec<T>,
}

impl<T: Scalar> Default for ConvScratch<T> {
    fn default() -> Self {
        Self { col: Vec::new(), io: Vec::new() }
    }
}

/// Number of im2col elements to buffer per GEMM call.
const COL_BUDGET: usize = 2 << 20;

pub fn conv2d_out_shape(x: [usize; 4], w: [usize; 4], stride: usize) -> [usize; 4] {
    let oh = (x[2] + 2 - 3) / stride + 1;
    let ow = (x[3] + 2 - 3) / stride + 1;
    [x[0], w[0], oh, ow]
}

/// Packs images `r0..r0+n_img` of `x` into `col` as a (Ci*9, n_img*OH*OW)
/// row-major matrix for a 3x3 kernel with padding 1.
fn im2col<T: Scalar>(x: &Tensor<T>, r0: usize, n_img: usize, stride: usize, oh: usize, ow: usize, col: &mut [T]) {
    let [_, ci, h, w] = x.shape();
    let cols = n_img * oh * ow;
    for c in 0..ci {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 3 + ky) * 3 + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                let mut di = 0usize;
                for i in 0..n_img {
                    let plane = &x.data()[x.offset(r0 + i, c, 0, 0)..x.offset(r0 + i, c, 0, 0) + h * w];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - 1;
                        let seg = &mut dst[di..di + ow];
                        di += ow;
                        if iy < 0 || iy >= h as isize {
                            seg.fill(T::ZERO);
                            continue;
                        }
                        let base = iy as usize * w;
                        if stride == 1 {
                            // ix = ox + kx - 1; valid ox range is a contiguous run.
                            let lo = 1usize.saturating_sub(kx);
                            let hi = (w + 1 - kx).min(ow);
                            seg[..lo].fill(T::ZERO);
                            seg[lo..hi].copy_from_slice(&plane[base + lo + kx - 1..base + hi + kx - 1]);
                            seg[hi..].fill(T::ZERO);
                        } else {
                            for (ox, s) in seg.iter_mut().enumerate() {
                                let ix = (ox * stride + kx) as isize - 1;
                                *s = if ix >= 0 && ix < w as isize {
                                    plane[base + ix as usize]
                                } else {
                                    T::ZERO
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatters dcol (the adjoint of im2col) back into `dx` with accumulation.
fn col2im_acc<T: Scalar>(dcol: &[T], dx: &mut Tensor<T>, r0: usize, n_img: usize, stride: usize, oh: usize, ow: usize) {
    let [_, ci, h, w] = dx.shape();
    let cols = n_img * oh * ow;
    for c in 0..ci {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 3 + ky) * 3 + kx;
                let src = &dcol[row * cols..(row + 1) * cols];
                let mut si = 0usize;
                for i in 0..n_img {
                    let off = dx.offset(r0 + i, c, 0, 0);
                    let plane = &mut dx.data_mut()[off..off + h * w];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - 1;
                        let seg = &src[si..si + ow];
                        si += ow;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = iy as usize * w;
                        if stride == 1 {
                            let lo = 1usize.saturating_sub(kx);
                            let hi = (w + 1 - kx).min(ow);
                            for ox in lo..hi {
                                let t: &mut T = &mut plane[base + ox + kx - 1];
                                *t = T::from_f64(t.to_f64() + seg[ox].to_f64());
                            }
                        } else {
                            for (ox, s) in seg.iter().enumerate() {
                                let ix = (ox * stride + kx) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    let t: &mut T = &mut plane[base + ix as usize];
                                    *t = T::from_f64(t.to_f64() + s.to_f64());
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn chunk_images(total: usize, cik: usize, ohw: usize) -> usize {
    (COL_BUDGET / (cik * ohw)).clamp(1, total)
}

pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, scratch: &mut ConvScratch<T>) -> Tensor<T> {
    let [r, _, _, _] = x.shape();
    let [co, ci, _, _] = w.shape();
    let [_, _, oh, ow] = conv2d_out_shape(x.shape(), w.shape(), stride);
    let (cik, ohw) = (ci * 9, oh * ow);
    let mut y = Tensor::zeros([r, co, oh, ow]);
    let chunk = chunk_images(r, cik, ohw);
    scratch.col.resize(cik * chunk * ohw, T::ZERO);
    scratch.io.resize(co * chunk * ohw, T::ZERO);
    let mut r0 = 0;
    while r0 < r {
        let n_img = chunk.min(r - r0);
        let cols = n_img * ohw;
        im2col(x, r0, n_img, stride, oh, ow, &mut scratch.col[..cik * cols]);
        unsafe {
            T::gemm(
                co, cik, cols,
                T::ONE,
                w.data().as_ptr(), cik as isize, 1,
                scratch.col.as_ptr(), cols as isize, 1,
                T::ZERO,
                scratch.io.as_mut_ptr(), cols as isize, 1,
            );
        }
        for c in 0..co {
            for i in 0..n_img {
                let dst = y.offset(r0 + i, c, 0, 0);
                y.data_mut()[dst..dst + ohw].copy_from_slice(&scratch.io[c * cols + i * ohw..c * cols + (i + 1) * ohw]);
            }
        }
        r0 += n_img;
    }
    y
}

/// Returns `(dx, dw)`; `dx` is skipped when the input does not need it.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    need_dx: bool,
    scratch: &mut ConvScratch<T>,
) -> (Option<Tensor<T>>, Tensor<T>) {
    let [r, _, _, _] = x.shape();
    let [co, ci, _, _] = w.shape();
    let [_, _, oh, ow] = dy.shape();
    let (cik, ohw) = (ci * 9, oh * ow);
    let mut dw = Tensor::zeros(w.shape());
    let mut dx = if need_dx { Some(Tensor::zeros(x.shape())) } else { None };
    let chunk = chunk_images(r, cik, ohw);
    scratch.col.resize(cik * chunk * ohw, T::ZERO);
    scratch.io.resize(co * chunk * ohw, T::ZERO);
    let mut r0 = 0;
    while r0 < r {
        let n_img = chunk.min(r - r0);
        let cols = n_img * ohw;
        // Gather the output gradient chunk as a (Co, cols) matrix.
        for c in 0..co {
            for i in 0..n_img {
                let src = dy.offset(r0 + i, c, 0, 0);
                scratch.io[c * cols + i * ohw..c * cols + (i + 1) * ohw]
                    .copy_from_slice(&dy.data()[src..src + ohw]);
            }
        }
        im2col(x, r0, n_img, stride, oh, ow, &mut scratch.col[..cik * cols]);
        unsafe {
            // dW += dY * col^T
            T::gemm(
                co, cols, cik,
                T::ONE,
                scratch.io.as_ptr(), cols as isize, 1,
                scratch.col.as_ptr(), 1, cols as isize,
                T::ONE,
                dw.data_mut().as_mut_ptr(), cik as isize, 1,
            );
        }
        if let Some(dx) = dx.as_mut() {
            // dcol = W^T * dY, reusing the col buffer.
            unsafe {
                T::gemm(
                    cik, co, cols,
                    T::ONE,
                    w.data().as_ptr(), 1, cik as isize,
                    scratch.io.as_ptr(), cols as isize, 1,
                    T::ZERO,
                    scratch.col.as_mut_ptr(), cols as isize, 1,
                );
            }
            col2im_acc(&scratch.col[..cik * cols], dx, r0, n_img, stride, oh, ow);
        }
        r0 += n_img;
    }
    (dx, dw)
}

pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let [n, f, _, _] = x.shape();
    let [o, _, _, _] = w.shape();
    let mut y = Tensor::zeros([n, o, 1, 1]);
    unsafe {
        // y = x * w^T
        T::gemm(
            n, f, o,
            T::ONE,
            x.data().as_ptr(), f as isize, 1,
            w.data().as_ptr(), 1, f as isize,
            T::ZERO,
            y.data_mut().as_mut_ptr(), o as isize, 1,
        );
    }
    for i in 0..n {
        for j in 0..o {
            let t: &mut T = &mut y.data_mut()[i * o + j];
            *t = T::from_f64(t.to_f64() + b.data()[j].to_f64());
        }
    }
    y
}

pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    need_dx: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let [n, f, _, _] = x.shape();
    let [o, _, _, _] = w.shape();
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros([o, 1, 1, 1]);
    unsafe {
        // dW = dY^T * x
        T::gemm(
            o, n, f,
            T::ONE,
            dy.data().as_ptr(), 1, o as isize,
            x.data().as_ptr(), f as isize, 1,
            T::ZERO,
            dw.data_mut().as_mut_ptr(), f as isize, 1,
        );
    }
    for j in 0..o {
        let mut acc = 0f64;
        for i in 0..n {
            acc += dy.data()[i * o + j].to_f64();
        }
        db.data_mut()[j] = T::from_f64(acc);
    }
    let dx = need_dx.then(|| {
        let mut dx = Tensor::zeros(x.shape());
        unsafe {
            // dX = dY * W
            T::gemm(
                n, o, f,
                T::ONE,
                dy.data().as_ptr(), o as isize, 1,
                w.data().as_ptr(), f as isize, 1,
                T::ZERO,
                dx.data_mut().as_mut_ptr(), f as isize, 1,
            );
        }
        dx
    });
    (dx, dw, db)
}

pub struct BnForward<T> {
    pub y: Tensor<T>,
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

pub fn batch_norm_train<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> BnForward<T> {
    let [r, c, h, w] = x.shape();
    let plane = h * w;
    let n = (r * plane) as f64;
    let mut mean = vec![0f64; c];
    let mut var = vec![0f64; c];
    for ci in 0..c {
        let (mut s, mut s2) = (0f64, 0f64);
        for ri in 0..r {
            let off = x.offset(ri, ci, 0, 0);
            for &v in &x.data()[off..off + plane] {
                let v = v.to_f64();
                s += v;
                s2 += v * v;
            }
        }
        let m = s / n;
        mean[ci] = m;
        var[ci] = (s2 / n - m * m).max(0.0);
    }
    let mut y = Tensor::zeros(x.shape());
    let mut xhat = Tensor::zeros(x.shape());
    let inv_std: Vec<T> = var.iter().map(|&v| T::from_f64(1.0 / (v + eps).sqrt())).collect();
    for ci in 0..c {
        let (g, b) = (gamma.data()[ci], beta.data()[ci]);
        let (m, is) = (T::from_f64(mean[ci]), inv_std[ci]);
        for ri in 0..r {
            let off = x.offset(ri, ci, 0, 0);
            for k in off..off + plane {
                let xh = T::from_f64((x.data()[k].to_f64() - m.to_f64()) * is.to_f64());
                xhat.data_mut()[k] = xh;
                y.data_mut()[k] = T::from_f64(g.to_f64() * xh.to_f64() + b.to_f64());
            }
        }
    }
    BnForward { y, xhat, inv_std, batch_mean: mean, batch_var: var }
}

pub fn batch_norm_eval<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
) -> Tensor<T> {
    let [r, c, h, w] = x.shape();
    let plane = h * w;
    let mut y = Tensor::zeros(x.shape());
    for ci in 0..c {
        let scale = gamma.data()[ci].to_f64() / (running_var.data()[ci].to_f64() + eps).sqrt();
        let shift = beta.data()[ci].to_f64() - running_mean.data()[ci].to_f64() * scale;
        for ri in 0..r {
            let off = x.offset(ri, ci, 0, 0);
            for k in off..off + plane {
                y.data_mut()[k] = T::from_f64(x.data()[k].to_f64() * scale + shift);
            }
        }
    }
    y
}

/// Train-mode backward using the cached normalized input.
pub fn batch_norm_backward<T: Scalar>(
    xhat: &Tensor<T>,
    inv_std: &[T],
    gamma: &Tensor<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [r, c, h, w] = xhat.shape();
    let plane = h * w;
    let n = (r * plane) as f64;
    let mut dgamma = Tensor::zeros([c, 1, 1, 1]);
    let mut dbeta = Tensor::zeros([c, 1, 1, 1]);
    let mut dx = Tensor::zeros(xhat.shape());
    for ci in 0..c {
        let (mut s1, mut s2) = (0f64, 0f64);
        for ri in 0..r {
            let off = xhat.offset(ri, ci, 0, 0);
            for k in off..off + plane {
                let d = dy.data()[k].to_f64();
                s1 += d * xhat.data()[k].to_f64();
                s2 += d;
            }
        }
        dgamma.data_mut()[ci] = T::from_f64(s1);
        dbeta.data_mut()[ci] = T::from_f64(s2);
        let coef = gamma.data()[ci].to_f64() * inv_std[ci].to_f64();
        for ri in 0..r {
            let off = xhat.offset(ri, ci, 0, 0);
            for k in off..off + plane {
                let d = dy.data()[k].to_f64();
                let xh = xhat.data()[k].to_f64();
                dx.data_mut()[k] = T::from_f64(coef * (d - (s2 + xh * s1) / n));
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = v.maximum(T::ZERO);
    }
    y
}

/// Subgradient 0 at exactly zero, determined by the stored output.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(y.shape());
    for ((d, &yy), &g) in dx.data_mut().iter_mut().zip(y.data()).zip(dy.data()) {
        if yy > T::ZERO {
            *d = g;
        }
    }
    dx
}

pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [r, c, h, w] = x.shape();
    let plane = (h * w) as f64;
    let mut y = Tensor::zeros([r, c, 1, 1]);
    for ri in 0..r {
        for ci in 0..c {
            let off = x.offset(ri, ci, 0, 0);
            let s: f64 = x.data()[off..off + h * w].iter().map(|v| v.to_f64()).sum();
            y.data_mut()[ri * c + ci] = T::from_f64(s / plane);
        }
    }
    y
}

pub fn global_avg_pool_backward<T: Scalar>(x_shape: [usize; 4], dy: &Tensor<T>) -> Tensor<T> {
    let [r, c, h, w] = x_shape;
    let inv = 1.0 / (h * w) as f64;
    let mut dx = Tensor::zeros(x_shape);
    for ri in 0..r {
        for ci in 0..c {
            let g = T::from_f64(dy.data()[ri * c + ci].to_f64() * inv);
            let off = dx.offset(ri, ci, 0, 0);
            dx.data_mut()[off..off + h * w].fill(g);
        }
    }
    dx
}

/// Ties resolve to the lowest linear index.
pub fn global_max_pool<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let [r, c, h, w] = x.shape();
    let mut y = Tensor::zeros([r, c, 1, 1]);
    let mut argmax = vec![0u32; r * c];
    for ri in 0..r {
        for ci in 0..c {
            let off = x.offset(ri, ci, 0, 0);
            let mut best = x.data()[off];
            let mut best_k = 0usize;
            for (k, &v) in x.data()[off..off + h * w].iter().enumerate() {
                if v > best {
                    best = v;
                    best_k = k;
                }
            }
            y.data_mut()[ri * c + ci] = best;
            argmax[ri * c + ci] = (off + best_k) as u32;
        }
    }
    (y, argmax)
}

pub fn global_max_pool_backward<T: Scalar>(x_shape: [usize; 4], argmax: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(x_shape);
    for (i, &k) in argmax.iter().enumerate() {
        let t: &mut T = &mut dx.data_mut()[k as usize];
        *t = T::from_f64(t.to_f64() + dy.data()[i].to_f64());
    }
    dx
}

/// Row-wise softmax over the channel axis of a (N, C, 1, 1) tensor.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, _, _] = x.shape();
    let mut y = Tensor::zeros(x.shape());
    for i in 0..n {
        softmax_row(&x.data()[i * c..(i + 1) * c], &mut y.data_mut()[i * c..(i + 1) * c]);
    }
    y
}

fn softmax_row<T: Scalar>(x: &[T], y: &mut [T]) {
    let mut m = x[0];
    for &v in x {
        m = m.maximum(v);
    }
    let mut s = 0f64;
    for (o, &v) in y.iter_mut().zip(x) {
        let e = (v.to_f64() - m.to_f64()).exp();
        *o = T::from_f64(e);
        s += e;
    }
    for o in y.iter_mut() {
        *o = T::from_f64(o.to_f64() / s);
    }
}

pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>, group: usize) -> Tensor<T> {
    let n = y.numel() / group;
    let mut dx = Tensor::zeros(y.shape());
    for i in 0..n {
        let rng = i * group..(i + 1) * group;
        let dot: f64 = y.data()[rng.clone()]
            .iter()
            .zip(&dy.data()[rng.clone()])
            .map(|(&p, &g)| p.to_f64() * g.to_f64())
            .sum();
        for k in rng {
            let p = y.data()[k].to_f64();
            dx.data_mut()[k] = T::from_f64(p * (dy.data()[k].to_f64() - dot));
        }
    }
    dx
}

/// Softmax over fixed-size groups of consecutive rows of a (N, 1, 1, 1) tensor.
pub fn group_softmax<T: Scalar>(x: &Tensor<T>, group: usize) -> Tensor<T> {
    let n = x.numel() / group;
    let mut y = Tensor::zeros(x.shape());
    for i in 0..n {
        softmax_row(&x.data()[i * group..(i + 1) * group], &mut y.data_mut()[i * group..(i + 1) * group]);
    }
    y
}

/// out[b, :] = sum_k w[b*g + k] * f[b*g + k, :]
pub fn group_weighted_sum<T: Scalar>(wt: &Tensor<T>, feat: &Tensor<T>, group: usize) -> Tensor<T> {
    let [rows, f, _, _] = feat.shape();
    let n = rows / group;
    let mut y = Tensor::zeros([n, f, 1, 1]);
    for b in 0..n {
        for k in 0..group {
            let wv = wt.data()[b * group + k].to_f64();
            let src = (b * group + k) * f;
            let dst = b * f;
            for j in 0..f {
                let t: &mut T = &mut y.data_mut()[dst + j];
                *t = T::from_f64(t.to_f64() + wv * feat.data()[src + j].to_f64());
            }
        }
    }
    y
}

pub fn group_weighted_sum_backward<T: Scalar>(
    wt: &Tensor<T>,
    feat: &Tensor<T>,
    dy: &Tensor<T>,
    group: usize,
) -> (Tensor<T>, Tensor<T>) {
    let [rows, f, _, _] = feat.shape();
    let n = rows / group;
    let mut dwt = Tensor::zeros(wt.shape());
    let mut dfeat = Tensor::zeros(feat.shape());
    for b in 0..n {
        for k in 0..group {
            let row = b * group + k;
            let wv = wt.data()[row].to_f64();
            let mut acc = 0f64;
            for j in 0..f {
                let g = dy.data()[b * f + j].to_f64();
                acc += g * feat.data()[row * f + j].to_f64();
                dfeat.data_mut()[row * f + j] = T::from_f64(wv * g);
            }
            dwt.data_mut()[row] = T::from_f64(acc);
        }
    }
    (dwt, dfeat)
}

/// Mean over the batch of the cross-entropy between softmax(logits) and the
/// target distribution. Returns the scalar loss and the cached probabilities.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, target: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let [n, c, _, _] = logits.shape();
    let mut probs = Tensor::zeros(logits.shape());
    let mut total = 0f64;
    for i in 0..n {
        let row = &logits.data()[i * c..(i + 1) * c];
        let mut m = row[0];
        for &v in row {
            m = m.maximum(v);
        }
        let mut s = 0f64;
        for &v in row {
            s += (v.to_f64() - m.to_f64()).exp();
        }
        let lse = m.to_f64() + s.ln();
        for k in 0..c {
            let z = row[k].to_f64();
            probs.data_mut()[i * c + k] = T::from_f64((z - lse).exp());
            total += target.data()[i * c + k].to_f64() * (lse - z);
        }
    }
    (Tensor::scalar(T::from_f64(total / n as f64)), probs)
}

pub fn softmax_cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, target: &Tensor<T>, dloss: T) -> Tensor<T> {
    let [n, c, _, _] = probs.shape();
    let scale = dloss.to_f64() / n as f64;
    let mut dl = Tensor::zeros(probs.shape());
    for k in 0..n * c {
        dl.data_mut()[k] = T::from_f64((probs.data()[k].to_f64() - target.data()[k].to_f64()) * scale);
    }
    dl
}

pub fn add_assign<T: Scalar>(dst: &mut Tensor<T>, src: &Tensor<T>) {
    debug_assert_eq!(dst.shape(), src.shape());
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d = T::from_f64(d.to_f64() + s.to_f64());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: [usize; 4], v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, v)
    }

    #[test]
    fn conv_identity_kernel_reproduces_input() {
        // One-hot center kernel: output must equal input everywhere
        // (borders included since only the center tap is non-zero).
        let x = t([1, 1, 5, 5], (0..25).map(|v| v as f64 * 0.1).collect());
        let mut w = Tensor::zeros([1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let y = conv2d_forward(&x, &w, 1, &mut ConvScratch::default());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_stride2_shape_and_values() {
        let x = t([1, 1, 4, 4], (0..16).map(|v| v as f64).collect());
        let mut w = Tensor::zeros([1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let y = conv2d_forward(&x, &w, 2, &mut ConvScratch::default());
        assert_eq!(y.shape(), [1, 1, 2, 2]);
        assert_eq!(y.data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn conv_matches_naive_reference() {
        // Direct triple-loop reference on a small random-ish problem.
        let (r, ci, co, h, w) = (2, 3, 4, 6, 5);
        let x = t([r, ci, h, w], (0..r * ci * h * w).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.13).collect());
        let wt = t([co, ci, 3, 3], (0..co * ci * 9).map(|k| ((k * 53 % 17) as f64 - 8.0) * 0.07).collect());
        for stride in [1usize, 2] {
            let y = conv2d_forward(&x, &wt, stride, &mut ConvScratch::default());
            let [_, _, oh, ow] = y.shape();
            for b in 0..r {
                for c in 0..co {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = 0.0;
                            for cc in 0..ci {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        let iy = (oy * stride + ky) as isize - 1;
                                        let ix = (ox * stride + kx) as isize - 1;
                                        if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                            acc += x.at(b, cc, iy as usize, ix as usize)
                                                * wt.at(c, cc, ky, kx);
                                        }
                                    }
                                }
                            }
                            assert!((y.at(b, c, oy, ox) - acc).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let y = softmax(&t([1, 2, 1, 1], vec![0.0, 0.0]));
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn global_max_pool_routes_gradient_to_first_argmax() {
        let x = t([1, 1, 2, 2], vec![3.0, 7.0, 7.0, 1.0]);
        let (y, argmax) = global_max_pool(&x);
        assert_eq!(y.item(), 7.0);
        assert_eq!(argmax, vec![1]); // lowest linear index wins the tie
        let dx = global_max_pool_backward([1, 1, 2, 2], &argmax, &Tensor::scalar(1.0));
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn batch_norm_eval_matches_train_when_stats_agree() {
        let x = t([4, 2, 1, 1], vec![1.0, -2.0, 3.0, 0.5, -1.0, 2.0, 0.0, 1.5]);
        let gamma = t([2, 1, 1, 1], vec![1.3, 0.7]);
        let beta = t([2, 1, 1, 1], vec![0.1, -0.2]);
        let fwd = batch_norm_train(&x, &gamma, &beta, 1e-5);
        let rm = t([2, 1, 1, 1], fwd.batch_mean.clone());
        let rv = t([2, 1, 1, 1], fwd.batch_var.clone());
        let ye = batch_norm_eval(&x, &gamma, &beta, &rm, &rv, 1e-5);
        for (a, b) in fwd.y.data().iter().zip(ye.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
