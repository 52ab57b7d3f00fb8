//! Slice-level forward/backward kernels used by the graph ops.

use crate::float::{matmul, Float};

pub fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(size + 2 * pad >= k, "kernel {k} larger than padded input {size}+2*{pad}");
    (size + 2 * pad - k) / stride + 1
}

/// Unfolds one `c x h x w` image into a `(c*k*k) x (ho*wo)` column matrix.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Float>(x: &[T], c: usize, h: usize, w: usize, k: usize, s: usize, p: usize, col: &mut [T]) {
    let ho = conv_out(h, k, s, p);
    let wo = conv_out(w, k, s, p);
    debug_assert_eq!(col.len(), c * k * k * ho * wo);
    let mut row = 0;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let out = &mut col[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    let dst = &mut out[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into the image.
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Float>(col: &[T], c: usize, h: usize, w: usize, k: usize, s: usize, p: usize, x: &mut [T]) {
    let ho = conv_out(h, k, s, p);
    let wo = conv_out(w, k, s, p);
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let src = &col[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub k: usize,
    pub s: usize,
    pub p: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn pointwise(&self) -> bool {
        self.k == 1 && self.s == 1 && self.p == 0
    }
}

/// `y[n] = W · im2col(x[n]) + b`, weights `o x c x k x k`.
pub fn conv2d_forward<T: Float>(g: &ConvGeom, x: &[T], wt: &[T], b: Option<&[T]>, y: &mut [T]) {
    let kk = g.c * g.k * g.k;
    let hw = g.ho * g.wo;
    let mut col = if g.pointwise() { Vec::new() } else { vec![T::zero(); kk * hw] };
    for n in 0..g.n {
        let xn = &x[n * g.c * g.h * g.w..(n + 1) * g.c * g.h * g.w];
        let yn = &mut y[n * g.o * hw..(n + 1) * g.o * hw];
        let cols: &[T] = if g.pointwise() {
            xn
        } else {
            im2col(xn, g.c, g.h, g.w, g.k, g.s, g.p, &mut col);
            &col
        };
        match b {
            Some(b) => {
                for (oc, bias) in b.iter().enumerate() {
                    yn[oc * hw..(oc + 1) * hw].fill(*bias);
                }
                matmul(g.o, kk, hw, wt, false, cols, false, T::one(), yn);
            }
            None => matmul(g.o, kk, hw, wt, false, cols, false, T::zero(), yn),
        }
    }
}

/// Gradients of [`conv2d_forward`]; `dw`/`db` are accumulated into.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Float>(
    g: &ConvGeom,
    x: &[T],
    wt: &[T],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let kk = g.c * g.k * g.k;
    let hw = g.ho * g.wo;
    let mut col = if g.pointwise() { Vec::new() } else { vec![T::zero(); kk * hw] };
    let mut dcol = if g.pointwise() || dx.is_none() {
        Vec::new()
    } else {
        vec![T::zero(); kk * hw]
    };
    for n in 0..g.n {
        let xn = &x[n * g.c * g.h * g.w..(n + 1) * g.c * g.h * g.w];
        let dyn_ = &dy[n * g.o * hw..(n + 1) * g.o * hw];
        if let Some(db) = db.as_deref_mut() {
            for (oc, acc) in db.iter_mut().enumerate() {
                *acc += dyn_[oc * hw..(oc + 1) * hw].iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            let cols: &[T] = if g.pointwise() {
                xn
            } else {
                im2col(xn, g.c, g.h, g.w, g.k, g.s, g.p, &mut col);
                &col
            };
            matmul(g.o, hw, kk, dyn_, false, cols, true, T::one(), dw);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxn = &mut dx[n * g.c * g.h * g.w..(n + 1) * g.c * g.h * g.w];
            if g.pointwise() {
                matmul(kk, g.o, hw, wt, true, dyn_, false, T::one(), dxn);
            } else {
                matmul(kk, g.o, hw, wt, true, dyn_, false, T::zero(), &mut dcol);
                col2im(&dcol, g.c, g.h, g.w, g.k, g.s, g.p, dxn);
            }
        }
    }
}

/// Transposed convolution; weights `c x o x k x k`, input `n x c x h x w`,
/// output `n x o x ho x wo` with `ho = (h-1)s - 2p + k`.
pub fn conv_t_out(size: usize, k: usize, s: usize, p: usize) -> usize {
    (size - 1) * s + k - 2 * p
}

/// For the transposed conv, `g.c/g.h/g.w` describe the *output* image and
/// `g.o/g.ho/g.wo` the input, so the im2col helpers apply unchanged.
pub fn conv_t_forward<T: Float>(g: &ConvGeom, x: &[T], wt: &[T], b: Option<&[T]>, y: &mut [T]) {
    let okk = g.c * g.k * g.k;
    let hw_in = g.ho * g.wo;
    let hw_out = g.h * g.w;
    let mut col = vec![T::zero(); okk * hw_in];
    for n in 0..g.n {
        let xn = &x[n * g.o * hw_in..(n + 1) * g.o * hw_in];
        let yn = &mut y[n * g.c * hw_out..(n + 1) * g.c * hw_out];
        matmul(okk, g.o, hw_in, wt, true, xn, false, T::zero(), &mut col);
        match b {
            Some(b) => {
                for (oc, bias) in b.iter().enumerate() {
                    yn[oc * hw_out..(oc + 1) * hw_out].fill(*bias);
                }
            }
            None => yn.fill(T::zero()),
        }
        col2im(&col, g.c, g.h, g.w, g.k, g.s, g.p, yn);
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv_t_backward<T: Float>(
    g: &ConvGeom,
    x: &[T],
    wt: &[T],
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let okk = g.c * g.k * g.k;
    let hw_in = g.ho * g.wo;
    let hw_out = g.h * g.w;
    let mut dcol = vec![T::zero(); okk * hw_in];
    for n in 0..g.n {
        let xn = &x[n * g.o * hw_in..(n + 1) * g.o * hw_in];
        let dyn_ = &dy[n * g.c * hw_out..(n + 1) * g.c * hw_out];
        if let Some(db) = db.as_deref_mut() {
            for (oc, acc) in db.iter_mut().enumerate() {
                *acc += dyn_[oc * hw_out..(oc + 1) * hw_out].iter().copied().sum::<T>();
            }
        }
        im2col(dyn_, g.c, g.h, g.w, g.k, g.s, g.p, &mut dcol);
        if let Some(dx) = dx.as_deref_mut() {
            let dxn = &mut dx[n * g.o * hw_in..(n + 1) * g.o * hw_in];
            matmul(g.o, okk, hw_in, wt, false, &dcol, false, T::one(), dxn);
        }
        if let Some(dw) = dw.as_deref_mut() {
            matmul(g.o, hw_in, okk, xn, false, &dcol, true, T::one(), dw);
        }
    }
}

/// Source coordinate and weights for ×2 bilinear upsampling (half-pixel centers).
pub fn upsample_taps(out: usize, size: usize) -> (usize, usize, f64) {
    let src = ((out as f64 + 0.5) / 2.0 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(size - 1);
    let i1 = (i0 + 1).min(size - 1);
    (i0, i1, src - i0 as f64)
}

pub fn upsample2x_forward<T: Float>(x: &[T], planes: usize, h: usize, w: usize, y: &mut [T]) {
    let (ho, wo) = (2 * h, 2 * w);
    let ty: Vec<_> = (0..ho).map(|o| upsample_taps(o, h)).collect();
    let tx: Vec<_> = (0..wo).map(|o| upsample_taps(o, w)).collect();
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut y[p * ho * wo..(p + 1) * ho * wo];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::from_f64(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::from_f64(fx);
                let top = src[y0 * w + x0] * (T::one() - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (T::one() - fx) + src[y1 * w + x1] * fx;
                dst[oy * wo + ox] = top * (T::one() - fy) + bot * fy;
            }
        }
    }
}

pub fn upsample2x_backward<T: Float>(dy: &[T], planes: usize, h: usize, w: usize, dx: &mut [T]) {
    let (ho, wo) = (2 * h, 2 * w);
    let ty: Vec<_> = (0..ho).map(|o| upsample_taps(o, h)).collect();
    let tx: Vec<_> = (0..wo).map(|o| upsample_taps(o, w)).collect();
    for p in 0..planes {
        let g = &dy[p * ho * wo..(p + 1) * ho * wo];
        let d = &mut dx[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::from_f64(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::from_f64(fx);
                let v = g[oy * wo + ox];
                d[y0 * w + x0] += v * (T::one() - fy) * (T::one() - fx);
                d[y0 * w + x1] += v * (T::one() - fy) * fx;
                d[y1 * w + x0] += v * fy * (T::one() - fx);
                d[y1 * w + x1] += v * fy * fx;
            }
        }
    }
}

/// Max pooling; returns the flat input index chosen for every output.
#[allow(clippy::too_many_arguments)]
pub fn maxpool_forward<T: Float>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    y: &mut [T],
) -> Vec<u32> {
    let ho = conv_out(h, k, s, p);
    let wo = conv_out(w, k, s, p);
    let mut arg = vec![0u32; planes * ho * wo];
    for pl in 0..planes {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = T::neg_infinity();
                let mut best_i = 0usize;
                for ky in 0..k {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let i = pl * h * w + iy as usize * w + ix as usize;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                let o = pl * ho * wo + oy * wo + ox;
                y[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    arg
}
