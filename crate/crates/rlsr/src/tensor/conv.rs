//! 2D convolution (zero padding, square odd kernels) and sub-pixel shuffle.
//!
//! Convolution lowers to im2col plus a register-blocked matmul; that one
//! kernel carries nearly all training compute, so its inner tile is shaped to
//! autovectorize (MR x NR accumulators held in registers across the k loop).

use super::ops::{dot_lanes, mm_acc_strided};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Patch-matrix chunk budget in elements (~384 KB at f32); chunking keeps the
/// im2col scratch buffers cache-resident instead of materializing the full
/// patch matrix, which for a 9x9 kernel over a 64x64 plane would be ~40 MB.
const CHUNK_ELEMS: usize = 96 * 1024;

/// Output rows per im2col chunk.
fn chunk_rows(ckk: usize, ow: usize, oh: usize) -> usize {
    (CHUNK_ELEMS / (ckk * ow)).clamp(1, oh)
}

/// Below this output-channel count the patch matrix is too skinny to pay for
/// its materialization; a direct row-zip loop wins.
const DIRECT_COUT_MAX: usize = 7;

/// Output spatial extents: floor((dim + 2*pad - k) / stride) + 1.
pub fn conv2d_shape(
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::InvalidInput { op: "conv2d", message: "stride must be >= 1".into() });
    }
    if k == 0 || k % 2 == 0 {
        return Err(Error::InvalidInput {
            op: "conv2d",
            message: format!("kernel must be odd and positive, got {k}"),
        });
    }
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::Shape {
            op: "conv2d",
            message: format!("kernel {k} exceeds padded input {h}x{w} with pad {pad}"),
        });
    }
    Ok(((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1))
}

struct ConvDims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

/// Valid `ox` range such that `ox + shift` lands inside a width-`wd` row.
#[inline]
fn row_bounds(shift: isize, wd: usize, ow: usize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = ((wd as isize - shift).min(ow as isize)).max(lo as isize) as usize;
    (lo, hi)
}

/// Scatter output rows [oy0, oy0+rows) of one sample (Cin*H*W) into
/// patch-matrix layout (Cin*k*k, rows*OW). Out-of-image taps become zeros.
fn im2col<S: Scalar>(x: &[S], d: &ConvDims, oy0: usize, rows: usize, cols: &mut [S]) {
    let ip = d.h * d.w;
    let op = rows * d.ow;
    cols[..d.cin * d.k * d.k * op].fill(S::zero());
    for ci in 0..d.cin {
        let x_plane = &x[ci * ip..][..ip];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = &mut cols[((ci * d.k + ky) * d.k + kx) * op..][..op];
                for ry in 0..rows {
                    let iy = ((oy0 + ry) * d.stride + ky) as isize - d.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let x_row = &x_plane[iy as usize * d.w..][..d.w];
                    let seg = &mut row[ry * d.ow..][..d.ow];
                    if d.stride == 1 {
                        let shift = kx as isize - d.pad as isize;
                        let (lo, hi) = row_bounds(shift, d.w, d.ow);
                        if lo < hi {
                            let src = (lo as isize + shift) as usize;
                            seg[lo..hi].copy_from_slice(&x_row[src..src + hi - lo]);
                        }
                    } else {
                        for (ox, s) in seg.iter_mut().enumerate() {
                            let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                            if ix >= 0 && ix < d.w as isize {
                                *s = x_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Inverse scatter-add of [`im2col`]: accumulate (Cin*k*k, rows*OW) gradient
/// rows for output rows [oy0, oy0+rows) back into one sample (Cin*H*W).
fn col2im_add<S: Scalar>(gcols: &[S], d: &ConvDims, oy0: usize, rows: usize, gx: &mut [S]) {
    let ip = d.h * d.w;
    let op = rows * d.ow;
    for ci in 0..d.cin {
        let gx_plane = &mut gx[ci * ip..][..ip];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = &gcols[((ci * d.k + ky) * d.k + kx) * op..][..op];
                for ry in 0..rows {
                    let iy = ((oy0 + ry) * d.stride + ky) as isize - d.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let gx_row = &mut gx_plane[iy as usize * d.w..][..d.w];
                    let seg = &row[ry * d.ow..][..d.ow];
                    if d.stride == 1 {
                        let shift = kx as isize - d.pad as isize;
                        let (lo, hi) = row_bounds(shift, d.w, d.ow);
                        if lo < hi {
                            let dst = (lo as isize + shift) as usize;
                            for (o, &v) in gx_row[dst..dst + hi - lo].iter_mut().zip(&seg[lo..hi])
                            {
                                *o += v;
                            }
                        }
                    } else {
                        for (ox, &v) in seg.iter().enumerate() {
                            let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                            if ix >= 0 && ix < d.w as isize {
                                gx_row[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// dst (cols, rows) = src (rows, cols) transposed, in cache-friendly blocks.
fn transpose<S: Scalar>(src: &[S], rows: usize, cols: usize, dst: &mut [S]) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                let base = r * cols;
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[base + c];
                }
            }
        }
    }
}

fn conv_forward_direct<S: Scalar>(x: &[S], w: &[S], bias: Option<&[S]>, d: &ConvDims) -> Vec<S> {
    let (ip, op, kk) = (d.h * d.w, d.oh * d.ow, d.k * d.k);
    let mut out = vec![S::zero(); d.n * d.cout * op];
    for ni in 0..d.n {
        for co in 0..d.cout {
            let out_plane = &mut out[(ni * d.cout + co) * op..][..op];
            if let Some(b) = bias {
                out_plane.fill(b[co]);
            }
            for ci in 0..d.cin {
                let w_base = &w[(co * d.cin + ci) * kk..][..kk];
                let x_plane = &x[(ni * d.cin + ci) * ip..][..ip];
                for ky in 0..d.k {
                    for oy in 0..d.oh {
                        let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let x_row = &x_plane[iy as usize * d.w..][..d.w];
                        let out_row = &mut out_plane[oy * d.ow..][..d.ow];
                        for kx in 0..d.k {
                            let wv = w_base[ky * d.k + kx];
                            let shift = kx as isize - d.pad as isize;
                            if d.stride == 1 {
                                let (lo, hi) = row_bounds(shift, d.w, d.ow);
                                if lo < hi {
                                    let src = (lo as isize + shift) as usize;
                                    let xs = &x_row[src..src + hi - lo];
                                    for (o, &xv) in out_row[lo..hi].iter_mut().zip(xs) {
                                        *o += wv * xv;
                                    }
                                }
                            } else {
                                for (ox, o) in out_row.iter_mut().enumerate() {
                                    let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                                    if ix >= 0 && ix < d.w as isize {
                                        *o += wv * x_row[ix as usize];
                                    }
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

fn conv_grad_input_direct<S: Scalar>(g: &[S], w: &[S], d: &ConvDims) -> Vec<S> {
    let (ip, op, kk) = (d.h * d.w, d.oh * d.ow, d.k * d.k);
    let mut gx = vec![S::zero(); d.n * d.cin * ip];
    for ni in 0..d.n {
        for ci in 0..d.cin {
            let gx_plane = &mut gx[(ni * d.cin + ci) * ip..][..ip];
            for co in 0..d.cout {
                let w_base = &w[(co * d.cin + ci) * kk..][..kk];
                let g_plane = &g[(ni * d.cout + co) * op..][..op];
                for ky in 0..d.k {
                    for oy in 0..d.oh {
                        let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let gx_row = &mut gx_plane[iy as usize * d.w..][..d.w];
                        let g_row = &g_plane[oy * d.ow..][..d.ow];
                        for kx in 0..d.k {
                            let wv = w_base[ky * d.k + kx];
                            let shift = kx as isize - d.pad as isize;
                            if d.stride == 1 {
                                let (lo, hi) = row_bounds(shift, d.w, d.ow);
                                if lo < hi {
                                    let dst = (lo as isize + shift) as usize;
                                    let gxs = &mut gx_row[dst..dst + hi - lo];
                                    for (o, &gv) in gxs.iter_mut().zip(&g_row[lo..hi]) {
                                        *o += wv * gv;
                                    }
                                }
                            } else {
                                for (ox, &gv) in g_row.iter().enumerate() {
                                    let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                                    if ix >= 0 && ix < d.w as isize {
                                        gx_row[ix as usize] += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

fn conv_grad_weight_direct<S: Scalar>(g: &[S], x: &[S], d: &ConvDims) -> Vec<S> {
    let (ip, op, kk) = (d.h * d.w, d.oh * d.ow, d.k * d.k);
    let mut gw = vec![S::zero(); d.cout * d.cin * kk];
    for ni in 0..d.n {
        for co in 0..d.cout {
            let g_plane = &g[(ni * d.cout + co) * op..][..op];
            for ci in 0..d.cin {
                let gw_base = (co * d.cin + ci) * kk;
                let x_plane = &x[(ni * d.cin + ci) * ip..][..ip];
                for ky in 0..d.k {
                    for oy in 0..d.oh {
                        let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let x_row = &x_plane[iy as usize * d.w..][..d.w];
                        let g_row = &g_plane[oy * d.ow..][..d.ow];
                        for kx in 0..d.k {
                            let shift = kx as isize - d.pad as isize;
                            let mut acc = S::zero();
                            if d.stride == 1 {
                                let (lo, hi) = row_bounds(shift, d.w, d.ow);
                                if lo >= hi {
                                    continue;
                                }
                                let src = (lo as isize + shift) as usize;
                                acc = dot_lanes(&g_row[lo..hi], &x_row[src..src + hi - lo]);
                            } else {
                                for (ox, &gv) in g_row.iter().enumerate() {
                                    let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                                    if ix >= 0 && ix < d.w as isize {
                                        acc += gv * x_row[ix as usize];
                                    }
                                }
                            }
                            gw[gw_base + ky * d.k + kx] += acc;
                        }
                    }
                }
            }
        }
    }
    gw
}

fn conv_forward<S: Scalar>(x: &[S], w: &[S], bias: Option<&[S]>, d: &ConvDims) -> Vec<S> {
    if d.cout <= DIRECT_COUT_MAX {
        return conv_forward_direct(x, w, bias, d);
    }
    let (ip, op, kk) = (d.h * d.w, d.oh * d.ow, d.k * d.k);
    let ckk = d.cin * kk;
    let ch = chunk_rows(ckk, d.ow, d.oh);
    let mut out = vec![S::zero(); d.n * d.cout * op];
    let mut cols = vec![S::zero(); ckk * ch * d.ow];
    for ni in 0..d.n {
        let x_sample = &x[ni * d.cin * ip..][..d.cin * ip];
        let sample = &mut out[ni * d.cout * op..][..d.cout * op];
        if let Some(b) = bias {
            for co in 0..d.cout {
                sample[co * op..][..op].fill(b[co]);
            }
        }
        let mut oy0 = 0;
        while oy0 < d.oh {
            let rows = ch.min(d.oh - oy0);
            let n_ch = rows * d.ow;
            im2col(x_sample, d, oy0, rows, &mut cols);
            mm_acc_strided(
                &mut sample[oy0 * d.ow..],
                op,
                w,
                ckk,
                &cols,
                n_ch,
                d.cout,
                ckk,
                n_ch,
            );
            oy0 += rows;
        }
    }
    out
}

fn conv_grad_input<S: Scalar>(g: &[S], w: &[S], d: &ConvDims) -> Vec<S> {
    if d.cout <= DIRECT_COUT_MAX {
        return conv_grad_input_direct(g, w, d);
    }
    let (ip, op, kk) = (d.h * d.w, d.oh * d.ow, d.k * d.k);
    let ckk = d.cin * kk;
    let ch = chunk_rows(ckk, d.ow, d.oh);
    let mut gx = vec![S::zero(); d.n * d.cin * ip];
    let mut wt = vec![S::zero(); ckk * d.cout];
    transpose(w, d.cout, ckk, &mut wt);
    let mut gcols = vec![S::zero(); ckk * ch * d.ow];
    for ni in 0..d.n {
        let g_sample = &g[ni * d.cout * op..][..d.cout * op];
        let gx_sample = &mut gx[ni * d.cin * ip..][..d.cin * ip];
        let mut oy0 = 0;
        while oy0 < d.oh {
            let rows = ch.min(d.oh - oy0);
            let n_ch = rows * d.ow;
            gcols[..ckk * n_ch].fill(S::zero());
            mm_acc_strided(
                &mut gcols,
                n_ch,
                &wt,
                d.cout,
                &g_sample[oy0 * d.ow..],
                op,
                ckk,
                d.cout,
                n_ch,
            );
            col2im_add(&gcols, d, oy0, rows, gx_sample);
            oy0 += rows;
        }
    }
    gx
}

fn conv_grad_weight<S: Scalar>(g: &[S], x: &[S], d: &ConvDims) -> Vec<S> {
    if d.cout <= DIRECT_COUT_MAX {
        return conv_grad_weight_direct(g, x, d);
    }
    let (ip, op, kk) = (d.h * d.w, d.oh * d.ow, d.k * d.k);
    let ckk = d.cin * kk;
    let ch = chunk_rows(ckk, d.ow, d.oh);
    let mut gw = vec![S::zero(); d.cout * ckk];
    let mut cols = vec![S::zero(); ckk * ch * d.ow];
    let mut cols_t = vec![S::zero(); ch * d.ow * ckk];
    for ni in 0..d.n {
        let x_sample = &x[ni * d.cin * ip..][..d.cin * ip];
        let g_sample = &g[ni * d.cout * op..][..d.cout * op];
        let mut oy0 = 0;
        while oy0 < d.oh {
            let rows = ch.min(d.oh - oy0);
            let n_ch = rows * d.ow;
            im2col(x_sample, d, oy0, rows, &mut cols);
            transpose(&cols[..ckk * n_ch], ckk, n_ch, &mut cols_t);
            mm_acc_strided(
                &mut gw,
                ckk,
                &g_sample[oy0 * d.ow..],
                op,
                &cols_t,
                ckk,
                d.cout,
                n_ch,
                ckk,
            );
            oy0 += rows;
        }
    }
    gw
}

fn conv_grad_bias<S: Scalar>(g: &[S], d: &ConvDims) -> Vec<S> {
    let op = d.oh * d.ow;
    let mut gb = vec![S::zero(); d.cout];
    for ni in 0..d.n {
        for (co, b) in gb.iter_mut().enumerate() {
            let plane = &g[(ni * d.cout + co) * op..][..op];
            for &gv in plane {
                *b += gv;
            }
        }
    }
    gb
}

impl<S: Scalar> Tensor<S> {
    /// 2D convolution: input (N,Cin,H,W) with weight (Cout,Cin,k,k), zero
    /// padding `pad`, square odd kernel, optional per-output-channel bias.
    pub fn conv2d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<S>> {
        let (n, cin, h, w) = match *self.shape() {
            [n, c, h, w] => (n, c, h, w),
            _ => {
                return Err(Error::Shape {
                    op: "conv2d",
                    message: format!("input must be (N,Cin,H,W), got {:?}", self.shape()),
                })
            }
        };
        let (cout, wcin, kh, kw) = match *weight.shape() {
            [a, b, c, d] => (a, b, c, d),
            _ => {
                return Err(Error::Shape {
                    op: "conv2d",
                    message: format!("weight must be (Cout,Cin,k,k), got {:?}", weight.shape()),
                })
            }
        };
        if kh != kw {
            return Err(Error::Shape {
                op: "conv2d",
                message: format!("kernel must be square, got {kh}x{kw}"),
            });
        }
        if wcin != cin {
            return Err(Error::Shape {
                op: "conv2d",
                message: format!("input channels {cin} but weight expects {wcin}"),
            });
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(Error::Shape {
                    op: "conv2d",
                    message: format!("bias shape {:?} must be ({cout})", b.shape()),
                });
            }
        }
        let (oh, ow) = conv2d_shape(h, w, kh, stride, pad)?;
        let dims = ConvDims { n, cin, h, w, cout, k: kh, stride, pad, oh, ow };
        let x = self.data();
        let wv = weight.data();
        let bv = bias.map(|b| b.data());
        let out = conv_forward(&x, &wv, bv.as_deref().map(|v| v.as_slice()), &dims);

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let needs = (
            self.needs_grad(),
            weight.needs_grad(),
            bias.map(|b| b.needs_grad()).unwrap_or(false),
        );
        let has_bias = bias.is_some();
        Ok(Tensor::from_op(
            out,
            vec![n, cout, oh, ow],
            parents,
            Box::new(move |g| {
                let gx = needs.0.then(|| conv_grad_input(g, &wv, &dims));
                let gw = needs.1.then(|| conv_grad_weight(g, &x, &dims));
                let mut contribs = vec![gx, gw];
                if has_bias {
                    contribs.push(needs.2.then(|| conv_grad_bias(g, &dims)));
                }
                contribs
            }),
        ))
    }

    /// (N, C*r^2, H, W) -> (N, C, r*H, r*W); channel ci maps to output
    /// channel ci / r^2 at sub-pixel offset (dy, dx) = ((ci % r^2) / r, ci % r).
    pub fn pixel_shuffle(&self, r: usize) -> Result<Tensor<S>> {
        let (n, c, h, w) = match *self.shape() {
            [n, c, h, w] => (n, c, h, w),
            _ => {
                return Err(Error::Shape {
                    op: "pixel_shuffle",
                    message: format!("input must be rank-4, got {:?}", self.shape()),
                })
            }
        };
        if r == 0 || c % (r * r) != 0 {
            return Err(Error::Shape {
                op: "pixel_shuffle",
                message: format!("channels {c} not divisible by r^2 = {}", r * r),
            });
        }
        let co = c / (r * r);
        let x = self.data();
        let mut out = vec![S::zero(); x.len()];
        let (oh, ow) = (h * r, w * r);
        for ni in 0..n {
            for ci in 0..c {
                let oc = ci / (r * r);
                let dy = (ci % (r * r)) / r;
                let dx = ci % r;
                let src = &x[(ni * c + ci) * h * w..][..h * w];
                for y in 0..h {
                    for xpos in 0..w {
                        let oy = y * r + dy;
                        let ox = xpos * r + dx;
                        out[((ni * co + oc) * oh + oy) * ow + ox] = src[y * w + xpos];
                    }
                }
            }
        }
        let total = x.len();
        Ok(Tensor::from_op(
            out,
            vec![n, co, oh, ow],
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![S::zero(); total];
                for ni in 0..n {
                    for ci in 0..c {
                        let oc = ci / (r * r);
                        let dy = (ci % (r * r)) / r;
                        let dx = ci % r;
                        let dst = &mut gx[(ni * c + ci) * h * w..][..h * w];
                        for y in 0..h {
                            for xpos in 0..w {
                                let oy = y * r + dy;
                                let ox = xpos * r + dx;
                                dst[y * w + xpos] = g[((ni * co + oc) * oh + oy) * ow + ox];
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Inverse of [`pixel_shuffle`]: (N, C, r*H, r*W) -> (N, C*r^2, H, W).
    pub fn pixel_unshuffle(&self, r: usize) -> Result<Tensor<S>> {
        let (n, c, h, w) = match *self.shape() {
            [n, c, h, w] => (n, c, h, w),
            _ => {
                return Err(Error::Shape {
                    op: "pixel_unshuffle",
                    message: format!("input must be rank-4, got {:?}", self.shape()),
                })
            }
        };
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(Error::Shape {
                op: "pixel_unshuffle",
                message: format!("spatial dims {h}x{w} not divisible by r = {r}"),
            });
        }
        let (sh, sw) = (h / r, w / r);
        let oc = c * r * r;
        let x = self.data();
        let mut out = vec![S::zero(); x.len()];
        for ni in 0..n {
            for ci in 0..oc {
                let src_c = ci / (r * r);
                let dy = (ci % (r * r)) / r;
                let dx = ci % r;
                let src = &x[(ni * c + src_c) * h * w..][..h * w];
                let dst = &mut out[(ni * oc + ci) * sh * sw..][..sh * sw];
                for y in 0..sh {
                    for xpos in 0..sw {
                        dst[y * sw + xpos] = src[(y * r + dy) * w + (xpos * r + dx)];
                    }
                }
            }
        }
        let total = x.len();
        Ok(Tensor::from_op(
            out,
            vec![n, oc, sh, sw],
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![S::zero(); total];
                for ni in 0..n {
                    for ci in 0..oc {
                        let src_c = ci / (r * r);
                        let dy = (ci % (r * r)) / r;
                        let dx = ci % r;
                        let gsrc = &g[(ni * oc + ci) * sh * sw..][..sh * sw];
                        let gdst = &mut gx[(ni * c + src_c) * h * w..][..h * w];
                        for y in 0..sh {
                            for xpos in 0..sw {
                                gdst[(y * r + dy) * w + (xpos * r + dx)] = gsrc[y * sw + xpos];
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}
