//! 3×3 "same"-padded convolution (cross-correlation) via im2col + GEMM.
//!
//! Weights are laid out `[kh, kw, c_in, c_out]`, which is the (9·c_in)×c_out
//! matrix the im2col rows multiply against. Padding follows the usual "same"
//! rule: output side ceil(in/stride), with any odd padding pixel placed after
//! the input.

use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;

// Upper bound on im2col scratch elements per GEMM call.
const COL_BUDGET: usize = 1 << 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    batch: usize,
    h: usize,
    w: usize,
    c_in: usize,
    c_out: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Geometry {
    fn new(input: &[usize], weight: &[usize], stride: usize) -> Result<Self> {
        if !matches!(stride, 1 | 2) {
            return Err(Error::invalid(format!("conv2d stride must be 1 or 2, got {stride}")));
        }
        let &[batch, h, w, c_in] = input else {
            return Err(Error::invalid(format!("conv2d input must be NHWC, got {input:?}")));
        };
        let &[kh, kw, wc_in, c_out] = weight else {
            return Err(Error::invalid(format!("conv2d weight must be rank 4, got {weight:?}")));
        };
        if kh != KERNEL || kw != KERNEL {
            return Err(Error::invalid("conv2d supports 3x3 kernels only"));
        }
        if wc_in != c_in {
            return Err(Error::invalid(format!(
                "conv2d channel mismatch: input has {c_in}, weight expects {wc_in}"
            )));
        }
        let oh = h.div_ceil(stride);
        let ow = w.div_ceil(stride);
        let pad_h = ((oh - 1) * stride + KERNEL).saturating_sub(h);
        let pad_w = ((ow - 1) * stride + KERNEL).saturating_sub(w);
        Ok(Self {
            batch,
            h,
            w,
            c_in,
            c_out,
            stride,
            oh,
            ow,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        })
    }

    fn k(&self) -> usize {
        KERNEL * KERNEL * self.c_in
    }

    fn rows_per_sample(&self) -> usize {
        self.oh * self.ow
    }

    fn chunk(&self) -> usize {
        (COL_BUDGET / (self.rows_per_sample() * self.k()).max(1)).clamp(1, self.batch.max(1))
    }

    // Source pixel of output (oy, ox) under tap (ky, kx), if inside the image.
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad_top)?;
        let ix = (ox * self.stride + kx).checked_sub(self.pad_left)?;
        (iy < self.h && ix < self.w).then_some((iy, ix))
    }
}

fn im2col<T: Real>(g: &Geometry, input: &[T], first: usize, count: usize, cols: &mut [T]) {
    let k = g.k();
    let ci = g.c_in;
    for s in 0..count {
        let img = &input[(first + s) * g.h * g.w * ci..][..g.h * g.w * ci];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = &mut cols[((s * g.oh + oy) * g.ow + ox) * k..][..k];
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let dst = &mut row[(ky * KERNEL + kx) * ci..][..ci];
                        match g.source(oy, ox, ky, kx) {
                            Some((iy, ix)) => dst.copy_from_slice(&img[(iy * g.w + ix) * ci..][..ci]),
                            None => dst.fill(T::zero()),
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(g: &Geometry, cols: &[T], first: usize, count: usize, grad_in: &mut [T]) {
    let k = g.k();
    let ci = g.c_in;
    for s in 0..count {
        let img = &mut grad_in[(first + s) * g.h * g.w * ci..][..g.h * g.w * ci];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = &cols[((s * g.oh + oy) * g.ow + ox) * k..][..k];
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                            let src = &row[(ky * KERNEL + kx) * ci..][..ci];
                            let dst = &mut img[(iy * g.w + ix) * ci..][..ci];
                            for (d, &v) in dst.iter_mut().zip(src) {
                                *d = *d + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new(input.shape(), weight.shape(), stride)?;
    bias.expect_shape(&[g.c_out], "conv2d bias")?;
    let rows = g.rows_per_sample();
    let mut out = vec![T::zero(); g.batch * rows * g.c_out];
    for row in out.chunks_exact_mut(g.c_out) {
        row.copy_from_slice(bias.data());
    }
    let chunk = g.chunk();
    let mut cols = vec![T::zero(); chunk * rows * g.k()];
    let mut first = 0;
    while first < g.batch {
        let count = chunk.min(g.batch - first);
        im2col(&g, input.data(), first, count, &mut cols);
        let m = count * rows;
        T::gemm(
            m,
            g.k(),
            g.c_out,
            T::one(),
            &cols[..m * g.k()],
            (g.k() as isize, 1),
            weight.data(),
            (g.c_out as isize, 1),
            T::one(),
            &mut out[first * rows * g.c_out..][..m * g.c_out],
            g.c_out,
        );
        first += count;
    }
    Tensor::new(&[g.batch, g.oh, g.ow, g.c_out], out)
}

/// Gradients of a convolution: (d input, d weight, d bias).
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = Geometry::new(input.shape(), weight.shape(), stride)?;
    grad_out.expect_shape(&[g.batch, g.oh, g.ow, g.c_out], "conv2d grad_out")?;
    let rows = g.rows_per_sample();
    let k = g.k();
    let mut d_in = vec![T::zero(); input.len()];
    let mut d_w = vec![T::zero(); weight.len()];
    let mut d_b = vec![T::zero(); g.c_out];
    for row in grad_out.data().chunks_exact(g.c_out) {
        for (acc, &v) in d_b.iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    let chunk = g.chunk();
    let mut cols = vec![T::zero(); chunk * rows * k];
    let mut first = 0;
    while first < g.batch {
        let count = chunk.min(g.batch - first);
        let m = count * rows;
        let dy = &grad_out.data()[first * rows * g.c_out..][..m * g.c_out];
        im2col(&g, input.data(), first, count, &mut cols);
        // dW += colsᵀ · dY
        T::gemm(
            k,
            m,
            g.c_out,
            T::one(),
            &cols[..m * k],
            (1, k as isize),
            dy,
            (g.c_out as isize, 1),
            T::one(),
            &mut d_w,
            g.c_out,
        );
        // dcols = dY · Wᵀ
        T::gemm(
            m,
            g.c_out,
            k,
            T::one(),
            dy,
            (g.c_out as isize, 1),
            weight.data(),
            (1, g.c_out as isize),
            T::zero(),
            &mut cols[..m * k],
            k,
        );
        col2im_add(&g, &cols, first, count, &mut d_in);
        first += count;
    }
    Ok((
        Tensor::new(input.shape(), d_in)?,
        Tensor::new(weight.shape(), d_w)?,
        Tensor::new(&[g.c_out], d_b)?,
    ))
}
