//! Grouped 2-D convolution over NCHW tensors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

/// Geometry of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Stride-1 convolution with `(k - 1) / 2` zero padding on each axis.
    ///
    /// Shape-preserving for odd kernels.
    pub fn same(in_ch: usize, out_ch: usize, kernel_h: usize, kernel_w: usize, groups: usize, has_bias: bool) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel_h,
            kernel_w,
            stride_h: 1,
            stride_w: 1,
            pad_h: kernel_h.saturating_sub(1) / 2,
            pad_w: kernel_w.saturating_sub(1) / 2,
            groups,
            has_bias,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::shape("conv2d", d));
        if self.groups == 0 || self.stride_h == 0 || self.stride_w == 0 {
            return bad(format!("groups and strides must be >= 1 in {self:?}"));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.in_ch == 0 || self.out_ch == 0 {
            return bad(format!("zero-sized kernel or channel count in {self:?}"));
        }
        if !self.in_ch.is_multiple_of(self.groups) || !self.out_ch.is_multiple_of(self.groups) {
            return bad(format!(
                "in_ch {} and out_ch {} must both be divisible by groups {}",
                self.in_ch, self.out_ch, self.groups
            ));
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_ch / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_ch / self.groups
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_ch, self.in_per_group(), self.kernel_h, self.kernel_w)
    }

    pub fn bias_shape(&self) -> Option<Shape> {
        self.has_bias.then(|| Shape::new(1, self.out_ch, 1, 1))
    }

    pub fn param_count(&self) -> u64 {
        let w = (self.out_ch * self.in_per_group() * self.kernel_h * self.kernel_w) as u64;
        w + if self.has_bias { self.out_ch as u64 } else { 0 }
    }

    /// Output spatial extent for an `(h, w)` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let axis = |len: usize, pad: usize, k: usize, stride: usize| -> Option<usize> {
            let padded = len + 2 * pad;
            (padded >= k).then(|| (padded - k) / stride + 1)
        };
        match (
            axis(h, self.pad_h, self.kernel_h, self.stride_h),
            axis(w, self.pad_w, self.kernel_w, self.stride_w),
        ) {
            (Some(ho), Some(wo)) if ho >= 1 && wo >= 1 => Ok((ho, wo)),
            _ => Err(Error::geometry(
                "conv2d",
                format!(
                    "kernel {}x{} with padding ({},{}) does not fit a {h}x{w} input",
                    self.kernel_h, self.kernel_w, self.pad_h, self.pad_w
                ),
            )),
        }
    }

    /// Multiply-accumulates per batch item for an `(h, w)` input.
    pub fn mac_count(&self, h: usize, w: usize) -> Result<u64> {
        let (ho, wo) = self.output_hw(h, w)?;
        Ok((self.out_ch * self.in_per_group() * self.kernel_h * self.kernel_w) as u64 * (ho * wo) as u64)
    }
}

pub(crate) struct Geometry {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
}

pub(crate) fn check_conv<T: Element>(
    op: &'static str,
    x: Shape,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Geometry> {
    spec.validate()?;
    if x.c() != spec.in_ch {
        return Err(Error::shape(
            op,
            format!("input {x} has {} channels, spec expects {}", x.c(), spec.in_ch),
        ));
    }
    if weight.shape() != spec.weight_shape() {
        return Err(Error::shape(
            op,
            format!(
                "weight {} does not match expected {}",
                weight.shape(),
                spec.weight_shape()
            ),
        ));
    }
    match (bias, spec.bias_shape()) {
        (None, None) => {}
        (Some(b), Some(s)) if b.shape() == s => {}
        (b, s) => {
            return Err(Error::shape(
                op,
                format!("bias {:?} does not match expected {:?}", b.map(|t| t.shape()), s),
            ))
        }
    }
    let (ho, wo) = spec.output_hw(x.h(), x.w())?;
    Ok(Geometry {
        n: x.n(),
        h: x.h(),
        w: x.w(),
        ho,
        wo,
    })
}

/// Output indices `o` in `0..out_len` whose source `o * stride + k - pad` lies in `0..in_len`.
#[inline]
fn valid_range(out_len: usize, stride: usize, k: usize, pad: usize, in_len: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 }.min(out_len);
    let hi = if in_len + pad > k {
        ((in_len + pad - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Grouped convolution with zero padding.
///
/// Accumulation order per output element is bias, then input channel, then
/// kernel row, then kernel column, independent of thread count.
pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let g = check_conv("conv2d", x.shape(), spec, weight, bias)?;
    let (cpg_in, cpg_out) = (spec.in_per_group(), spec.out_per_group());
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let (sh, sw, ph, pw) = (spec.stride_h, spec.stride_w, spec.pad_h, spec.pad_w);
    let xd = x.data();
    let wd = weight.data();
    let plane_in = g.h * g.w;
    let plane_out = g.ho * g.wo;
    let mut out = vec![T::ZERO; g.n * spec.out_ch * plane_out];

    out.par_chunks_mut(plane_out.max(1))
        .enumerate()
        .for_each(|(plane, dst)| {
            let (b, o) = (plane / spec.out_ch, plane % spec.out_ch);
            let group = o / cpg_out;
            if let Some(bias) = bias {
                dst.fill(bias.data()[o]);
            }
            for ci in 0..cpg_in {
                let c = group * cpg_in + ci;
                let src = &xd[(b * spec.in_ch + c) * plane_in..][..plane_in];
                for ky in 0..kh {
                    let (y_lo, y_hi) = valid_range(g.ho, sh, ky, ph, g.h);
                    for kx in 0..kw {
                        let (x_lo, x_hi) = valid_range(g.wo, sw, kx, pw, g.w);
                        let wv = wd[((o * cpg_in + ci) * kh + ky) * kw + kx];
                        for y in y_lo..y_hi {
                            let iy = y * sh + ky - ph;
                            let row = &src[iy * g.w..][..g.w];
                            let out_row = &mut dst[y * g.wo..][..g.wo];
                            if sw == 1 {
                                let off = kx as isize - pw as isize;
                                for (xo, acc) in out_row[x_lo..x_hi].iter_mut().enumerate() {
                                    *acc += wv * row[((x_lo + xo) as isize + off) as usize];
                                }
                            } else {
                                for xo in x_lo..x_hi {
                                    out_row[xo] += wv * row[xo * sw + kx - pw];
                                }
                            }
                        }
                    }
                }
            }
        });

    let out = Tensor::from_vec(Shape::new(g.n, spec.out_ch, g.ho, g.wo), out)?;
    out.ensure_finite("conv2d")?;
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub struct ConvGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    if x.shape().c() != spec.in_ch || weight.shape() != spec.weight_shape() {
        return Err(Error::shape(
            "conv2d_backward",
            "saved input or weight does not match spec",
        ));
    }
    let (ho, wo) = spec.output_hw(x.shape().h(), x.shape().w())?;
    let expected = Shape::new(x.shape().n(), spec.out_ch, ho, wo);
    if d_out.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!("upstream gradient {} does not match output {expected}", d_out.shape()),
        ));
    }
    let [n, _, h, w] = x.shape().0;
    let (cpg_in, cpg_out) = (spec.in_per_group(), spec.out_per_group());
    let (kh, kw) = (spec.kernel_h, spec.kernel_w);
    let (sh, sw, ph, pw) = (spec.stride_h, spec.stride_w, spec.pad_h, spec.pad_w);
    let (xd, wd, gd) = (x.data(), weight.data(), d_out.data());
    let plane_in = h * w;
    let plane_out = ho * wo;

    // dW: one task per output channel.
    let per_o = cpg_in * kh * kw;
    let mut dw = vec![T::ZERO; spec.out_ch * per_o];
    dw.par_chunks_mut(per_o).enumerate().for_each(|(o, dst)| {
        let group = o / cpg_out;
        for b in 0..n {
            let gplane = &gd[(b * spec.out_ch + o) * plane_out..][..plane_out];
            for ci in 0..cpg_in {
                let c = group * cpg_in + ci;
                let src = &xd[(b * spec.in_ch + c) * plane_in..][..plane_in];
                for ky in 0..kh {
                    let (y_lo, y_hi) = valid_range(ho, sh, ky, ph, h);
                    for kx in 0..kw {
                        let (x_lo, x_hi) = valid_range(wo, sw, kx, pw, w);
                        let mut acc = T::ZERO;
                        for y in y_lo..y_hi {
                            let iy = y * sh + ky - ph;
                            for xo in x_lo..x_hi {
                                acc += gplane[y * wo + xo] * src[iy * w + xo * sw + kx - pw];
                            }
                        }
                        dst[(ci * kh + ky) * kw + kx] += acc;
                    }
                }
            }
        }
    });

    // dX: one task per (batch, input channel) plane.
    let mut dx = vec![T::ZERO; n * spec.in_ch * plane_in];
    dx.par_chunks_mut(plane_in.max(1)).enumerate().for_each(|(plane, dst)| {
        let (b, c) = (plane / spec.in_ch, plane % spec.in_ch);
        let group = c / cpg_in;
        let ci = c % cpg_in;
        for co in 0..cpg_out {
            let o = group * cpg_out + co;
            let gplane = &gd[(b * spec.out_ch + o) * plane_out..][..plane_out];
            for ky in 0..kh {
                let (y_lo, y_hi) = valid_range(ho, sh, ky, ph, h);
                for kx in 0..kw {
                    let (x_lo, x_hi) = valid_range(wo, sw, kx, pw, w);
                    let wv = wd[((o * cpg_in + ci) * kh + ky) * kw + kx];
                    for y in y_lo..y_hi {
                        let iy = y * sh + ky - ph;
                        for xo in x_lo..x_hi {
                            dst[iy * w + xo * sw + kx - pw] += wv * gplane[y * wo + xo];
                        }
                    }
                }
            }
        }
    });

    let db = spec.has_bias.then(|| {
        let mut db = vec![T::ZERO; spec.out_ch];
        for b in 0..n {
            for (o, acc) in db.iter_mut().enumerate() {
                for &v in &gd[(b * spec.out_ch + o) * plane_out..][..plane_out] {
                    *acc += v;
                }
            }
        }
        db
    });

    let dx = Tensor::from_vec(x.shape(), dx)?;
    let dw = Tensor::from_vec(spec.weight_shape(), dw)?;
    let db = match db {
        Some(v) => Some(Tensor::from_vec(Shape::new(1, spec.out_ch, 1, 1), v)?),
        None => None,
    };
    dx.ensure_finite("conv2d_backward")?;
    dw.ensure_finite("conv2d_backward")?;
    Ok(ConvGrads { dx, dw, db })
}

/// Literal nested-loop convolution used as ground truth.
pub fn direct_conv_oracle<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    direct_conv_oracle_counted(x, spec, weight, bias).map(|(t, _)| t)
}

/// [`direct_conv_oracle`] plus the number of multiply-accumulates it executed,
/// padded taps included.
pub fn direct_conv_oracle_counted<T: Element>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, u64)> {
    let g = check_conv("direct_conv_oracle", x.shape(), spec, weight, bias)?;
    let out_shape = Shape::new(g.n, spec.out_ch, g.ho, g.wo);
    let mut out = vec![T::ZERO; out_shape.numel()];
    let mut macs = 0u64;
    let cpg_in = spec.in_per_group();
    let cpg_out = spec.out_per_group();
    for n in 0..g.n {
        for o in 0..spec.out_ch {
            for y in 0..g.ho {
                for xo in 0..g.wo {
                    let mut acc = bias.map_or(T::ZERO, |b| b.data()[o]);
                    for ci in 0..cpg_in {
                        let c = (o / cpg_out) * cpg_in + ci;
                        for ky in 0..spec.kernel_h {
                            for kx in 0..spec.kernel_w {
                                let iy = (y * spec.stride_h + ky) as isize - spec.pad_h as isize;
                                let ix = (xo * spec.stride_w + kx) as isize - spec.pad_w as isize;
                                let v = if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                                    x.at(n, c, iy as usize, ix as usize)
                                } else {
                                    T::ZERO
                                };
                                acc += weight.at(o, ci, ky, kx) * v;
                                macs += 1;
                            }
                        }
                    }
                    out[out_shape.index(n, o, y, xo)] = acc;
                }
            }
        }
    }
    let out = Tensor::from_vec(out_shape, out)?;
    out.ensure_finite("direct_conv_oracle")?;
    Ok((out, macs))
}
