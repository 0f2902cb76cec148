//! Integer-factor spatial upsampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    Nearest,
    /// Half-pixel centers, source coordinates clamped to the input extent.
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UpsampleSpec {
    pub factor: usize,
    pub mode: UpsampleMode,
}

impl UpsampleSpec {
    pub fn new(factor: usize, mode: UpsampleMode) -> Self {
        Self { factor, mode }
    }

    pub fn output_shape(&self, s: Shape) -> Shape {
        Shape::new(s.n(), s.c(), s.h() * self.factor, s.w() * self.factor)
    }
}

/// Per-output-index interpolation taps along one axis: `(i0, i1, w0, w1)`.
fn bilinear_taps(in_len: usize, factor: usize) -> Vec<(usize, usize, f64, f64)> {
    let max = in_len.saturating_sub(1) as f64;
    (0..in_len * factor)
        .map(|t| {
            let s = ((t as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, max);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            let l = s - i0 as f64;
            (i0, i1, 1.0 - l, l)
        })
        .collect()
}

pub fn upsample<T: Element>(x: &Tensor<T>, spec: &UpsampleSpec) -> Result<Tensor<T>> {
    if spec.factor == 0 {
        return Err(Error::shape("upsample", "factor must be >= 1"));
    }
    let f = spec.factor;
    let [n, c, h, w] = x.shape().0;
    let out_shape = spec.output_shape(x.shape());
    let (ho, wo) = (h * f, w * f);
    let xd = x.data();
    let mut out = Vec::with_capacity(out_shape.numel());
    match spec.mode {
        UpsampleMode::Nearest => {
            for plane in xd.chunks(h * w).take(n * c) {
                for y in 0..ho {
                    let row = &plane[(y / f) * w..][..w];
                    out.extend((0..wo).map(|xo| row[xo / f]));
                }
            }
        }
        UpsampleMode::Bilinear => {
            let ty = bilinear_taps(h, f);
            let tx: Vec<_> = bilinear_taps(w, f)
                .into_iter()
                .map(|(a, b, wa, wb)| (a, b, T::from_f64(wa), T::from_f64(wb)))
                .collect();
            for plane in xd.chunks(h * w).take(n * c) {
                for &(y0, y1, wy0, wy1) in &ty {
                    let (wy0, wy1) = (T::from_f64(wy0), T::from_f64(wy1));
                    let (r0, r1) = (&plane[y0 * w..][..w], &plane[y1 * w..][..w]);
                    out.extend(tx.iter().map(|&(x0, x1, wx0, wx1)| {
                        wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1])
                    }));
                }
            }
        }
    }
    let out = Tensor::from_vec(out_shape, out)?;
    out.ensure_finite("upsample")?;
    Ok(out)
}

/// Transpose of [`upsample`]'s linear map.
pub fn upsample_backward<T: Element>(input_shape: Shape, spec: &UpsampleSpec, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    if d_out.shape() != spec.output_shape(input_shape) {
        return Err(Error::shape(
            "upsample_backward",
            format!("gradient {} does not match output of {input_shape}", d_out.shape()),
        ));
    }
    let f = spec.factor;
    let [n, c, h, w] = input_shape.0;
    let (ho, wo) = (h * f, w * f);
    let gd = d_out.data();
    let mut dx = vec![T::ZERO; input_shape.numel()];
    let ty = bilinear_taps(h, f);
    let tx: Vec<_> = bilinear_taps(w, f)
        .into_iter()
        .map(|(a, b, wa, wb)| (a, b, T::from_f64(wa), T::from_f64(wb)))
        .collect();
    for plane in 0..n * c {
        let g = &gd[plane * ho * wo..][..ho * wo];
        let dst = &mut dx[plane * h * w..][..h * w];
        match spec.mode {
            UpsampleMode::Nearest => {
                for y in 0..ho {
                    for xo in 0..wo {
                        dst[(y / f) * w + xo / f] += g[y * wo + xo];
                    }
                }
            }
            UpsampleMode::Bilinear => {
                for (y, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
                    let (wy0, wy1) = (T::from_f64(wy0), T::from_f64(wy1));
                    for (xo, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                        let v = g[y * wo + xo];
                        dst[y0 * w + x0] += wy0 * wx0 * v;
                        dst[y0 * w + x1] += wy0 * wx1 * v;
                        dst[y1 * w + x0] += wy1 * wx0 * v;
                        dst[y1 * w + x1] += wy1 * wx1 * v;
                    }
                }
            }
        }
    }
    Tensor::from_vec(input_shape, dx)
}
