#![allow(dead_code)]

use gsneck::ops::ConvSpec;
use gsneck::{Init, Shape, Tensor};

pub fn rand(shape: Shape, seed: u64) -> Tensor<f64> {
    Tensor::create(
        shape,
        Init::Uniform {
            seed,
            lo: -1.0,
            hi: 1.0,
        },
    )
    .unwrap()
}

/// Multiply-accumulates of a convolution, counted one tap at a time. Taps
/// landing in the zero padding count.
pub fn loop_macs(spec: &ConvSpec, n: usize, h: usize, w: usize) -> u64 {
    let ho = (h + 2 * spec.pad_h - spec.kernel_h) / spec.stride_h + 1;
    let wo = (w + 2 * spec.pad_w - spec.kernel_w) / spec.stride_w + 1;
    let mut count = 0u64;
    for _ in 0..n {
        for _ in 0..spec.out_ch {
            for _ in 0..ho {
                for _ in 0..wo {
                    for _ in 0..spec.in_ch / spec.groups {
                        for _ in 0..spec.kernel_h {
                            for _ in 0..spec.kernel_w {
                                count += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    count
}

/// Boolean support after a stride-1 same-padded `kh × kw` convolution with
/// all-positive weights: a cell is live when any tap touches a live cell.
pub fn dilate(mask: &[bool], h: usize, w: usize, kh: usize, kw: usize) -> Vec<bool> {
    let (ph, pw) = (kh / 2, kw / 2);
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            'taps: for dy in 0..kh {
                for dx in 0..kw {
                    let (sy, sx) = (y + dy, x + dx);
                    if sy < ph || sx < pw || sy - ph >= h || sx - pw >= w {
                        continue;
                    }
                    if mask[(sy - ph) * w + (sx - pw)] {
                        out[y * w + x] = true;
                        break 'taps;
                    }
                }
            }
        }
    }
    out
}

pub fn bbox(mask: &[bool], w: usize) -> Option<(usize, usize, usize, usize)> {
    let mut b: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (y, x) = (i / w, i % w);
        b = Some(match b {
            None => (y, x, y, x),
            Some((y0, x0, y1, x1)) => (y0.min(y), x0.min(x), y1.max(y), x1.max(x)),
        });
    }
    b
}

pub fn max_rel_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(1e-300);
    a.max_abs_diff(b).unwrap() / scale
}
