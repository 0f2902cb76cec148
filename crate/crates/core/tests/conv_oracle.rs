mod common;

use gsneck::ops::{conv2d, conv2d_backward, direct_conv_oracle, direct_conv_oracle_counted, ConvSpec};
use gsneck::Shape;
use proptest::prelude::*;

use common::{loop_macs, rand};

#[derive(Debug, Clone)]
struct Case {
    spec: ConvSpec,
    n: usize,
    h: usize,
    w: usize,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..=4, 1usize..=4, 1usize..=4, any::<bool>())
        .prop_flat_map(|(n, c, out_mult, depthwise)| {
            let (groups, out_ch) = if depthwise {
                (c, c * out_mult.min(2))
            } else {
                (1, out_mult)
            };
            (
                Just((n, c, groups, out_ch)),
                1usize..=7,
                1usize..=7,
                1usize..=2,
                1usize..=2,
                0usize..=3,
                0usize..=3,
                any::<bool>(),
                1usize..=16,
                1usize..=16,
            )
        })
        .prop_filter_map(
            "kernel must fit the padded input",
            |((n, c, groups, out_ch), kh, kw, sh, sw, ph, pw, bias, h, w)| {
                if h + 2 * ph < kh || w + 2 * pw < kw {
                    return None;
                }
                Some(Case {
                    spec: ConvSpec {
                        in_ch: c,
                        out_ch,
                        kernel_h: kh,
                        kernel_w: kw,
                        stride_h: sh,
                        stride_w: sw,
                        pad_h: ph,
                        pad_w: pw,
                        groups,
                        has_bias: bias,
                    },
                    n,
                    h,
                    w,
                })
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn fast_conv_matches_direct_loops(c in case(), seed in any::<u64>()) {
        let x = rand(Shape::new(c.n, c.spec.in_ch, c.h, c.w), seed);
        let wt = rand(c.spec.weight_shape(), seed ^ 1);
        let b = c.spec.bias_shape().map(|s| rand(s, seed ^ 2));
        let fast = conv2d(&x, &c.spec, &wt, b.as_ref()).unwrap();
        let slow = direct_conv_oracle(&x, &c.spec, &wt, b.as_ref()).unwrap();
        prop_assert_eq!(fast.shape(), slow.shape());
        prop_assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-12);
    }

    #[test]
    fn counted_oracle_matches_loop_count(c in case()) {
        let x = rand(Shape::new(c.n, c.spec.in_ch, c.h, c.w), 0);
        let wt = rand(c.spec.weight_shape(), 1);
        let b = c.spec.bias_shape().map(|s| rand(s, 2));
        let (_, macs) = direct_conv_oracle_counted(&x, &c.spec, &wt, b.as_ref()).unwrap();
        prop_assert_eq!(macs, loop_macs(&c.spec, c.n, c.h, c.w));
        prop_assert_eq!(macs, c.n as u64 * c.spec.mac_count(c.h, c.w).unwrap());
    }

    /// `<conv(x), g> = <x, dX(g)>` and `<conv_w(x), g> = <w, dW(g)>`.
    #[test]
    fn backward_is_the_adjoint(c in case(), seed in any::<u64>()) {
        let spec = ConvSpec { has_bias: false, ..c.spec };
        let x = rand(Shape::new(c.n, spec.in_ch, c.h, c.w), seed);
        let wt = rand(spec.weight_shape(), seed ^ 1);
        let y = conv2d(&x, &spec, &wt, None).unwrap();
        let g = rand(y.shape(), seed ^ 2);
        let grads = conv2d_backward(&x, &spec, &wt, &g).unwrap();
        let lhs = y.dot(&g).unwrap();
        let scale = lhs.abs().max(1.0);
        prop_assert!((lhs - x.dot(&grads.dx).unwrap()).abs() <= 1e-10 * scale);
        prop_assert!((lhs - wt.dot(&grads.dw).unwrap()).abs() <= 1e-10 * scale);
    }
}
