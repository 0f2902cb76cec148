mod common;

use gsneck::analysis::{erf_map, ErfThreshold};
use gsneck::{
    combined_conv, combined_conv_via_transpose, gsnet_forward, gsnet_init, Eager, Graph, GsnetConfig, GsnetParams,
    PyramidFeatures, Shape, Tensor,
};
use proptest::prelude::*;

use common::{bbox, dilate, max_rel_diff, rand};

fn positive(p: &GsnetParams<f64>) -> GsnetParams<f64> {
    p.map_layers(|l| l.map_weights(|t| t.map(|v| v.abs() + 0.05)))
}

fn impulse(c: usize, h: usize, w: usize) -> Tensor<f64> {
    let s = Shape::new(1, c, h, w);
    Tensor::zeros(s).with_value(s.index(0, 0, h / 2, w / 2), 1.0)
}

#[test]
fn zero_parameters_give_identity() {
    for (cfg, shape) in [
        (GsnetConfig::default(), Shape::new(1, 256, 12, 10)),
        (
            GsnetConfig {
                channels: 3,
                k: 7,
                depthwise: false,
                residual_kernel: 3,
                residual_channels: 5,
                ..GsnetConfig::default()
            },
            Shape::new(2, 3, 9, 9),
        ),
    ] {
        let p = GsnetParams::<f32>::zeros(cfg, "g").unwrap();
        let x = rand(shape, 3).cast::<f32>();
        let y = gsnet_forward(&mut Eager, &x, &p).unwrap();
        assert!(y.bit_eq(&x));
    }
}

#[test]
fn combined_conv_is_linear() {
    let cfg = GsnetConfig {
        channels: 3,
        k: 7,
        asym_bias: false,
        ..GsnetConfig::default()
    };
    let mut worst = 0.0f64;
    for i in 0..60u64 {
        let p = gsnet_init::<f64>(cfg, i).unwrap();
        let shape = Shape::new(1, 3, 9, 11);
        let (x, z) = (rand(shape, 100 + i), rand(shape, 200 + i));
        let mut s = gsneck::rng::UniformStream::new(300 + i);
        let (a, b) = (s.next_in(-2.0, 2.0), s.next_in(-2.0, 2.0));
        let mix = x.scale(a).add(&z.scale(b)).unwrap();
        let lhs = combined_conv(&mut Eager, &mix, &p).unwrap();
        let fx = combined_conv(&mut Eager, &x, &p).unwrap();
        let fz = combined_conv(&mut Eager, &z, &p).unwrap();
        let rhs = fx.scale(a).add(&fz.scale(b)).unwrap();
        worst = worst.max(max_rel_diff(&lhs, &rhs));
    }
    assert!(worst <= 1e-10, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn transpose_form_matches_asymmetric_form(
        c in 1usize..=3,
        k in prop::sample::select(vec![3usize, 5, 7]),
        h in 3usize..=10,
        w in 3usize..=10,
        depthwise in any::<bool>(),
        share in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let cfg = GsnetConfig {
            channels: c,
            k,
            depthwise,
            residual_channels: 2,
            share_branch_weights: share,
            ..GsnetConfig::default()
        };
        let p = gsnet_init::<f64>(cfg, seed).unwrap();
        let x = rand(Shape::new(1, c, h, w), seed ^ 9);
        let a = combined_conv(&mut Eager, &x, &p).unwrap();
        let b = combined_conv_via_transpose(&mut Eager, &x, &p).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-12);
    }

    #[test]
    fn block_preserves_shape(c in 1usize..=4, h in 1usize..=9, w in 1usize..=9, k in prop::sample::select(vec![3usize, 5, 9])) {
        let cfg = GsnetConfig { channels: c, k, residual_channels: 2, residual_kernel: 3, ..GsnetConfig::default() };
        let p = gsnet_init::<f64>(cfg, 1).unwrap();
        let x = rand(Shape::new(2, c, h, w), 2);
        prop_assert_eq!(gsnet_forward(&mut Eager, &x, &p).unwrap().shape(), x.shape());
    }
}

/// Support of the combined convolution on a centered impulse, from boolean
/// dilation of each branch's composition.
fn support_oracle(k: usize, h: usize, w: usize) -> Vec<bool> {
    let mut m = vec![false; h * w];
    m[(h / 2) * w + w / 2] = true;
    let a = dilate(&dilate(&m, h, w, 1, k), h, w, k, 1);
    let b = dilate(&dilate(&m, h, w, k, 1), h, w, 1, k);
    a.iter().zip(&b).map(|(x, y)| *x || *y).collect()
}

#[test]
fn support_is_a_clipped_k_square() {
    let mut last = 0;
    for (k, h, w) in [(3, 15, 15), (7, 15, 15), (15, 15, 15), (7, 5, 9)] {
        let cfg = GsnetConfig {
            channels: 1,
            k,
            asym_bias: false,
            ..GsnetConfig::default()
        };
        let p = positive(&gsnet_init::<f64>(cfg, k as u64).unwrap());
        let m = combined_conv(&mut Eager, &impulse(1, h, w), &p).unwrap();
        let got: Vec<bool> = m.data().iter().map(|&v| v != 0.0).collect();
        let want = support_oracle(k, h, w);
        assert_eq!(got, want, "k={k} on {h}x{w}");

        let (cy, cx, r) = (h / 2, w / 2, k / 2);
        let expect_box = (
            cy.saturating_sub(r),
            cx.saturating_sub(r),
            (cy + r).min(h - 1),
            (cx + r).min(w - 1),
        );
        assert_eq!(bbox(&got, w), Some(expect_box));
        let card = got.iter().filter(|&&b| b).count();
        if h == 15 {
            assert_eq!(card, k * k);
            assert!(card >= last);
            last = card;
        }
    }
}

#[test]
fn erf_of_combined_conv_matches_support() {
    let cfg = GsnetConfig {
        channels: 1,
        k: 7,
        asym_bias: false,
        ..GsnetConfig::default()
    };
    let p = positive(&gsnet_init::<f64>(cfg, 3).unwrap());
    let feats = PyramidFeatures {
        levels: vec![rand(Shape::new(1, 1, 15, 15), 4)],
        strides: vec![1],
    };
    let r = erf_map(
        |t, x| Ok(vec![combined_conv(t, &x[0], &p)?]),
        &feats,
        0,
        (7, 7),
        0,
        ErfThreshold::ExactZero,
    )
    .unwrap();
    assert_eq!(r.support_box, Some((4, 4, 10, 10)));
    assert_eq!(r.support_cardinality, 49);
}

#[test]
fn block_support_contains_combined_support() {
    // Each residual convolution grows the support by residual_kernel / 2 per side.
    for rk in [1, 3] {
        let cfg = GsnetConfig {
            channels: 1,
            k: 5,
            residual_kernel: rk,
            residual_channels: 1,
            asym_bias: false,
            residual_bias: false,
            ..GsnetConfig::default()
        };
        let p = positive(&gsnet_init::<f64>(cfg, 5).unwrap());
        let x = impulse(1, 15, 15);
        let m = combined_conv(&mut Eager, &x, &p).unwrap();
        let y = gsnet_forward(&mut Eager, &x, &p).unwrap();
        let sm: Vec<bool> = m.data().iter().map(|&v| v != 0.0).collect();
        let sy: Vec<bool> = y.data().iter().map(|&v| v != 0.0).collect();
        assert!(sm.iter().zip(&sy).all(|(a, b)| !*a || *b));
        let expect = dilate(&dilate(&sm, 15, 15, rk, rk), 15, 15, rk, rk);
        assert_eq!(sy, expect);
    }
}

#[test]
fn global_kernel_covers_the_map() {
    for (h, w) in [(8, 8), (5, 12), (1, 1), (16, 4)] {
        let k = GsnetConfig::global_k(h, w);
        assert!(k % 2 == 1 && k > h.max(w), "{h}x{w} -> {k}");
        let cfg = GsnetConfig {
            channels: 1,
            k,
            asym_bias: false,
            ..GsnetConfig::default()
        };
        let p = positive(&gsnet_init::<f64>(cfg, 1).unwrap());
        let m = combined_conv(&mut Eager, &impulse(1, h, w), &p).unwrap();
        assert!(m.data().iter().all(|&v| v > 0.0), "{h}x{w}");
    }
}

#[test]
fn channel_mismatch_is_rejected() {
    let p = gsnet_init::<f64>(
        GsnetConfig {
            channels: 4,
            ..GsnetConfig::default()
        },
        0,
    )
    .unwrap();
    let x = rand(Shape::new(1, 3, 5, 5), 0);
    let mut g = Eager;
    let x = g.input("x", x);
    assert!(matches!(
        gsnet_forward(&mut g, &x, &p),
        Err(gsneck::Error::Shape { .. })
    ));
}
