//! Fusion refinement: concatenate `[X_i, Y_i, up(Y_{i+1})]` and refine with
//! an alternating 1×1 / 3×3 / 1×1 / 3×3 / 1×1 convolution stack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gsnet::join;
use crate::layer::ConvLayer;
use crate::ops::{ConvSpec, UpsampleMode, UpsampleSpec};
use crate::rng::UniformStream;
use crate::tensor::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrmConfig {
    pub in_ch_x: usize,
    /// Channels of `Y_i`; `Y_{i+1}` must match.
    pub in_ch_y: usize,
    pub mid_ch: usize,
    pub out_ch: usize,
    pub upsample: UpsampleSpec,
    /// No activations between layers when set.
    pub literal_eq4: bool,
    pub bias: bool,
}

impl Default for FrmConfig {
    fn default() -> Self {
        Self {
            in_ch_x: 256,
            in_ch_y: 256,
            mid_ch: 256,
            out_ch: 256,
            upsample: UpsampleSpec::new(2, UpsampleMode::Bilinear),
            literal_eq4: false,
            bias: true,
        }
    }
}

pub const FRM_LAYERS: [&str; 5] = ["reduce1", "refine1", "reduce2", "refine2", "project"];

impl FrmConfig {
    pub fn concat_channels(&self) -> usize {
        self.in_ch_x + 2 * self.in_ch_y
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("frm.in_ch_x", self.in_ch_x),
            ("frm.in_ch_y", self.in_ch_y),
            ("frm.mid_ch", self.mid_ch),
            ("frm.out_ch", self.out_ch),
        ] {
            if v == 0 {
                return Err(Error::config(key, "channel count must be >= 1"));
            }
        }
        if self.upsample.factor == 0 {
            return Err(Error::config("frm.upsample", "factor must be >= 1"));
        }
        Ok(())
    }

    pub fn layer_specs(&self) -> [(&'static str, ConvSpec); 5] {
        let (m, b) = (self.mid_ch, self.bias);
        [
            (FRM_LAYERS[0], ConvSpec::same(self.concat_channels(), m, 1, 1, 1, b)),
            (FRM_LAYERS[1], ConvSpec::same(m, m, 3, 3, 1, b)),
            (FRM_LAYERS[2], ConvSpec::same(m, m, 1, 1, 1, b)),
            (FRM_LAYERS[3], ConvSpec::same(m, m, 3, 3, 1, b)),
            (FRM_LAYERS[4], ConvSpec::same(m, self.out_ch, 1, 1, 1, b)),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct FrmParams<T> {
    pub config: FrmConfig,
    pub layers: [ConvLayer<T>; 5],
}

impl<T: Element> FrmParams<T> {
    pub fn init(config: FrmConfig, prefix: &str, stream: &mut UniformStream) -> Result<Self> {
        Self::build(config, prefix, |name, spec| ConvLayer::init(name, spec, stream))
    }

    pub fn zeros(config: FrmConfig, prefix: &str) -> Result<Self> {
        Self::build(config, prefix, ConvLayer::zeros)
    }

    fn build(
        config: FrmConfig,
        prefix: &str,
        mut make: impl FnMut(String, ConvSpec) -> Result<ConvLayer<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let mut v = Vec::with_capacity(5);
        for (suffix, spec) in config.layer_specs() {
            v.push(make(join(prefix, suffix), spec)?);
        }
        let layers: [ConvLayer<T>; 5] = v.try_into().map_err(|_| Error::config("frm", "expected five layers"))?;
        Ok(Self { config, layers })
    }

    pub fn map_layers(&self, f: impl Fn(&ConvLayer<T>) -> ConvLayer<T>) -> Self {
        Self {
            config: self.config,
            layers: std::array::from_fn(|i| f(&self.layers[i])),
        }
    }
}

pub fn frm_init<T: Element>(config: FrmConfig, seed: u64) -> Result<FrmParams<T>> {
    FrmParams::init(config, "frm", &mut UniformStream::new(seed))
}

/// `Z` for one pyramid level.
///
/// `y_next` comes from the next coarser level and is upsampled before the
/// concatenation.
pub fn frm_forward<T: Element, G: Graph<T>>(
    g: &mut G,
    x_i: &G::Value,
    y_i: &G::Value,
    y_next: &G::Value,
    params: &FrmParams<T>,
) -> Result<G::Value> {
    let cfg = &params.config;
    let (sx, sy, sn) = (g.tensor(x_i).shape(), g.tensor(y_i).shape(), g.tensor(y_next).shape());
    if sx.c() != cfg.in_ch_x || sy.c() != cfg.in_ch_y || sn.c() != cfg.in_ch_y {
        return Err(Error::shape(
            "frm_forward",
            format!(
                "channels ({}, {}, {}) do not match config ({}, {}, {})",
                sx.c(),
                sy.c(),
                sn.c(),
                cfg.in_ch_x,
                cfg.in_ch_y,
                cfg.in_ch_y
            ),
        ));
    }
    if (sx.n(), sx.h(), sx.w()) != (sy.n(), sy.h(), sy.w()) {
        return Err(Error::shape(
            "frm_forward",
            format!("X_i {sx} and Y_i {sy} are not aligned"),
        ));
    }
    let up_shape = cfg.upsample.output_shape(sn);
    if (up_shape.n(), up_shape.h(), up_shape.w()) != (sx.n(), sx.h(), sx.w()) {
        return Err(Error::shape(
            "frm_forward",
            format!("upsampled Y_next {up_shape} is not aligned with X_i {sx}"),
        ));
    }

    let up = g.upsample(y_next, &cfg.upsample)?;
    let mut h = g.concat(&[x_i.clone(), y_i.clone(), up])?;
    for (i, layer) in params.layers.iter().enumerate() {
        h = layer.apply(g, &h)?;
        if i + 1 < params.layers.len() && !cfg.literal_eq4 {
            h = g.relu(&h)?;
        }
    }
    Ok(h)
}
