//! Per-level assembly of the global semantic block and fusion refinement over
//! a feature pyramid, plus a baseline lateral/top-down pyramid.
//!
//! Level `i` (1-based in names, 0-based in indices) has spatial extent
//! `base / 2^i`. Levels `1..L-1` emit the fusion output `Z_i`; the top level
//! emits its block output either directly or through a 1×1 projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frm::{frm_forward, FrmConfig, FrmParams};
use crate::graph::{Eager, Graph};
use crate::gsnet::{gsnet_forward, GsnetConfig, GsnetParams};
use crate::layer::ConvLayer;
use crate::ops::{ConvSpec, UpsampleMode, UpsampleSpec};
use crate::rng::{derive_seed, UniformStream};
use crate::tensor::{Element, Shape, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PyramidSpec {
    pub levels: usize,
    /// Requested `(H, W)` of the finest level; rounded up to a multiple of
    /// `2^(levels-1)` so every level halves exactly.
    pub base_hw: (usize, usize),
    pub channels: Vec<usize>,
    /// Stride of the finest level relative to the image.
    pub finest_stride: usize,
    pub batch: usize,
}

impl PyramidSpec {
    pub fn uniform(levels: usize, base_hw: (usize, usize), channels: usize) -> Self {
        Self {
            levels,
            base_hw,
            channels: vec![channels; levels],
            finest_stride: 4,
            batch: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::config(
                "pyramid.levels",
                format!("need at least 2 levels, got {}", self.levels),
            ));
        }
        if self.channels.len() != self.levels {
            return Err(Error::config(
                "pyramid.channels",
                format!("expected {} entries, got {}", self.levels, self.channels.len()),
            ));
        }
        if self.channels.contains(&0) {
            return Err(Error::config("pyramid.channels", "every level needs >= 1 channel"));
        }
        if self.base_hw.0 == 0 || self.base_hw.1 == 0 {
            return Err(Error::config("pyramid.base_hw", "extents must be >= 1"));
        }
        if self.batch == 0 || self.finest_stride == 0 {
            return Err(Error::config("pyramid", "batch and finest_stride must be >= 1"));
        }
        if self.levels > 24 {
            return Err(Error::config("pyramid.levels", "at most 24 levels"));
        }
        Ok(())
    }

    pub fn padded_base(&self) -> (usize, usize) {
        let m = 1usize << (self.levels - 1);
        (self.base_hw.0.div_ceil(m) * m, self.base_hw.1.div_ceil(m) * m)
    }

    pub fn level_hw(&self, level: usize) -> (usize, usize) {
        let (h, w) = self.padded_base();
        (h >> level, w >> level)
    }

    pub fn level_shape(&self, level: usize) -> Shape {
        let (h, w) = self.level_hw(level);
        Shape::new(self.batch, self.channels[level], h, w)
    }

    pub fn stride(&self, level: usize) -> usize {
        self.finest_stride << level
    }
}

#[derive(Debug, Clone)]
pub struct PyramidFeatures<T> {
    pub levels: Vec<Tensor<T>>,
    pub strides: Vec<usize>,
}

impl<T: Element> PyramidFeatures<T> {
    pub fn shapes(&self) -> Vec<Shape> {
        self.levels.iter().map(|t| t.shape()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fill {
    Uniform,
    /// A single 1.0 at the spatial center of channel 0, batch 0.
    Impulse,
    /// `(flat index within the item) / (item size)`.
    Ramp,
}

/// Deterministic stand-in for backbone features.
pub fn synth_backbone<T: Element>(spec: &PyramidSpec, seed: u64, fill: Fill) -> Result<PyramidFeatures<T>> {
    spec.validate()?;
    let mut levels = Vec::with_capacity(spec.levels);
    for i in 0..spec.levels {
        let shape = spec.level_shape(i);
        let t = match fill {
            Fill::Uniform => {
                let mut s = UniformStream::new(derive_seed(seed, i as u64));
                let data = (0..shape.numel()).map(|_| T::from_f64(s.next_in(-1.0, 1.0))).collect();
                Tensor::from_vec(shape, data)?
            }
            Fill::Impulse => {
                let flat = shape.index(0, 0, shape.h() / 2, shape.w() / 2);
                Tensor::zeros(shape).with_value(flat, T::ONE)
            }
            Fill::Ramp => {
                let item = shape.numel() / shape.n();
                let data = (0..shape.numel())
                    .map(|f| T::from_f64((f % item) as f64 / item as f64))
                    .collect();
                Tensor::from_vec(shape, data)?
            }
        };
        levels.push(t);
    }
    Ok(PyramidFeatures {
        levels,
        strides: (0..spec.levels).map(|i| spec.stride(i)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopLevelPolicy {
    Passthrough,
    Project1x1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeckConfig {
    pub pyramid: PyramidSpec,
    /// One block config per level.
    pub gsnet: Vec<GsnetConfig>,
    /// One fusion config per fused level (all but the top).
    pub frm: Vec<FrmConfig>,
    pub top_level_policy: TopLevelPolicy,
    /// Width of the baseline pyramid.
    pub lateral_channels: usize,
}

/// Knobs shared by every level when building a [`NeckConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeckTemplate {
    pub gsnet: GsnetConfig,
    /// Size each level's kernel to cover the whole level.
    pub global_kernel: bool,
    pub frm_mid_ch: usize,
    pub frm_out_ch: usize,
    pub frm_upsample: UpsampleMode,
    pub frm_literal_eq4: bool,
    pub frm_bias: bool,
    pub top_level_policy: TopLevelPolicy,
    pub lateral_channels: usize,
}

impl Default for NeckTemplate {
    fn default() -> Self {
        Self {
            gsnet: GsnetConfig::default(),
            global_kernel: false,
            frm_mid_ch: 256,
            frm_out_ch: 256,
            frm_upsample: UpsampleMode::Bilinear,
            frm_literal_eq4: false,
            frm_bias: true,
            top_level_policy: TopLevelPolicy::Passthrough,
            lateral_channels: 256,
        }
    }
}

impl NeckConfig {
    pub fn from_template(pyramid: PyramidSpec, t: &NeckTemplate) -> Result<Self> {
        pyramid.validate()?;
        let gsnet = (0..pyramid.levels)
            .map(|i| {
                let (h, w) = pyramid.level_hw(i);
                GsnetConfig {
                    channels: pyramid.channels[i],
                    k: if t.global_kernel {
                        GsnetConfig::global_k(h, w)
                    } else {
                        t.gsnet.k
                    },
                    ..t.gsnet
                }
            })
            .collect();
        let frm = (0..pyramid.levels - 1)
            .map(|i| FrmConfig {
                in_ch_x: pyramid.channels[i],
                in_ch_y: pyramid.channels[i],
                mid_ch: t.frm_mid_ch,
                out_ch: t.frm_out_ch,
                upsample: UpsampleSpec::new(2, t.frm_upsample),
                literal_eq4: t.frm_literal_eq4,
                bias: t.frm_bias,
            })
            .collect();
        let cfg = Self {
            pyramid,
            gsnet,
            frm,
            top_level_policy: t.top_level_policy,
            lateral_channels: t.lateral_channels,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn levels(&self) -> usize {
        self.pyramid.levels
    }

    pub fn validate(&self) -> Result<()> {
        self.pyramid.validate()?;
        let l = self.levels();
        if self.gsnet.len() != l {
            return Err(Error::config(
                "gsnet",
                format!("need {l} per-level configs, got {}", self.gsnet.len()),
            ));
        }
        if self.frm.len() != l - 1 {
            return Err(Error::config(
                "frm",
                format!("need {} fused-level configs, got {}", l - 1, self.frm.len()),
            ));
        }
        if self.lateral_channels == 0 {
            return Err(Error::config("neck.lateral_channels", "must be >= 1"));
        }
        for (i, g) in self.gsnet.iter().enumerate() {
            g.validate()?;
            if g.channels != self.pyramid.channels[i] {
                return Err(Error::config(
                    "gsnet.channels",
                    format!(
                        "level {} has {} channels, block expects {}",
                        i + 1,
                        self.pyramid.channels[i],
                        g.channels
                    ),
                ));
            }
        }
        for (i, f) in self.frm.iter().enumerate() {
            f.validate()?;
            let (c_here, c_next) = (self.pyramid.channels[i], self.pyramid.channels[i + 1]);
            if f.in_ch_x != c_here || f.in_ch_y != c_here {
                return Err(Error::config(
                    "frm.in_ch",
                    format!(
                        "level {} has {c_here} channels, fusion expects ({}, {})",
                        i + 1,
                        f.in_ch_x,
                        f.in_ch_y
                    ),
                ));
            }
            if c_next != f.in_ch_y {
                return Err(Error::config(
                    "pyramid.channels",
                    format!(
                        "adjacent levels {} and {} must have equal channels for fusion ({c_here} vs {c_next})",
                        i + 1,
                        i + 2
                    ),
                ));
            }
            if f.upsample.factor != 2 {
                return Err(Error::config("frm.upsample", "adjacent levels differ by a factor of 2"));
            }
        }
        Ok(())
    }

    /// Output channels of the top level.
    pub fn top_channels(&self) -> usize {
        match self.top_level_policy {
            TopLevelPolicy::Passthrough => *self.pyramid.channels.last().expect("validated"),
            TopLevelPolicy::Project1x1 => self.frm.last().expect("validated").out_ch,
        }
    }

    pub fn top_projection_spec(&self) -> Option<ConvSpec> {
        match self.top_level_policy {
            TopLevelPolicy::Passthrough => None,
            TopLevelPolicy::Project1x1 => {
                let last = self.frm.last().expect("validated");
                Some(ConvSpec::same(self.top_channels_in(), last.out_ch, 1, 1, 1, last.bias))
            }
        }
    }

    fn top_channels_in(&self) -> usize {
        *self.pyramid.channels.last().expect("validated")
    }

    pub fn fpn_specs(&self, level: usize) -> [ConvSpec; 2] {
        let lc = self.lateral_channels;
        [
            ConvSpec::same(self.pyramid.channels[level], lc, 1, 1, 1, true),
            ConvSpec::same(lc, lc, 3, 3, 1, true),
        ]
    }
}

pub fn level_prefix(level: usize) -> String {
    format!("L{}", level + 1)
}

#[derive(Debug, Clone)]
pub struct EnhancedParams<T> {
    pub gsnet: Vec<GsnetParams<T>>,
    pub frm: Vec<FrmParams<T>>,
    pub top: Option<ConvLayer<T>>,
    pub policy: TopLevelPolicy,
}

impl<T: Element> EnhancedParams<T> {
    pub fn layers(&self) -> Vec<&ConvLayer<T>> {
        let mut v: Vec<&ConvLayer<T>> = self.gsnet.iter().flat_map(|g| g.layers()).collect();
        v.extend(self.frm.iter().flat_map(|f| f.layers.iter()));
        v.extend(self.top.as_ref());
        v
    }

    /// Stored element count of every weight and bias tensor.
    pub fn param_count(&self) -> u64 {
        self.layers().iter().map(|l| l.numel() as u64).sum()
    }

    pub fn map_layers(&self, f: impl Fn(&ConvLayer<T>) -> ConvLayer<T>) -> Self {
        Self {
            gsnet: self.gsnet.iter().map(|g| g.map_layers(&f)).collect(),
            frm: self.frm.iter().map(|p| p.map_layers(&f)).collect(),
            top: self.top.as_ref().map(&f),
            policy: self.policy,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FpnParams<T> {
    pub lateral: Vec<ConvLayer<T>>,
    pub smooth: Vec<ConvLayer<T>>,
}

impl<T: Element> FpnParams<T> {
    pub fn layers(&self) -> Vec<&ConvLayer<T>> {
        self.lateral.iter().chain(&self.smooth).collect()
    }

    pub fn param_count(&self) -> u64 {
        self.layers().iter().map(|l| l.numel() as u64).sum()
    }

    pub fn map_layers(&self, f: impl Fn(&ConvLayer<T>) -> ConvLayer<T>) -> Self {
        Self {
            lateral: self.lateral.iter().map(&f).collect(),
            smooth: self.smooth.iter().map(&f).collect(),
        }
    }
}

/// Parameters of both necks for one configuration.
#[derive(Debug, Clone)]
pub struct NeckParams<T> {
    pub config: NeckConfig,
    pub enhanced: EnhancedParams<T>,
    pub baseline: FpnParams<T>,
}

enum InitMode {
    Random(u64),
    Zeros,
}

fn build_neck<T: Element>(config: &NeckConfig, mode: InitMode) -> Result<NeckParams<T>> {
    config.validate()?;
    let (mut enh, mut base) = match mode {
        InitMode::Random(seed) => (
            Some(UniformStream::new(derive_seed(seed, 1))),
            Some(UniformStream::new(derive_seed(seed, 2))),
        ),
        InitMode::Zeros => (None, None),
    };
    fn layer<T: Element>(s: &mut Option<UniformStream>, name: String, spec: ConvSpec) -> Result<ConvLayer<T>> {
        match s {
            Some(s) => ConvLayer::init(name, spec, s),
            None => ConvLayer::zeros(name, spec),
        }
    }

    let l = config.levels();
    let mut gsnet = Vec::with_capacity(l);
    for (i, g) in config.gsnet.iter().enumerate() {
        let prefix = format!("{}.gsnet", level_prefix(i));
        gsnet.push(match &mut enh {
            Some(s) => GsnetParams::init(*g, &prefix, s)?,
            None => GsnetParams::zeros(*g, &prefix)?,
        });
    }
    let mut frm = Vec::with_capacity(l - 1);
    for (i, f) in config.frm.iter().enumerate() {
        let prefix = format!("{}.frm", level_prefix(i));
        frm.push(match &mut enh {
            Some(s) => FrmParams::init(*f, &prefix, s)?,
            None => FrmParams::zeros(*f, &prefix)?,
        });
    }
    let top = match config.top_projection_spec() {
        Some(spec) => Some(layer(&mut enh, format!("{}.top.project", level_prefix(l - 1)), spec)?),
        None => None,
    };

    let mut lateral = Vec::with_capacity(l);
    let mut smooth = Vec::with_capacity(l);
    for i in 0..l {
        let [lat, sm] = config.fpn_specs(i);
        lateral.push(layer(&mut base, format!("fpn.{}.lateral", level_prefix(i)), lat)?);
        smooth.push(layer(&mut base, format!("fpn.{}.smooth", level_prefix(i)), sm)?);
    }
    Ok(NeckParams {
        config: config.clone(),
        enhanced: EnhancedParams {
            gsnet,
            frm,
            top,
            policy: config.top_level_policy,
        },
        baseline: FpnParams { lateral, smooth },
    })
}

/// Deterministic initialization of both necks.
pub fn neck_init<T: Element>(config: &NeckConfig, seed: u64) -> Result<NeckParams<T>> {
    build_neck(config, InitMode::Random(seed))
}

/// Every weight and bias set to zero.
pub fn neck_zeros<T: Element>(config: &NeckConfig) -> Result<NeckParams<T>> {
    build_neck(config, InitMode::Zeros)
}

fn check_levels<T: Element, G: Graph<T>>(g: &G, inputs: &[G::Value], expected: usize) -> Result<()> {
    if inputs.len() != expected {
        return Err(Error::shape(
            "neck",
            format!("expected {expected} levels, got {}", inputs.len()),
        ));
    }
    let n = g.tensor(&inputs[0]).shape().n();
    if inputs.iter().any(|v| g.tensor(v).shape().n() != n) {
        return Err(Error::shape("neck", "batch size differs across levels"));
    }
    Ok(())
}

/// Enhanced neck over already-registered level inputs.
pub fn record_enhanced_neck<T: Element, G: Graph<T>>(
    g: &mut G,
    inputs: &[G::Value],
    params: &EnhancedParams<T>,
) -> Result<Vec<G::Value>> {
    let l = params.gsnet.len();
    check_levels(g, inputs, l)?;
    let mut ys = Vec::with_capacity(l);
    for (x, p) in inputs.iter().zip(&params.gsnet) {
        ys.push(gsnet_forward(g, x, p)?);
    }
    let mut out = Vec::with_capacity(l);
    for i in 0..l - 1 {
        out.push(frm_forward(g, &inputs[i], &ys[i], &ys[i + 1], &params.frm[i])?);
    }
    let top = match (&params.policy, &params.top) {
        (TopLevelPolicy::Passthrough, _) => ys[l - 1].clone(),
        (TopLevelPolicy::Project1x1, Some(layer)) => layer.apply(g, &ys[l - 1])?,
        (TopLevelPolicy::Project1x1, None) => {
            return Err(Error::config("neck.top_level_policy", "projection weights missing"))
        }
    };
    out.push(top);
    Ok(out)
}

/// Baseline pyramid: 1×1 laterals, nearest top-down sums, 3×3 smoothing.
pub fn record_baseline_fpn<T: Element, G: Graph<T>>(
    g: &mut G,
    inputs: &[G::Value],
    params: &FpnParams<T>,
) -> Result<Vec<G::Value>> {
    let l = params.lateral.len();
    check_levels(g, inputs, l)?;
    let up = UpsampleSpec::new(2, UpsampleMode::Nearest);
    let mut merged: Vec<Option<G::Value>> = vec![None; l];
    let mut above: Option<G::Value> = None;
    for i in (0..l).rev() {
        let lat = params.lateral[i].apply(g, &inputs[i])?;
        let p = match above {
            Some(a) => {
                let a = g.upsample(&a, &up)?;
                g.add(&lat, &a)?
            }
            None => lat,
        };
        merged[i] = Some(p.clone());
        above = Some(p);
    }
    merged
        .into_iter()
        .zip(&params.smooth)
        .map(|(p, s)| s.apply(g, &p.expect("filled above")))
        .collect()
}

/// Registers each level as input `X<i>` (1-based).
pub fn register_inputs<T: Element, G: Graph<T>>(g: &mut G, feats: &PyramidFeatures<T>) -> Vec<G::Value> {
    feats
        .levels
        .iter()
        .enumerate()
        .map(|(i, t)| g.input(&format!("X{}", i + 1), t.clone()))
        .collect()
}

pub fn enhanced_neck_forward<T: Element>(
    feats: &PyramidFeatures<T>,
    params: &NeckParams<T>,
) -> Result<PyramidFeatures<T>> {
    check_feats(feats, &params.config)?;
    let mut g = Eager;
    let inputs = register_inputs(&mut g, feats);
    let levels = record_enhanced_neck(&mut g, &inputs, &params.enhanced)?;
    Ok(PyramidFeatures {
        levels,
        strides: feats.strides.clone(),
    })
}

pub fn baseline_fpn_forward<T: Element>(
    feats: &PyramidFeatures<T>,
    params: &NeckParams<T>,
) -> Result<PyramidFeatures<T>> {
    check_feats(feats, &params.config)?;
    let mut g = Eager;
    let inputs = register_inputs(&mut g, feats);
    let levels = record_baseline_fpn(&mut g, &inputs, &params.baseline)?;
    Ok(PyramidFeatures {
        levels,
        strides: feats.strides.clone(),
    })
}

fn check_feats<T: Element>(feats: &PyramidFeatures<T>, config: &NeckConfig) -> Result<()> {
    if feats.levels.len() != config.levels() {
        return Err(Error::shape(
            "neck",
            format!(
                "pyramid has {} levels, config expects {}",
                feats.levels.len(),
                config.levels()
            ),
        ));
    }
    for (i, t) in feats.levels.iter().enumerate() {
        let s = t.shape();
        let (h, w) = config.pyramid.level_hw(i);
        if s.c() != config.pyramid.channels[i] || (s.h(), s.w()) != (h, w) {
            return Err(Error::shape(
                "neck",
                format!(
                    "level {} is {s}, config expects (N,{},{h},{w})",
                    i + 1,
                    config.pyramid.channels[i]
                ),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(levels: usize, c: usize, base: usize) -> NeckConfig {
        let t = NeckTemplate {
            gsnet: GsnetConfig {
                channels: c,
                k: 3,
                residual_channels: c,
                ..GsnetConfig::default()
            },
            frm_mid_ch: c,
            frm_out_ch: c,
            lateral_channels: c,
            ..NeckTemplate::default()
        };
        NeckConfig::from_template(PyramidSpec::uniform(levels, (base, base), c), &t).unwrap()
    }

    #[test]
    fn synth_shapes_and_impulse() {
        let spec = PyramidSpec::uniform(4, (64, 64), 256);
        let f = synth_backbone::<f32>(&spec, 0, Fill::Impulse).unwrap();
        let shapes: Vec<_> = f.shapes();
        assert_eq!(
            shapes,
            vec![
                Shape::new(1, 256, 64, 64),
                Shape::new(1, 256, 32, 32),
                Shape::new(1, 256, 16, 16),
                Shape::new(1, 256, 8, 8)
            ]
        );
        assert!(f.levels.iter().all(|t| t.sum() == 1.0));
        assert_eq!(f.strides, vec![4, 8, 16, 32]);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = PyramidSpec::uniform(3, (16, 12), 3);
        let a = synth_backbone::<f64>(&spec, 5, Fill::Uniform).unwrap();
        let b = synth_backbone::<f64>(&spec, 5, Fill::Uniform).unwrap();
        assert!(a.levels.iter().zip(&b.levels).all(|(x, y)| x.bit_eq(y)));
        let r = synth_backbone::<f64>(&spec, 0, Fill::Ramp).unwrap();
        assert!(r.levels[0].data().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn padding_rounds_base_up() {
        let spec = PyramidSpec::uniform(3, (10, 13), 1);
        assert_eq!(spec.padded_base(), (12, 16));
        assert_eq!(spec.level_hw(2), (3, 4));
    }

    #[test]
    fn adjacent_channel_mismatch_rejected() {
        let mut cfg = tiny(3, 4, 16);
        cfg.pyramid.channels = vec![4, 8, 8];
        cfg.gsnet[1].channels = 8;
        cfg.gsnet[2].channels = 8;
        cfg.frm[1].in_ch_x = 8;
        cfg.frm[1].in_ch_y = 8;
        assert!(matches!(neck_init::<f64>(&cfg, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn output_schedule() {
        let cfg = tiny(4, 3, 32);
        let p = neck_init::<f64>(&cfg, 1).unwrap();
        let feats = synth_backbone::<f64>(&cfg.pyramid, 2, Fill::Uniform).unwrap();
        let out = enhanced_neck_forward(&feats, &p).unwrap();
        for (o, i) in out.levels.iter().zip(&feats.levels) {
            assert_eq!(o.shape(), i.shape());
        }
        let base = baseline_fpn_forward(&feats, &p).unwrap();
        for (o, i) in base.levels.iter().zip(&feats.levels) {
            assert_eq!(
                (o.shape().c(), o.shape().h(), o.shape().w()),
                (3, i.shape().h(), i.shape().w())
            );
        }
    }

    #[test]
    fn zero_params_zero_baseline() {
        let cfg = tiny(3, 2, 16);
        let p = neck_zeros::<f64>(&cfg).unwrap();
        let feats = synth_backbone::<f64>(&cfg.pyramid, 2, Fill::Uniform).unwrap();
        let out = baseline_fpn_forward(&feats, &p).unwrap();
        assert!(out.levels.iter().all(|t| t.max_abs() == 0.0));
    }

    #[test]
    fn project_top_changes_width() {
        let mut t = NeckTemplate {
            gsnet: GsnetConfig {
                channels: 2,
                k: 3,
                residual_channels: 2,
                ..GsnetConfig::default()
            },
            frm_mid_ch: 3,
            frm_out_ch: 5,
            lateral_channels: 2,
            ..NeckTemplate::default()
        };
        t.top_level_policy = TopLevelPolicy::Project1x1;
        let cfg = NeckConfig::from_template(PyramidSpec::uniform(2, (8, 8), 2), &t).unwrap();
        let p = neck_init::<f64>(&cfg, 0).unwrap();
        let feats = synth_backbone::<f64>(&cfg.pyramid, 0, Fill::Uniform).unwrap();
        let out = enhanced_neck_forward(&feats, &p).unwrap();
        assert_eq!(out.levels[1].shape().c(), 5);
        assert_eq!(cfg.top_channels(), 5);
    }
}
