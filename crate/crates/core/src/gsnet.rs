//! Global semantic block: two-branch combined large-kernel convolution,
//! a residual refinement branch, and the triple sum `Y = M + R(M) + X`.
//!
//! The combined convolution `M` sums two separable branches,
//! `k×1 ∘ 1×k` and `1×k ∘ k×1`, with no nonlinearity inside a branch. A k×1
//! convolution is a 1×k convolution conjugated by an H/W transpose, which
//! [`combined_conv_via_transpose`] evaluates literally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layer::ConvLayer;
use crate::ops::ConvSpec;
use crate::rng::UniformStream;
use crate::tensor::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GsnetConfig {
    pub channels: usize,
    /// Extent of the combined convolution; odd, at least 3.
    pub k: usize,
    /// Grouped (one filter per channel) asymmetric convolutions.
    pub depthwise: bool,
    /// Kernel size of both residual convolutions, 1 or 3.
    pub residual_kernel: usize,
    pub residual_channels: usize,
    pub asym_bias: bool,
    pub residual_bias: bool,
    /// Reuse branch A's row and column weights in branch B.
    pub share_branch_weights: bool,
}

impl Default for GsnetConfig {
    fn default() -> Self {
        Self {
            channels: 256,
            k: 15,
            depthwise: true,
            residual_kernel: 1,
            residual_channels: 256,
            asym_bias: true,
            residual_bias: true,
            share_branch_weights: false,
        }
    }
}

impl GsnetConfig {
    /// Odd kernel wider than the map, so a centered unit sees all of an
    /// `h × w` map.
    pub fn global_k(h: usize, w: usize) -> usize {
        2 * h.max(w).div_ceil(2) + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("gsnet.channels", "must be >= 1"));
        }
        if self.k < 3 || self.k.is_multiple_of(2) {
            return Err(Error::config(
                "gsnet.k",
                format!("kernel extent must be an odd integer >= 3, got {}", self.k),
            ));
        }
        if !matches!(self.residual_kernel, 1 | 3) {
            return Err(Error::config(
                "gsnet.residual_kernel",
                format!("must be 1 or 3, got {}", self.residual_kernel),
            ));
        }
        if self.residual_channels == 0 {
            return Err(Error::config("gsnet.residual_channels", "must be >= 1"));
        }
        Ok(())
    }

    fn asym_groups(&self) -> usize {
        if self.depthwise {
            self.channels
        } else {
            1
        }
    }

    pub fn row_spec(&self) -> ConvSpec {
        ConvSpec::same(
            self.channels,
            self.channels,
            1,
            self.k,
            self.asym_groups(),
            self.asym_bias,
        )
    }

    pub fn col_spec(&self) -> ConvSpec {
        ConvSpec::same(
            self.channels,
            self.channels,
            self.k,
            1,
            self.asym_groups(),
            self.asym_bias,
        )
    }

    pub fn residual_specs(&self) -> [ConvSpec; 2] {
        let rk = self.residual_kernel;
        [
            ConvSpec::same(self.channels, self.residual_channels, rk, rk, 1, self.residual_bias),
            ConvSpec::same(self.residual_channels, self.channels, rk, rk, 1, self.residual_bias),
        ]
    }

    /// Every distinct learned layer as `(suffix, spec)`, in registration order.
    pub fn layer_specs(&self) -> Vec<(&'static str, ConvSpec)> {
        let mut v = vec![("branch_a.row", self.row_spec()), ("branch_a.col", self.col_spec())];
        if !self.share_branch_weights {
            v.push(("branch_b.col", self.col_spec()));
            v.push(("branch_b.row", self.row_spec()));
        }
        let [r1, r2] = self.residual_specs();
        v.push(("residual.conv1", r1));
        v.push(("residual.conv2", r2));
        v
    }
}

#[derive(Debug, Clone)]
pub struct GsnetParams<T> {
    pub config: GsnetConfig,
    pub a_row: ConvLayer<T>,
    pub a_col: ConvLayer<T>,
    /// `(col, row)` of branch B; `None` when sharing branch A's weights.
    pub branch_b: Option<(ConvLayer<T>, ConvLayer<T>)>,
    pub res1: ConvLayer<T>,
    pub res2: ConvLayer<T>,
}

impl<T: Element> GsnetParams<T> {
    pub fn init(config: GsnetConfig, prefix: &str, stream: &mut UniformStream) -> Result<Self> {
        Self::build(config, prefix, |name, spec| ConvLayer::init(name, spec, stream))
    }

    pub fn zeros(config: GsnetConfig, prefix: &str) -> Result<Self> {
        Self::build(config, prefix, ConvLayer::zeros)
    }

    fn build(
        config: GsnetConfig,
        prefix: &str,
        mut make: impl FnMut(String, ConvSpec) -> Result<ConvLayer<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        for (suffix, spec) in config.layer_specs() {
            layers.push(make(join(prefix, suffix), spec)?);
        }
        let mut it = layers.into_iter();
        let mut next = || it.next().expect("layer count follows layer_specs");
        let a_row = next();
        let a_col = next();
        let branch_b = (!config.share_branch_weights).then(|| {
            let col = next();
            let row = next();
            (col, row)
        });
        Ok(Self {
            config,
            a_row,
            a_col,
            branch_b,
            res1: next(),
            res2: next(),
        })
    }

    pub fn layers(&self) -> Vec<&ConvLayer<T>> {
        let mut v = vec![&self.a_row, &self.a_col];
        if let Some((c, r)) = &self.branch_b {
            v.push(c);
            v.push(r);
        }
        v.push(&self.res1);
        v.push(&self.res2);
        v
    }

    pub fn map_layers(&self, f: impl Fn(&ConvLayer<T>) -> ConvLayer<T>) -> Self {
        Self {
            config: self.config,
            a_row: f(&self.a_row),
            a_col: f(&self.a_col),
            branch_b: self.branch_b.as_ref().map(|(c, r)| (f(c), f(r))),
            res1: f(&self.res1),
            res2: f(&self.res2),
        }
    }

    fn check_input<G: Graph<T>>(&self, g: &G, x: &G::Value, op: &'static str) -> Result<()> {
        let s = g.tensor(x).shape();
        if s.c() != self.config.channels {
            return Err(Error::shape(
                op,
                format!(
                    "input {s} has {} channels, block expects {}",
                    s.c(),
                    self.config.channels
                ),
            ));
        }
        Ok(())
    }
}

pub(crate) fn join(prefix: &str, suffix: &str) -> String {
    if prefix.is_empty() {
        suffix.to_string()
    } else {
        format!("{prefix}.{suffix}")
    }
}

/// Deterministic fan-in scaled initialization.
pub fn gsnet_init<T: Element>(config: GsnetConfig, seed: u64) -> Result<GsnetParams<T>> {
    GsnetParams::init(config, "gsnet", &mut UniformStream::new(seed))
}

/// `M`: sum of the two separable large-kernel branches.
pub fn combined_conv<T: Element, G: Graph<T>>(g: &mut G, x: &G::Value, params: &GsnetParams<T>) -> Result<G::Value> {
    params.check_input(g, x, "combined_conv")?;
    let (ar_w, ar_b) = params.a_row.register(g);
    let (ac_w, ac_b) = params.a_col.register(g);
    let ((bc_w, bc_b), (br_w, br_b)) = match &params.branch_b {
        Some((col, row)) => (col.register(g), row.register(g)),
        None => ((ac_w.clone(), ac_b.clone()), (ar_w.clone(), ar_b.clone())),
    };
    let (row, col) = (params.config.row_spec(), params.config.col_spec());

    let a = g.conv2d(x, &row, &ar_w, ar_b.as_ref())?;
    let a = g.conv2d(&a, &col, &ac_w, ac_b.as_ref())?;
    let b = g.conv2d(x, &col, &bc_w, bc_b.as_ref())?;
    let b = g.conv2d(&b, &row, &br_w, br_b.as_ref())?;
    g.add(&a, &b)
}

/// [`combined_conv`] evaluated with row convolutions only: every k×1
/// convolution runs as a 1×k convolution between two H/W transposes.
pub fn combined_conv_via_transpose<T: Element, G: Graph<T>>(
    g: &mut G,
    x: &G::Value,
    params: &GsnetParams<T>,
) -> Result<G::Value> {
    params.check_input(g, x, "combined_conv")?;
    let row = params.config.row_spec();
    let (ar_w, ar_b) = params.a_row.register(g);
    let (ac_w, ac_b) = params.a_col.register(g);
    let ((bc_w, bc_b), (br_w, br_b)) = match &params.branch_b {
        Some((col, row)) => (col.register(g), row.register(g)),
        None => ((ac_w.clone(), ac_b.clone()), (ar_w.clone(), ar_b.clone())),
    };
    // (C, 1, k, 1) column kernels become (C, 1, 1, k) row kernels.
    let ac_w = g.transpose_hw(&ac_w)?;
    let bc_w = g.transpose_hw(&bc_w)?;

    let a = g.conv2d(x, &row, &ar_w, ar_b.as_ref())?;
    let a = g.transpose_hw(&a)?;
    let a = g.conv2d(&a, &row, &ac_w, ac_b.as_ref())?;
    let a = g.transpose_hw(&a)?;

    let xt = g.transpose_hw(x)?;
    let b = g.conv2d(&xt, &row, &bc_w, bc_b.as_ref())?;
    let b = g.transpose_hw(&b)?;
    let b = g.conv2d(&b, &row, &br_w, br_b.as_ref())?;
    g.add(&a, &b)
}

/// `R(M) = conv(relu(conv(M)))`.
pub fn boundary_refine<T: Element, G: Graph<T>>(g: &mut G, m: &G::Value, params: &GsnetParams<T>) -> Result<G::Value> {
    params.check_input(g, m, "boundary_refine")?;
    let h = params.res1.apply(g, m)?;
    let h = g.relu(&h)?;
    params.res2.apply(g, &h)
}

/// `Y = M + R(M) + X`; output shape always equals input shape.
pub fn gsnet_forward<T: Element, G: Graph<T>>(g: &mut G, x: &G::Value, params: &GsnetParams<T>) -> Result<G::Value> {
    let m = combined_conv(g, x, params)?;
    let r = boundary_refine(g, &m, params)?;
    let y = g.add(&m, &r)?;
    g.add(&y, x)
}
