//! Global semantic neck blocks for multi-scale detectors: a large-kernel
//! combined convolution with a refinement residual, a concatenate-and-refine
//! fusion module, the pyramid neck that chains them, and the tooling used to
//! verify them (cost counting, gradient checks, receptive fields,
//! complexity calibration, timing).
//!
//! Blocks are written once against [`Graph`] and run either eagerly
//! ([`Eager`]) or recorded on a differentiable [`Tape`].

pub mod analysis;
pub mod error;
pub mod frm;
pub mod graph;
pub mod gsnet;
pub mod io;
pub mod layer;
pub mod neck;
pub mod ops;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use frm::{frm_forward, frm_init, FrmConfig, FrmParams};
pub use graph::{Eager, Graph};
pub use gsnet::{
    boundary_refine, combined_conv, combined_conv_via_transpose, gsnet_forward, gsnet_init, GsnetConfig, GsnetParams,
};
pub use layer::ConvLayer;
pub use neck::{
    baseline_fpn_forward, enhanced_neck_forward, neck_init, neck_zeros, synth_backbone, Fill, NeckConfig, NeckParams,
    NeckTemplate, PyramidFeatures, PyramidSpec, TopLevelPolicy,
};
pub use tape::{GradientSet, Tape, ValueId};
pub use tensor::{concat_channels, DType, Element, Init, Shape, Tensor};
