//! Parameter and multiply-accumulate accounting.
//!
//! Only convolutions are counted. Elementwise adds, ReLU, concatenation and
//! upsampling contribute neither parameters nor MACs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frm::FrmConfig;
use crate::gsnet::{join, GsnetConfig};
use crate::neck::{level_prefix, NeckConfig};
use crate::ops::{direct_conv_oracle_counted, ConvSpec};
use crate::tape::{LeafKind, Tape};
use crate::tensor::Element;

/// One learned convolution in a graph description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub name: String,
    pub spec: ConvSpec,
    /// Pyramid level; the layer sees an input of `base >> level`.
    pub level: usize,
    /// Executions per forward pass (2 for weights shared across branches).
    pub uses: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostGraph {
    pub name: String,
    pub layers: Vec<LayerDesc>,
}

impl CostGraph {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            layers: Vec::new(),
        }
    }

    pub fn extend(&mut self, other: CostGraph) {
        self.layers.extend(other.layers);
    }

    /// Layers whose name contains `needle`.
    pub fn filter(&self, name: impl Into<String>, needle: &str) -> CostGraph {
        CostGraph {
            name: name.into(),
            layers: self
                .layers
                .iter()
                .filter(|l| l.name.contains(needle))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlopConvention {
    /// One multiply-accumulate counts as one FLOP.
    #[default]
    Mac1,
    /// One multiply-accumulate counts as two FLOPs.
    Mac2,
}

impl FlopConvention {
    pub fn factor(self) -> u64 {
        match self {
            FlopConvention::Mac1 => 1,
            FlopConvention::Mac2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub layer: String,
    pub kernel: (usize, usize),
    pub in_ch: usize,
    pub out_ch: usize,
    pub groups: usize,
    pub param_count: u64,
    /// Input extent seen by the layer; absent for parameter-only reports.
    pub input_hw: Option<(usize, usize)>,
    pub mac_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub graph: String,
    pub input_hw: Option<(usize, usize)>,
    pub flop_convention: FlopConvention,
    pub rows: Vec<CostRow>,
    pub total_params: u64,
    pub total_macs: u64,
    pub total_flops: u64,
}

impl CostReport {
    fn from_rows(
        graph: &CostGraph,
        input_hw: Option<(usize, usize)>,
        convention: FlopConvention,
        rows: Vec<CostRow>,
    ) -> Self {
        let total_params = rows.iter().map(|r| r.param_count).sum();
        let total_macs: u64 = rows.iter().map(|r| r.mac_count).sum();
        Self {
            graph: graph.name.clone(),
            input_hw,
            flop_convention: convention,
            rows,
            total_params,
            total_macs,
            total_flops: total_macs * convention.factor(),
        }
    }
}

fn row(l: &LayerDesc, input_hw: Option<(usize, usize)>, mac_count: u64) -> CostRow {
    CostRow {
        layer: l.name.clone(),
        kernel: (l.spec.kernel_h, l.spec.kernel_w),
        in_ch: l.spec.in_ch,
        out_ch: l.spec.out_ch,
        groups: l.spec.groups,
        param_count: l.spec.param_count(),
        input_hw,
        mac_count,
    }
}

/// Exact parameter counts: `out·(in/groups)·kh·kw (+ out)` per layer.
pub fn count_params(graph: &CostGraph) -> CostReport {
    let rows = graph.layers.iter().map(|l| row(l, None, 0)).collect();
    CostReport::from_rows(graph, None, FlopConvention::Mac1, rows)
}

/// Parameter counts plus per-batch-item MACs for a finest-level input of `input_hw`.
pub fn count_macs(graph: &CostGraph, input_hw: (usize, usize), convention: FlopConvention) -> Result<CostReport> {
    let mut rows = Vec::with_capacity(graph.layers.len());
    for l in &graph.layers {
        let hw = (input_hw.0 >> l.level, input_hw.1 >> l.level);
        let macs = l.spec.mac_count(hw.0, hw.1)? * l.uses;
        rows.push(row(l, Some(hw), macs));
    }
    Ok(CostReport::from_rows(graph, Some(input_hw), convention, rows))
}

pub fn gsnet_graph(cfg: &GsnetConfig, prefix: &str, level: usize) -> CostGraph {
    let uses = if cfg.share_branch_weights { 2 } else { 1 };
    CostGraph {
        name: "gsnet".into(),
        layers: cfg
            .layer_specs()
            .into_iter()
            .map(|(suffix, spec)| LayerDesc {
                name: join(prefix, suffix),
                spec,
                level,
                uses: if suffix.starts_with("branch") { uses } else { 1 },
            })
            .collect(),
    }
}

pub fn frm_graph(cfg: &FrmConfig, prefix: &str, level: usize) -> CostGraph {
    CostGraph {
        name: "frm".into(),
        layers: cfg
            .layer_specs()
            .into_iter()
            .map(|(suffix, spec)| LayerDesc {
                name: join(prefix, suffix),
                spec,
                level,
                uses: 1,
            })
            .collect(),
    }
}

/// Every layer of the enhanced neck, named as [`crate::neck::neck_init`] names them.
pub fn enhanced_neck_graph(config: &NeckConfig) -> CostGraph {
    let mut g = CostGraph::new("enhanced_neck");
    for (i, cfg) in config.gsnet.iter().enumerate() {
        g.extend(gsnet_graph(cfg, &format!("{}.gsnet", level_prefix(i)), i));
    }
    for (i, cfg) in config.frm.iter().enumerate() {
        g.extend(frm_graph(cfg, &format!("{}.frm", level_prefix(i)), i));
    }
    if let Some(spec) = config.top_projection_spec() {
        let top = config.levels() - 1;
        g.layers.push(LayerDesc {
            name: format!("{}.top.project", level_prefix(top)),
            spec,
            level: top,
            uses: 1,
        });
    }
    g
}

pub fn baseline_fpn_graph(config: &NeckConfig) -> CostGraph {
    let mut g = CostGraph::new("baseline_fpn");
    for i in 0..config.levels() {
        let [lat, sm] = config.fpn_specs(i);
        g.layers.push(LayerDesc {
            name: format!("fpn.{}.lateral", level_prefix(i)),
            spec: lat,
            level: i,
            uses: 1,
        });
        g.layers.push(LayerDesc {
            name: format!("fpn.{}.smooth", level_prefix(i)),
            spec: sm,
            level: i,
            uses: 1,
        });
    }
    g
}

/// Costs measured from a recorded tape rather than computed from specs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasuredCosts {
    /// Layer name → stored weight and bias elements of its parameter leaves.
    pub params: BTreeMap<String, u64>,
    /// Layer name → MACs executed per batch item by the counting oracle.
    pub macs: BTreeMap<String, u64>,
}

impl MeasuredCosts {
    pub fn total_params(&self) -> u64 {
        self.params.values().sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.macs.values().sum()
    }
}

/// Enumerates every parameter leaf and re-executes every recorded
/// convolution through the counting oracle.
pub fn measure_tape<T: Element>(tape: &Tape<T>) -> Result<MeasuredCosts> {
    let mut out = MeasuredCosts::default();
    for (id, name, kind) in tape.leaves() {
        if kind != LeafKind::Param {
            continue;
        }
        let layer = name
            .strip_suffix(".weight")
            .or_else(|| name.strip_suffix(".bias"))
            .unwrap_or(name);
        *out.params.entry(layer.to_string()).or_default() += tape.value(id)?.numel() as u64;
    }
    for rec in tape.conv_records() {
        let (_, macs) = direct_conv_oracle_counted(rec.x, &rec.spec, rec.weight, rec.bias)?;
        let batch = rec.x.shape().n().max(1) as u64;
        *out.macs.entry(rec.layer.to_string()).or_default() += macs / batch;
    }
    Ok(out)
}

/// Per-layer view of a [`CostReport`] keyed like [`MeasuredCosts`].
pub fn report_by_layer(report: &CostReport) -> (BTreeMap<String, u64>, BTreeMap<String, u64>) {
    let params = report.rows.iter().map(|r| (r.layer.clone(), r.param_count)).collect();
    let macs = report.rows.iter().map(|r| (r.layer.clone(), r.mac_count)).collect();
    (params, macs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(spec: ConvSpec) -> CostGraph {
        CostGraph {
            name: "one".into(),
            layers: vec![LayerDesc {
                name: "conv".into(),
                spec,
                level: 0,
                uses: 1,
            }],
        }
    }

    #[test]
    fn closed_form_params() {
        let r = count_params(&single(ConvSpec::same(256, 256, 3, 3, 1, true)));
        assert_eq!(r.total_params, 590_080);
        let r = count_params(&single(ConvSpec::same(256, 256, 1, 15, 256, true)));
        assert_eq!(r.total_params, 4_096);
        assert_eq!(count_params(&CostGraph::new("empty")).total_params, 0);
    }

    #[test]
    fn closed_form_macs() {
        let r = count_macs(
            &single(ConvSpec::same(1, 1, 3, 3, 1, false)),
            (5, 5),
            FlopConvention::Mac1,
        )
        .unwrap();
        assert_eq!(r.total_macs, 225);
        let r = count_macs(
            &single(ConvSpec::same(7, 7, 1, 1, 1, false)),
            (6, 4),
            FlopConvention::Mac1,
        )
        .unwrap();
        assert_eq!(r.total_macs, 7 * 7 * 6 * 4);
        let e = count_macs(&CostGraph::new("empty"), (8, 8), FlopConvention::Mac1).unwrap();
        assert_eq!(e.total_macs, 0);
    }

    #[test]
    fn mac2_doubles() {
        let g = single(ConvSpec::same(3, 5, 3, 3, 1, true));
        let a = count_macs(&g, (9, 7), FlopConvention::Mac1).unwrap();
        let b = count_macs(&g, (9, 7), FlopConvention::Mac2).unwrap();
        assert_eq!(b.total_flops, 2 * a.total_flops);
        assert_eq!(a.total_macs, b.total_macs);
    }

    #[test]
    fn shared_branches_count_twice_for_macs() {
        let cfg = GsnetConfig {
            channels: 4,
            k: 5,
            share_branch_weights: true,
            ..GsnetConfig::default()
        };
        let shared = count_macs(&gsnet_graph(&cfg, "g", 0), (8, 8), FlopConvention::Mac1).unwrap();
        let unshared_cfg = GsnetConfig {
            share_branch_weights: false,
            ..cfg
        };
        let unshared = count_macs(&gsnet_graph(&unshared_cfg, "g", 0), (8, 8), FlopConvention::Mac1).unwrap();
        assert_eq!(shared.total_macs, unshared.total_macs);
        assert!(shared.total_params < unshared.total_params);
    }
}
