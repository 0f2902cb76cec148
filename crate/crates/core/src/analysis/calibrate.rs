//! Search for block configurations whose added parameters and FLOPs match
//! published neck complexity deltas.
//!
//! Targets are differences between ablation rows (block enabled minus
//! baseline) at a 1024×1024 input, so backbone and head costs cancel.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::cost::{count_macs, enhanced_neck_graph, CostGraph, FlopConvention};
use crate::error::{Error, Result};
use crate::gsnet::GsnetConfig;
use crate::neck::{NeckConfig, NeckTemplate, PyramidSpec, TopLevelPolicy};
use crate::ops::UpsampleMode;
use crate::rng::UniformStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detector {
    FasterRcnn,
    Retinanet,
}

impl Detector {
    /// Stride of the finest pyramid level fed to the neck.
    pub fn finest_stride(self) -> usize {
        match self {
            Detector::FasterRcnn => 4,
            Detector::Retinanet => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Detector::FasterRcnn => "faster-rcnn",
            Detector::Retinanet => "retinanet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Gsnet,
    Frm,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub name: String,
    pub detector: Detector,
    pub component: Component,
    /// Added parameters, in elements.
    pub param_delta: u64,
    /// Added FLOPs at 1024×1024, under the report's convention.
    pub flop_delta: u64,
}

/// Ablation rows as `(params in 0.01 M, GFLOPs in 0.01 G)`:
/// baseline, +gsnet, +frm, +both.
const FASTER_RCNN_ROWS: [(u64, u64); 4] = [(7412, 28919), (7461, 29398), (7645, 32566), (7791, 33814)];
const RETINANET_ROWS: [(u64, u64); 4] = [(3642, 21592), (3777, 22154), (3834, 22603), (3969, 23166)];

pub fn reference_targets(detector: Detector) -> Vec<CalibrationTarget> {
    let rows = match detector {
        Detector::FasterRcnn => FASTER_RCNN_ROWS,
        Detector::Retinanet => RETINANET_ROWS,
    };
    let (base_p, base_f) = rows[0];
    [Component::Gsnet, Component::Frm, Component::Both]
        .into_iter()
        .zip(&rows[1..])
        .map(|(component, &(p, f))| CalibrationTarget {
            name: format!("{}/{:?}", detector.name(), component).to_lowercase(),
            detector,
            component,
            param_delta: (p - base_p) * 10_000,
            flop_delta: (f - base_f) * 10_000_000,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub k: Vec<usize>,
    pub depthwise: Vec<bool>,
    pub residual_kernel: Vec<usize>,
    pub residual_channels: Vec<usize>,
    pub mid_ch: Vec<usize>,
    pub has_bias: Vec<bool>,
    pub levels: Vec<usize>,
    pub top_level_policy: Vec<TopLevelPolicy>,
    /// Pyramid width, fixed across the search.
    pub channels: usize,
    pub input_hw: (usize, usize),
    pub flop_convention: FlopConvention,
    /// Evaluate a seeded random subset of this size instead of every point.
    pub max_candidates: Option<usize>,
    pub seed: u64,
    pub tolerance: f64,
    pub report_top: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            k: (3..=31).step_by(2).collect(),
            depthwise: vec![true, false],
            residual_kernel: vec![1, 3],
            residual_channels: vec![32, 64, 128, 256],
            mid_ch: vec![64, 96, 128, 160, 192, 224, 256],
            has_bias: vec![true, false],
            levels: vec![4, 5],
            top_level_policy: vec![TopLevelPolicy::Passthrough, TopLevelPolicy::Project1x1],
            channels: 256,
            input_hw: (1024, 1024),
            flop_convention: FlopConvention::Mac1,
            max_candidates: None,
            seed: 0,
            tolerance: 0.10,
            report_top: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub k: usize,
    pub depthwise: bool,
    pub residual_kernel: usize,
    pub residual_channels: usize,
    pub mid_ch: usize,
    pub has_bias: bool,
    pub levels: usize,
    pub top_level_policy: TopLevelPolicy,
}

impl Candidate {
    pub fn neck_config(&self, detector: Detector, channels: usize, input_hw: (usize, usize)) -> Result<NeckConfig> {
        let stride = detector.finest_stride();
        let pyramid = PyramidSpec {
            levels: self.levels,
            base_hw: (input_hw.0 / stride, input_hw.1 / stride),
            channels: vec![channels; self.levels],
            finest_stride: stride,
            batch: 1,
        };
        let template = NeckTemplate {
            gsnet: GsnetConfig {
                channels,
                k: self.k,
                depthwise: self.depthwise,
                residual_kernel: self.residual_kernel,
                residual_channels: self.residual_channels,
                asym_bias: self.has_bias,
                residual_bias: self.has_bias,
                share_branch_weights: false,
            },
            global_kernel: false,
            frm_mid_ch: self.mid_ch,
            frm_out_ch: channels,
            frm_upsample: UpsampleMode::Bilinear,
            frm_literal_eq4: false,
            frm_bias: self.has_bias,
            top_level_policy: self.top_level_policy,
            lateral_channels: channels,
        };
        NeckConfig::from_template(pyramid, &template)
    }

    /// The knobs that influence a component's cost.
    fn relevant_key(&self, component: Component) -> String {
        let gs = format!(
            "k{} dw{} rk{} rc{} b{} L{}",
            self.k, self.depthwise, self.residual_kernel, self.residual_channels, self.has_bias, self.levels
        );
        let fr = format!(
            "m{} b{} L{} {:?}",
            self.mid_ch, self.has_bias, self.levels, self.top_level_policy
        );
        match component {
            Component::Gsnet => gs,
            Component::Frm => fr,
            Component::Both => format!("{gs} {fr}"),
        }
    }
}

/// Parameter and FLOP totals of one part of the enhanced neck.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCost {
    pub params: u64,
    pub flops: u64,
}

/// Layers attributed to each component. The top-level projection belongs to
/// the fusion side.
pub fn component_graph(config: &NeckConfig, component: Component) -> CostGraph {
    let full = enhanced_neck_graph(config);
    match component {
        Component::Gsnet => full.filter("gsnet", ".gsnet."),
        Component::Frm => CostGraph {
            name: "frm".into(),
            layers: full
                .layers
                .iter()
                .filter(|l| l.name.contains(".frm.") || l.name.contains(".top."))
                .cloned()
                .collect(),
        },
        Component::Both => full,
    }
}

/// Costs at the config's own pyramid resolution.
pub fn component_cost(config: &NeckConfig, component: Component, convention: FlopConvention) -> Result<ComponentCost> {
    let base = config.pyramid.padded_base();
    let report = count_macs(&component_graph(config, component), base, convention)?;
    Ok(ComponentCost {
        params: report.total_params,
        flops: report.total_flops,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: Candidate,
    pub params: u64,
    pub flops: u64,
    /// Signed `(achieved - target) / target`.
    pub param_rel_error: f64,
    pub flop_rel_error: f64,
    /// `max(|param_rel_error|, |flop_rel_error|)`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: CalibrationTarget,
    /// Distinct configurations after collapsing knobs the component ignores.
    pub evaluated: usize,
    pub ranked: Vec<CandidateScore>,
    pub within_tolerance: Vec<CandidateScore>,
    pub best_param_only: CandidateScore,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub flop_convention: FlopConvention,
    pub input_hw: (usize, usize),
    pub channels: usize,
    pub tolerance: f64,
    pub space_size: usize,
    pub sampled: usize,
    pub targets: Vec<TargetReport>,
}

fn enumerate(space: &SearchSpace) -> Vec<Candidate> {
    let mut out = Vec::new();
    for &levels in &space.levels {
        for &k in &space.k {
            for &depthwise in &space.depthwise {
                for &residual_kernel in &space.residual_kernel {
                    for &residual_channels in &space.residual_channels {
                        for &mid_ch in &space.mid_ch {
                            for &has_bias in &space.has_bias {
                                for &top_level_policy in &space.top_level_policy {
                                    out.push(Candidate {
                                        k,
                                        depthwise,
                                        residual_kernel,
                                        residual_channels,
                                        mid_ch,
                                        has_bias,
                                        levels,
                                        top_level_policy,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn validate_space(space: &SearchSpace) -> Result<()> {
    let dims = [
        ("k", space.k.len()),
        ("depthwise", space.depthwise.len()),
        ("residual_kernel", space.residual_kernel.len()),
        ("residual_channels", space.residual_channels.len()),
        ("mid_ch", space.mid_ch.len()),
        ("has_bias", space.has_bias.len()),
        ("levels", space.levels.len()),
        ("top_level_policy", space.top_level_policy.len()),
    ];
    if let Some((name, _)) = dims.iter().find(|(_, n)| *n == 0) {
        return Err(Error::EmptySpace(format!("no values for `{name}`")));
    }
    if space.max_candidates == Some(0) {
        return Err(Error::EmptySpace("max_candidates is 0".into()));
    }
    Ok(())
}

fn score(candidate: Candidate, cost: ComponentCost, target: &CalibrationTarget) -> CandidateScore {
    let pe = (cost.params as f64 - target.param_delta as f64) / target.param_delta as f64;
    let fe = (cost.flops as f64 - target.flop_delta as f64) / target.flop_delta as f64;
    CandidateScore {
        candidate,
        params: cost.params,
        flops: cost.flops,
        param_rel_error: pe,
        flop_rel_error: fe,
        score: pe.abs().max(fe.abs()),
    }
}

/// Ranks every (or a seeded sample of) configuration against each target.
pub fn calibrate_search(space: &SearchSpace, targets: &[CalibrationTarget]) -> Result<CalibrationReport> {
    validate_space(space)?;
    if targets.is_empty() {
        return Err(Error::EmptySpace("no calibration targets".into()));
    }
    let all = enumerate(space);
    let space_size = all.len();
    let candidates = match space.max_candidates {
        Some(m) if m < all.len() => {
            let mut idx: Vec<usize> = (0..all.len()).collect();
            let mut s = UniformStream::new(space.seed);
            for i in 0..m {
                let j = i + s.next_index(idx.len() - i);
                idx.swap(i, j);
            }
            let mut pick = idx[..m].to_vec();
            pick.sort_unstable();
            pick.into_iter().map(|i| all[i]).collect()
        }
        _ => all,
    };

    let detectors: BTreeSet<Detector> = targets.iter().map(|t| t.detector).collect();
    let mut reports = Vec::with_capacity(targets.len());
    for detector in detectors {
        // Costs for every candidate and component, in enumeration order.
        let costs: Vec<[ComponentCost; 3]> = candidates
            .par_iter()
            .map(|c| {
                let cfg = c.neck_config(detector, space.channels, space.input_hw)?;
                let f = |comp| component_cost(&cfg, comp, space.flop_convention);
                Ok([f(Component::Gsnet)?, f(Component::Frm)?, f(Component::Both)?])
            })
            .collect::<Result<_>>()?;

        for target in targets.iter().filter(|t| t.detector == detector) {
            let slot = match target.component {
                Component::Gsnet => 0,
                Component::Frm => 1,
                Component::Both => 2,
            };
            let mut seen = BTreeSet::new();
            let mut scored: Vec<CandidateScore> = candidates
                .iter()
                .zip(&costs)
                .filter(|(c, _)| seen.insert(c.relevant_key(target.component)))
                .map(|(c, cost)| score(*c, cost[slot], target))
                .collect();
            let evaluated = scored.len();
            let best_param_only = scored
                .iter()
                .min_by(|a, b| a.param_rel_error.abs().total_cmp(&b.param_rel_error.abs()))
                .cloned()
                .expect("space is nonempty");
            scored.sort_by(|a, b| a.score.total_cmp(&b.score));
            let within: Vec<_> = scored.iter().filter(|s| s.score <= space.tolerance).cloned().collect();
            let best = &scored[0];
            // Adding 0.0 turns a rounded -0.00 into 0.00.
            let pct = |v: f64| format!("{:.2}%", (v * 1e4).round() / 100.0 + 0.0);
            let mut statement = if within.is_empty() {
                format!(
                    "no configuration within {} on both params and FLOPs; best achieved max error {} (params {}, FLOPs {})",
                    pct(space.tolerance),
                    pct(best.score),
                    pct(best.param_rel_error),
                    pct(best.flop_rel_error)
                )
            } else {
                format!(
                    "{} configuration(s) within {} on both params and FLOPs; best max error {}",
                    within.len(),
                    pct(space.tolerance),
                    pct(best.score)
                )
            };
            statement.push_str(&format!(
                "; best param-only error {} ({})",
                pct(best_param_only.param_rel_error),
                if best_param_only.param_rel_error.abs() <= space.tolerance {
                    "within tolerance"
                } else {
                    "outside tolerance"
                }
            ));
            scored.truncate(space.report_top.max(1));
            reports.push(TargetReport {
                target: target.clone(),
                evaluated,
                ranked: scored,
                within_tolerance: within,
                best_param_only,
                statement,
            });
        }
    }
    // Report in the caller's target order.
    reports.sort_by_key(|r| targets.iter().position(|t| t == &r.target));
    Ok(CalibrationReport {
        flop_convention: space.flop_convention,
        input_hw: space.input_hw,
        channels: space.channels,
        tolerance: space.tolerance,
        space_size,
        sampled: candidates.len(),
        targets: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_deltas() {
        let f = reference_targets(Detector::FasterRcnn);
        let got: Vec<_> = f.iter().map(|t| (t.param_delta, t.flop_delta)).collect();
        assert_eq!(
            got,
            vec![
                (490_000, 4_790_000_000),
                (2_330_000, 36_470_000_000),
                (3_790_000, 48_950_000_000)
            ]
        );
        let r = reference_targets(Detector::Retinanet);
        let got: Vec<_> = r.iter().map(|t| (t.param_delta, t.flop_delta)).collect();
        assert_eq!(
            got,
            vec![
                (1_350_000, 5_620_000_000),
                (1_920_000, 10_110_000_000),
                (3_270_000, 15_740_000_000)
            ]
        );
    }

    fn one_point() -> SearchSpace {
        SearchSpace {
            k: vec![15],
            depthwise: vec![true],
            residual_kernel: vec![1],
            residual_channels: vec![256],
            mid_ch: vec![256],
            has_bias: vec![true],
            levels: vec![4],
            top_level_policy: vec![TopLevelPolicy::Passthrough],
            ..SearchSpace::default()
        }
    }

    #[test]
    fn degenerate_space_reports_exact_errors() {
        let targets = reference_targets(Detector::FasterRcnn);
        let r = calibrate_search(&one_point(), &targets[..1]).unwrap();
        let s = &r.targets[0].ranked[0];
        // 4 levels × (4 depthwise 1×15 convs + two 256→256 1×1 convs), with bias.
        let per_level = 4 * (256 * 15 + 256) + 2 * (256 * 256 + 256);
        assert_eq!(s.params, 4 * per_level as u64);
        let expected = (s.params as f64 - 490_000.0) / 490_000.0;
        assert_eq!(s.param_rel_error, expected);
        assert_eq!(r.space_size, 1);
    }

    #[test]
    fn empty_dimension_is_error() {
        let space = SearchSpace {
            k: vec![],
            ..one_point()
        };
        assert!(matches!(
            calibrate_search(&space, &reference_targets(Detector::FasterRcnn)),
            Err(Error::EmptySpace(_))
        ));
    }

    #[test]
    fn sampled_search_is_deterministic() {
        let space = SearchSpace {
            max_candidates: Some(50),
            seed: 9,
            ..SearchSpace::default()
        };
        let t = reference_targets(Detector::Retinanet);
        let a = calibrate_search(&space, &t).unwrap();
        let b = calibrate_search(&space, &t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sampled, 50);
    }
}
