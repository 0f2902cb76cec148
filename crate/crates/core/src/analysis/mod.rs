//! Cost accounting, gradient checking, receptive fields, calibration and timing.

pub mod bench;
pub mod calibrate;
pub mod cost;
pub mod erf;
pub mod gradcheck;

pub use bench::{bench_forward, BenchReport};
pub use calibrate::{
    calibrate_search, component_cost, component_graph, reference_targets, CalibrationReport, CalibrationTarget,
    Candidate, CandidateScore, Component, ComponentCost, Detector, SearchSpace, TargetReport,
};
pub use cost::{
    baseline_fpn_graph, count_macs, count_params, enhanced_neck_graph, frm_graph, gsnet_graph, measure_tape,
    report_by_layer, CostGraph, CostReport, CostRow, FlopConvention, LayerDesc, MeasuredCosts,
};
pub use erf::{erf_map, support_mask, ErfReport, ErfThreshold, SupportBox};
pub use gradcheck::{gradcheck, relative_error, GradcheckOptions, GradcheckReport, GroupReport};
