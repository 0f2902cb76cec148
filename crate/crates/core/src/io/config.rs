//! Run configuration documents (TOML, schema version 1).
//!
//! Every field is optional. Omitted fields take the defaults below and are
//! listed in [`RunConfig::applied_defaults`].

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{ErfThreshold, FlopConvention, GradcheckOptions, SearchSpace};
use crate::error::{Error, Result};
use crate::gsnet::GsnetConfig;
use crate::neck::{Fill, NeckConfig, NeckTemplate, PyramidSpec, TopLevelPolicy};
use crate::ops::UpsampleMode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    version: Option<u32>,
    pyramid: Option<RawPyramid>,
    gsnet: Option<RawGsnet>,
    frm: Option<RawFrm>,
    neck: Option<RawNeck>,
    seeds: Option<RawSeeds>,
    analysis: Option<RawAnalysis>,
    bench: Option<RawBench>,
    calibrate: Option<RawCalibrate>,
    paths: Option<RawPaths>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPyramid {
    levels: Option<usize>,
    base_hw: Option<(usize, usize)>,
    channels: Option<Channels>,
    finest_stride: Option<usize>,
    batch: Option<usize>,
}

/// One width for every level, or one per level.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Channels {
    Uniform(usize),
    PerLevel(Vec<usize>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGsnet {
    k: Option<usize>,
    global_kernel: Option<bool>,
    depthwise: Option<bool>,
    residual_kernel: Option<usize>,
    residual_channels: Option<usize>,
    asym_bias: Option<bool>,
    residual_bias: Option<bool>,
    share_branch_weights: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrm {
    mid_ch: Option<usize>,
    out_ch: Option<usize>,
    upsample: Option<UpsampleMode>,
    literal_eq4: Option<bool>,
    bias: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNeck {
    top_level_policy: Option<TopLevelPolicy>,
    lateral_channels: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeeds {
    init: Option<u64>,
    input: Option<u64>,
    gradcheck: Option<u64>,
    calibrate: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    flop_convention: Option<FlopConvention>,
    gradcheck_eps: Option<f64>,
    gradcheck_tol: Option<f64>,
    gradcheck_max_coords: Option<usize>,
    relu_margin: Option<f64>,
    /// Relative support threshold; 0 selects exact-zero.
    erf_threshold: Option<f64>,
    input_fill: Option<Fill>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBench {
    warmup: Option<usize>,
    iters: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibrate {
    k: Option<Vec<usize>>,
    depthwise: Option<Vec<bool>>,
    residual_kernel: Option<Vec<usize>>,
    residual_channels: Option<Vec<usize>>,
    mid_ch: Option<Vec<usize>>,
    has_bias: Option<Vec<bool>>,
    levels: Option<Vec<usize>>,
    top_level_policy: Option<Vec<TopLevelPolicy>>,
    channels: Option<usize>,
    input_hw: Option<(usize, usize)>,
    max_candidates: Option<usize>,
    tolerance: Option<f64>,
    report_top: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    input: Option<PathBuf>,
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub init: u64,
    pub input: u64,
    pub gradcheck: u64,
    pub calibrate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisOptions {
    pub flop_convention: FlopConvention,
    pub gradcheck: GradcheckOptions,
    pub erf_threshold: ErfThreshold,
    pub input_fill: Fill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub warmup: usize,
    pub iters: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub neck: NeckConfig,
    pub template: NeckTemplate,
    pub seeds: Seeds,
    pub analysis: AnalysisOptions,
    pub bench: BenchOptions,
    pub calibrate: SearchSpace,
    pub paths: Paths,
    /// `key = value` for every default filled in, in document order.
    pub applied_defaults: Vec<String>,
}

struct Defaults(Vec<String>);

impl Defaults {
    fn pick<T: Display>(&mut self, v: Option<T>, key: &str, default: T) -> T {
        v.unwrap_or_else(|| {
            self.0.push(format!("{key} = {default}"));
            default
        })
    }

    fn pick_dbg<T: std::fmt::Debug>(&mut self, v: Option<T>, key: &str, default: T) -> T {
        v.unwrap_or_else(|| {
            self.0.push(format!("{key} = {default:?}"));
            default
        })
    }
}

fn positive(v: f64, key: &str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be a finite number > 0, got {v}")))
    }
}

fn syntax(e: toml::de::Error, text: &str) -> Error {
    let at = e
        .span()
        .map(|s| {
            let before = &text[..s.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {col}: ")
        })
        .unwrap_or_default();
    Error::Syntax(format!("{at}{}", e.message()))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawDoc = toml::from_str(text).map_err(|e| syntax(e, text))?;
    if let Some(v) = raw.version {
        if v != SCHEMA_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported schema version {v}, expected {SCHEMA_VERSION}"),
            ));
        }
    }
    let mut d = Defaults(Vec::new());

    let p = raw.pyramid.unwrap_or_default();
    let levels = d.pick(p.levels, "pyramid.levels", 4);
    if levels < 2 {
        return Err(Error::config(
            "pyramid.levels",
            format!("need at least 2 levels, got {levels}"),
        ));
    }
    let base_hw = d.pick_dbg(p.base_hw, "pyramid.base_hw", (32, 32));
    let channels = match d.pick_dbg(p.channels, "pyramid.channels", Channels::Uniform(256)) {
        Channels::Uniform(c) => vec![c; levels],
        Channels::PerLevel(v) => v,
    };
    let pyramid = PyramidSpec {
        levels,
        base_hw,
        finest_stride: d.pick(p.finest_stride, "pyramid.finest_stride", 4),
        batch: d.pick(p.batch, "pyramid.batch", 1),
        channels,
    };
    pyramid.validate()?;
    let c0 = pyramid.channels[0];

    let g = raw.gsnet.unwrap_or_default();
    let gsnet = GsnetConfig {
        channels: c0,
        k: d.pick(g.k, "gsnet.k", 15),
        depthwise: d.pick(g.depthwise, "gsnet.depthwise", true),
        residual_kernel: d.pick(g.residual_kernel, "gsnet.residual_kernel", 1),
        residual_channels: d.pick(g.residual_channels, "gsnet.residual_channels", c0),
        asym_bias: d.pick(g.asym_bias, "gsnet.asym_bias", true),
        residual_bias: d.pick(g.residual_bias, "gsnet.residual_bias", true),
        share_branch_weights: d.pick(g.share_branch_weights, "gsnet.share_branch_weights", false),
    };
    gsnet.validate()?;
    let global_kernel = d.pick(g.global_kernel, "gsnet.global_kernel", false);

    let f = raw.frm.unwrap_or_default();
    let n = raw.neck.unwrap_or_default();
    let template = NeckTemplate {
        gsnet,
        global_kernel,
        frm_mid_ch: d.pick(f.mid_ch, "frm.mid_ch", c0),
        frm_out_ch: d.pick(f.out_ch, "frm.out_ch", c0),
        frm_upsample: d.pick_dbg(f.upsample, "frm.upsample", UpsampleMode::Bilinear),
        frm_literal_eq4: d.pick(f.literal_eq4, "frm.literal_eq4", false),
        frm_bias: d.pick(f.bias, "frm.bias", true),
        top_level_policy: d.pick_dbg(n.top_level_policy, "neck.top_level_policy", TopLevelPolicy::Passthrough),
        lateral_channels: d.pick(n.lateral_channels, "neck.lateral_channels", c0),
    };
    let neck = NeckConfig::from_template(pyramid, &template)?;

    let s = raw.seeds.unwrap_or_default();
    let seeds = Seeds {
        init: d.pick(s.init, "seeds.init", 0),
        input: d.pick(s.input, "seeds.input", 1),
        gradcheck: d.pick(s.gradcheck, "seeds.gradcheck", 0),
        calibrate: d.pick(s.calibrate, "seeds.calibrate", 0),
    };

    let a = raw.analysis.unwrap_or_default();
    let gd = GradcheckOptions::default();
    let gradcheck = GradcheckOptions {
        eps: positive(
            d.pick(a.gradcheck_eps, "analysis.gradcheck_eps", gd.eps),
            "analysis.gradcheck_eps",
        )?,
        tol: positive(
            d.pick(a.gradcheck_tol, "analysis.gradcheck_tol", gd.tol),
            "analysis.gradcheck_tol",
        )?,
        max_coords: d.pick(a.gradcheck_max_coords, "analysis.gradcheck_max_coords", gd.max_coords),
        seed: seeds.gradcheck,
        relu_margin: d.pick(a.relu_margin, "analysis.relu_margin", gd.relu_margin),
    };
    if gradcheck.max_coords == 0 {
        return Err(Error::config("analysis.gradcheck_max_coords", "must be >= 1"));
    }
    if gradcheck.relu_margin.is_nan() || gradcheck.relu_margin < 0.0 {
        return Err(Error::config("analysis.relu_margin", "must be >= 0"));
    }
    let erf = d.pick(a.erf_threshold, "analysis.erf_threshold", 1e-12);
    let erf_threshold = if erf == 0.0 {
        ErfThreshold::ExactZero
    } else {
        ErfThreshold::Relative(positive(erf, "analysis.erf_threshold")?)
    };
    let analysis = AnalysisOptions {
        flop_convention: d.pick_dbg(a.flop_convention, "analysis.flop_convention", FlopConvention::Mac1),
        gradcheck,
        erf_threshold,
        input_fill: d.pick_dbg(a.input_fill, "analysis.input_fill", Fill::Uniform),
    };

    let b = raw.bench.unwrap_or_default();
    let bench = BenchOptions {
        warmup: d.pick(b.warmup, "bench.warmup", 2),
        iters: d.pick(b.iters, "bench.iters", 10),
    };
    if bench.iters == 0 {
        return Err(Error::config("bench.iters", "must be >= 1"));
    }

    let c = raw.calibrate.unwrap_or_default();
    let sd = SearchSpace::default();
    let calibrate = SearchSpace {
        k: d.pick_dbg(c.k, "calibrate.k", sd.k),
        depthwise: d.pick_dbg(c.depthwise, "calibrate.depthwise", sd.depthwise),
        residual_kernel: d.pick_dbg(c.residual_kernel, "calibrate.residual_kernel", sd.residual_kernel),
        residual_channels: d.pick_dbg(c.residual_channels, "calibrate.residual_channels", sd.residual_channels),
        mid_ch: d.pick_dbg(c.mid_ch, "calibrate.mid_ch", sd.mid_ch),
        has_bias: d.pick_dbg(c.has_bias, "calibrate.has_bias", sd.has_bias),
        levels: d.pick_dbg(c.levels, "calibrate.levels", sd.levels),
        top_level_policy: d.pick_dbg(c.top_level_policy, "calibrate.top_level_policy", sd.top_level_policy),
        channels: d.pick(c.channels, "calibrate.channels", sd.channels),
        input_hw: d.pick_dbg(c.input_hw, "calibrate.input_hw", sd.input_hw),
        flop_convention: analysis.flop_convention,
        max_candidates: c.max_candidates,
        seed: seeds.calibrate,
        tolerance: positive(
            d.pick(c.tolerance, "calibrate.tolerance", sd.tolerance),
            "calibrate.tolerance",
        )?,
        report_top: d.pick(c.report_top, "calibrate.report_top", sd.report_top),
    };
    if let Some(bad) = calibrate.k.iter().find(|&&k| k < 3 || k % 2 == 0) {
        return Err(Error::config(
            "calibrate.k",
            format!("kernel extent must be an odd integer >= 3, got {bad}"),
        ));
    }
    if let Some(bad) = calibrate.residual_kernel.iter().find(|&&k| !matches!(k, 1 | 3)) {
        return Err(Error::config(
            "calibrate.residual_kernel",
            format!("must be 1 or 3, got {bad}"),
        ));
    }
    if calibrate.levels.iter().any(|&l| l < 2) {
        return Err(Error::config("calibrate.levels", "every entry must be >= 2"));
    }

    let pp = raw.paths.unwrap_or_default();
    Ok(RunConfig {
        neck,
        template,
        seeds,
        analysis,
        bench,
        calibrate,
        paths: Paths {
            input: pp.input,
            output: pp.output,
        },
        applied_defaults: d.0,
    })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_takes_defaults() {
        let cfg = parse_config("[pyramid]\nlevels = 4\nchannels = 256\n").unwrap();
        assert_eq!(cfg.neck.levels(), 4);
        assert_eq!(cfg.neck.gsnet[0].k, 15);
        assert!(cfg.applied_defaults.iter().any(|d| d == "gsnet.k = 15"));
        assert!(!cfg.applied_defaults.iter().any(|d| d.starts_with("pyramid.levels")));
        assert_eq!(cfg.calibrate, SearchSpace::default());
    }

    #[test]
    fn even_kernel_is_rejected() {
        let e = parse_config("[gsnet]\nk = 4\n").unwrap_err();
        match e {
            Error::Config { key, constraint } => {
                assert_eq!(key, "gsnet.k");
                assert!(constraint.contains("odd"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config("[gsnet]\nkernal = 5\n").unwrap_err();
        assert!(matches!(e, Error::Syntax(_)));
        let msg = e.to_string();
        assert!(msg.contains("kernal") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn syntax_error_has_position() {
        let msg = parse_config("[pyramid]\nlevels = = 3\n").unwrap_err().to_string();
        assert!(msg.contains("line 2, column"), "{msg}");
    }

    #[test]
    fn per_level_channels_must_match() {
        let e = parse_config("[pyramid]\nlevels = 2\nchannels = [4, 8]\n").unwrap_err();
        assert!(matches!(e, Error::Config { .. }), "{e}");
    }
}
