use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use gsneck::analysis::{
    baseline_fpn_graph, bench_forward, calibrate_search, component_cost, count_macs, enhanced_neck_graph, erf_map,
    gradcheck, reference_targets, BenchReport, Component, ComponentCost, CostReport, Detector, ErfReport,
    GradcheckReport,
};
use gsneck::io::{level_path, load_config, read_tensor, write_tensor, DynTensor, RunConfig};
use gsneck::neck::{record_baseline_fpn, record_enhanced_neck, register_inputs};
use gsneck::{
    enhanced_neck_forward, frm_forward, gsnet_forward, neck_init, neck_zeros, synth_backbone, DType, Element, Graph,
    NeckParams, PyramidFeatures, Shape,
};

use crate::{text, Block, Command, DTypeArg, Format, Outcome, Targets};

pub fn run(command: Command, format: Format, verbose: bool) -> Result<Outcome> {
    let config_path = match &command {
        Command::Describe { config }
        | Command::Forward { config, .. }
        | Command::Gradcheck { config, .. }
        | Command::Erf { config, .. }
        | Command::Calibrate { config, .. }
        | Command::Bench { config, .. }
        | Command::Synth { config, .. } => config.clone(),
    };
    let cfg = load_config(&config_path).with_context(|| format!("loading {}", config_path.display()))?;
    if verbose {
        for d in &cfg.applied_defaults {
            eprintln!("default: {d}");
        }
    }

    match command {
        Command::Describe { .. } => emit(format, &describe(&cfg)?, text::describe),
        Command::Forward {
            input,
            out,
            level,
            zero_init,
            dtype,
            ..
        } => {
            let input = input.or_else(|| cfg.paths.input.clone());
            let r = match (input.as_deref(), dtype) {
                (Some(p), _) => match read_levels(&cfg, p)? {
                    Levels::F32(f) => forward(&cfg, f, &out, level, zero_init, "file")?,
                    Levels::F64(f) => forward(&cfg, f, &out, level, zero_init, "file")?,
                },
                (None, DTypeArg::F32) => forward(&cfg, synth::<f32>(&cfg)?, &out, level, zero_init, "synthetic")?,
                (None, DTypeArg::F64) => forward(&cfg, synth::<f64>(&cfg)?, &out, level, zero_init, "synthetic")?,
            };
            emit(format, &r, text::forward)
        }
        Command::Gradcheck { tol, block, .. } => {
            let r = run_gradcheck(&cfg, tol, block)?;
            let pass = r.pass;
            emit(format, &r, text::gradcheck)?;
            Ok(if pass { Outcome::Ok } else { Outcome::VerificationFailed })
        }
        Command::Erf {
            level,
            coord,
            channel,
            out,
            ..
        } => {
            let r = run_erf(&cfg, level, &coord, channel, &out)?;
            emit(format, &r, text::erf)
        }
        Command::Calibrate { targets, .. } => {
            let detectors: &[Detector] = match targets {
                Targets::FasterRcnn => &[Detector::FasterRcnn],
                Targets::Retinanet => &[Detector::Retinanet],
                Targets::Both => &[Detector::FasterRcnn, Detector::Retinanet],
            };
            let t: Vec<_> = detectors.iter().flat_map(|&d| reference_targets(d)).collect();
            let r = calibrate_search(&cfg.calibrate, &t)?;
            emit(format, &r, text::calibrate)
        }
        Command::Bench { iters, warmup, .. } => {
            let r = run_bench(
                &cfg,
                iters.unwrap_or(cfg.bench.iters),
                warmup.unwrap_or(cfg.bench.warmup),
            )?;
            emit(format, &r, text::bench)
        }
        Command::Synth { out, dtype, .. } => {
            let r = match dtype {
                DTypeArg::F32 => write_levels(&synth::<f32>(&cfg)?, &out, None)?,
                DTypeArg::F64 => write_levels(&synth::<f64>(&cfg)?, &out, None)?,
            };
            emit(format, &r, text::written)
        }
    }
}

fn emit<R: Serialize>(format: Format, report: &R, render: fn(&R) -> String) -> Result<Outcome> {
    let body = match format {
        Format::Json => serde_json::to_string_pretty(report)? + "\n",
        Format::Text => render(report),
    };
    let mut out = std::io::stdout().lock();
    match out.write_all(body.as_bytes()).and_then(|_| out.flush()) {
        // A closed pipe (`| head`) is the reader's choice, not a failure.
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(Outcome::Ok),
    }
}

#[derive(Serialize)]
pub struct DescribeReport {
    pub levels: Vec<Shape>,
    pub strides: Vec<usize>,
    pub padded_base: (usize, usize),
    pub enhanced: CostReport,
    pub baseline: CostReport,
    pub gsnet: ComponentCost,
    pub frm: ComponentCost,
}

fn describe(cfg: &RunConfig) -> Result<DescribeReport> {
    let neck = &cfg.neck;
    let base = neck.pyramid.padded_base();
    let conv = cfg.analysis.flop_convention;
    Ok(DescribeReport {
        levels: (0..neck.levels()).map(|i| neck.pyramid.level_shape(i)).collect(),
        strides: (0..neck.levels()).map(|i| neck.pyramid.stride(i)).collect(),
        padded_base: base,
        enhanced: count_macs(&enhanced_neck_graph(neck), base, conv)?,
        baseline: count_macs(&baseline_fpn_graph(neck), base, conv)?,
        gsnet: component_cost(neck, Component::Gsnet, conv)?,
        frm: component_cost(neck, Component::Frm, conv)?,
    })
}

fn synth<T: Element>(cfg: &RunConfig) -> Result<PyramidFeatures<T>> {
    Ok(synth_backbone(
        &cfg.neck.pyramid,
        cfg.seeds.input,
        cfg.analysis.input_fill,
    )?)
}

fn params<T: Element>(cfg: &RunConfig, zero: bool) -> Result<NeckParams<T>> {
    Ok(if zero {
        neck_zeros(&cfg.neck)?
    } else {
        neck_init(&cfg.neck, cfg.seeds.init)?
    })
}

enum Levels {
    F32(PyramidFeatures<f32>),
    F64(PyramidFeatures<f64>),
}

fn read_levels(cfg: &RunConfig, base: &Path) -> Result<Levels> {
    let mut f32s = Vec::new();
    let mut f64s = Vec::new();
    for i in 1..=cfg.neck.levels() {
        let p = level_path(base, i);
        match read_tensor(&p).with_context(|| format!("reading {}", p.display()))? {
            DynTensor::F32(t) => f32s.push(t),
            DynTensor::F64(t) => f64s.push(t),
        }
    }
    let strides = (0..cfg.neck.levels()).map(|i| cfg.neck.pyramid.stride(i)).collect();
    match (f32s.is_empty(), f64s.is_empty()) {
        (false, true) => Ok(Levels::F32(PyramidFeatures { levels: f32s, strides })),
        (true, false) => Ok(Levels::F64(PyramidFeatures { levels: f64s, strides })),
        _ => bail!("input levels mix f32 and f64"),
    }
}

#[derive(Serialize)]
pub struct LevelFile {
    pub level: usize,
    pub path: PathBuf,
    pub shape: Shape,
    pub dtype: DType,
    pub sum: f64,
}

#[derive(Serialize)]
pub struct ForwardReport {
    pub source: String,
    pub zero_init: bool,
    pub inputs: Vec<Shape>,
    pub outputs: Vec<LevelFile>,
}

fn forward<T: Element>(
    cfg: &RunConfig,
    feats: PyramidFeatures<T>,
    out: &Path,
    level: Option<usize>,
    zero_init: bool,
    source: &str,
) -> Result<ForwardReport> {
    if let Some(l) = level {
        if l == 0 || l > cfg.neck.levels() {
            bail!("--level {l} outside 1..={}", cfg.neck.levels());
        }
    }
    let p = params::<T>(cfg, zero_init)?;
    let z = enhanced_neck_forward(&feats, &p)?;
    Ok(ForwardReport {
        source: source.into(),
        zero_init,
        inputs: feats.shapes(),
        outputs: write_levels(&z, out, level)?,
    })
}

/// Writes every level (or just `only`), removing earlier files if a later
/// write fails.
fn write_levels<T: Element>(feats: &PyramidFeatures<T>, base: &Path, only: Option<usize>) -> Result<Vec<LevelFile>> {
    let mut written: Vec<LevelFile> = Vec::new();
    for (i, t) in feats.levels.iter().enumerate() {
        let level = i + 1;
        if only.is_some_and(|l| l != level) {
            continue;
        }
        let path = level_path(base, level);
        if let Err(e) = write_tensor(&path, t) {
            for w in &written {
                let _ = std::fs::remove_file(&w.path);
            }
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
        written.push(LevelFile {
            level,
            path,
            shape: t.shape(),
            dtype: T::DTYPE,
            sum: t.sum(),
        });
    }
    Ok(written)
}

fn run_gradcheck(cfg: &RunConfig, tol: Option<f64>, block: Block) -> Result<GradcheckReport> {
    let mut opts = cfg.analysis.gradcheck;
    if let Some(t) = tol {
        if !(t.is_finite() && t > 0.0) {
            bail!("--tol must be a finite number > 0");
        }
        opts.tol = t;
    }
    let feats = synth::<f64>(cfg)?;
    let p = params::<f64>(cfg, false)?;
    let r = match block {
        Block::Neck => gradcheck(
            |t| {
                let x = register_inputs(t, &feats);
                record_enhanced_neck(t, &x, &p.enhanced)
            },
            &opts,
        )?,
        Block::Baseline => gradcheck(
            |t| {
                let x = register_inputs(t, &feats);
                record_baseline_fpn(t, &x, &p.baseline)
            },
            &opts,
        )?,
        Block::Gsnet => gradcheck(
            |t| {
                let x = t.input("X1", feats.levels[0].clone());
                Ok(vec![gsnet_forward(t, &x, &p.enhanced.gsnet[0])?])
            },
            &opts,
        )?,
        Block::Frm => {
            let ys: PyramidFeatures<f64> = synth_backbone(
                &cfg.neck.pyramid,
                cfg.seeds.input.wrapping_add(1),
                cfg.analysis.input_fill,
            )?;
            gradcheck(
                |t| {
                    let x = t.input("X1", feats.levels[0].clone());
                    let y = t.input("Y1", ys.levels[0].clone());
                    let yn = t.input("Y2", ys.levels[1].clone());
                    Ok(vec![frm_forward(t, &x, &y, &yn, &p.enhanced.frm[0])?])
                },
                &opts,
            )?
        }
    };
    Ok(r)
}

fn parse_coord(s: &str) -> Result<(usize, usize)> {
    let (y, x) = s.split_once(',').context("--coord must be `y,x`")?;
    Ok((
        y.trim().parse().context("--coord y is not an integer")?,
        x.trim().parse().context("--coord x is not an integer")?,
    ))
}

#[derive(Serialize)]
pub struct ErfOutput {
    #[serde(flatten)]
    pub report: ErfReport,
    pub map_file: PathBuf,
}

fn run_erf(cfg: &RunConfig, level: usize, coord: &str, channel: usize, out: &Path) -> Result<ErfOutput> {
    if level == 0 || level > cfg.neck.levels() {
        bail!("--level {level} outside 1..={}", cfg.neck.levels());
    }
    let coord = parse_coord(coord)?;
    let feats = synth::<f64>(cfg)?;
    let p = params::<f64>(cfg, false)?;
    let report = erf_map(
        |t, x| record_enhanced_neck(t, x, &p.enhanced),
        &feats,
        level - 1,
        coord,
        channel,
        cfg.analysis.erf_threshold,
    )?;
    write_tensor(out, &report.map).with_context(|| format!("writing {}", out.display()))?;
    Ok(ErfOutput {
        report,
        map_file: out.to_path_buf(),
    })
}

fn run_bench(cfg: &RunConfig, iters: usize, warmup: usize) -> Result<BenchReport> {
    let feats = synth::<f32>(cfg)?;
    let p = params::<f32>(cfg, false)?;
    let shapes = feats.shapes();
    Ok(bench_forward(
        || enhanced_neck_forward(&feats, &p).map(|_| ()),
        shapes,
        warmup,
        iters,
    )?)
}
