//! Human-readable report rendering. The JSON variant is the stable contract.

use std::fmt::Write;

use gsneck::analysis::{BenchReport, CalibrationReport, CandidateScore, CostReport, GradcheckReport};

use crate::commands::{DescribeReport, ErfOutput, ForwardReport, LevelFile};

fn millions(v: u64) -> String {
    format!("{:.4} M", v as f64 / 1e6)
}

fn giga(v: u64) -> String {
    format!("{:.4} G", v as f64 / 1e9)
}

fn cost_table(out: &mut String, r: &CostReport) {
    let _ = writeln!(
        out,
        "{:<32} {:>7} {:>5} {:>5} {:>6} {:>12} {:>10} {:>14}",
        "layer", "kernel", "in", "out", "groups", "params", "input", "MACs"
    );
    for row in &r.rows {
        let hw = row.input_hw.map_or("-".into(), |(h, w)| format!("{h}x{w}"));
        let _ = writeln!(
            out,
            "{:<32} {:>7} {:>5} {:>5} {:>6} {:>12} {:>10} {:>14}",
            row.layer,
            format!("{}x{}", row.kernel.0, row.kernel.1),
            row.in_ch,
            row.out_ch,
            row.groups,
            row.param_count,
            hw,
            row.mac_count
        );
    }
    let _ = writeln!(
        out,
        "total: {} params ({}), {} MACs, {} FLOPs ({:?}; convolutions only)",
        r.total_params,
        millions(r.total_params),
        r.total_macs,
        giga(r.total_flops),
        r.flop_convention
    );
}

pub fn describe(r: &DescribeReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "pyramid (base padded to {}x{}):", r.padded_base.0, r.padded_base.1);
    for (i, (shape, stride)) in r.levels.iter().zip(&r.strides).enumerate() {
        let _ = writeln!(s, "  L{} {shape} stride {stride}", i + 1);
    }
    let _ = writeln!(s, "\nenhanced neck:");
    cost_table(&mut s, &r.enhanced);
    let _ = writeln!(s, "\nbaseline pyramid:");
    cost_table(&mut s, &r.baseline);
    let _ = writeln!(s, "\ngsnet blocks: {} params, {} FLOPs", r.gsnet.params, r.gsnet.flops);
    let _ = writeln!(s, "fusion blocks: {} params, {} FLOPs", r.frm.params, r.frm.flops);
    s
}

pub fn written(files: &Vec<LevelFile>) -> String {
    let mut s = String::new();
    for f in files {
        let _ = writeln!(
            s,
            "L{} {} {:?} sum={:e} -> {}",
            f.level,
            f.shape,
            f.dtype,
            f.sum,
            f.path.display()
        );
    }
    s
}

pub fn forward(r: &ForwardReport) -> String {
    let mut s = format!("inputs ({}): ", r.source);
    let shapes: Vec<_> = r.inputs.iter().map(|x| x.to_string()).collect();
    let _ = writeln!(s, "{}", shapes.join(" "));
    if r.zero_init {
        s.push_str("parameters: all zero\n");
    }
    s + &written(&r.outputs)
}

pub fn gradcheck(r: &GradcheckReport) -> String {
    let mut s = format!("gradcheck {} eps={:e} tol={:e}\n", r.dtype, r.eps, r.tol);
    for g in &r.groups {
        let _ = writeln!(
            s,
            "  {:<4} {:<40} {:>7} checked {:>3} excluded {:>3} max_rel {:.3e}",
            if g.pass { "ok" } else { "FAIL" },
            g.name,
            g.kind,
            g.checked,
            g.excluded,
            g.max_rel_error
        );
    }
    let _ = writeln!(
        s,
        "{}: max relative error {:.3e} over {} groups",
        if r.pass { "PASS" } else { "FAIL" },
        r.max_rel_error,
        r.groups.len()
    );
    s
}

pub fn erf(r: &ErfOutput) -> String {
    let e = &r.report;
    let mut s = format!(
        "level L{} unit (c={}, y={}, x={}) threshold {:?}\n",
        e.level + 1,
        e.channel,
        e.coord.0,
        e.coord.1,
        e.threshold
    );
    match (e.support_box, e.support_size()) {
        (Some((y0, x0, y1, x1)), Some((h, w))) => {
            let _ = writeln!(s, "support box rows {y0}..={y1} cols {x0}..={x1} ({h}x{w})");
        }
        _ => s.push_str("support empty\n"),
    }
    let _ = writeln!(
        s,
        "support cardinality {}, max magnitude {:e}",
        e.support_cardinality, e.max_magnitude
    );
    let _ = writeln!(s, "map -> {}", r.map_file.display());
    s
}

fn score_line(s: &mut String, rank: usize, c: &CandidateScore) {
    let k = &c.candidate;
    let _ = writeln!(
        s,
        "  {rank:>2}. k={:<2} dw={:<5} rk={} rc={:<3} mid={:<3} bias={:<5} L={} top={:<11} params {:>9} ({:+.2}%) flops {:>13} ({:+.2}%)",
        k.k,
        k.depthwise,
        k.residual_kernel,
        k.residual_channels,
        k.mid_ch,
        k.has_bias,
        k.levels,
        format!("{:?}", k.top_level_policy).to_lowercase(),
        c.params,
        c.param_rel_error * 100.0,
        c.flops,
        c.flop_rel_error * 100.0
    );
}

pub fn calibrate(r: &CalibrationReport) -> String {
    let mut s = format!(
        "calibration at {}x{} input, {} channels, {:?}, tolerance {:.0}%, {} of {} configurations\n",
        r.input_hw.0,
        r.input_hw.1,
        r.channels,
        r.flop_convention,
        r.tolerance * 100.0,
        r.sampled,
        r.space_size
    );
    for t in &r.targets {
        let _ = writeln!(
            s,
            "\n{}: target +{} params, +{} FLOPs ({} distinct configurations)",
            t.target.name,
            millions(t.target.param_delta),
            giga(t.target.flop_delta),
            t.evaluated
        );
        for (i, c) in t.ranked.iter().enumerate() {
            score_line(&mut s, i + 1, c);
        }
        let _ = writeln!(s, "  best by params alone:");
        score_line(&mut s, 1, &t.best_param_only);
        let _ = writeln!(s, "  {}", t.statement);
    }
    s
}

pub fn bench(r: &BenchReport) -> String {
    let shapes: Vec<_> = r.input_shapes.iter().map(|x| x.to_string()).collect();
    format!(
        "inputs {}\nthreads {} warmup {} iters {}\nmean {:.3} ms  p50 {:.3}  p95 {:.3}  min {:.3}  max {:.3}  std {:.3}\n{:.2} items/s\n",
        shapes.join(" "),
        r.threads,
        r.warmup,
        r.iters,
        r.mean_ms,
        r.p50_ms,
        r.p95_ms,
        r.min_ms,
        r.max_ms,
        r.std_ms,
        r.items_per_s
    )
}
