mod common;

use std::collections::BTreeMap;

use gsneck::analysis::{
    baseline_fpn_graph, count_macs, count_params, enhanced_neck_graph, frm_graph, gsnet_graph, measure_tape,
    report_by_layer, CostGraph, FlopConvention,
};
use gsneck::frm::FrmConfig;
use gsneck::neck::{record_baseline_fpn, record_enhanced_neck, register_inputs};
use gsneck::ops::{ConvSpec, UpsampleMode, UpsampleSpec};
use gsneck::rng::UniformStream;
use gsneck::tape::LeafKind;
use gsneck::{
    frm_forward, gsnet_forward, neck_init, synth_backbone, Fill, FrmParams, Graph, GsnetConfig, GsnetParams,
    NeckConfig, NeckTemplate, PyramidSpec, Shape, Tape, TopLevelPolicy,
};

use common::{loop_macs, rand};

struct Entry {
    graph: CostGraph,
    tape: Tape<f64>,
    base: (usize, usize),
}

fn gsnet_entry(cfg: GsnetConfig) -> Entry {
    let p = GsnetParams::<f64>::init(cfg, "L1.gsnet", &mut UniformStream::new(1)).unwrap();
    let mut t = Tape::new();
    let x = t.input("X1", rand(Shape::new(1, cfg.channels, 32, 32), 2));
    gsnet_forward(&mut t, &x, &p).unwrap();
    Entry {
        graph: gsnet_graph(&cfg, "L1.gsnet", 0),
        tape: t,
        base: (32, 32),
    }
}

fn frm_entry(cfg: FrmConfig) -> Entry {
    let p = FrmParams::<f64>::init(cfg, "L1.frm", &mut UniformStream::new(3)).unwrap();
    let mut t = Tape::new();
    let x = t.input("X1", rand(Shape::new(1, cfg.in_ch_x, 32, 32), 4));
    let y = t.input("Y1", rand(Shape::new(1, cfg.in_ch_y, 32, 32), 5));
    let yn = t.input("Y2", rand(Shape::new(1, cfg.in_ch_y, 16, 16), 6));
    frm_forward(&mut t, &x, &y, &yn, &p).unwrap();
    Entry {
        graph: frm_graph(&cfg, "L1.frm", 0),
        tape: t,
        base: (32, 32),
    }
}

fn neck_config(levels: usize, base: (usize, usize), batch: usize, t: NeckTemplate) -> NeckConfig {
    let pyramid = PyramidSpec {
        batch,
        ..PyramidSpec::uniform(levels, base, t.gsnet.channels)
    };
    NeckConfig::from_template(pyramid, &t).unwrap()
}

fn neck_entries(cfg: NeckConfig) -> [Entry; 2] {
    let feats = synth_backbone::<f64>(&cfg.pyramid, 7, Fill::Uniform).unwrap();
    let p = neck_init::<f64>(&cfg, 8).unwrap();
    let mut enhanced = Tape::new();
    let x = register_inputs(&mut enhanced, &feats);
    record_enhanced_neck(&mut enhanced, &x, &p.enhanced).unwrap();
    let mut baseline = Tape::new();
    let x = register_inputs(&mut baseline, &feats);
    record_baseline_fpn(&mut baseline, &x, &p.baseline).unwrap();
    let base = cfg.pyramid.padded_base();
    [
        Entry {
            graph: enhanced_neck_graph(&cfg),
            tape: enhanced,
            base,
        },
        Entry {
            graph: baseline_fpn_graph(&cfg),
            tape: baseline,
            base,
        },
    ]
}

fn corpus() -> Vec<Entry> {
    let g = GsnetConfig {
        channels: 8,
        k: 15,
        residual_channels: 8,
        ..GsnetConfig::default()
    };
    let f = FrmConfig {
        in_ch_x: 8,
        in_ch_y: 8,
        mid_ch: 8,
        out_ch: 8,
        ..FrmConfig::default()
    };
    let nt = NeckTemplate {
        gsnet: GsnetConfig {
            channels: 4,
            k: 7,
            residual_channels: 4,
            ..GsnetConfig::default()
        },
        frm_mid_ch: 4,
        frm_out_ch: 4,
        lateral_channels: 4,
        ..NeckTemplate::default()
    };

    let mut v = vec![
        gsnet_entry(g),
        gsnet_entry(GsnetConfig { k: 3, ..g }),
        gsnet_entry(GsnetConfig {
            k: GsnetConfig::global_k(32, 32),
            ..g
        }),
        gsnet_entry(GsnetConfig {
            depthwise: false,
            k: 7,
            ..g
        }),
        gsnet_entry(GsnetConfig {
            residual_kernel: 3,
            residual_channels: 4,
            ..g
        }),
        gsnet_entry(GsnetConfig {
            asym_bias: false,
            residual_bias: false,
            ..g
        }),
        gsnet_entry(GsnetConfig {
            share_branch_weights: true,
            ..g
        }),
        gsnet_entry(GsnetConfig {
            share_branch_weights: true,
            depthwise: false,
            k: 5,
            ..g
        }),
        gsnet_entry(GsnetConfig::default()),
        frm_entry(f),
        frm_entry(FrmConfig {
            mid_ch: 4,
            out_ch: 6,
            ..f
        }),
        frm_entry(FrmConfig { literal_eq4: true, ..f }),
        frm_entry(FrmConfig { bias: false, ..f }),
        frm_entry(FrmConfig {
            upsample: UpsampleSpec::new(2, UpsampleMode::Nearest),
            ..f
        }),
    ];
    let necks = [
        neck_config(2, (32, 32), 1, nt),
        neck_config(
            3,
            (32, 32),
            1,
            NeckTemplate {
                top_level_policy: TopLevelPolicy::Project1x1,
                frm_out_ch: 4,
                ..nt
            },
        ),
        neck_config(
            4,
            (32, 32),
            1,
            NeckTemplate {
                global_kernel: true,
                ..nt
            },
        ),
        neck_config(
            4,
            (32, 32),
            2,
            NeckTemplate {
                gsnet: GsnetConfig {
                    depthwise: false,
                    residual_kernel: 3,
                    ..nt.gsnet
                },
                frm_bias: false,
                ..nt
            },
        ),
        neck_config(3, (30, 27), 1, nt),
    ];
    for n in necks {
        v.extend(neck_entries(n));
    }
    v
}

fn enumerated_params(tape: &Tape<f64>) -> u64 {
    tape.leaves()
        .filter(|(_, _, k)| *k == LeafKind::Param)
        .map(|(id, _, _)| tape.value(id).unwrap().numel() as u64)
        .sum()
}

fn looped_macs(tape: &Tape<f64>) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for rec in tape.conv_records() {
        let s = rec.x.shape();
        *m.entry(rec.layer.to_string()).or_default() += loop_macs(&rec.spec, 1, s.h(), s.w());
    }
    m
}

#[test]
fn counts_match_enumeration_and_loop_counters() {
    let corpus = corpus();
    assert!(corpus.len() >= 20);
    for e in &corpus {
        let params = count_params(&e.graph);
        let macs = count_macs(&e.graph, e.base, FlopConvention::Mac1).unwrap();
        let measured = measure_tape(&e.tape).unwrap();
        let (by_layer_params, by_layer_macs) = report_by_layer(&macs);

        assert_eq!(params.total_params, enumerated_params(&e.tape), "{}", e.graph.name);
        assert_eq!(macs.total_params, params.total_params);
        assert_eq!(by_layer_params, measured.params, "{}", e.graph.name);
        assert_eq!(by_layer_macs, measured.macs, "{}", e.graph.name);
        assert_eq!(by_layer_macs, looped_macs(&e.tape), "{}", e.graph.name);
        assert_eq!(macs.total_macs, measured.total_macs());
        assert_eq!(macs.total_macs, macs.rows.iter().map(|r| r.mac_count).sum::<u64>());

        let doubled = count_macs(&e.graph, e.base, FlopConvention::Mac2).unwrap();
        assert_eq!(doubled.total_flops, 2 * macs.total_flops);
        assert_eq!(doubled.total_macs, macs.total_macs);
    }
}

#[test]
fn closed_forms() {
    let one = |spec: ConvSpec| CostGraph {
        name: "one".into(),
        layers: vec![gsneck::analysis::LayerDesc {
            name: "c".into(),
            spec,
            level: 0,
            uses: 1,
        }],
    };
    assert_eq!(
        count_params(&one(ConvSpec::same(256, 256, 3, 3, 1, true))).total_params,
        590_080
    );
    assert_eq!(
        count_params(&one(ConvSpec::same(256, 256, 1, 15, 256, true))).total_params,
        4_096
    );
    assert_eq!(count_params(&CostGraph::new("empty")).total_params, 0);
    let r = count_macs(&one(ConvSpec::same(1, 1, 3, 3, 1, false)), (5, 5), FlopConvention::Mac1).unwrap();
    assert_eq!(r.total_macs, 225);
    let r = count_macs(
        &one(ConvSpec::same(12, 12, 1, 1, 1, true)),
        (7, 9),
        FlopConvention::Mac1,
    )
    .unwrap();
    assert_eq!(r.total_macs, 12 * 12 * 7 * 9);
}
