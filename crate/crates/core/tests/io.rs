use gsneck::io::{decode, encode, level_path, parse_config, read_tensor, write_tensor, DynTensor};
use gsneck::{Error, Init, Shape, Tensor, TopLevelPolicy};
use proptest::prelude::*;

fn tensor_strategy() -> impl Strategy<Value = Tensor<f64>> {
    (1usize..=3, 1usize..=3, 1usize..=5, 1usize..=5).prop_flat_map(|(n, c, h, w)| {
        prop::collection::vec(any::<f64>(), n * c * h * w)
            .prop_map(move |v| Tensor::from_vec(Shape::new(n, c, h, w), v).unwrap())
    })
}

proptest! {
    #[test]
    fn any_bit_pattern_round_trips(t in tensor_strategy()) {
        // Includes NaN payloads and infinities: the format stores bits.
        match decode(&encode(&t)).unwrap() {
            DynTensor::F64(u) => prop_assert!(u.bit_eq(&t)),
            DynTensor::F32(_) => prop_assert!(false, "dtype changed"),
        }
    }

    #[test]
    fn truncation_is_always_a_format_error(t in tensor_strategy(), cut in 1usize..64) {
        let b = encode(&t);
        let cut = cut.min(b.len());
        let r = decode(&b[..b.len() - cut]);
        let is_format = matches!(r, Err(Error::Format { .. }));
        prop_assert!(is_format);
    }
}

#[test]
fn file_round_trip_both_dtypes() {
    let dir = tempfile::tempdir().unwrap();
    let t64 = Tensor::<f64>::create(
        Shape::new(1, 2, 3, 4),
        Init::Uniform {
            seed: 1,
            lo: -3.0,
            hi: 3.0,
        },
    )
    .unwrap();
    let p = dir.path().join("a.gsnt");
    write_tensor(&p, &t64).unwrap();
    assert_eq!(std::fs::metadata(&p).unwrap().len(), 48 + 24 * 8);
    match read_tensor(&p).unwrap() {
        DynTensor::F64(u) => assert!(u.bit_eq(&t64)),
        _ => panic!(),
    }

    let t32 = t64.cast::<f32>();
    write_tensor(&p, &t32).unwrap();
    match read_tensor(&p).unwrap() {
        DynTensor::F32(u) => assert!(u.bit_eq(&t32)),
        _ => panic!(),
    }
    // No temporary files left behind.
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn dims_disagreeing_with_payload() {
    let mut b = encode(&Tensor::<f32>::zeros(Shape::new(1, 1, 2, 2)));
    b[40..48].copy_from_slice(&3u64.to_le_bytes());
    match decode(&b) {
        Err(Error::Format { offset, detail }) => {
            assert!(detail.contains("payload"), "{detail}");
            assert!(offset >= 48);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(read_tensor("/nonexistent/x.gsnt"), Err(Error::Io(_))));
    assert_eq!(level_path("/tmp/z.gsnt", 3).to_str(), Some("/tmp/z_L3.gsnt"));
}

#[test]
fn config_examples() {
    let cfg = parse_config("[pyramid]\nlevels = 4\nchannels = 256\n").unwrap();
    assert_eq!(cfg.neck.pyramid.channels, vec![256; 4]);
    assert_eq!(cfg.neck.frm.len(), 3);
    assert_eq!(cfg.neck.top_level_policy, TopLevelPolicy::Passthrough);
    assert!(cfg.applied_defaults.len() > 20);

    match parse_config("[gsnet]\nk = 4\n") {
        Err(Error::Config { key, constraint }) => {
            assert_eq!(key, "gsnet.k");
            assert!(constraint.contains("odd"));
        }
        other => panic!("{other:?}"),
    }
    let e = parse_config("[gsnet]\nkernal = 5\n").unwrap_err().to_string();
    assert!(e.contains("kernal"), "{e}");
    let e = parse_config("[frm]\nupsample = \"cubic\"\n").unwrap_err().to_string();
    assert!(e.contains("cubic"), "{e}");
    assert!(matches!(
        parse_config("[calibrate]\nk = [3, 6]\n"),
        Err(Error::Config { .. })
    ));
    assert!(matches!(parse_config("version = 2\n"), Err(Error::Config { .. })));
    assert!(matches!(
        parse_config("[pyramid]\nlevels = 1\n"),
        Err(Error::Config { .. })
    ));
    assert!(matches!(
        parse_config("[bench]\niters = 0\n"),
        Err(Error::Config { .. })
    ));
}

#[test]
fn shipped_configs_parse() {
    for name in ["default.toml", "tiny.toml"] {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/").to_string() + name;
        let cfg = gsneck::io::load_config(&path).unwrap();
        cfg.neck.validate().unwrap();
    }
}
