use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use wittenlab::landscapes::Builtin;
use wittenlab::witten::Scheme;
use wittenlab::CoefficientField;
use wittenlab_cli::{exit, parse_config, FieldSource, PrefactorSelect, Scenario};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wittenlab"))
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("wittenlab-cli-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn code(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

fn without_timestamp(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("generated_at");
    v
}

#[test]
fn run_cosine_writes_artifacts() {
    let d = scratch("cosine");
    let out = bin().args(["run", "cosine", "--out"]).arg(&d).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["barcode.json", "prediction.json", "spectrum.csv", "spectra.json", "fit.json", "report.json", "plot_spectrum.py"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let bc = wittenlab::BarCode::from_json(&fs::read_to_string(d.join("barcode.json")).unwrap()).unwrap();
    assert_eq!(bc.bars.len(), 2);
    assert!(bc.bars.iter().all(|b| !b.is_finite()));
    let csv = fs::read_to_string(d.join("spectrum.csv")).unwrap();
    // Only kernel rows: no small nonzero eigenvalues.
    assert!(csv.lines().skip(1).all(|l| l.contains(",kernel,")), "{csv}");
    assert_eq!(code(&["verify", "--dir", d.to_str().unwrap()]), 0);
}

#[test]
fn reports_are_deterministic() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for d in [&a, &b] {
        let st = bin().args(["run", "kwell_symmetric", "--K", "3", "--h", "0.3,0.2,0.15", "--seed", "5", "--out"]).arg(d).status().unwrap();
        assert_eq!(st.code(), Some(0));
    }
    assert_eq!(without_timestamp(&a.join("report.json")), without_timestamp(&b.join("report.json")));
    for f in ["spectrum.csv", "fit.json", "barcode.json", "prediction.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_run() {
    let d = scratch("cfg");
    let cfg = d.join("dw.cfg");
    fs::write(
        &cfg,
        format!(
            "[scenario]\nname = small\n[field]\nbuiltin = kwell_symmetric(2)\nresolution = 128\n[sweep]\nh = 0.4, 0.3, 0.2\n[output]\ndir = {}\n",
            d.join("out").display()
        ),
    )
    .unwrap();
    assert_eq!(code(&["run", cfg.to_str().unwrap()]), 0);
    let rep = without_timestamp(&d.join("out/report.json"));
    assert_eq!(rep["scenario"], "small");
    assert_eq!(rep["pass"], true);
}

#[test]
fn exit_codes() {
    let d = scratch("codes");
    let no_h = d.join("no_h.cfg");
    fs::write(&no_h, "[field]\nbuiltin = cosine\n").unwrap();
    assert_eq!(code(&["run", no_h.to_str().unwrap()]), exit::USAGE);
    let unknown = d.join("unknown.cfg");
    fs::write(&unknown, "[field]\nbuiltin = cosine\ncolour = red\n").unwrap();
    assert_eq!(code(&["run", unknown.to_str().unwrap()]), exit::USAGE);
    assert_eq!(code(&["run", "no_such_landscape"]), exit::USAGE);
    assert_eq!(code(&["run", "--input", "/nonexistent/f.csv", "--h", "0.2"]), exit::INPUT);
    let bad = d.join("bad.csv");
    fs::write(&bad, "this is not, a field\n1,2,x\n").unwrap();
    assert_eq!(code(&["run", "--input", bad.to_str().unwrap(), "--h", "0.2"]), exit::INPUT);
    // cos is exactly -1 at a node, so the window starts on a critical level.
    assert_eq!(code(&["run", "cosine", "--window=-1,0.5", "--out", d.join("w").to_str().unwrap()]), exit::WINDOW);
    assert_eq!(code(&["run", "cosine", "--h", "0.3,0.2", "--degree", "3"]), exit::USAGE);
    assert_eq!(code(&["svcheck", "--suite", "nope"]), exit::USAGE);
}

#[test]
fn file_input_roundtrip() {
    let d = scratch("input");
    let f = Builtin::KwellSymmetric { k: 2 }.build(Some(64)).unwrap().field;
    let path = d.join("f.json");
    fs::write(&path, f.to_json()).unwrap();
    let out = bin().args(["barcode", "--input"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let bc = wittenlab::BarCode::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(bc.finite_bars().count(), 1);
    let out = bin().args(["run", "--input"]).arg(&path).args(["--h", "0.4,0.3,0.2", "--out"]).arg(d.join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn subcommands_smoke() {
    let out = bin().args(["predict", "--builtin", "kwell_symmetric(3)", "--resolution", "96"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let pred: wittenlab::SpectralPrediction = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(pred.degree(0).rates_up.len(), 2);

    let out = bin().args(["stability", "--builtin", "double_well_1d", "--resolution", "128", "--amplitude", "0.1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rep: wittenlab::bottleneck::StabilityReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep.pass && rep.sup_diff <= 0.1 + 1e-12);

    let out = bin().args(["spectrum", "--builtin", "kwell_symmetric", "--K", "2", "--resolution", "64", "--h", "0.3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("h,degree,sigma"));

    let out = bin().args(["prefactor", "double_well_1d", "--h", "0.1,0.05"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);

    assert_eq!(code(&["svcheck", "--suite", "triangle", "--trials", "50"]), 0);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn thread_cap_does_not_change_results() {
    let (a, b) = (scratch("t1"), scratch("t2"));
    for (d, n) in [(&a, "1"), (&b, "3")] {
        let st = bin()
            .env("WITTENLAB_THREADS", n)
            .args(["run", "kwell_symmetric", "--K", "2", "--resolution", "64", "--h", "0.4,0.3,0.2", "--no-prefactor", "--out"])
            .arg(d)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
    }
    assert_eq!(fs::read(a.join("spectrum.csv")).unwrap(), fs::read(b.join("spectrum.csv")).unwrap());
}

fn arb_builtin() -> impl Strategy<Value = Builtin> {
    prop_oneof![
        Just(Builtin::Cosine),
        Just(Builtin::DoubleWell1d),
        (2usize..12).prop_map(|k| Builtin::KwellSymmetric { k }),
        Just(Builtin::PiecewiseAffine1d),
        (-0.5f64..0.5).prop_map(|delta| Builtin::DegenerateMin { delta }),
        Just(Builtin::MexicanHat2d),
        Just(Builtin::TorusFlat),
    ]
}

fn arb_scenario() -> impl Strategy<Value = Scenario> {
    let source = prop_oneof![
        arb_builtin().prop_map(FieldSource::Builtin),
        "[a-z][a-z0-9_]{0,8}\\.(csv|json)".prop_map(|p| FieldSource::File(PathBuf::from(p))),
    ];
    let h = prop::collection::vec(1e-3f64..1.0, 1..6).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
        v
    });
    let window = prop::option::of((-5.0f64..5.0, 0.01f64..5.0).prop_map(|(a, w)| (a, a + w)));
    let coeff = prop_oneof![Just(CoefficientField::Prime(2)), Just(CoefficientField::Prime(3)), Just(CoefficientField::Prime(7)), Just(CoefficientField::Rationals)];
    (
        source,
        h,
        window,
        prop::option::of(2usize..4096),
        prop::sample::subsequence(vec![0usize, 1], 0..=2),
        any::<bool>(),
        any::<bool>(),
        coeff,
        any::<u64>(),
        prop::option::of("[a-z][a-z0-9_/]{0,12}"),
        "[A-Za-z][A-Za-z0-9_.-]{0,10}",
    )
        .prop_map(|(field, h, window, resolution, degrees, midpoint, none, coefficients, seed, out, name)| {
            let mut s = Scenario::new(field, h);
            s.name = name;
            s.window = window;
            s.resolution = resolution;
            s.degrees = degrees;
            s.scheme = if midpoint { Scheme::Midpoint } else { Scheme::Fitted };
            s.prefactor = if none { PrefactorSelect::None } else { PrefactorSelect::Auto };
            s.coefficients = coefficients;
            s.seed = seed;
            s.out = out.map(PathBuf::from);
            s
        })
}

proptest! {
    #[test]
    fn config_roundtrip(s in arb_scenario()) {
        let text = s.to_config();
        prop_assert_eq!(parse_config(&text).unwrap(), s);
    }

    #[test]
    fn config_parser_never_panics(text in "[\\[\\]a-z_=,.#0-9 \n-]{0,200}") {
        let _ = parse_config(&text);
    }
}
