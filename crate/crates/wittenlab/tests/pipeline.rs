use std::f64::consts::TAU;

use proptest::prelude::*;
use wittenlab::bottleneck::{bottleneck_distance, stability_audit};
use wittenlab::landscapes::Builtin;
use wittenlab::spectra::Match;
use wittenlab::*;

fn trig(c: [f64; 4], n: usize) -> SampledField {
    let e = Expr::new("trig", move |x| c[0] * x[0].cos() + c[1] * x[0].sin() + c[2] * (2.0 * x[0]).cos() + c[3] * (3.0 * x[0]).sin());
    sample(&e, &GridTopology::circle(n).unwrap()).unwrap()
}

#[test]
fn kwell_pipeline_end_to_end() {
    let land = Builtin::KwellSymmetric { k: 3 }.build(Some(96)).unwrap();
    let bc = barcode(&build_filtration(&land.field));
    assert_eq!(bc.finite_bars().count(), 2);
    let pred = predict_window_spectrum(&classify(&bc, &land.window).unwrap());
    assert_eq!(pred.degree(0).rates_up.len(), 2);
    assert_eq!(pred.degree(0).zero_multiplicity, 1);
    let reports: Vec<_> = [0.3, 0.2, 0.15]
        .iter()
        .map(|&h| spectral_report(&land.field, &pred, h, &ReportOptions::default()).unwrap())
        .collect();
    for r in &reports {
        assert_eq!(r.kernel_dims, vec![Some(1), Some(1)]);
        let b = r.block(0).unwrap();
        assert_eq!(b.entries.iter().filter(|e| e.matched == Match::Kernel).count(), 1);
    }
    let fit = match_and_fit(&reports, &pred).unwrap();
    for b in &fit.bars {
        assert!(b.rate_rel_error() < 0.05, "{}", b.rate);
    }
    let csv = reports[0].to_csv();
    assert_eq!(csv.lines().count(), 1 + 3);
}

#[test]
fn window_restricts_prediction() {
    let land = Builtin::DoubleWell1d.build(Some(256)).unwrap();
    let bc = barcode(&build_filtration(&land.field));
    let levels = critical_levels(&land.field, &bc).unwrap();
    // A window that cuts away the deepest minimum.
    let a = 0.5 * (levels.levels[0] + levels.levels[1]);
    let cls = classify(&bc, &LevelWindow::new(a, f64::INFINITY).unwrap()).unwrap();
    let pred = predict_window_spectrum(&cls);
    let filt = build_filtration(&land.field);
    for p in 0..=1 {
        assert_eq!(pred.degree(p).zero_multiplicity, relative_betti(&filt, &pred.window, p).unwrap());
    }
}

#[test]
fn field_formats_roundtrip() {
    let f = trig([0.3, -1.0, 0.25, 0.1], 40);
    let g = SampledField::from_json(&f.to_json()).unwrap();
    assert_eq!(f.values, g.values);
    assert_eq!(f.digest(), g.digest());
    let h = SampledField::from_csv(&f.to_csv()).unwrap();
    assert_eq!(f.sup_distance(&h), Some(0.0));
    let bc = barcode(&build_filtration(&f));
    assert_eq!(BarCode::from_json(&bc.to_json()).unwrap().bars, bc.bars);
}

#[test]
fn torus_kernel_is_torus_cohomology() {
    let f = sample(&Expr::new("cc", |x| x[0].cos() + 0.7 * x[1].cos()), &GridTopology::torus(12, 12, TAU, TAU).unwrap()).unwrap();
    let bc = barcode(&build_filtration(&f));
    assert_eq!((0..=2).map(|p| bc.infinite_count(p)).collect::<Vec<_>>(), vec![1, 2, 1]);
    let pred = predict_window_spectrum(&classify(&bc, &LevelWindow::full()).unwrap());
    let r = spectral_report(&f, &pred, 0.3, &ReportOptions::default()).unwrap();
    assert_eq!(r.kernel_dims, vec![Some(1), Some(2), Some(1)]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn barcode_betti_agree_over_gf3(c in prop::array::uniform4(-1.0f64..1.0), a in -2.0f64..1.0, w in 0.2f64..3.0) {
        let f = trig(c, 48);
        let filt = build_filtration(&f);
        let win = LevelWindow::new(a, a + w).unwrap();
        prop_assume!(!f.values.iter().any(|&v| v == win.a || v == win.b));
        let bc = barcode_over(&filt, CoefficientField::Prime(3));
        for p in 0..=1 {
            prop_assert_eq!(bc.lonely_endpoint_count(&win, p), relative_betti_over(&filt, &win, p, CoefficientField::Prime(3)).unwrap());
        }
    }

    #[test]
    fn stability_holds(c in prop::array::uniform4(-1.0f64..1.0), d in prop::array::uniform4(-0.1f64..0.1)) {
        let f = trig(c, 64);
        let g = trig([c[0] + d[0], c[1] + d[1], c[2] + d[2], c[3] + d[3]], 64);
        let rep = stability_audit(&f, &g).unwrap();
        prop_assert!(rep.pass, "{:?}", rep);
        let (b0, _) = bottleneck_distance(&barcode(&build_filtration(&f)), &barcode(&build_filtration(&g)), 0);
        prop_assert!(b0 <= rep.sup_diff + rep.tolerance);
    }

    #[test]
    fn shift_moves_bars(c in prop::array::uniform4(-1.0f64..1.0), s in -3.0f64..3.0) {
        let f = trig(c, 32);
        let bf = barcode(&build_filtration(&f));
        let bg = barcode(&build_filtration(&f.shifted(s)));
        let moved = bf.map_endpoints(|t| t + s);
        prop_assert_eq!(moved.bars.len(), bg.bars.len());
        for (x, y) in moved.bars.iter().zip(&bg.bars) {
            prop_assert_eq!(x.degree, y.degree);
            prop_assert!((x.birth - y.birth).abs() < 1e-12 || x.birth == y.birth);
        }
    }
}
