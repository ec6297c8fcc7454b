mod common;

use std::f64::consts::TAU;

use common::*;
use htf_core::htf::{assemble_htf, build_central_column, sample_htf, truncation_order, truncation_order_with, HtfManifest};
use htf_core::linalg::CMat;
use htf_core::poles::wrap_distance;
use htf_core::oracle::{analytic_htf_sample, default_truncation, mathieu_system, open_loop_poles, strip_representatives};
use htf_core::{
    Complex64, FitConfig, FrequencyGrid, HarmonicStateSpace, MathieuSpec, PltvSystem, ResponseKind, SidebandResponseSet,
};
use proptest::prelude::*;

fn mathieu(epsilon: f64) -> PltvSystem {
    mathieu_system(&MathieuSpec::default().with_epsilon(epsilon)).unwrap()
}

fn sampled(sys: &PltvSystem, nh: usize) -> SidebandResponseSet {
    let grid = FrequencyGrid::linear(1e8, 6e8, 101, sys.f0_hz(), nh).unwrap();
    let hss = HarmonicStateSpace::assemble(sys, default_truncation(nh)).unwrap();
    analytic_htf_sample(&hss, &grid).unwrap()
}

fn resonator() -> PltvSystem {
    let wn = TAU * 3e8;
    let g0 = CMat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => c(1.0, 0.0),
        (1, 0) => c(-wn * wn, 0.0),
        (1, 1) => c(-0.1 * wn, 0.0),
        _ => c(0.0, 0.0),
    });
    PltvSystem::lti(TAU * 1e9, g0, vec![0.0, wn], vec![0.0, 1.0], 0.0, ResponseKind::Admittance).unwrap()
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

#[test]
fn strong_pump_needs_sidebands_and_lti_does_not() {
    let pumped = truncation_order(&sampled(&mathieu(0.3), 8), 1.0).unwrap();
    assert!(pumped.chosen_n >= 1, "{pumped:?}");
    assert_eq!(pumped.k_max, 4);
    let lti = truncation_order(&sampled(&resonator(), 8), 1.0).unwrap();
    assert_eq!(lti.chosen_n, 0);
    assert!(lti.verdicts.iter().all(|v| v.passes && v.max_ratio_pos < 1e-12));
}

#[test]
fn truncation_order_is_monotone_in_margin() {
    let data = sampled(&mathieu(0.3), 8);
    let mut last = usize::MAX;
    for margin in [1.0, 1.5, 3.0, 10.0, 100.0, 1e6] {
        let n = truncation_order(&data, margin).unwrap().chosen_n;
        assert!(n <= last, "margin {margin}: {n} > {last}");
        last = n;
    }
    assert_eq!(last, 0);
}

#[test]
fn explicit_k_max_is_bounded_by_nh() {
    let data = sampled(&mathieu(0.3), 4);
    assert!(truncation_order_with(&data, 1.0, Some(5)).is_err());
    let full = truncation_order_with(&data, 1.0, Some(4)).unwrap();
    assert_eq!(full.verdicts.len(), 4);
    assert!(truncation_order(&data, 0.5).is_err());
}

#[test]
fn narrow_band_is_rejected() {
    let grid = FrequencyGrid::linear(1.5e9, 2e9, 11, 1e9, 2).unwrap();
    let hss = HarmonicStateSpace::assemble(&mathieu(0.3), 6).unwrap();
    let data = analytic_htf_sample(&hss, &grid).unwrap();
    assert!(truncation_order(&data, 1.0).is_err());
}

#[test]
fn mathieu_column_poles_are_toeplitz_eigenvalues() {
    let sys = mathieu(0.3);
    let data = sampled(&sys, 8);
    let n = truncation_order(&data, 1.0).unwrap().chosen_n;
    let column = build_central_column(&data, n, &FitConfig::default()).unwrap();
    assert!(column.tolerance_met());
    let exact = open_loop_poles(&HarmonicStateSpace::assemble(&sys, 24).unwrap()).unwrap();
    let strip: Vec<Complex64> = strip_representatives(&exact, sys.omega0(), 1e-6).into_iter().map(|p| p.value).collect();
    let half = 0.5 * sys.omega0() * (1.0 + 1e-9);
    let fitted: Vec<Complex64> = column.poles().iter().copied().filter(|p| p.im.abs() <= half).collect();
    let nearest = |p: &Complex64, set: &[Complex64]| {
        set.iter().map(|q| wrap_distance(*p, *q, sys.omega0()) / p.norm()).fold(f64::INFINITY, f64::min)
    };
    let worst = fitted.iter().map(|p| nearest(p, &strip)).fold(0.0, f64::max);
    assert!(worst < 1e-5, "{worst:e}: {fitted:?} vs {strip:?}");
    let missed = strip.iter().map(|p| nearest(p, &fitted)).fold(0.0, f64::max);
    assert!(missed < 1e-5, "{missed:e}");
}

#[test]
fn identified_column_matches_the_analytic_column_in_band() {
    let sys = mathieu(0.3);
    let data = sampled(&sys, 8);
    let column = build_central_column(&data, 2, &FitConfig::default()).unwrap();
    let htf = assemble_htf(column).unwrap();
    let hss = HarmonicStateSpace::assemble(&sys, 24).unwrap();
    for w in [TAU * 1.3e8, TAU * 3.3e8, TAU * 5.1e8] {
        let s = c(0.0, w);
        let exact = hss.transfer_column(s, 0).unwrap();
        for r in -2i64..=2 {
            let model = htf.entry(r, 0, s).unwrap();
            let want = exact[(r + 24) as usize];
            let scale = want.norm().max(exact[24].norm());
            assert!((model - want).norm() <= 1e-4 * scale, "{r} at {w:e}: {model} vs {want}");
        }
    }
}

#[test]
fn manifest_round_trip() {
    let data = sampled(&mathieu(0.3), 4);
    let report = truncation_order(&data, 1.0).unwrap();
    let column = build_central_column(&data, report.chosen_n, &FitConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    column.model().save(dir.path().join("col.json")).unwrap();
    let manifest = HtfManifest {
        n: column.n(),
        f0_hz: column.f0_hz(),
        nh: data.nh(),
        kind: column.kind(),
        model: "col.json".into(),
        truncation: report,
    };
    let path = dir.path().join("htf.json");
    manifest.save(&path).unwrap();
    let back = HtfManifest::load(&path).unwrap();
    assert_eq!(back, manifest);
    let loaded = back.load_column(&path).unwrap();
    assert_eq!(loaded.poles(), column.poles());
    let s: Vec<Complex64> = [2e9, 3e9].iter().map(|&w| c(0.0, w)).collect();
    for k in -(column.n() as i64)..=column.n() as i64 {
        assert_eq!(loaded.evaluate_element(k, &s).unwrap(), column.evaluate_element(k, &s).unwrap());
    }
    let wrong = HtfManifest { n: column.n() + 1, ..manifest };
    wrong.save(&path).unwrap();
    assert!(HtfManifest::load(&path).unwrap().load_column(&path).is_err());
}

fn identified(n: usize) -> htf_core::HarmonicTransferFunction {
    let data = sampled(&mathieu(0.3), 4);
    assemble_htf(build_central_column(&data, n, &FitConfig::default()).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn entries_shift_along_the_diagonal(w in -3e9f64..3e9, sigma in -1e8f64..1e8, r in -1i64..=0, col in -1i64..=0) {
        let htf = identified(1);
        let s = c(sigma, w);
        let a = htf.entry(r + 1, col + 1, s).unwrap();
        let b = htf.entry(r, col, s + c(0.0, htf.omega0())).unwrap();
        prop_assert!(rel(a, b) < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn real_system_column_is_conjugate_symmetric(w in -3e9f64..3e9, k in -2i64..=2) {
        let htf = identified(2);
        let col = htf.column();
        let a = col.evaluate_element(k, &[c(0.0, w)]).unwrap()[0];
        let b = col.evaluate_element(-k, &[c(0.0, -w)]).unwrap()[0];
        prop_assert!(rel(a, b.conj()) < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn realization_agrees_with_entries(w in 1e8f64..4e9) {
        let htf = identified(1);
        let direct = &sample_htf(&htf, &[w]).unwrap()[0];
        let via = htf.evaluate_realization(c(0.0, w)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!(rel(direct[(i, j)], via[(i, j)]) < 1e-10);
            }
        }
    }
}

#[test]
fn enlarging_n_keeps_the_strip_poles() {
    let sys = mathieu(0.3);
    let grid = FrequencyGrid::linear(1e8, 1.6e9, 101, sys.f0_hz(), 8).unwrap();
    let data = analytic_htf_sample(&HarmonicStateSpace::assemble(&sys, 18).unwrap(), &grid).unwrap();
    let strip = |n: usize| -> Vec<Complex64> {
        let htf = assemble_htf(build_central_column(&data, n, &FitConfig::default()).unwrap()).unwrap();
        strip_representatives(&htf.realization().a, sys.omega0(), 1e-6)
            .into_iter()
            .map(|p| p.value)
            .filter(|p| p.im.abs() / TAU <= 6e8)
            .collect()
    };
    let exact = open_loop_poles(&HarmonicStateSpace::assemble(&sys, 24).unwrap()).unwrap();
    let near = |p: &Complex64, set: &[Complex64]| {
        set.iter().map(|q| wrap_distance(*p, *q, sys.omega0()) / p.norm()).fold(f64::INFINITY, f64::min)
    };
    let mut previous = strip(0);
    for n in 1..=3 {
        let current = strip(n);
        for p in previous.iter().filter(|p| near(p, &exact) < 1e-5) {
            let d = near(p, &current);
            assert!(d < 1e-5, "n = {n}: {p} lost ({d:e})");
        }
        assert!(current.iter().filter(|p| near(p, &exact) < 1e-5).count() >= 2);
        previous = current;
    }
}
