use htf_core::freqdata::{from_hermitian, parse_responses, render_responses, to_hermitian, ResponseMeta};
use htf_core::{Complex64, FrequencyGrid, ResponseKind, SidebandResponseSet};
use proptest::prelude::*;

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        f64::from_bits(1)
    } else {
        f64::from_bits(x.to_bits() + 1) - x
    }
}

fn component() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1e3..1e3f64),
        (-30i32..30, -1.0..1.0f64).prop_map(|(e, m)| m * 10f64.powi(e)),
        Just(0.0),
    ]
}

fn response_set() -> impl Strategy<Value = SidebandResponseSet> {
    (1usize..=8, 2usize..=12, prop::bool::ANY).prop_flat_map(|(nh, points, adm)| {
        let values = prop::collection::vec(
            prop::collection::vec((component(), component()).prop_map(|(re, im)| Complex64::new(re, im)), points),
            2 * nh + 1,
        );
        values.prop_map(move |responses| {
            let grid = FrequencyGrid::linear(1e6, 4e8, points, 1e9, nh).unwrap();
            let kind = if adm { ResponseKind::Admittance } else { ResponseKind::Impedance };
            SidebandResponseSet::new(grid, kind, responses).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn hermitian_round_trip_is_within_four_ulp(set in response_set()) {
        let back = from_hermitian(&to_hermitian(&set, set.nh()).unwrap()).unwrap();
        let nh = set.nh() as i64;
        for k in 0..=nh {
            for i in 0..set.grid().len() {
                let (a, b) = (set.sideband(k)[i], set.sideband(-k)[i]);
                let scale = a.re.abs().max(a.im.abs()).max(b.re.abs()).max(b.im.abs());
                for (orig, got) in [(a, back.sideband(k)[i]), (b, back.sideband(-k)[i])] {
                    prop_assert!((orig.re - got.re).abs() <= 4.0 * ulp(scale), "k={k} {orig} -> {got}");
                    prop_assert!((orig.im - got.im).abs() <= 4.0 * ulp(scale), "k={k} {orig} -> {got}");
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bit_identical(set in response_set()) {
        let text = render_responses(&set);
        let back = parse_responses(&text, &ResponseMeta::default()).unwrap();
        prop_assert_eq!(back.grid().points_hz(), set.grid().points_hz());
        prop_assert_eq!(back.kind(), set.kind());
        let nh = set.nh() as i64;
        for k in -nh..=nh {
            for (x, y) in set.sideband(k).iter().zip(back.sideband(k)) {
                prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
                prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        prop_assert_eq!(render_responses(&back), text);
    }

    #[test]
    fn restricting_keeps_inner_sidebands(set in response_set(), n in 0usize..8) {
        let n = n.min(set.nh());
        let r = set.restrict(n).unwrap();
        for k in -(n as i64)..=n as i64 {
            prop_assert_eq!(r.sideband(k), set.sideband(k));
        }
    }
}

#[test]
fn central_element_passes_through_unchanged() {
    let grid = FrequencyGrid::linear(1e6, 2e6, 3, 1e9, 1).unwrap();
    let z = |re: f64, im: f64| Complex64::new(re, im);
    let set = SidebandResponseSet::new(
        grid,
        ResponseKind::Impedance,
        vec![vec![z(1.0, 2.0); 3], vec![z(3.0, -1.0); 3], vec![z(0.5, 0.25); 3]], // k = -1, 0, 1
    )
    .unwrap();
    let h = to_hermitian(&set, 1).unwrap();
    assert_eq!(h.element(0), set.sideband(0));
    // (H1 + H-1)/2 and (j/2)(H1 - H-1)
    assert_eq!(h.element(1)[0], z(0.75, 1.125));
    assert_eq!(h.element(-1)[0], z(0.875, -0.25));
}

#[test]
fn missing_f0_must_be_supplied() {
    let text = "f_hz,H-1_re,H-1_im,H0_re,H0_im,H1_re,H1_im\n1e6,0,0,1,0,0,0\n2e6,0,0,1,0,0,0\n";
    assert!(parse_responses(text, &ResponseMeta::default()).is_err());
    let meta = ResponseMeta {
        f0_hz: Some(1e9),
        kind: None,
    };
    let set = parse_responses(text, &meta).unwrap();
    assert_eq!(set.nh(), 1);
    assert_eq!(set.kind(), ResponseKind::Impedance);
    let clash = format!("# f0_hz = 2e9\n{text}");
    assert!(parse_responses(&clash, &meta).is_err());
}
