mod common;

use std::f64::consts::TAU;

use common::*;
use htf_core::vecfit::{fit, initial_poles, realize, realize_real, recombine, vf_iterate};
use htf_core::{linalg, CoeffField, Complex64, FitConfig, RationalModel, Weighting};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixed_order(order: usize) -> FitConfig {
    FitConfig {
        order_min: order,
        order_max: order,
        ..FitConfig::default()
    }
}

fn pair() -> impl Strategy<Value = (Complex64, Complex64)> {
    (1.5e8..5.5e8f64, 0.005..0.2f64, 0.1..1.0f64, -3.2..3.2f64)
        .prop_map(|(f, zeta, mag, phase)| (c(-zeta * TAU * f, TAU * f), Complex64::from_polar(mag * 1e9, phase)))
}

fn separated(pairs: &[(Complex64, Complex64)]) -> bool {
    pairs
        .iter()
        .enumerate()
        .all(|(i, a)| pairs[i + 1..].iter().all(|b| (a.0 - b.0).norm() > 0.05 * a.0.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn four_poles_relocate_in_three_iterations(pairs in prop::collection::vec(pair(), 2)) {
        prop_assume!(separated(&pairs));
        let (poles, residues) = conjugate_closed(&pairs);
        let g = grid(1e7, 7e8, 101);
        let data = single_element(&g, sample(&g, |s| partial_fraction(&poles, &residues, c(0.5, 0.0), s)));
        let omegas = g.omegas();
        let mut current = initial_poles(omegas[0], omegas[omegas.len() - 1], 4).unwrap();
        for _ in 0..3 {
            current = vf_iterate(&data, &current, &fixed_order(4)).unwrap().poles;
        }
        prop_assert!(worst_nearest(&poles, &current) < 1e-8, "{current:?} vs {poles:?}");
    }

    #[test]
    fn extra_order_still_retains_every_pole(
        pairs in prop::collection::vec(pair(), 1..=3),
        unstable in prop::bool::ANY,
    ) {
        prop_assume!(separated(&pairs));
        let mut pairs = pairs;
        if unstable {
            pairs[0].0.re = -pairs[0].0.re;
        }
        let (poles, residues) = conjugate_closed(&pairs);
        let g = grid(1e7, 7e8, 101);
        let data = single_element(&g, sample(&g, |s| partial_fraction(&poles, &residues, c(0.0, 0.0), s)));
        let model = fit(&data, &fixed_order(poles.len() + 2)).unwrap();
        prop_assert!(worst_nearest(&poles, model.poles()) < 1e-6, "{:?} vs {poles:?}", model.poles());
    }

    #[test]
    fn real_models_are_conjugate_symmetric(pairs in prop::collection::vec(pair(), 1..=3), d in -2.0..2.0f64, w in 1e6..1e10f64) {
        let (poles, residues) = conjugate_closed(&pairs);
        let model = RationalModel::new(poles, residues.into_iter().map(|r| vec![r]).collect(), vec![c(d, 0.0)], CoeffField::Real).unwrap();
        let v = model.evaluate(&[-w, w]).unwrap();
        prop_assert_eq!(v[0][0], v[0][1].conj());
    }

    #[test]
    fn realizations_agree_with_partial_fractions(pairs in prop::collection::vec(pair(), 1..=4)) {
        let (poles, residues) = conjugate_closed(&pairs);
        let model = RationalModel::new(poles.clone(), residues.iter().map(|&r| vec![r]).collect(), vec![c(0.25, 0.0)], CoeffField::Real).unwrap();
        let ss = realize(&model);
        let eig = linalg::eigvals(&ss.a).unwrap();
        prop_assert!(worst_nearest(&poles, &eig) < 1e-10);
        let omegas: Vec<f64> = (1..20).map(|i| TAU * 3e7 * i as f64).collect();
        let pf = model.evaluate(&omegas).unwrap();
        let diag = ss.evaluate(&omegas).unwrap();
        let blocks = realize_real(&model).unwrap().evaluate(&omegas).unwrap();
        for (i, &w) in omegas.iter().enumerate() {
            let want = partial_fraction(&poles, &residues, c(0.25, 0.0), c(0.0, w));
            prop_assert!((pf[0][i] - want).norm() <= 1e-12 * want.norm());
            prop_assert!((diag[0][i] - want).norm() <= 1e-10 * want.norm());
            prop_assert!((blocks[0][i] - diag[0][i]).norm() <= 1e-12 * want.norm().max(1.0));
        }
    }
}

#[test]
fn second_order_resonance_poles() {
    let (zeta, wn) = (0.05, TAU * 1e8);
    let g = grid(1e6, 3e8, 101);
    let data = single_element(&g, sample(&g, |s| c(wn * wn, 0.0) / (s * s + 2.0 * zeta * wn * s + wn * wn)));
    let model = fit(&data, &FitConfig::default()).unwrap();
    let exact = c(-zeta * wn, wn * (1.0f64 - zeta * zeta).sqrt());
    assert_eq!(model.order(), 2);
    assert!(worst_nearest(&[exact, exact.conj()], model.poles()) < 1e-6, "{:?}", model.poles());
    assert!(model.fit_info.as_ref().unwrap().tolerance_met);
}

#[test]
fn unstable_pair_is_kept() {
    let p = c(1e6, TAU * 1.23e8);
    let (poles, residues) = conjugate_closed(&[(p, c(2e6, -5e5)), (c(-4e6, TAU * 3.1e8), c(1e7, 3e6))]);
    let g = grid(1e7, 5e8, 101);
    let data = single_element(&g, sample(&g, |s| partial_fraction(&poles, &residues, c(0.0, 0.0), s)));
    let model = fit(&data, &FitConfig::default()).unwrap();
    let found = model
        .poles()
        .iter()
        .copied()
        .min_by(|a, b| (a - p).norm().total_cmp(&(b - p).norm()))
        .unwrap();
    assert!(found.re > 0.0 && (found - p).norm() < 1e-6 * p.norm(), "{:?}", model.poles());
    assert!(model.poles().iter().any(|q| (q - p.conj()).norm() < 1e-6 * p.norm()));
}

#[test]
fn noisy_data_still_locates_poles() {
    let (poles, residues) = conjugate_closed(&[(c(-2e7, TAU * 2e8), c(3e8, 1e8)), (c(-5e7, TAU * 4.5e8), c(-2e8, 4e8))]);
    let g = grid(1e7, 7e8, 201);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let values = sample(&g, |s| {
        let h = partial_fraction(&poles, &residues, c(0.0, 0.0), s);
        h * c(1.0 + 1e-6 * rng.gen_range(-1.0..1.0), 1e-6 * rng.gen_range(-1.0..1.0))
    });
    let model = fit(&single_element(&g, values), &fixed_order(4)).unwrap();
    assert!(worst_nearest(&poles, model.poles()) < 1e-4, "{:?}", model.poles());
}

#[test]
fn uniform_weighting_also_converges() {
    let (poles, residues) = conjugate_closed(&[(c(-1e7, TAU * 2.5e8), c(5e7, 0.0))]);
    let g = grid(1e7, 6e8, 101);
    let data = single_element(&g, sample(&g, |s| partial_fraction(&poles, &residues, c(1.0, 0.0), s)));
    let cfg = FitConfig {
        weighting: Weighting::Uniform,
        ..FitConfig::default()
    };
    let model = fit(&data, &cfg).unwrap();
    assert!(worst_nearest(&poles, model.poles()) < 1e-6);
}

#[test]
fn all_elements_share_the_pole_set() {
    let (poles, _) = conjugate_closed(&[(c(-1e7, TAU * 2e8), c(0.0, 0.0)), (c(-3e7, TAU * 4e8), c(0.0, 0.0))]);
    let g = grid(1e7, 6e8, 101);
    let residue_sets = [
        [c(1e8, 2e7), c(-3e7, 1e8)],
        [c(-2e7, 0.0), c(5e7, 5e7)],
        [c(4e7, -1e7), c(1e6, 1e8)],
    ];
    let elements: Vec<Vec<Complex64>> = residue_sets
        .iter()
        .map(|rs| {
            let (_, residues) = conjugate_closed(&[(poles[0], rs[0]), (poles[2], rs[1])]);
            sample(&g, |s| partial_fraction(&poles, &residues, c(0.0, 0.0), s))
        })
        .collect();
    let data = htf_core::HermitianResponseSet::new(g.clone(), htf_core::ResponseKind::Impedance, 1, elements).unwrap();
    let model = fit(&data, &FitConfig::default()).unwrap();
    assert_eq!(model.element_count(), 3);
    for e in 0..3 {
        assert_eq!(model.element(e).poles(), model.poles());
    }
    assert!(worst_nearest(&poles, model.poles()) < 1e-6);
}

#[test]
fn symmetric_recombination() {
    let p = vec![c(-1.0, 4.0), c(-1.0, -4.0)];
    let z = c(0.0, 0.0);
    let r0 = [c(1.0, 1.0), c(1.0, -1.0)];
    let r1 = [c(0.5, -2.0), c(0.5, 2.0)];
    let residues = vec![vec![z, r0[0], r1[0]], vec![z, r0[1], r1[1]]];
    let ht = RationalModel::new(p, residues, vec![z, c(0.5, 0.0), c(0.25, 0.0)], CoeffField::Real).unwrap();
    let h = recombine(&ht).unwrap();
    let w = [0.5, 3.0, 9.0];
    let got = h.evaluate(&w).unwrap();
    let tilde = ht.evaluate(&w).unwrap();
    assert_eq!(h.labels(), ["H_-1", "H_0", "H_1"]);
    for i in 0..w.len() {
        assert!((got[1][i] - tilde[1][i]).norm() < 1e-15 * tilde[1][i].norm());
        assert!((got[0][i] - tilde[2][i]).norm() < 1e-15 * tilde[2][i].norm());
        assert!((got[2][i] - tilde[2][i]).norm() < 1e-15 * tilde[2][i].norm());
    }
}
