mod common;

use common::*;
use mmproxy::closedform::RiccatiSolution;
use mmproxy::hamiltonian::{ham_generic, taylor_coeffs};
use mmproxy::model::{IntensityCurve, MarketSpec, Objective, TabulatedCurve};
use mmproxy::Error;
use proptest::prelude::*;

fn objective(curve: &IntensityCurve, xi: f64, z: f64, p: f64, delta: f64) -> f64 {
    let gain = if xi == 0.0 {
        delta - p
    } else {
        (1.0 - (-xi * z * (delta - p)).exp()) / (xi * z)
    };
    curve.value(delta) * gain
}

fn curves() -> Vec<IntensityCurve> {
    let table: Vec<(f64, f64)> = (0..=40).map(|i| {
        let d = -2.0 + 0.2 * i as f64;
        (d, 1.5 * (-1.2 * d).exp() / (1.0 + 0.1 * d * d))
    }).collect();
    vec![
        IntensityCurve::exponential(1.3, 0.8),
        IntensityCurve::Logistic { scale: 2.0, steepness: 1.5, center: 0.3 },
        IntensityCurve::Tabulated(TabulatedCurve::new(table).unwrap()),
    ]
}

proptest! {
    #[test]
    fn generic_value_is_a_supremum(which in 0usize..3, xi in prop_oneof![Just(0.0), 0.01f64..2.0],
                                   z in 0.5f64..3.0, p in -2.0f64..2.0, probe in -6.0f64..10.0) {
        let curve = &curves()[which];
        let h = ham_generic(curve, xi, z, p, None).unwrap();
        let f = objective(curve, xi, z, p, probe);
        prop_assert!(h.value >= f - 1e-12 * h.value.abs().max(1.0), "H={} < f({})={}", h.value, probe, f);
        prop_assert!((objective(curve, xi, z, p, h.argmax) - h.value).abs() <= 1e-12 * h.value);
        prop_assert!(h.value > 0.0 && h.derivative < 0.0);
    }

    #[test]
    fn floor_restricts_the_supremum(p in -8.0f64..-1.0, floor in 0.5f64..3.0) {
        let curve = IntensityCurve::exponential(1.0, 1.0);
        let h = ham_generic(&curve, 0.0, 1.0, p, Some(floor)).unwrap();
        prop_assert!(h.argmax >= -floor - 1e-12);
        prop_assert!(h.value >= objective(&curve, 0.0, 1.0, p, -floor) - 1e-12);
    }

    #[test]
    fn exponential_alpha2_positive(a in 0.1f64..5.0, k in 0.1f64..5.0, xi in 0.0f64..3.0, z in 0.1f64..4.0) {
        let c = taylor_coeffs(&IntensityCurve::exponential(a, k), xi, z, None).unwrap();
        let [a0, a1, a2] = alpha_exponential(a, k, xi, z);
        prop_assert!(c.alpha2 > 0.0 && c.alpha1 < 0.0 && c.alpha0 > 0.0);
        // the power form loses digits when ξz/k is small
        prop_assert!((c.alpha0 - a0).abs() <= 1e-10 * a0);
        prop_assert!((c.alpha1 - a1).abs() <= 1e-10 * a0 * k);
        prop_assert!((c.alpha2 - a2).abs() <= 1e-10 * a0 * k * k);
    }

    #[test]
    fn canonical_form_is_idempotent(seed in any::<u64>(), d in 1usize..4, model_a in any::<bool>()) {
        let objective = if model_a { Objective::ModelA } else { Objective::ModelB };
        let spec = random_spec(&mut rng(seed), d, objective).to_spec();
        let once = spec.canonical().unwrap();
        prop_assert_eq!(&once.canonical().unwrap(), &once);
        let back = MarketSpec::from_json_str(&once.to_json_string()).unwrap();
        prop_assert_eq!(&back, &once);
        let (a, b) = (spec.validate().unwrap(), once.validate().unwrap());
        let (sa, sb) = (RiccatiSolution::from_spec(&a).unwrap(), RiccatiSolution::from_spec(&b).unwrap());
        let q = vec![a.lot(0); d];
        prop_assert_eq!(sa.theta(0.0, &q).unwrap(), sb.theta(0.0, &q).unwrap());
    }
}

#[test]
fn size_weights_must_sum_to_one() {
    let general = load("general.json").to_spec();
    let mut bad = general.clone();
    let atoms = &mut bad.tiers.as_mut().unwrap()[0][0].bid.sizes.atoms;
    atoms[0].weight = 0.5;
    atoms[1].weight = 0.4;
    match bad.validate() {
        Err(Error::Validation(msg)) => assert!(msg.contains("weights sum to"), "{msg}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
    let mut floorless = general;
    floorless.delta_floor = None;
    assert!(matches!(floorless.validate(), Err(Error::Validation(_))));
}

#[test]
fn reference_specs_validate() {
    for name in ["ref1.json", "ref2.json", "general.json"] {
        let spec = load(name);
        assert_eq!(spec.to_spec().validate().unwrap().d(), spec.d());
    }
}
