mod common;

use common::*;
use mmproxy::closedform::{build_core, RiccatiSolution};
use mmproxy::exact::{solve_hj, ExactOptions};
use mmproxy::hamiltonian::{ham_exponential, CoeffTable, MomentTable, QuadraticCoeffs};
use mmproxy::mc::{estimate_eta, McOptions};
use mmproxy::model::{AssetSpec, IntensityCurve, MarketSpec, Objective, Side, SizeAtom, SizeDist, TierSpec};
use mmproxy::quotes::{delta_star, greedy_quotes};
use mmproxy::CheckedSpec;
use nalgebra::{DMatrix, DVector};

const E_INV: f64 = 0.36787944117144233;

fn single(sigma: f64, gamma: f64, scale: f64, decay: f64) -> MarketSpec {
    MarketSpec {
        assets: vec![AssetSpec::exponential(sigma, 1.0, 10.0, scale, decay)],
        correlation: vec![vec![1.0]],
        gamma,
        objective: Objective::ModelB,
        horizon: 1.0,
        tiers: None,
        drift: None,
        delta_floor: None,
    }
}

#[test]
fn hamiltonian_examples() {
    let h = ham_exponential(1.0, 1.0, 0.0, 1.0, 0.0);
    assert!((h.value - E_INV).abs() < 1e-15);
    assert!((h.argmax - 1.0).abs() < 1e-15);
    let h = ham_exponential(1.0, 1.0, 1.0, 1.0, 0.0);
    assert!((h.value - 0.25).abs() < 1e-15);
    assert!((h.argmax - 2f64.ln()).abs() < 1e-15);
    let shifted = ham_exponential(1.0, 1.0, 1.0, 1.0, 0.3);
    assert!((shifted.value - h.value * (-0.3f64).exp()).abs() < 1e-15);
    assert!((shifted.argmax - h.argmax - 0.3).abs() < 1e-14);
    let limit = ham_exponential(1.3, 0.7, 1e-8, 2.0, 0.4).value;
    assert!((limit - ham_exponential(1.3, 0.7, 0.0, 2.0, 0.4).value).abs() < 1e-6);
}

#[test]
fn delta_star_examples() {
    let expo = |k: f64| IntensityCurve::exponential(1.0, k);
    assert!((delta_star(&expo(2.0), 0.0, 1.0, 0.0, None).unwrap() - 0.5).abs() < 1e-15);
    assert!((delta_star(&expo(1.0), 1.0, 1.0, 0.0, None).unwrap() - 2f64.ln()).abs() < 1e-15);
    assert_eq!(delta_star(&expo(1.0), 0.0, 1.0, -10.0, Some(3.0)).unwrap(), -3.0);
}

fn two_atom_spec() -> CheckedSpec {
    let sizes = SizeDist {
        atoms: vec![SizeAtom { size: 1.0, weight: 0.5 }, SizeAtom { size: 2.0, weight: 0.5 }],
    };
    let tier = TierSpec::symmetric(IntensityCurve::exponential(1.0, 1.0), sizes, 0.0);
    MarketSpec {
        assets: vec![AssetSpec {
            intensity: None,
            ..AssetSpec::exponential(0.2, 1.0, 10.0, 1.0, 1.0)
        }],
        tiers: Some(vec![vec![tier]]),
        delta_floor: Some(5.0),
        ..single(0.2, 1.0, 1.0, 1.0)
    }
    .validate()
    .unwrap()
}

#[test]
fn moment_examples() {
    let spec = single(0.2, 1.0, 1.0, 1.0).validate().unwrap();
    let m = MomentTable::from_spec(&spec).unwrap();
    for side in Side::BOTH {
        assert!((m.side(side, 0).delta(2, 1) - E_INV).abs() < 1e-15);
    }
    assert_eq!(m.vtilde_minus()[0], 0.0);
    assert_eq!(m.chi_tilde(), 0.0);
    assert_eq!(m.chi_hat(), 0.0);

    let spec = two_atom_spec();
    let flat = QuadraticCoeffs {
        alpha0: E_INV,
        alpha1: -E_INV,
        alpha2: E_INV,
    };
    let n = spec.channels().len();
    let m = MomentTable::new(&spec, &CoeffTable::from_vec(&spec, vec![flat; n]).unwrap());
    assert!((m.side(Side::Bid, 0).delta(2, 1) - 1.5 * E_INV).abs() < 1e-15);
}

#[test]
fn core_matrix_examples() {
    let spec = single(0.2, 1.0, 1.0, 1.0).validate().unwrap();
    let core = build_core(&spec, &MomentTable::from_spec(&spec).unwrap()).unwrap();
    let dp = 2.0 * E_INV;
    assert!((core.s[0] * core.s[0] - dp).abs() < 1e-15);
    assert!((core.a_hat.eigenvalues[0] - 0.2 * dp.sqrt()).abs() < 1e-15);
    assert!((core.a_hat.eigenvalues[0] - 0.171553).abs() < 1e-6);
    assert!((core.gamma_matrix[(0, 0)] - 0.233164).abs() < 1e-6);

    // identical assets, Σ = σ²I
    let spec = MarketSpec {
        assets: vec![AssetSpec::exponential(0.3, 1.0, 5.0, 1.0, 1.0); 3],
        correlation: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        ..single(0.3, 1.0, 1.0, 1.0)
    }
    .validate()
    .unwrap();
    let core = build_core(&spec, &MomentTable::from_spec(&spec).unwrap()).unwrap();
    let expected = DMatrix::identity(3, 3) * (0.3 / dp.sqrt());
    assert!((&core.gamma_matrix - expected).amax() < 1e-14);
}

#[test]
fn closed_form_scalar_examples() {
    let sol = RiccatiSolution::from_spec(&load("ref1.json")).unwrap();
    let lambda = 0.2 * (2.0 * E_INV).sqrt();
    let a0 = lambda * lambda.tanh() / (2.0 * 2.0 * E_INV);
    assert!((sol.eval_a(0.0).unwrap()[(0, 0)] - a0).abs() < 1e-15);
    let spec = load("ref1.json");
    let (a, _, _) = rk4_abc(&spec, &flows(&spec), 2000, &[0.0]).remove(0);
    assert!((a[(0, 0)] - a0).abs() < 1e-12);
    assert!((a0 - 0.019806).abs() < 1e-6);
    assert!((sol.asymptotics().a_inf[(0, 0)] - 0.116582).abs() < 1e-6);

    let zero = RiccatiSolution::from_spec(&single(0.2, 0.0, 1.0, 1.0).validate().unwrap()).unwrap();
    assert!(zero.eval_a(0.3).unwrap().amax() == 0.0);
    assert!((zero.eval_c(0.0).unwrap() + 2.0 * E_INV).abs() < 1e-12);
}

#[test]
fn b_matches_rk4_for_asymmetric_flows() {
    let mut raw = single(0.2, 1.0, 1.0, 1.0);
    raw.assets[0].intensity = None;
    raw.assets[0].bid = Some(IntensityCurve::exponential(2.0, 1.0));
    raw.assets[0].ask = Some(IntensityCurve::exponential(1.0, 1.0));
    let spec = raw.validate().unwrap();
    let sol = RiccatiSolution::from_spec(&spec).unwrap();
    let (_, b, _) = rk4_abc(&spec, &flows(&spec), 4000, &[0.0]).remove(0);
    assert!(b[0].abs() > 1e-3);
    assert!((sol.eval_b(0.0).unwrap() - b).amax() < 1e-8);
}

#[test]
fn symmetric_flows_have_no_linear_term() {
    let spec = load("ref2.json");
    let sol = RiccatiSolution::from_spec(&spec).unwrap();
    for t in [0.0, 1.3, 4.9] {
        assert_eq!(sol.eval_b(t).unwrap().amax(), 0.0);
    }
    assert_eq!(sol.asymptotics().b_inf.unwrap().amax(), 0.0);
}

#[test]
fn general_spec_matches_rk4() {
    let spec = load("general.json");
    let sol = RiccatiSolution::from_spec(&spec).unwrap();
    let times = [0.0, 0.5, 1.0, 1.5];
    for (t, (a, b, c)) in times.iter().zip(rk4_abc(&spec, &flows(&spec), 4000, &times)) {
        assert!((sol.eval_a(*t).unwrap() - a).amax() < 1e-9);
        assert!((sol.eval_b(*t).unwrap() - b).amax() < 1e-8);
        assert!((sol.eval_c(*t).unwrap() - c).abs() < 1e-7);
    }
}

#[test]
fn exact_grid_greedy_quotes() {
    let spec = load("ref1.json");
    let grid = solve_hj(&spec, ExactOptions::default()).unwrap();
    assert_eq!(grid.times()[0], 0.0);
    let values = grid.values_at(0);
    let at = |q: f64| values[grid.grid().index_of(&[q]).unwrap()];
    let qs = greedy_quotes(&grid, &spec, 0.0, &[0.0]).unwrap();
    let curve = IntensityCurve::exponential(1.0, 1.0);
    for (side, next) in [(Side::Bid, 1.0), (Side::Ask, -1.0)] {
        let expected = delta_star(&curve, 0.0, 1.0, at(0.0) - at(next), None).unwrap();
        let got = qs.find(0, 0, side, 1.0).unwrap().offer.offset().unwrap();
        assert_eq!(got, expected);
    }
}

/// RK4 solution of the linear lattice equation for `η`:
/// `∂ₜη + Σ r (η(q') − η(q)) + g = 0`, `η(T) = 0`, with the proxy rates
/// `r = w·max(0, −Ȟ′(p̌))` and source `g = Σ wz(H − Ȟ)` on open channels
/// minus `Σ wzȞ` on channels closed at the limits.
fn eta_oracle(spec: &CheckedSpec, sol: &RiccatiSolution, steps: usize) -> (Vec<DVector<f64>>, Vec<f64>) {
    assert_eq!(spec.d(), 1);
    let fl = flows(spec);
    let (z, n) = (spec.lot(0), (spec.risk_limit(0) / spec.lot(0)).round() as i64);
    let states: Vec<DVector<f64>> = (-n..=n).map(|k| DVector::from_element(1, k as f64 * z)).collect();
    let horizon = spec.horizon();
    let rhs = |t: f64, eta: &[f64]| -> Vec<f64> {
        let (a, b) = (sol.eval_a(t).unwrap(), sol.eval_b(t).unwrap());
        let theta = |q: &DVector<f64>| quad_theta(&a, &b, 0.0, q);
        states
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let mut out = 0.0;
                for f in &fl {
                    let step = if f.side == Side::Bid { 1 } else { -1 };
                    let mut next = q.clone();
                    next[0] += step as f64 * f.size;
                    let p = (theta(q) - theta(&next) + f.cost) / f.size;
                    let [a0, a1, a2] = f.alpha;
                    let proxy = a0 + a1 * p + 0.5 * a2 * p * p;
                    let j = i as i64 + step;
                    if j < 0 || j > 2 * n {
                        out -= f.weight * f.size * proxy;
                        continue;
                    }
                    let exact = a0 * ((a1 / a0) * p).exp();
                    out += f.weight * f.size * (exact - proxy);
                    out += f.weight * (-(a1 + a2 * p)).max(0.0) * (eta[j as usize] - eta[i]);
                }
                -out
            })
            .collect()
    };
    let h = horizon / steps as f64;
    let mut eta = vec![0.0; states.len()];
    let axpy = |y: &[f64], k: &[f64], s: f64| y.iter().zip(k).map(|(y, k)| y + s * k).collect::<Vec<_>>();
    for m in 0..steps {
        let t = horizon - m as f64 * h;
        let k1 = rhs(t, &eta);
        let k2 = rhs(t - 0.5 * h, &axpy(&eta, &k1, -0.5 * h));
        let k3 = rhs(t - 0.5 * h, &axpy(&eta, &k2, -0.5 * h));
        let k4 = rhs(t - h, &axpy(&eta, &k3, -h));
        for i in 0..eta.len() {
            eta[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    (states, eta)
}

#[test]
fn eta_matches_lattice_oracle() {
    let spec = load("ref1.json");
    let sol = RiccatiSolution::from_spec(&spec).unwrap();
    let coeffs = CoeffTable::from_spec(&spec).unwrap();
    let (states, eta) = eta_oracle(&spec, &sol, 1000);
    for q in [0.0, 4.0, -9.0] {
        let i = states.iter().position(|s| s[0] == q).unwrap();
        let est = estimate_eta(&spec, &coeffs, &sol, 0.0, &[q], McOptions::new(20_000, 3)).unwrap();
        let z = (est.mean - eta[i]) / est.stderr;
        assert!(z.abs() < 3.0, "q={q}: mc {} +- {} vs oracle {}", est.mean, est.stderr, eta[i]);
    }
}

#[test]
fn exact_interior_value_without_risk_aversion() {
    let spec = MarketSpec {
        assets: vec![AssetSpec::exponential(0.2, 1.0, 20.0, 1.3, 0.7)],
        ..single(0.2, 0.0, 1.3, 0.7)
    }
    .validate()
    .unwrap();
    let grid = solve_hj(&spec, ExactOptions::default()).unwrap();
    let expected = 2.0 * (1.3 / 0.7) * E_INV * spec.horizon();
    assert!((grid.query_theta(0.0, &[0.0]).unwrap() - expected).abs() < 1e-8);
}
