//! Test-side oracles, written against the lattice equation rather than the
//! library's moment tables.

#![allow(dead_code)]

use mmproxy::hamiltonian::taylor_coeffs;
use mmproxy::model::{AssetSpec, IntensityCurve, MarketSpec, Objective, Side};
use mmproxy::CheckedSpec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn load(name: &str) -> CheckedSpec {
    let path = format!("{}/../../specs/{name}", env!("CARGO_MANIFEST_DIR"));
    MarketSpec::load(path).unwrap().validate().unwrap()
}

/// `(α₀, α₁, α₂)` of `(A/k)·C_ξ·e^{−kp}` with `C_ξ = (1 + ξz/k)^{−(1 + k/ξz)}`.
pub fn alpha_exponential(a: f64, k: f64, xi: f64, z: f64) -> [f64; 3] {
    let c = if xi == 0.0 {
        (-1.0f64).exp()
    } else {
        (1.0 + xi * z / k).powf(-(1.0 + k / (xi * z)))
    };
    let a0 = a / k * c;
    [a0, -k * a0, k * k * a0]
}

/// One flow channel as seen by the lattice equation.
#[derive(Debug, Clone)]
pub struct Flow {
    pub asset: usize,
    pub side: Side,
    pub size: f64,
    pub weight: f64,
    pub cost: f64,
    pub alpha: [f64; 3],
}

/// Channels with closed-form coefficients for exponential curves and the
/// library's numerical ones otherwise.
pub fn flows(spec: &CheckedSpec) -> Vec<Flow> {
    let xi = match spec.objective() {
        Objective::ModelA => spec.gamma(),
        Objective::ModelB => 0.0,
    };
    spec.channels()
        .iter()
        .map(|c| {
            let alpha = match c.curve {
                IntensityCurve::Exponential { scale, decay } => alpha_exponential(*scale, *decay, xi, c.size),
                other => {
                    let t = taylor_coeffs(other, xi, c.size, spec.delta_floor()).unwrap();
                    [t.alpha0, t.alpha1, t.alpha2]
                }
            };
            Flow {
                asset: c.asset,
                side: c.side,
                size: c.size,
                weight: c.weight,
                cost: c.cost,
                alpha,
            }
        })
        .collect()
}

pub fn quad_theta(a: &DMatrix<f64>, b: &DVector<f64>, c: f64, q: &DVector<f64>) -> f64 {
    -(q.dot(&(a * q))) - q.dot(b) - c
}

/// Everything in the proxy lattice equation except `∂ₜθ`, with `θ` quadratic
/// and no risk-limit indicators.
pub fn lattice_terms(
    spec: &CheckedSpec,
    flows: &[Flow],
    theta: &dyn Fn(&DVector<f64>) -> f64,
    q: &DVector<f64>,
) -> f64 {
    let here = theta(q);
    let mut out = q.dot(spec.drift()) - 0.5 * spec.gamma() * q.dot(&(spec.covariance() * q));
    for f in flows {
        let mut next = q.clone();
        next[f.asset] += match f.side {
            Side::Bid => f.size,
            Side::Ask => -f.size,
        };
        let p = (here - theta(&next) + f.cost) / f.size;
        out += f.weight * f.size * (f.alpha[0] + f.alpha[1] * p + 0.5 * f.alpha[2] * p * p);
    }
    out
}

/// `(A′, B′, C′)` forced by the lattice equation at `(A, B, C)`.
///
/// With `θ = −qᵀAq − qᵀB − C` the equation reads
/// `qᵀA′q + qᵀB′ + C′ = F(q)`, and `F` is an exact quadratic in `q`, so its
/// coefficients are read off at `0`, `±eᵢ` and `eᵢ + eⱼ`.
pub fn oracle_rhs(
    spec: &CheckedSpec,
    flows: &[Flow],
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: f64,
) -> (DMatrix<f64>, DVector<f64>, f64) {
    let d = spec.d();
    let theta = |q: &DVector<f64>| quad_theta(a, b, c, q);
    let f = |q: &DVector<f64>| lattice_terms(spec, flows, &theta, q);
    let e = |i: usize| DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 });
    let f0 = f(&DVector::zeros(d));
    let fp: Vec<f64> = (0..d).map(|i| f(&e(i))).collect();
    let fm: Vec<f64> = (0..d).map(|i| f(&(-e(i)))).collect();
    let mut da = DMatrix::zeros(d, d);
    let mut db = DVector::zeros(d);
    for i in 0..d {
        db[i] = 0.5 * (fp[i] - fm[i]);
        da[(i, i)] = 0.5 * (fp[i] + fm[i]) - f0;
        for j in 0..i {
            let v = 0.5 * (f(&(e(i) + e(j))) - fp[i] - fp[j] + f0);
            da[(i, j)] = v;
            da[(j, i)] = v;
        }
    }
    (da, db, f0)
}

/// Backward RK4 of the oracle system from zero terminal values; returns
/// `(A, B, C)` at each of `times` (which must be decreasing-sortable).
pub fn rk4_abc(
    spec: &CheckedSpec,
    flows: &[Flow],
    steps: usize,
    times: &[f64],
) -> Vec<(DMatrix<f64>, DVector<f64>, f64)> {
    let d = spec.d();
    let horizon = spec.horizon();
    let h = horizon / steps as f64;
    let rhs = |y: &(DMatrix<f64>, DVector<f64>, f64)| oracle_rhs(spec, flows, &y.0, &y.1, y.2);
    let axpy = |y: &(DMatrix<f64>, DVector<f64>, f64), k: &(DMatrix<f64>, DVector<f64>, f64), s: f64| {
        (&y.0 + &k.0 * s, &y.1 + &k.1 * s, y.2 + k.2 * s)
    };
    let mut y = (DMatrix::zeros(d, d), DVector::zeros(d), 0.0);
    let mut path = vec![y.clone()];
    for _ in 0..steps {
        let k1 = rhs(&y);
        let k2 = rhs(&axpy(&y, &k1, -0.5 * h));
        let k3 = rhs(&axpy(&y, &k2, -0.5 * h));
        let k4 = rhs(&axpy(&y, &k3, -h));
        y = (
            &y.0 - (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * (h / 6.0),
            &y.1 - (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * (h / 6.0),
            y.2 - (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2) * (h / 6.0),
        );
        path.push(y.clone());
    }
    times
        .iter()
        .map(|&t| {
            let back = (horizon - t) / h;
            let k = back.round() as usize;
            assert!((back - k as f64).abs() < 1e-9, "time {t} is not on the RK4 grid");
            path[k].clone()
        })
        .collect()
}

fn random_correlation(r: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let l = DMatrix::<f64>::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    let s = &l * l.transpose() + DMatrix::identity(d, d) * 0.2;
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt() }).collect())
        .collect()
}

/// Random base-model spec with asymmetric exponential flows and drift.
pub fn random_spec(r: &mut ChaCha8Rng, d: usize, objective: Objective) -> CheckedSpec {
    let assets = (0..d)
        .map(|_| {
            let size = [0.5, 1.0, 2.0][r.random_range(0..3)];
            let mut a = AssetSpec::exponential(r.random_range(0.1..0.6), size, size * 10.0, 1.0, 1.0);
            a.intensity = None;
            a.bid = Some(IntensityCurve::exponential(r.random_range(0.5..2.0), r.random_range(0.5..2.0)));
            a.ask = Some(IntensityCurve::exponential(r.random_range(0.5..2.0), r.random_range(0.5..2.0)));
            a
        })
        .collect();
    MarketSpec {
        assets,
        correlation: random_correlation(r, d),
        gamma: r.random_range(0.1..2.0),
        objective,
        horizon: r.random_range(0.5..3.0),
        tiers: None,
        drift: Some((0..d).map(|_| r.random_range(-0.05..0.05)).collect()),
        delta_floor: None,
    }
    .validate()
    .unwrap()
}

/// `D₊ᵢ = Σ w z α₂` over both sides of asset `i`.
pub fn d_plus(spec: &CheckedSpec, flows: &[Flow]) -> DVector<f64> {
    let mut out = DVector::zeros(spec.d());
    for f in flows {
        out[f.asset] += f.weight * f.size * f.alpha[2];
    }
    out
}

/// `Γ = D₊^{−1/2} (D₊^{1/2} Σ D₊^{1/2})^{1/2} D₊^{−1/2}` and the spectrum of
/// `Â = √γ (D₊^{1/2} Σ D₊^{1/2})^{1/2}`, both via nalgebra's eigensolver.
pub fn gamma_and_lambdas(spec: &CheckedSpec, dp: &DVector<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let h = DMatrix::from_diagonal(&dp.map(f64::sqrt));
    let hi = DMatrix::from_diagonal(&dp.map(|x| 1.0 / x.sqrt()));
    let m = &h * spec.covariance() * &h;
    let eig = m.symmetric_eigen();
    let roots = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    let sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    let lambdas = roots.iter().map(|x| x * spec.gamma().sqrt()).collect();
    (&hi * sqrt * &hi, lambdas)
}

pub fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(1e-300)
}

pub fn mat_rel(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (x - y).norm() / y.norm().max(1e-300)
}

pub fn vec_rel(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (x - y).norm() / y.norm().max(1e-300)
}
