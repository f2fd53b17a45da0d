//! Hamiltonians `H_ξ(z, p)`, their quadratic Taylor approximations, and the
//! aggregated moment tables that feed the Riccati system.
//!
//! For `ξ > 0`
//! `H_ξ(z,p) = sup_{δ > −δ∞} Λ(δ) (1 − exp(−ξ z (δ − p))) / (ξ z)`,
//! and for `ξ = 0` it is `sup_δ Λ(δ) (δ − p)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{CheckedSpec, IntensityCurve, Side};

/// Result of maximizing the Hamiltonian objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamEval {
    pub value: f64,
    /// Maximizing offset δ*.
    pub argmax: f64,
    /// `∂H/∂p`, from the envelope theorem.
    pub derivative: f64,
}

/// `(1 − e^{−ξ z x}) / (ξ z)`, or `x` when `ξ z = 0`.
fn gain(xz: f64, x: f64) -> f64 {
    if xz == 0.0 {
        x
    } else {
        -(-xz * x).exp_m1() / xz
    }
}

fn envelope(curve_at: f64, xz: f64, x: f64) -> f64 {
    -curve_at * (-xz * x).exp()
}

/// Closed form for `Λ(δ) = A e^{−kδ}` without a floor.
pub fn ham_exponential(scale: f64, decay: f64, xi: f64, z: f64, p: f64) -> HamEval {
    let (c, offset) = exponential_consts(decay, xi * z);
    let value = scale / decay * c * (-decay * p).exp();
    HamEval {
        value,
        argmax: p + offset,
        derivative: -decay * value,
    }
}

/// `(C_ξ, δ* − p)` for an exponential curve with decay `k` and `ξz`.
fn exponential_consts(k: f64, xz: f64) -> (f64, f64) {
    if xz == 0.0 {
        ((-1.0f64).exp(), 1.0 / k)
    } else {
        let r = xz / k;
        let l = r.ln_1p();
        ((-(1.0 + 1.0 / r) * l).exp(), l / xz)
    }
}

fn eval_at(curve: &IntensityCurve, xz: f64, p: f64, delta: f64) -> HamEval {
    let lam = curve.value(delta);
    HamEval {
        value: lam * gain(xz, delta - p),
        argmax: delta,
        derivative: envelope(lam, xz, delta - p),
    }
}

/// Numerical Hamiltonian: bracket by doubling, then golden-section search.
pub fn ham_generic(
    curve: &IntensityCurve,
    xi: f64,
    z: f64,
    p: f64,
    floor: Option<f64>,
) -> Result<HamEval> {
    let xz = xi * z;
    let lo = match floor {
        Some(f) => p.max(-f),
        None => p,
    };
    let obj = |d: f64| curve.value(d) * gain(xz, d - p);
    let lam_lo = curve.value(lo);

    let mut span = 1.0f64.max(lo - p + 1.0);
    let mut prev = obj(p + span);
    let mut falls = 0;
    loop {
        span *= 2.0;
        let cur = obj(p + span);
        falls = if cur < prev { falls + 1 } else { 0 };
        prev = cur;
        if falls >= 2 && curve.value(p + span) < 1e-12 * lam_lo {
            break;
        }
        if span > 1e12 {
            return Err(Error::Numerical(format!(
                "could not bracket the Hamiltonian maximum at p = {p}"
            )));
        }
    }
    let (x, _) = golden_max(obj, lo, p + span);
    let best = eval_at(curve, xz, p, x);
    let edge = eval_at(curve, xz, p, lo);
    Ok(if edge.value > best.value { edge } else { best })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if b - a <= 1e-14 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Hamiltonian for any curve: closed form when exponential, search otherwise.
pub fn hamiltonian(
    curve: &IntensityCurve,
    xi: f64,
    z: f64,
    p: f64,
    floor: Option<f64>,
) -> Result<HamEval> {
    match curve.as_exponential() {
        Some((a, k)) => {
            let h = ham_exponential(a, k, xi, z, p);
            match floor {
                Some(f) if h.argmax < -f => Ok(eval_at(curve, xi * z, p, -f)),
                _ => Ok(h),
            }
        }
        None => ham_generic(curve, xi, z, p, floor),
    }
}

/// Optimal offset `δ*(p) = Λ⁻¹(ξ z H(p) − H′(p)) ∨ (−δ∞)`.
pub fn delta_star(
    curve: &IntensityCurve,
    xi: f64,
    z: f64,
    p: f64,
    floor: Option<f64>,
) -> Result<f64> {
    let raw = match curve.as_exponential() {
        Some((_, k)) => p + exponential_consts(k, xi * z).1,
        None => {
            let h = hamiltonian(curve, xi, z, p, None)?;
            let step = 1e-4 * curve.length_scale().max(1.0);
            let dh = stencil1(|x| hamiltonian(curve, xi, z, x, None).map(|e| e.value), p, step)?;
            let target = xi * z * h.value - dh;
            invert_decreasing(curve, target, h.argmax)?
        }
    };
    Ok(match floor {
        Some(f) => raw.max(-f),
        None => raw,
    })
}

/// Solves `Λ(δ) = target` by bisection, starting the bracket near `guess`.
fn invert_decreasing(curve: &IntensityCurve, target: f64, guess: f64) -> Result<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::Numerical(format!(
            "intensity inverse undefined for level {target}"
        )));
    }
    let mut w = 1.0;
    let mut lo = guess - w;
    while curve.value(lo) < target {
        w *= 2.0;
        lo = guess - w;
        if w > 1e12 {
            return Err(Error::Numerical("intensity inverse: no lower bracket".into()));
        }
    }
    w = 1.0;
    let mut hi = guess + w;
    while curve.value(hi) > target {
        w *= 2.0;
        hi = guess + w;
        if w > 1e12 {
            return Err(Error::Numerical("intensity inverse: no upper bracket".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if curve.value(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn stencil1(f: impl Fn(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    Ok((-f(x + 2.0 * h)? + 8.0 * f(x + h)? - 8.0 * f(x - h)? + f(x - 2.0 * h)?) / (12.0 * h))
}

fn stencil2(f: impl Fn(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    Ok(
        (-f(x + 2.0 * h)? + 16.0 * f(x + h)? - 30.0 * f(x)? + 16.0 * f(x - h)? - f(x - 2.0 * h)?)
            / (12.0 * h * h),
    )
}

/// Second-order Taylor expansion of `H(z, ·)` at `p = 0`:
/// `Ȟ(z,p) = α₀ + α₁ p + ½ α₂ p²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoeffs {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl QuadraticCoeffs {
    pub fn eval(&self, p: f64) -> f64 {
        self.alpha0 + p * (self.alpha1 + 0.5 * self.alpha2 * p)
    }

    pub fn derivative(&self, p: f64) -> f64 {
        self.alpha1 + self.alpha2 * p
    }

    pub fn get(&self, j: usize) -> f64 {
        match j {
            0 => self.alpha0,
            1 => self.alpha1,
            2 => self.alpha2,
            _ => panic!("Taylor order {j} not stored"),
        }
    }
}

/// Taylor coefficients of `H_ξ(z, ·)` at 0.
///
/// Exponential curves use the closed form `α_j = (−k)^j (A/k) C_ξ`; other
/// curves use five-point finite differences of the numerical Hamiltonian.
pub fn taylor_coeffs(
    curve: &IntensityCurve,
    xi: f64,
    z: f64,
    floor: Option<f64>,
) -> Result<QuadraticCoeffs> {
    if let Some((a, k)) = curve.as_exponential() {
        let (c, off) = exponential_consts(k, xi * z);
        let floor_inactive = floor.is_none_or(|f| off > -f);
        if floor_inactive {
            let a0 = a / k * c;
            return Ok(QuadraticCoeffs {
                alpha0: a0,
                alpha1: -k * a0,
                alpha2: k * k * a0,
            });
        }
    }
    let h = 1e-4 * curve.length_scale().max(1.0);
    let f = |p: f64| hamiltonian(curve, xi, z, p, floor).map(|e| e.value);
    Ok(QuadraticCoeffs {
        alpha0: f(0.0)?,
        alpha1: stencil1(f, 0.0, h)?,
        alpha2: stencil2(f, 0.0, h)?,
    })
}

/// Taylor coefficients for every flow channel, in [`CheckedSpec::channels`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    coeffs: Vec<QuadraticCoeffs>,
}

impl CoeffTable {
    pub fn from_spec(spec: &CheckedSpec) -> Result<Self> {
        let xi = spec.xi();
        let floor = spec.delta_floor();
        let coeffs = spec
            .channels()
            .iter()
            .map(|c| taylor_coeffs(c.curve, xi, c.size, floor))
            .collect::<Result<Vec<_>>>()?;
        Ok(CoeffTable { coeffs })
    }

    /// Uses externally supplied coefficients, one per channel.
    pub fn from_vec(spec: &CheckedSpec, coeffs: Vec<QuadraticCoeffs>) -> Result<Self> {
        let n = spec.channels().len();
        if coeffs.len() != n {
            return Err(Error::Validation(format!(
                "expected {n} coefficient triples, got {}",
                coeffs.len()
            )));
        }
        Ok(CoeffTable { coeffs })
    }

    pub fn get(&self, channel: usize) -> &QuadraticCoeffs {
        &self.coeffs[channel]
    }

    pub fn as_slice(&self) -> &[QuadraticCoeffs] {
        &self.coeffs
    }
}

const K_MIN: i32 = -1;
const K_MAX: i32 = 3;
const NK: usize = (K_MAX - K_MIN + 1) as usize;

/// Size moments `Σ w z^k α_j(z)` for one side of one asset, summed over tiers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SideMoments {
    plain: [[f64; NK]; 3],
    cost1: [[f64; NK]; 3],
    cost2: [[f64; NK]; 3],
}

impl SideMoments {
    fn idx(k: i32) -> usize {
        assert!((K_MIN..=K_MAX).contains(&k), "moment order {k} not stored");
        (k - K_MIN) as usize
    }

    /// `Δ_{j,k} = Σ_n Σ_z w z^k α_j(z)`.
    pub fn delta(&self, j: usize, k: i32) -> f64 {
        self.plain[j][Self::idx(k)]
    }

    /// `Ṽ_{j,k} = Σ_n c_n Δ^n_{j,k}`.
    pub fn cost_weighted(&self, j: usize, k: i32) -> f64 {
        self.cost1[j][Self::idx(k)]
    }

    /// `Σ_n c_n² Δ^n_{j,k}`.
    pub fn cost_sq_weighted(&self, j: usize, k: i32) -> f64 {
        self.cost2[j][Self::idx(k)]
    }
}

/// Per-asset moments on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    bid: Vec<SideMoments>,
    ask: Vec<SideMoments>,
}

impl MomentTable {
    pub fn new(spec: &CheckedSpec, coeffs: &CoeffTable) -> Self {
        let d = spec.d();
        let mut bid = vec![SideMoments::default(); d];
        let mut ask = vec![SideMoments::default(); d];
        for (c, q) in spec.channels().iter().zip(coeffs.as_slice()) {
            let m = match c.side {
                Side::Bid => &mut bid[c.asset],
                Side::Ask => &mut ask[c.asset],
            };
            for j in 0..3 {
                for k in K_MIN..=K_MAX {
                    let v = c.weight * c.size.powi(k) * q.get(j);
                    let i = SideMoments::idx(k);
                    m.plain[j][i] += v;
                    m.cost1[j][i] += c.cost * v;
                    m.cost2[j][i] += c.cost * c.cost * v;
                }
            }
        }
        MomentTable { bid, ask }
    }

    pub fn from_spec(spec: &CheckedSpec) -> Result<Self> {
        Ok(Self::new(spec, &CoeffTable::from_spec(spec)?))
    }

    pub fn d(&self) -> usize {
        self.bid.len()
    }

    pub fn side(&self, side: Side, asset: usize) -> &SideMoments {
        match side {
            Side::Bid => &self.bid[asset],
            Side::Ask => &self.ask[asset],
        }
    }

    fn vec(&self, f: impl Fn(&SideMoments, &SideMoments) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.d(), self.bid.iter().zip(&self.ask).map(|(b, a)| f(b, a)))
    }

    /// `D₊ = Δᵇ₂₁ + Δᵃ₂₁`.
    pub fn d_plus(&self) -> DVector<f64> {
        self.vec(|b, a| b.delta(2, 1) + a.delta(2, 1))
    }

    /// `D₋ = Δᵇ₂₂ − Δᵃ₂₂`.
    pub fn d_minus(&self) -> DVector<f64> {
        self.vec(|b, a| b.delta(2, 2) - a.delta(2, 2))
    }

    /// `V₋ = Δᵇ₁₁ − Δᵃ₁₁`.
    pub fn v_minus(&self) -> DVector<f64> {
        self.vec(|b, a| b.delta(1, 1) - a.delta(1, 1))
    }

    /// `Ṽ₋ = Ṽᵇ₂₀ − Ṽᵃ₂₀`.
    pub fn vtilde_minus(&self) -> DVector<f64> {
        self.vec(|b, a| b.cost_weighted(2, 0) - a.cost_weighted(2, 0))
    }

    /// `Δᵇ₁₂ + Δᵃ₁₂`.
    pub fn d12(&self) -> DVector<f64> {
        self.vec(|b, a| b.delta(1, 2) + a.delta(1, 2))
    }

    /// `Δᵇ₂₃ + Δᵃ₂₃`.
    pub fn d23(&self) -> DVector<f64> {
        self.vec(|b, a| b.delta(2, 3) + a.delta(2, 3))
    }

    /// `Ṽᵇ₂₁ + Ṽᵃ₂₁`.
    pub fn vtilde21(&self) -> DVector<f64> {
        self.vec(|b, a| b.cost_weighted(2, 1) + a.cost_weighted(2, 1))
    }

    /// `Σᵢ Δᵇ₀₁ + Δᵃ₀₁`.
    pub fn trace_d01(&self) -> f64 {
        self.vec(|b, a| b.delta(0, 1) + a.delta(0, 1)).sum()
    }

    /// `Σᵢ Ṽᵇ₁₀ + Ṽᵃ₁₀`.
    pub fn chi_tilde(&self) -> f64 {
        self.vec(|b, a| b.cost_weighted(1, 0) + a.cost_weighted(1, 0)).sum()
    }

    /// `Σᵢ Σ_n c_n² (Δᵇ₂,₋₁ + Δᵃ₂,₋₁)`.
    pub fn chi_hat(&self) -> f64 {
        self.vec(|b, a| b.cost_sq_weighted(2, -1) + a.cost_sq_weighted(2, -1)).sum()
    }
}
