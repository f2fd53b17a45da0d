//! Quadratic proxy `θ̌(t,q) = −qᵀA(t)q − qᵀB(t) − C(t)`.
//!
//! With `s = D₊^{1/2}` and `Â = √γ (sΣs)^{1/2} = P diag(λ) Pᵀ`, the matrix
//! Riccati equation has the explicit solution
//! `A = ½ s⁻¹ P diag(λ tanh λτ) Pᵀ s⁻¹` in time-to-horizon `τ = T − t`.
//! `B` is explicit in the eigenbasis except for the part driven by the
//! size-skew vector `D₋`, which is a one-dimensional integral per
//! eigen-direction. `C` is an explicit term plus a scalar integral. The
//! integrals are evaluated with composite Simpson on a uniform τ-grid whose
//! step satisfies `λ_max h ≤ 0.02`, and with a local Simpson panel between
//! grid nodes, so every evaluation is anchored at the horizon.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hamiltonian::MomentTable;
use crate::linalg::{self, SymSpectrum};
use crate::model::CheckedSpec;

/// Default number of quadrature nodes on `[0, T]`.
pub const DEFAULT_NODES: usize = 201;
/// Upper bound on `λ_max · h` for the quadrature grid.
pub const MAX_LAMBDA_STEP: f64 = 0.02;
const MAX_INTERVALS: usize = 2_000_000;
/// Relative tolerance of the image condition on the drift.
pub const IMAGE_TOL: f64 = 1e-10;

/// Coefficient vectors of the Riccati system, all diagonal in the asset index.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSystem {
    pub gamma: f64,
    pub covariance: DMatrix<f64>,
    pub drift: DVector<f64>,
    pub d_plus: DVector<f64>,
    pub d_minus: DVector<f64>,
    pub v_minus: DVector<f64>,
    pub vtilde_minus: DVector<f64>,
    pub d12: DVector<f64>,
    pub d23: DVector<f64>,
    pub vtilde21: DVector<f64>,
    /// `Tr D₀₁ + χ̃ + ½ χ̂`.
    pub constant: f64,
}

impl RiccatiSystem {
    pub fn new(spec: &CheckedSpec, moments: &MomentTable) -> Self {
        RiccatiSystem {
            gamma: spec.gamma(),
            covariance: spec.covariance().clone(),
            drift: spec.drift().clone(),
            d_plus: moments.d_plus(),
            d_minus: moments.d_minus(),
            v_minus: moments.v_minus(),
            vtilde_minus: moments.vtilde_minus(),
            d12: moments.d12(),
            d23: moments.d23(),
            vtilde21: moments.vtilde21(),
            constant: moments.trace_d01() + moments.chi_tilde() + 0.5 * moments.chi_hat(),
        }
    }

    pub fn d(&self) -> usize {
        self.drift.len()
    }

    /// Right-hand side `(A′, B′, C′)` in calendar time.
    pub fn rhs(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, f64) {
        let da = a.diagonal();
        let dp = DMatrix::from_diagonal(&self.d_plus);
        let a_prime = 2.0 * a * &dp * a - 0.5 * self.gamma * &self.covariance;
        let w = &self.v_minus + &self.vtilde_minus + self.d_minus.component_mul(&da)
            + self.d_plus.component_mul(b);
        let b_prime = &self.drift + 2.0 * a * w;
        (a_prime, b_prime, self.c_integrand(&da, b))
    }

    /// `C′` as a function of `D(A)` and `B`.
    pub fn c_integrand(&self, da: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.constant
            + (&self.d12 + &self.vtilde21).dot(da)
            + (&self.v_minus + &self.vtilde_minus).dot(b)
            + 0.5 * da.dot(&self.d23.component_mul(da))
            + b.dot(&self.d_minus.component_mul(da))
            + 0.5 * b.dot(&self.d_plus.component_mul(b))
    }
}

/// Spectral data shared by the finite-horizon and ergodic solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreMatrices {
    /// `s = D₊^{1/2}`.
    pub s: DVector<f64>,
    pub s_inv: DVector<f64>,
    /// `Â = √γ (sΣs)^{1/2}`.
    pub a_hat: SymSpectrum,
    /// `Γ = s⁻¹ (sΣs)^{1/2} s⁻¹`.
    pub gamma_matrix: DMatrix<f64>,
}

/// Builds `s`, `Â` and `Γ`, failing if any `D₊ᵢ ≤ 0`.
pub fn build_core(spec: &CheckedSpec, moments: &MomentTable) -> Result<CoreMatrices> {
    let dp = moments.d_plus();
    for (i, &v) in dp.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Positivity { asset: i, value: v });
        }
    }
    let s = dp.map(f64::sqrt);
    let s_inv = s.map(|x| 1.0 / x);
    let sig = spec.covariance();
    let d = spec.d();
    let m = DMatrix::from_fn(d, d, |i, j| s[i] * sig[(i, j)] * s[j]);
    let root = linalg::sym_sqrt_spectrum(&m)?;
    let tol = linalg::DEFAULT_RANK_TOL * root.max_abs();
    let root = SymSpectrum {
        eigenvalues: root.eigenvalues.map(|l| if l <= tol { 0.0 } else { l }),
        eigenvectors: root.eigenvectors,
    };
    let mroot = root.reconstruct();
    let gamma_matrix = DMatrix::from_fn(d, d, |i, j| s_inv[i] * mroot[(i, j)] * s_inv[j]);
    let sg = spec.gamma().sqrt();
    let a_hat = SymSpectrum {
        eigenvalues: root.eigenvalues.map(|l| sg * l),
        eigenvectors: root.eigenvectors,
    };
    Ok(CoreMatrices {
        s,
        s_inv,
        a_hat,
        gamma_matrix,
    })
}

/// Options for [`RiccatiSolution::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Minimum number of grid nodes on `[0, T]`; refined so that `λ_max h ≤ 0.02`.
    pub nodes: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            nodes: DEFAULT_NODES,
        }
    }
}

/// Closed-form solution of the Riccati system on `[0, T]`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    system: RiccatiSystem,
    core: CoreMatrices,
    horizon: f64,
    lam: Vec<f64>,
    /// `Pᵀ s μ`.
    m: DVector<f64>,
    /// `Pᵀ s⁻¹ (V₋ + Ṽ₋)`.
    wc: DVector<f64>,
    /// `½ s_i⁻² P_ij²`, so that `D(A)_i = Σ_j q3_ij λ_j tanh(λ_j τ)`.
    q3: DMatrix<f64>,
    /// `Pᵀ diag(s⁻¹ D₋)`.
    wproj: DMatrix<f64>,
    skewed: bool,
    h: f64,
    r_nodes: Vec<DVector<f64>>,
    c_nodes: Vec<f64>,
}

fn tanh_over(l: f64, tau: f64) -> f64 {
    if l == 0.0 {
        tau
    } else {
        (l * tau).tanh() / l
    }
}

/// `ln cosh x` without overflow.
fn log_cosh(x: f64) -> f64 {
    let x = x.abs();
    x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2
}

/// `cosh(λa) / cosh(λb)` for `0 ≤ a ≤ b`.
fn cosh_ratio(l: f64, a: f64, b: f64) -> f64 {
    if l == 0.0 {
        return 1.0;
    }
    (l * (a - b)).exp() * (1.0 + (-2.0 * l * a).exp()) / (1.0 + (-2.0 * l * b).exp())
}

/// `λ sinh(λσ) / cosh(λτ)` for `0 ≤ σ ≤ τ`.
fn kernel(l: f64, sigma: f64, tau: f64) -> f64 {
    if l == 0.0 {
        return 0.0;
    }
    l * (l * (sigma - tau)).exp() * (-(-2.0 * l * sigma).exp_m1()) / (1.0 + (-2.0 * l * tau).exp())
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

impl RiccatiSolution {
    pub fn new(spec: &CheckedSpec, moments: &MomentTable, opts: SolveOptions) -> Result<Self> {
        let system = RiccatiSystem::new(spec, moments);
        let core = build_core(spec, moments)?;
        let d = spec.d();
        let p = &core.a_hat.eigenvectors;
        let lam: Vec<f64> = core.a_hat.eigenvalues.iter().copied().collect();
        let s_mu = core.s.component_mul(&system.drift);
        let m = p.transpose() * s_mu;
        let wc = p.transpose() * core.s_inv.component_mul(&(&system.v_minus + &system.vtilde_minus));
        let q3 = DMatrix::from_fn(d, d, |i, j| 0.5 * core.s_inv[i].powi(2) * p[(i, j)].powi(2));
        let sdm = core.s_inv.component_mul(&system.d_minus);
        let wproj = p.transpose() * DMatrix::from_diagonal(&sdm);
        let skewed = system.d_minus.iter().any(|&x| x != 0.0);

        let horizon = spec.horizon();
        let lmax = lam.iter().fold(0.0f64, |a, &b| a.max(b));
        let n = if horizon == 0.0 {
            0
        } else {
            let want = opts.nodes.max(2) - 1;
            let need = (lmax * horizon / MAX_LAMBDA_STEP).ceil() as usize;
            let n = want.max(need);
            if n > MAX_INTERVALS {
                log::warn!("quadrature grid capped at {MAX_INTERVALS} intervals (wanted {n})");
            }
            n.min(MAX_INTERVALS)
        };
        let h = if n == 0 { 0.0 } else { horizon / n as f64 };

        let mut sol = RiccatiSolution {
            system,
            core,
            horizon,
            lam,
            m,
            wc,
            q3,
            wproj,
            skewed,
            h,
            r_nodes: vec![DVector::zeros(d)],
            c_nodes: vec![0.0],
        };
        for k in 0..n {
            let tau = if k + 1 == n { horizon } else { (k + 1) as f64 * h };
            let r = sol.r_local(k, tau);
            let c = sol.cvar_local(k, tau);
            sol.r_nodes.push(r);
            sol.c_nodes.push(c);
        }
        Ok(sol)
    }

    /// Convenience: Taylor coefficients, moments and solution in one call.
    pub fn from_spec(spec: &CheckedSpec) -> Result<Self> {
        let moments = MomentTable::from_spec(spec)?;
        Self::new(spec, &moments, SolveOptions::default())
    }

    pub fn system(&self) -> &RiccatiSystem {
        &self.system
    }

    pub fn core(&self) -> &CoreMatrices {
        &self.core
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn d(&self) -> usize {
        self.lam.len()
    }

    /// Number of quadrature intervals actually used.
    pub fn intervals(&self) -> usize {
        self.r_nodes.len() - 1
    }

    fn tau_of(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.horizon - t)
    }

    fn node(&self, tau: f64) -> usize {
        let n = self.intervals();
        if n == 0 {
            return 0;
        }
        ((tau / self.h).floor() as usize).min(n - 1)
    }

    fn p(&self) -> &DMatrix<f64> {
        &self.core.a_hat.eigenvectors
    }

    fn da_tau(&self, tau: f64) -> DVector<f64> {
        let w = DVector::from_iterator(self.d(), self.lam.iter().map(|&l| l * (l * tau).tanh()));
        &self.q3 * w
    }

    fn wvar(&self, tau: f64) -> DVector<f64> {
        &self.wproj * self.da_tau(tau)
    }

    fn r_local(&self, n: usize, tau: f64) -> DVector<f64> {
        let d = self.d();
        if !self.skewed {
            return DVector::zeros(d);
        }
        let t0 = n as f64 * self.h;
        let tm = 0.5 * (t0 + tau);
        let (w0, wm, w1) = (self.wvar(t0), self.wvar(tm), self.wvar(tau));
        let base = &self.r_nodes[n];
        DVector::from_fn(d, |k, _| {
            let l = self.lam[k];
            base[k] * cosh_ratio(l, t0, tau)
                + simpson(
                    t0,
                    tau,
                    kernel(l, t0, tau) * w0[k],
                    kernel(l, tm, tau) * wm[k],
                    kernel(l, tau, tau) * w1[k],
                )
        })
    }

    fn b_with(&self, tau: f64, r: &DVector<f64>) -> DVector<f64> {
        let beta = DVector::from_fn(self.d(), |k, _| {
            let l = self.lam[k];
            let sech = if l == 0.0 { 1.0 } else { 1.0 / (l * tau).cosh() };
            -self.m[k] * tanh_over(l, tau) - self.wc[k] * (1.0 - sech) - r[k]
        });
        (self.p() * beta).component_mul(&self.core.s_inv)
    }

    fn b_tau(&self, tau: f64) -> DVector<f64> {
        let n = self.node(tau);
        let r = self.r_local(n, tau);
        self.b_with(tau, &r)
    }

    fn g(&self, tau: f64, b: &DVector<f64>) -> f64 {
        let sys = &self.system;
        let da = self.da_tau(tau);
        (&sys.v_minus + &sys.vtilde_minus).dot(b)
            + 0.5 * da.dot(&sys.d23.component_mul(&da))
            + b.dot(&sys.d_minus.component_mul(&da))
            + 0.5 * b.dot(&sys.d_plus.component_mul(b))
    }

    fn cvar_local(&self, n: usize, tau: f64) -> f64 {
        let t0 = n as f64 * self.h;
        let tm = 0.5 * (t0 + tau);
        let g = |x: f64| self.g(x, &self.b_with(x, &self.r_local(n, x)));
        self.c_nodes[n] + simpson(t0, tau, g(t0), g(tm), g(tau))
    }

    pub fn eval_a(&self, t: f64) -> Result<DMatrix<f64>> {
        let tau = self.tau_of(t)?;
        let core = &self.core;
        let inner = core.a_hat.map(|l| 0.5 * l * (l * tau).tanh());
        let d = self.d();
        Ok(DMatrix::from_fn(d, d, |i, j| core.s_inv[i] * inner[(i, j)] * core.s_inv[j]))
    }

    /// `∫_t^T A(u) du`.
    pub fn integral_a(&self, t: f64) -> Result<DMatrix<f64>> {
        let tau = self.tau_of(t)?;
        let core = &self.core;
        let inner = core.a_hat.map(|l| 0.5 * log_cosh(l * tau));
        let d = self.d();
        Ok(DMatrix::from_fn(d, d, |i, j| core.s_inv[i] * inner[(i, j)] * core.s_inv[j]))
    }

    pub fn eval_b(&self, t: f64) -> Result<DVector<f64>> {
        let tau = self.tau_of(t)?;
        if self.intervals() == 0 {
            return Ok(DVector::zeros(self.d()));
        }
        Ok(self.b_tau(tau))
    }

    pub fn eval_c(&self, t: f64) -> Result<f64> {
        let tau = self.tau_of(t)?;
        if self.intervals() == 0 {
            return Ok(0.0);
        }
        let ia = self.integral_a(t)?.diagonal();
        let sys = &self.system;
        let n = self.node(tau);
        Ok(-sys.constant * tau - (&sys.d12 + &sys.vtilde21).dot(&ia) - self.cvar_local(n, tau))
    }

    /// `θ̌(t,q) = −qᵀAq − qᵀB − C`.
    pub fn theta(&self, t: f64, q: &[f64]) -> Result<f64> {
        let (a, b, c) = (self.eval_a(t)?, self.eval_b(t)?, self.eval_c(t)?);
        Ok(theta_from(&a, &b, c, q))
    }

    /// Long-horizon limits.
    pub fn asymptotics(&self) -> Asymptotics {
        asymptotics_from(&self.system, &self.core)
    }

    /// Writes `t, A (row-major), B, C` at `samples + 1` equally spaced times.
    pub fn write_csv<W: Write>(&self, out: W, samples: usize) -> Result<()> {
        let d = self.d();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for i in 0..d {
            for j in 0..d {
                header.push(format!("A_{i}_{j}"));
            }
        }
        header.extend((0..d).map(|i| format!("B_{i}")));
        header.push("C".into());
        w.write_record(&header)?;
        let samples = samples.max(1);
        for k in 0..=samples {
            let t = if k == samples {
                self.horizon
            } else {
                self.horizon * k as f64 / samples as f64
            };
            let (a, b, c) = (self.eval_a(t)?, self.eval_b(t)?, self.eval_c(t)?);
            let mut row = vec![fmt(t)];
            for i in 0..d {
                for j in 0..d {
                    row.push(fmt(a[(i, j)]));
                }
            }
            row.extend(b.iter().map(|&x| fmt(x)));
            row.push(fmt(c));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x}")
}

/// `−qᵀAq − qᵀB − C`.
pub fn theta_from(a: &DMatrix<f64>, b: &DVector<f64>, c: f64, q: &[f64]) -> f64 {
    let q = DVector::from_column_slice(q);
    -(q.dot(&(a * &q))) - q.dot(b) - c
}

/// Ergodic limits of the proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct Asymptotics {
    /// `A_∞ = ½ √γ Γ`.
    pub a_inf: DMatrix<f64>,
    /// `Γ = D₊^{-1/2} (D₊^{1/2} Σ D₊^{1/2})^{1/2} D₊^{-1/2}`.
    pub gamma_matrix: DMatrix<f64>,
    /// `√γ`.
    pub sqrt_gamma: f64,
    /// `s⁻¹ Â⁺ s μ`, the drift term of the limiting skew.
    pub drift_skew: DVector<f64>,
    /// `None` when the drift is not in the image of `Â`.
    pub b_inf: Option<DVector<f64>>,
    /// Rate at which `C` grows per unit of remaining time.
    pub c_rate: Option<f64>,
    pub drift_in_image: bool,
}

pub fn asymptotics_from(sys: &RiccatiSystem, core: &CoreMatrices) -> Asymptotics {
    let d = sys.d();
    let sg = sys.gamma.sqrt();
    let a_inf = core.gamma_matrix.scale(0.5 * sg);
    let pinv = linalg::pseudo_inverse(&core.a_hat, None);
    let proj = linalg::range_projector(&core.a_hat, None);
    let s_mu = core.s.component_mul(&sys.drift);
    let residual = (DMatrix::identity(d, d) - &proj) * &s_mu;
    let drift_in_image = residual.norm() <= IMAGE_TOL * s_mu.norm();
    let drift_skew = (&pinv * &s_mu).component_mul(&core.s_inv);
    let (b_inf, c_rate) = if drift_in_image {
        let da = a_inf.diagonal();
        let w = &sys.v_minus + &sys.vtilde_minus + sys.d_minus.component_mul(&da);
        let b = -&drift_skew - (&proj * core.s_inv.component_mul(&w)).component_mul(&core.s_inv);
        let rate = -sys.c_integrand(&da, &b);
        (Some(b), Some(rate))
    } else {
        (None, None)
    };
    Asymptotics {
        a_inf,
        gamma_matrix: core.gamma_matrix.clone(),
        sqrt_gamma: sg,
        drift_skew,
        b_inf,
        c_rate,
        drift_in_image,
    }
}

/// Ergodic limits computed directly from a spec.
pub fn asymptotics(spec: &CheckedSpec, moments: &MomentTable) -> Result<Asymptotics> {
    let sys = RiccatiSystem::new(spec, moments);
    let core = build_core(spec, moments)?;
    Ok(asymptotics_from(&sys, &core))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AssetSpec, MarketSpec, Objective};

    fn one_asset(gamma: f64, horizon: f64) -> CheckedSpec {
        MarketSpec {
            assets: vec![AssetSpec::exponential(0.3, 1.0, 10.0, 1.0, 1.0)],
            correlation: vec![vec![1.0]],
            gamma,
            objective: Objective::ModelB,
            horizon,
            tiers: None,
            drift: None,
            delta_floor: None,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn scalar_a_matches_tanh() {
        let spec = one_asset(0.5, 3.0);
        let sol = RiccatiSolution::from_spec(&spec).unwrap();
        // D₊ = 2 α₂ z = 2 e⁻¹
        let dp = 2.0 * (-1.0f64).exp();
        let lam = (0.5f64 * 0.09 * dp).sqrt();
        for &t in &[0.0, 1.0, 2.5, 3.0] {
            let want = 0.5 / dp * lam * (lam * (3.0 - t)).tanh();
            let got = sol.eval_a(t).unwrap()[(0, 0)];
            assert!((got - want).abs() < 1e-14 * want.max(1.0));
        }
    }

    #[test]
    fn terminal_values_vanish() {
        let spec = one_asset(0.5, 3.0);
        let sol = RiccatiSolution::from_spec(&spec).unwrap();
        assert_eq!(sol.eval_a(3.0).unwrap()[(0, 0)], 0.0);
        assert_eq!(sol.eval_b(3.0).unwrap()[0], 0.0);
        assert_eq!(sol.eval_c(3.0).unwrap(), 0.0);
        assert!(sol.eval_a(3.1).is_err());
        assert!(sol.eval_a(-0.1).is_err());
    }

    #[test]
    fn zero_horizon() {
        let spec = one_asset(0.5, 0.0);
        let sol = RiccatiSolution::from_spec(&spec).unwrap();
        assert_eq!(sol.theta(0.0, &[3.0]).unwrap(), 0.0);
    }

    #[test]
    fn stable_helpers() {
        assert!((log_cosh(1000.0) - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert!((log_cosh(0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
        assert!((cosh_ratio(2.0, 0.5, 1.0) - 1.0f64.cosh() / 2.0f64.cosh()).abs() < 1e-15);
        assert!((kernel(2.0, 0.5, 1.0) - 2.0 * 1.0f64.sinh() / 2.0f64.cosh()).abs() < 1e-15);
        assert!(kernel(50.0, 30.0, 40.0).is_finite());
    }
}
