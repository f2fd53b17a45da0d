//! First-order correction `η` to the quadratic proxy.
//!
//! Linearizing the lattice equation around `θ̌` gives
//! `η(t,q) = E[∫_t^T g(s, q_s) ds]`, where `q` jumps by `±z` at rate
//! `w · (−Ȟ′(p̌))` on each channel and
//! `g = Σ w z (H(p̌) − Ȟ(p̌))` over active channels minus `Σ w z Ȟ(p̌)` over
//! channels switched off at the risk limits. Paths are simulated by thinning
//! on a uniform time grid.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use nalgebra::{DMatrix, DVector};

use crate::closedform::RiccatiSolution;
use crate::error::{Error, Result};
use crate::hamiltonian::{hamiltonian, CoeffTable};
use crate::model::{CheckedSpec, Channel};
use crate::quotes::{quadratic_p, ThetaSource};
use crate::rng::{path_rng, Role};

/// Thinning majorant as a multiple of the intensity at the last update.
pub const MAJORANT_FACTOR: f64 = 1.5;
pub const DEFAULT_STEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub paths: usize,
    pub seed: u64,
    /// Grid steps over `[t, T]`.
    pub steps: usize,
    /// Switch off fills that would breach a risk limit.
    pub gate: bool,
}

impl McOptions {
    pub fn new(paths: usize, seed: u64) -> Self {
        McOptions {
            paths,
            seed,
            steps: DEFAULT_STEPS,
            gate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionEstimate {
    pub t: f64,
    pub q: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    #[serde(rename = "n")]
    pub paths: usize,
    pub seed: u64,
    /// Evaluations where `−Ȟ′` was negative and the rate was set to 0.
    pub clamp_events: u64,
    /// Candidate times where the intensity exceeded the thinning majorant.
    pub majorant_violations: u64,
    pub mean_jumps: f64,
    pub mean_compensator: f64,
}

#[derive(Debug, Default, Clone, Copy)]
struct PathStats {
    integral: f64,
    jumps: u64,
    compensator: f64,
    clamps: u64,
    violations: u64,
}

struct Ctx<'a> {
    spec: &'a CheckedSpec,
    coeffs: &'a CoeffTable,
    sol: &'a RiccatiSolution,
    channels: Vec<Channel<'a>>,
    xi: f64,
    floor: Option<f64>,
    gate: bool,
}

struct Eval {
    g: f64,
    rates: Vec<f64>,
    total: f64,
    clamps: u64,
}

impl Ctx<'_> {
    fn eval(&self, a: &DMatrix<f64>, b: &DVector<f64>, q: &[f64]) -> Result<Eval> {
        let aq = a * DVector::from_column_slice(q);
        let mut g = 0.0;
        let mut total = 0.0;
        let mut clamps = 0;
        let mut rates = Vec::with_capacity(self.channels.len());
        for (k, c) in self.channels.iter().enumerate() {
            let p = quadratic_p(a, b, &aq, c);
            let co = self.coeffs.get(k);
            let proxy = co.eval(p);
            let active = !self.gate || self.spec.fill_allowed(q, c.asset, c.side, c.size);
            if !active {
                g -= c.weight * c.size * proxy;
                rates.push(0.0);
                continue;
            }
            let h = hamiltonian(c.curve, self.xi, c.size, p, self.floor)?.value;
            g += c.weight * c.size * (h - proxy);
            let raw = -co.derivative(p);
            let r = if raw < 0.0 {
                clamps += 1;
                0.0
            } else {
                c.weight * raw
            };
            total += r;
            rates.push(r);
        }
        Ok(Eval {
            g,
            rates,
            total,
            clamps,
        })
    }
}

/// Monte Carlo estimate of `η(t, q)`.
pub fn estimate_eta(
    spec: &CheckedSpec,
    coeffs: &CoeffTable,
    sol: &RiccatiSolution,
    t: f64,
    q: &[f64],
    opts: McOptions,
) -> Result<CorrectionEstimate> {
    let horizon = spec.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    spec.check_inventory(q)?;
    if opts.paths == 0 {
        return Err(Error::Validation("at least one path is required".into()));
    }
    let ctx = Ctx {
        spec,
        coeffs,
        sol,
        channels: spec.channels(),
        xi: spec.xi(),
        floor: spec.delta_floor(),
        gate: opts.gate,
    };
    let steps = opts.steps.max(1);
    let h = (horizon - t) / steps as f64;
    let times: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { horizon } else { t + k as f64 * h })
        .collect();
    let ab: Vec<(DMatrix<f64>, DVector<f64>)> = times
        .par_iter()
        .map(|&s| Ok((sol.eval_a(s)?, sol.eval_b(s)?)))
        .collect::<Result<_>>()?;

    let stats: Vec<PathStats> = (0..opts.paths)
        .into_par_iter()
        .map(|i| run_path(&ctx, &times, &ab, q, opts.seed, i as u64))
        .collect::<Result<_>>()?;

    let n = stats.len() as f64;
    let mean = stats.iter().map(|s| s.integral).sum::<f64>() / n;
    let var = if stats.len() > 1 {
        stats.iter().map(|s| (s.integral - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        f64::INFINITY
    };
    Ok(CorrectionEstimate {
        t,
        q: q.to_vec(),
        mean,
        stderr: (var / n).sqrt(),
        paths: opts.paths,
        seed: opts.seed,
        clamp_events: stats.iter().map(|s| s.clamps).sum(),
        majorant_violations: stats.iter().map(|s| s.violations).sum(),
        mean_jumps: stats.iter().map(|s| s.jumps as f64).sum::<f64>() / n,
        mean_compensator: stats.iter().map(|s| s.compensator).sum::<f64>() / n,
    })
}

fn run_path(
    ctx: &Ctx<'_>,
    times: &[f64],
    ab: &[(DMatrix<f64>, DVector<f64>)],
    q0: &[f64],
    seed: u64,
    path: u64,
) -> Result<PathStats> {
    let mut rng = path_rng(seed, path, Role::Events);
    let mut st = PathStats::default();
    let mut q = q0.to_vec();
    let mut e = ctx.eval(&ab[0].0, &ab[0].1, &q)?;
    st.clamps += e.clamps;
    for k in 0..times.len() - 1 {
        let (s0, s1) = (times[k], times[k + 1]);
        let mut last = s0;
        let mut bound = MAJORANT_FACTOR * e.total;
        let mut cur = s0;
        loop {
            if bound <= 0.0 {
                break;
            }
            let gap: f64 = Exp1.sample(&mut rng);
            cur += gap / bound;
            if cur >= s1 {
                break;
            }
            let (a, b) = (ctx.sol.eval_a(cur)?, ctx.sol.eval_b(cur)?);
            let pre = ctx.eval(&a, &b, &q)?;
            st.clamps += pre.clamps;
            if pre.total > bound {
                st.violations += 1;
            }
            let u: f64 = rng.random::<f64>() * bound;
            if u >= pre.total {
                continue;
            }
            let mut acc = 0.0;
            let mut pick = pre.rates.len() - 1;
            for (j, &r) in pre.rates.iter().enumerate() {
                acc += r;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            st.integral += 0.5 * (cur - last) * (e.g + pre.g);
            st.compensator += 0.5 * (cur - last) * (e.total + pre.total);
            let c = &ctx.channels[pick];
            q[c.asset] += c.side.inventory_sign() * c.size;
            st.jumps += 1;
            e = ctx.eval(&a, &b, &q)?;
            st.clamps += e.clamps;
            last = cur;
            bound = MAJORANT_FACTOR * e.total;
        }
        let end = ctx.eval(&ab[k + 1].0, &ab[k + 1].1, &q)?;
        st.clamps += end.clamps;
        st.integral += 0.5 * (s1 - last) * (e.g + end.g);
        st.compensator += 0.5 * (s1 - last) * (e.total + end.total);
        e = end;
    }
    Ok(st)
}

/// `θ̌(t,q) + η̂(t,q)`.
pub fn corrected_theta(sol: &RiccatiSolution, est: &CorrectionEstimate) -> Result<f64> {
    Ok(sol.theta(est.t, &est.q)? + est.mean)
}

/// Value function `θ̌ + η̂`, re-estimating `η̂` at every query.
pub struct CorrectedTheta<'a> {
    pub spec: &'a CheckedSpec,
    pub coeffs: &'a CoeffTable,
    pub sol: &'a RiccatiSolution,
    pub opts: McOptions,
}

impl ThetaSource for CorrectedTheta<'_> {
    fn theta(&self, t: f64, q: &[f64]) -> Result<f64> {
        let est = estimate_eta(self.spec, self.coeffs, self.sol, t, q, self.opts)?;
        corrected_theta(self.sol, &est)
    }
}
