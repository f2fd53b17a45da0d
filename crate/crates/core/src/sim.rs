//! Event-driven simulation of a quoting strategy.
//!
//! Reference prices follow `dS = μ dt + L dW` with `L Lᵀ = Σ`. Fills on each
//! channel arrive with intensity `w Λ(δ)` and are sampled by thinning on a
//! uniform grid of `steps` intervals. A bid fill of size `z` at offset `δ`
//! pays `(S − δ) z + c` in cash; an ask fill receives `(S + δ) z − c`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::closedform::{fmt, Asymptotics, RiccatiSolution};
use crate::error::{Error, Result};
use crate::exact::ThetaGrid;
use crate::linalg;
use crate::model::{CheckedSpec, Channel, Objective, Side};
use crate::quotes::{asymptotic_quotes, greedy_quotes, proxy_quotes, quadratic_quotes, QuoteSet};
use crate::rng::{path_rng, Role};

pub const DEFAULT_STEPS: usize = 2000;
const MAJORANT_FACTOR: f64 = 1.5;

/// Quoting strategy.
#[derive(Debug, Clone)]
pub enum StrategyRef {
    /// Greedy quotes of the closed-form proxy.
    GreedyProxy(Arc<RiccatiSolution>),
    /// Greedy quotes of the lattice value function.
    GreedyExact(Arc<ThetaGrid>),
    /// Time-independent quotes from the ergodic limits.
    Asymptotic(Arc<Asymptotics>),
    /// Fixed offsets indexed `[asset][tier]`, withdrawn at the risk limits.
    ConstantOffsets { bid: Vec<Vec<f64>>, ask: Vec<Vec<f64>> },
}

impl StrategyRef {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyRef::GreedyProxy(_) => "greedy-proxy",
            StrategyRef::GreedyExact(_) => "greedy-exact",
            StrategyRef::Asymptotic(_) => "asymptotic",
            StrategyRef::ConstantOffsets { .. } => "constant",
        }
    }

    /// Offsets per channel (`None` = withdrawn). `cached` holds the proxy's
    /// `(A, B)` at `t` when available.
    fn offsets(
        &self,
        spec: &CheckedSpec,
        chans: &[Channel<'_>],
        t: f64,
        q: &[f64],
        cached: Option<&(DMatrix<f64>, DVector<f64>)>,
    ) -> Result<Vec<Option<f64>>> {
        let from_set = |qs: QuoteSet| qs.quotes.iter().map(|x| x.offer.offset()).collect();
        Ok(match self {
            StrategyRef::GreedyProxy(sol) => match cached {
                Some((a, b)) => from_set(quadratic_quotes(a, b, spec, t, q)?),
                None => from_set(proxy_quotes(sol, spec, t, q)?),
            },
            StrategyRef::GreedyExact(th) => from_set(greedy_quotes(th.as_ref(), spec, t, q)?),
            StrategyRef::Asymptotic(lim) => from_set(asymptotic_quotes(lim, spec, q)?),
            StrategyRef::ConstantOffsets { bid, ask } => chans
                .iter()
                .map(|c| {
                    spec.fill_allowed(q, c.asset, c.side, c.size).then(|| match c.side {
                        Side::Bid => bid[c.asset][c.tier],
                        Side::Ask => ask[c.asset][c.tier],
                    })
                })
                .collect(),
        })
    }

    fn check(&self, spec: &CheckedSpec) -> Result<()> {
        if let StrategyRef::ConstantOffsets { bid, ask } = self {
            let ok = |v: &Vec<Vec<f64>>| {
                v.len() == spec.d() && v.iter().enumerate().all(|(i, t)| t.len() == spec.tiers(i).len())
            };
            if !ok(bid) || !ok(ask) {
                return Err(Error::Validation(
                    "constant offsets must be given per asset and tier".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub paths: usize,
    pub seed: u64,
    pub steps: usize,
    /// Keep individual fills in the results.
    pub record_trades: bool,
    /// Initial inventory; zero when `None`.
    pub q0: Option<Vec<f64>>,
}

impl SimOptions {
    pub fn new(paths: usize, seed: u64) -> Self {
        SimOptions {
            paths,
            seed,
            steps: DEFAULT_STEPS,
            record_trades: false,
            q0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trade {
    pub path: usize,
    pub t: f64,
    pub asset: usize,
    pub tier: usize,
    pub side: Side,
    pub size: f64,
    pub offset: f64,
    pub reference_price: f64,
    /// Change in cash caused by the fill.
    pub cash_delta: f64,
    pub inventory_after: Vec<f64>,
    pub cash_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub path: usize,
    pub cash: f64,
    pub inventory: Vec<f64>,
    pub prices: Vec<f64>,
    /// `∫ qᵀ Σ q dt`.
    pub risk_integral: f64,
    pub bid_fills: Vec<u64>,
    pub ask_fills: Vec<u64>,
    pub majorant_violations: u64,
    #[serde(skip)]
    pub trades: Vec<Trade>,
}

impl PathResult {
    /// Mark-to-market wealth `X + q·S`.
    pub fn wealth(&self) -> f64 {
        self.cash + self.inventory.iter().zip(&self.prices).map(|(q, s)| q * s).sum::<f64>()
    }
}

/// Runs `opts.paths` independent paths.
pub fn simulate(spec: &CheckedSpec, strategy: &StrategyRef, opts: &SimOptions) -> Result<Vec<PathResult>> {
    strategy.check(spec)?;
    if opts.paths == 0 {
        return Err(Error::Validation("at least one path is required".into()));
    }
    let d = spec.d();
    let q0 = opts.q0.clone().unwrap_or_else(|| vec![0.0; d]);
    spec.check_inventory(&q0)?;
    let chol = match linalg::cholesky(spec.covariance()) {
        Ok(l) => l,
        Err(_) => linalg::sym_sqrt(spec.covariance())?,
    };
    let chans = spec.channels();
    let steps = opts.steps.max(1);
    let grid: Vec<(DMatrix<f64>, DVector<f64>)> = match strategy {
        StrategyRef::GreedyProxy(sol) => (0..=steps)
            .into_par_iter()
            .map(|k| {
                let t = grid_time(spec.horizon(), steps, k);
                Ok((sol.eval_a(t)?, sol.eval_b(t)?))
            })
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    let env = PathEnv {
        spec,
        strategy,
        opts,
        chans: &chans,
        chol: &chol,
        grid: &grid,
    };
    (0..opts.paths)
        .into_par_iter()
        .map(|i| run_path(&env, &q0, i))
        .collect()
}

fn grid_time(horizon: f64, steps: usize, k: usize) -> f64 {
    if k == steps {
        horizon
    } else {
        horizon * k as f64 / steps as f64
    }
}

struct PathEnv<'a> {
    spec: &'a CheckedSpec,
    strategy: &'a StrategyRef,
    opts: &'a SimOptions,
    chans: &'a [Channel<'a>],
    chol: &'a DMatrix<f64>,
    grid: &'a [(DMatrix<f64>, DVector<f64>)],
}

struct Market<'a> {
    spec: &'a CheckedSpec,
    chol: &'a DMatrix<f64>,
    s: Vec<f64>,
    at: f64,
}

impl Market<'_> {
    fn advance<R: Rng>(&mut self, to: f64, rng: &mut R) {
        let dt = to - self.at;
        if dt <= 0.0 {
            return;
        }
        let d = self.s.len();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let inc = self.chol * z * dt.sqrt();
        let mu = self.spec.drift();
        for i in 0..d {
            self.s[i] += mu[i] * dt + inc[i];
        }
        self.at = to;
    }
}

fn intensities(chans: &[Channel<'_>], offsets: &[Option<f64>]) -> (Vec<f64>, f64) {
    let rates: Vec<f64> = chans
        .iter()
        .zip(offsets)
        .map(|(c, o)| o.map_or(0.0, |d| c.weight * c.curve.value(d)))
        .collect();
    let total = rates.iter().sum();
    (rates, total)
}

fn run_path(env: &PathEnv<'_>, q0: &[f64], path: usize) -> Result<PathResult> {
    let PathEnv {
        spec,
        strategy,
        opts,
        chans,
        chol,
        grid,
    } = *env;
    let d = spec.d();
    let horizon = spec.horizon();
    let steps = opts.steps.max(1);
    let mut ev = path_rng(opts.seed, path as u64, Role::Events);
    let mut px = path_rng(opts.seed, path as u64, Role::Prices);
    let mut mkt = Market {
        spec,
        chol,
        s: (0..d).map(|i| spec.initial_price(i)).collect(),
        at: 0.0,
    };
    let sig = spec.covariance();
    let risk = |q: &[f64]| {
        let v = DVector::from_column_slice(q);
        v.dot(&(sig * &v))
    };
    let mut q = q0.to_vec();
    let mut cash = 0.0;
    let mut risk_int = 0.0;
    let mut bid_fills = vec![0u64; d];
    let mut ask_fills = vec![0u64; d];
    let mut violations = 0;
    let mut trades = Vec::new();
    let mut last = 0.0;

    for k in 0..steps {
        let (s0, s1) = (grid_time(horizon, steps, k), grid_time(horizon, steps, k + 1));
        let offs = strategy.offsets(spec, chans, s0, &q, grid.get(k))?;
        let (_, total) = intensities(chans, &offs);
        let mut bound = MAJORANT_FACTOR * total;
        let mut cur = s0;
        while bound > 0.0 {
            let gap: f64 = Exp1.sample(&mut ev);
            cur += gap / bound;
            if cur >= s1 {
                break;
            }
            let offs = strategy.offsets(spec, chans, cur, &q, None)?;
            let (rates, total) = intensities(chans, &offs);
            if total > bound {
                violations += 1;
            }
            let u: f64 = ev.random::<f64>() * bound;
            if u >= total {
                continue;
            }
            let mut acc = 0.0;
            let mut pick = rates.len() - 1;
            for (j, &r) in rates.iter().enumerate() {
                acc += r;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            let c = &chans[pick];
            let delta = offs[pick].expect("positive rate implies a quote");
            mkt.advance(cur, &mut px);
            risk_int += risk(&q) * (cur - last);
            last = cur;
            let s = mkt.s[c.asset];
            let cash_delta = match c.side {
                Side::Bid => {
                    bid_fills[c.asset] += 1;
                    -((s - delta) * c.size + c.cost)
                }
                Side::Ask => {
                    ask_fills[c.asset] += 1;
                    (s + delta) * c.size - c.cost
                }
            };
            cash += cash_delta;
            q[c.asset] += c.side.inventory_sign() * c.size;
            if opts.record_trades {
                trades.push(Trade {
                    path,
                    t: cur,
                    asset: c.asset,
                    tier: c.tier,
                    side: c.side,
                    size: c.size,
                    offset: delta,
                    reference_price: s,
                    cash_delta,
                    inventory_after: q.clone(),
                    cash_after: cash,
                });
            }
            let offs = strategy.offsets(spec, chans, cur, &q, None)?;
            bound = MAJORANT_FACTOR * intensities(chans, &offs).1;
        }
        mkt.advance(s1, &mut px);
    }
    risk_int += risk(&q) * (horizon - last);
    Ok(PathResult {
        path,
        cash,
        inventory: q,
        prices: mkt.s,
        risk_integral: risk_int,
        bid_fills,
        ask_fills,
        majorant_violations: violations,
        trades,
    })
}

/// Sample mean and standard error of a per-path quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            f64::INFINITY
        };
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }
}

/// Per-path objective value.
pub fn path_objective(spec: &CheckedSpec, r: &PathResult) -> f64 {
    match spec.objective() {
        Objective::ModelA => -(-spec.gamma() * r.wealth()).exp(),
        Objective::ModelB => r.wealth() - 0.5 * spec.gamma() * r.risk_integral,
    }
}

/// Mean objective across paths.
pub fn evaluate_objective(spec: &CheckedSpec, results: &[PathResult]) -> Estimate {
    let xs: Vec<f64> = results.iter().map(|r| path_objective(spec, r)).collect();
    Estimate::from_samples(&xs)
}

/// Summary of a simulation batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub strategy: String,
    pub paths: usize,
    pub seed: u64,
    pub objective: Estimate,
    pub wealth: Estimate,
    pub mean_bid_fills: Vec<f64>,
    pub mean_ask_fills: Vec<f64>,
    pub mean_terminal_inventory: Vec<f64>,
    pub majorant_violations: u64,
}

pub fn summarize(spec: &CheckedSpec, strategy: &StrategyRef, seed: u64, results: &[PathResult]) -> SimSummary {
    let n = results.len() as f64;
    let d = spec.d();
    let mean_of = |f: &dyn Fn(&PathResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let wealth: Vec<f64> = results.iter().map(PathResult::wealth).collect();
    SimSummary {
        strategy: strategy.name().into(),
        paths: results.len(),
        seed,
        objective: evaluate_objective(spec, results),
        wealth: Estimate::from_samples(&wealth),
        mean_bid_fills: (0..d).map(|i| mean_of(&|r| r.bid_fills[i] as f64)).collect(),
        mean_ask_fills: (0..d).map(|i| mean_of(&|r| r.ask_fills[i] as f64)).collect(),
        mean_terminal_inventory: (0..d).map(|i| mean_of(&|r| r.inventory[i])).collect(),
        majorant_violations: results.iter().map(|r| r.majorant_violations).sum(),
    }
}

/// Writes every recorded fill as CSV.
pub fn write_trades_csv<W: Write>(results: &[PathResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "path",
        "t",
        "asset",
        "tier",
        "side",
        "size",
        "offset",
        "reference_price",
        "cash_delta",
        "cash_after",
        "inventory_after",
    ])?;
    for tr in results.iter().flat_map(|r| &r.trades) {
        w.write_record([
            tr.path.to_string(),
            fmt(tr.t),
            tr.asset.to_string(),
            tr.tier.to_string(),
            tr.side.as_str().to_string(),
            fmt(tr.size),
            fmt(tr.offset),
            fmt(tr.reference_price),
            fmt(tr.cash_delta),
            fmt(tr.cash_after),
            tr.inventory_after.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
