use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mmproxy::closedform::{RiccatiSolution, SolveOptions};
use mmproxy::exact::{self, ExactOptions, InventoryGrid, ThetaGrid};
use mmproxy::hamiltonian::{delta_star, CoeffTable, MomentTable};
use mmproxy::mc::{self, CorrectedTheta, McOptions};
use mmproxy::quotes::{self, QuoteSet};
use mmproxy::sim::{self, SimOptions, StrategyRef};
use mmproxy::{CheckedSpec, Error, MarketSpec};

/// Closed-form value-function proxies, quotes and simulation for
/// multi-asset market making.
#[derive(Debug, Parser)]
#[command(name = "mmproxy", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Market spec (JSON)
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,
    /// Output file; standard output when omitted
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Inventory {
    /// Inventory per asset (one value is repeated for every asset)
    #[arg(long, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true, default_value = "0")]
    q: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Source {
    /// Closed-form quadratic proxy
    Proxy,
    /// Exact lattice solution
    Exact,
    /// Proxy plus Monte Carlo correction
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    /// Greedy quotes from the closed-form proxy
    GreedyProxy,
    /// Greedy quotes from the exact lattice solution
    GreedyExact,
    /// Long-horizon limit quotes
    Asymptotic,
    /// Fixed offsets
    Constant,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate A(t), B(t), C(t) of the closed-form proxy as CSV
    SolveClosed {
        #[command(flatten)]
        common: Common,
        /// Minimum quadrature nodes on [0, T]
        #[arg(long, default_value_t = 201)]
        nodes: usize,
        /// Number of output intervals on [0, T]
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Solve the exact lattice equation and write theta as CSV
    SolveExact {
        #[command(flatten)]
        common: Common,
        /// RK4 time step (default T/2000)
        #[arg(long)]
        dt: Option<f64>,
        /// Store every n-th time step
        #[arg(long, default_value_t = 1)]
        keep_every: usize,
    },
    /// Greedy quotes at (t, q) as CSV
    Quotes {
        #[command(flatten)]
        common: Common,
        /// Time
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[command(flatten)]
        inv: Inventory,
        /// Value function used for the quotes
        #[arg(long, value_enum, default_value_t = Source::Proxy)]
        source: Source,
        /// RK4 time step for the exact source
        #[arg(long)]
        dt: Option<f64>,
        /// Monte Carlo paths for the corrected source
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        /// Random seed (required for the corrected source)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Long-horizon limits and asymptotic quotes as JSON
    Asymptotic {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inv: Inventory,
    },
    /// Monte Carlo first-order correction at a point, as JSON
    McCorrect {
        #[command(flatten)]
        common: Common,
        /// Number of paths
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        /// Random seed
        #[arg(long)]
        seed: u64,
        /// Evaluation point: t followed by one inventory per asset
        #[arg(long, num_args = 1.., allow_negative_numbers = true, value_name = "T Q", default_values_t = [0.0, 0.0])]
        point: Vec<f64>,
        /// Time steps on [t, T]
        #[arg(long, default_value_t = mc::DEFAULT_STEPS)]
        steps: usize,
        /// Let the inventory leave the risk limits
        #[arg(long)]
        no_gate: bool,
    },
    /// Simulate a strategy; trade log as CSV, summary as JSON
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Quoting strategy
        #[arg(long, value_enum, default_value_t = Strategy::GreedyProxy)]
        strategy: Strategy,
        /// Offset for the constant strategy (default: optimal offset at p = 0)
        #[arg(long, allow_negative_numbers = true)]
        offset: Option<f64>,
        /// Number of paths
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        /// Random seed
        #[arg(long)]
        seed: u64,
        /// Summary JSON file; standard output when omitted
        #[arg(long, value_name = "PATH")]
        summary: Option<PathBuf>,
        /// RK4 time step for the exact strategy
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Simulate several strategies on common seeds and compare objectives
    Compare {
        #[command(flatten)]
        common: Common,
        /// Number of paths per strategy
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        /// Random seed
        #[arg(long)]
        seed: u64,
        /// Strategies to compare
        #[arg(long, value_enum, value_delimiter = ',',
              default_values_t = [Strategy::GreedyProxy, Strategy::Asymptotic, Strategy::Constant])]
        strategies: Vec<Strategy>,
        /// RK4 time step for the exact strategy
        #[arg(long)]
        dt: Option<f64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_io() => 4,
        _ if e.is_validation() => 2,
        Error::TimeOutOfRange { .. }
        | Error::OffLattice(_)
        | Error::InventoryOutOfBounds(_)
        | Error::TooManyStates { .. }
        | Error::Unsupported(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("MM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli.command) {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(path: &Path) -> mmproxy::Result<CheckedSpec> {
    MarketSpec::load(path)?.validate()
}

fn open_out(path: Option<&Path>) -> mmproxy::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(path: Option<&Path>, v: &Value) -> mmproxy::Result<()> {
    let mut w = open_out(path)?;
    let io_err = |source| Error::Io {
        path: path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
        source,
    };
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn inventory(spec: &CheckedSpec, q: &[f64]) -> mmproxy::Result<Vec<f64>> {
    match q.len() {
        1 => Ok(vec![q[0]; spec.d()]),
        n if n == spec.d() => Ok(q.to_vec()),
        n => Err(Error::Validation(format!(
            "expected {} inventory values, got {n}",
            spec.d()
        ))),
    }
}

fn proxy(spec: &CheckedSpec, nodes: usize) -> mmproxy::Result<(CoeffTable, RiccatiSolution)> {
    let coeffs = CoeffTable::from_spec(spec)?;
    let moments = MomentTable::new(spec, &coeffs);
    let sol = RiccatiSolution::new(spec, &moments, SolveOptions { nodes })?;
    Ok((coeffs, sol))
}

fn exact_grid(spec: &CheckedSpec, dt: Option<f64>) -> mmproxy::Result<ThetaGrid> {
    exact::solve_hj(
        spec,
        ExactOptions {
            dt,
            ..Default::default()
        },
    )
}

fn reference_prices(spec: &CheckedSpec) -> Vec<f64> {
    (0..spec.d()).map(|i| spec.initial_price(i)).collect()
}

/// Offsets of the constant strategy: `offset` if given, else `δ*(0)` per tier.
fn constant_offsets(spec: &CheckedSpec, offset: Option<f64>) -> mmproxy::Result<StrategyRef> {
    let xi = spec.xi();
    let side = |s: &mmproxy::model::SideSpec| match offset {
        Some(d) => Ok(d),
        None => delta_star(&s.intensity, xi, s.sizes.atoms[0].size, 0.0, spec.delta_floor()),
    };
    let mut bid = Vec::new();
    let mut ask = Vec::new();
    for i in 0..spec.d() {
        bid.push(spec.tiers(i).iter().map(|t| side(&t.bid)).collect::<mmproxy::Result<Vec<_>>>()?);
        ask.push(spec.tiers(i).iter().map(|t| side(&t.ask)).collect::<mmproxy::Result<Vec<_>>>()?);
    }
    Ok(StrategyRef::ConstantOffsets { bid, ask })
}

fn strategy(
    spec: &CheckedSpec,
    which: Strategy,
    offset: Option<f64>,
    dt: Option<f64>,
) -> mmproxy::Result<StrategyRef> {
    Ok(match which {
        Strategy::GreedyProxy => StrategyRef::GreedyProxy(Arc::new(RiccatiSolution::from_spec(spec)?)),
        Strategy::GreedyExact => StrategyRef::GreedyExact(Arc::new(exact_grid(spec, dt)?)),
        Strategy::Asymptotic => {
            let lim = RiccatiSolution::from_spec(spec)?.asymptotics();
            if !lim.drift_in_image {
                return Err(Error::Unsupported(
                    "drift is not in the image of the risk matrix; no constant asymptotic quotes".into(),
                ));
            }
            StrategyRef::Asymptotic(Arc::new(lim))
        }
        Strategy::Constant => constant_offsets(spec, offset)?,
    })
}

fn matrix_json(m: &nalgebra::DMatrix<f64>) -> Value {
    json!((0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn run(cmd: Command) -> mmproxy::Result<String> {
    match cmd {
        Command::SolveClosed {
            common,
            nodes,
            samples,
        } => {
            let spec = load(&common.spec)?;
            let (_, sol) = proxy(&spec, nodes)?;
            sol.write_csv(open_out(common.out.as_deref())?, samples)?;
            Ok(format!(
                "solve-closed: d={} T={} intervals={} C(0)={:.10}",
                spec.d(),
                spec.horizon(),
                sol.intervals(),
                sol.eval_c(0.0)?
            ))
        }
        Command::SolveExact {
            common,
            dt,
            keep_every,
        } => {
            let spec = load(&common.spec)?;
            let th = exact::solve_hj(
                &spec,
                ExactOptions {
                    dt,
                    keep_every,
                    ..Default::default()
                },
            )?;
            th.write_csv(open_out(common.out.as_deref())?)?;
            let zero = vec![0.0; spec.d()];
            Ok(format!(
                "solve-exact: states={} nodes={} theta(0,0)={:.10}",
                th.grid().len(),
                th.times().len(),
                th.query_theta(0.0, &zero)?
            ))
        }
        Command::Quotes {
            common,
            t,
            inv,
            source,
            dt,
            paths,
            seed,
        } => {
            let spec = load(&common.spec)?;
            let q = inventory(&spec, &inv.q)?;
            let qs: QuoteSet = match source {
                Source::Proxy => {
                    let (_, sol) = proxy(&spec, SolveOptions::default().nodes)?;
                    quotes::proxy_quotes(&sol, &spec, t, &q)?
                }
                Source::Exact => quotes::greedy_quotes(&exact_grid(&spec, dt)?, &spec, t, &q)?,
                Source::Corrected => {
                    let seed = seed.ok_or_else(|| {
                        Error::Validation("--seed is required for the corrected source".into())
                    })?;
                    let (coeffs, sol) = proxy(&spec, SolveOptions::default().nodes)?;
                    let src = CorrectedTheta {
                        spec: &spec,
                        coeffs: &coeffs,
                        sol: &sol,
                        opts: McOptions::new(paths, seed),
                    };
                    quotes::greedy_quotes(&src, &spec, t, &q)?
                }
            };
            qs.write_csv(open_out(common.out.as_deref())?, &reference_prices(&spec))?;
            let quoted = qs.quotes.iter().filter(|x| x.offer.offset().is_some()).count();
            Ok(format!("quotes: t={t} q={q:?} quoted={quoted}/{}", qs.quotes.len()))
        }
        Command::Asymptotic { common, inv } => {
            let spec = load(&common.spec)?;
            let q = inventory(&spec, &inv.q)?;
            spec.check_inventory(&q)?;
            let (_, sol) = proxy(&spec, SolveOptions::default().nodes)?;
            let lim = sol.asymptotics();
            let qs = if lim.drift_in_image {
                Some(quotes::asymptotic_quotes(&lim, &spec, &q)?)
            } else {
                None
            };
            let ss = quotes::spread_skew(&lim, &spec, &q).ok();
            let v = json!({
                "q": q,
                "a_inf": matrix_json(&lim.a_inf),
                "gamma_matrix": matrix_json(&lim.gamma_matrix),
                "b_inf": lim.b_inf.as_ref().map(|b| b.iter().copied().collect::<Vec<_>>()),
                "c_rate": lim.c_rate,
                "drift_in_image": lim.drift_in_image,
                "quotes": qs.map(|x| x.quotes),
                "spread_skew": ss,
            });
            write_json(common.out.as_deref(), &v)?;
            Ok(format!(
                "asymptotic: drift_in_image={} c_rate={:?}",
                lim.drift_in_image, lim.c_rate
            ))
        }
        Command::McCorrect {
            common,
            paths,
            seed,
            point,
            steps,
            no_gate,
        } => {
            let spec = load(&common.spec)?;
            let (t, q) = point
                .split_first()
                .ok_or_else(|| Error::Validation("--point needs t and q".into()))?;
            let q = inventory(&spec, q)?;
            let (coeffs, sol) = proxy(&spec, SolveOptions::default().nodes)?;
            let opts = McOptions {
                paths,
                seed,
                steps,
                gate: !no_gate,
            };
            let est = mc::estimate_eta(&spec, &coeffs, &sol, *t, &q, opts)?;
            let proxy_theta = sol.theta(*t, &q)?;
            let mut v = serde_json::to_value(&est)?;
            v["theta_proxy"] = json!(proxy_theta);
            v["theta_corrected"] = json!(mc::corrected_theta(&sol, &est)?);
            write_json(common.out.as_deref(), &v)?;
            Ok(format!(
                "mc-correct: mean={:.6e} stderr={:.3e} n={} clamp_events={}",
                est.mean, est.stderr, est.paths, est.clamp_events
            ))
        }
        Command::Simulate {
            common,
            strategy: which,
            offset,
            paths,
            seed,
            summary,
            dt,
        } => {
            let spec = load(&common.spec)?;
            let strat = strategy(&spec, which, offset, dt)?;
            let mut opts = SimOptions::new(paths, seed);
            opts.record_trades = true;
            let results = sim::simulate(&spec, &strat, &opts)?;
            let sum = sim::summarize(&spec, &strat, seed, &results);
            match &common.out {
                Some(p) => sim::write_trades_csv(&results, open_out(Some(p))?)?,
                None if summary.is_some() => sim::write_trades_csv(&results, open_out(None)?)?,
                None => {}
            }
            write_json(summary.as_deref(), &serde_json::to_value(&sum)?)?;
            Ok(format!(
                "simulate: strategy={} paths={} objective={:.6} ± {:.6}",
                sum.strategy, paths, sum.objective.mean, sum.objective.stderr
            ))
        }
        Command::Compare {
            common,
            paths,
            seed,
            strategies,
            dt,
        } => {
            let spec = load(&common.spec)?;
            if strategies.contains(&Strategy::GreedyExact) {
                InventoryGrid::new(&spec, exact::DEFAULT_STATE_CAP)?;
            }
            let mut rows = Vec::new();
            for &which in &strategies {
                let strat = strategy(&spec, which, None, dt)?;
                let results = sim::simulate(&spec, &strat, &SimOptions::new(paths, seed))?;
                rows.push(serde_json::to_value(sim::summarize(&spec, &strat, seed, &results))?);
            }
            let v = json!({
                "experiment": "simulated head-to-head comparison on common seeds",
                "paths": paths,
                "seed": seed,
                "objective": format!("{:?}", spec.objective()),
                "strategies": rows,
            });
            write_json(common.out.as_deref(), &v)?;
            let best = rows
                .iter()
                .max_by(|a, b| {
                    let m = |x: &Value| x["objective"]["mean"].as_f64().unwrap_or(f64::MIN);
                    m(a).total_cmp(&m(b))
                })
                .and_then(|r| r["strategy"].as_str().map(str::to_string))
                .unwrap_or_default();
            Ok(format!("compare: {} strategies, best={best}", rows.len()))
        }
    }
}
