//! Exact value function on the inventory lattice.
//!
//! The value function solves a system of ODEs indexed by inventory states
//! `q ∈ ∏ᵢ {−Qᵢ, …, Qᵢ}` (steps of the lot size), integrated backward from
//! `θ(T, ·) = 0` with classical RK4. Fills that would leave the lattice are
//! switched off.

use std::io::Write;

use rayon::prelude::*;

use crate::closedform::fmt;
use crate::error::{Error, Result};
use crate::hamiltonian::hamiltonian;
use crate::model::{lots, CheckedSpec, IntensityCurve};

/// Default cap on the number of lattice states.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;
/// Default number of RK4 steps over the horizon.
pub const DEFAULT_STEPS: usize = 2000;

/// Dense indexing of the inventory lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct InventoryGrid {
    lot: Vec<f64>,
    half: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
}

impl InventoryGrid {
    pub fn new(spec: &CheckedSpec, cap: usize) -> Result<Self> {
        let d = spec.d();
        let mut lot = Vec::with_capacity(d);
        let mut half = Vec::with_capacity(d);
        let mut strides = Vec::with_capacity(d);
        let mut len: usize = 1;
        for i in 0..d {
            let z = spec.lot(i);
            let h = lots(spec.risk_limit(i), z).expect("validated");
            lot.push(z);
            half.push(h);
            strides.push(len);
            len = len
                .checked_mul((2 * h + 1) as usize)
                .filter(|&n| n <= cap)
                .ok_or(Error::TooManyStates {
                    count: usize::MAX.min(len.saturating_mul((2 * h + 1) as usize)),
                    cap,
                })?;
        }
        Ok(InventoryGrid {
            lot,
            half,
            strides,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn d(&self) -> usize {
        self.lot.len()
    }

    /// Inventory in lots for a state index.
    pub fn lots_of(&self, idx: usize) -> Vec<i64> {
        (0..self.d())
            .map(|i| ((idx / self.strides[i]) % (2 * self.half[i] + 1) as usize) as i64 - self.half[i])
            .collect()
    }

    pub fn state(&self, idx: usize) -> Vec<f64> {
        self.lots_of(idx)
            .iter()
            .zip(&self.lot)
            .map(|(&k, &z)| k as f64 * z)
            .collect()
    }

    pub fn index_of(&self, q: &[f64]) -> Result<usize> {
        if q.len() != self.d() {
            return Err(Error::OffLattice(q.to_vec()));
        }
        let mut idx = 0;
        for i in 0..self.d() {
            let k = lots(q[i], self.lot[i]).ok_or_else(|| Error::OffLattice(q.to_vec()))?;
            if k.abs() > self.half[i] {
                return Err(Error::InventoryOutOfBounds(q.to_vec()));
            }
            idx += (k + self.half[i]) as usize * self.strides[i];
        }
        Ok(idx)
    }

    /// State reached by moving `shift` lots in `asset`, if it stays on the lattice.
    pub fn neighbor(&self, idx: usize, asset: usize, shift: i64) -> Option<usize> {
        let n = 2 * self.half[asset] + 1;
        let k = ((idx / self.strides[asset]) % n as usize) as i64;
        let next = k + shift;
        if next < 0 || next >= n {
            return None;
        }
        Some((idx as i64 + shift * self.strides[asset] as i64) as usize)
    }
}

#[derive(Debug, Clone)]
struct LatticeChannel {
    asset: usize,
    shift: i64,
    size: f64,
    weight: f64,
    cost: f64,
    curve: IntensityCurve,
}

/// The lattice ODE system `dθ/dτ = F(θ)`.
#[derive(Debug, Clone)]
pub struct HjSystem {
    grid: InventoryGrid,
    channels: Vec<LatticeChannel>,
    base: Vec<f64>,
    xi: f64,
    floor: Option<f64>,
}

impl HjSystem {
    pub fn new(spec: &CheckedSpec, cap: usize) -> Result<Self> {
        let grid = InventoryGrid::new(spec, cap)?;
        let mut channels = Vec::new();
        for c in spec.channels() {
            let m = lots(c.size, spec.lot(c.asset)).ok_or_else(|| {
                Error::Validation(format!(
                    "asset {}: request size {} is not a multiple of the lot {}",
                    c.asset,
                    c.size,
                    spec.lot(c.asset)
                ))
            })?;
            channels.push(LatticeChannel {
                asset: c.asset,
                shift: (c.side.inventory_sign() as i64) * m,
                size: c.size,
                weight: c.weight,
                cost: c.cost,
                curve: c.curve.clone(),
            });
        }
        let sig = spec.covariance();
        let mu = spec.drift();
        let g = spec.gamma();
        let d = spec.d();
        let base = (0..grid.len())
            .into_par_iter()
            .map(|s| {
                let q = grid.state(s);
                let mut v = 0.0;
                for i in 0..d {
                    v += mu[i] * q[i];
                    for j in 0..d {
                        v -= 0.5 * g * q[i] * sig[(i, j)] * q[j];
                    }
                }
                v
            })
            .collect();
        Ok(HjSystem {
            grid,
            channels,
            base,
            xi: spec.xi(),
            floor: spec.delta_floor(),
        })
    }

    pub fn grid(&self) -> &InventoryGrid {
        &self.grid
    }

    /// Number of fill channels that are active (stay on the lattice) at `state`.
    pub fn active_channels(&self, state: usize) -> usize {
        self.channels
            .iter()
            .filter(|c| self.grid.neighbor(state, c.asset, c.shift).is_some())
            .count()
    }

    fn rhs_at(&self, theta: &[f64], s: usize) -> Result<f64> {
        let mut v = self.base[s];
        for c in &self.channels {
            if let Some(nb) = self.grid.neighbor(s, c.asset, c.shift) {
                let p = (theta[s] - theta[nb] + c.cost) / c.size;
                v += c.weight * c.size * hamiltonian(&c.curve, self.xi, c.size, p, self.floor)?.value;
            }
        }
        Ok(v)
    }

    /// `dθ/dτ` for every state.
    pub fn rhs(&self, theta: &[f64], out: &mut [f64]) -> Result<()> {
        out.par_iter_mut()
            .enumerate()
            .try_for_each(|(s, o)| -> Result<()> {
                *o = self.rhs_at(theta, s)?;
                Ok(())
            })
    }
}

/// Options for [`solve_hj`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Time step; defaults to `T / 2000`.
    pub dt: Option<f64>,
    pub state_cap: usize,
    /// Store every `keep_every`-th time node (the horizon and `t = 0` are always stored).
    pub keep_every: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            dt: None,
            state_cap: DEFAULT_STATE_CAP,
            keep_every: 1,
        }
    }
}

/// Lattice value function at stored times.
#[derive(Debug, Clone)]
pub struct ThetaGrid {
    grid: InventoryGrid,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

/// Integrates the lattice system backward from the horizon.
pub fn solve_hj(spec: &CheckedSpec, opts: ExactOptions) -> Result<ThetaGrid> {
    let sys = HjSystem::new(spec, opts.state_cap)?;
    let horizon = spec.horizon();
    let n_states = sys.grid.len();
    let steps = if horizon == 0.0 {
        0
    } else {
        let dt = opts.dt.unwrap_or(horizon / DEFAULT_STEPS as f64);
        if !(dt > 0.0) {
            return Err(Error::Validation(format!("time step must be positive, got {dt}")));
        }
        ((horizon / dt) - 1e-9).ceil().max(1.0) as usize
    };
    let dt = if steps == 0 { 0.0 } else { horizon / steps as f64 };
    let keep = opts.keep_every.max(1);

    let mut theta = vec![0.0; n_states];
    let mut k1 = vec![0.0; n_states];
    let mut k2 = vec![0.0; n_states];
    let mut k3 = vec![0.0; n_states];
    let mut k4 = vec![0.0; n_states];
    let mut tmp = vec![0.0; n_states];
    let mut times = vec![horizon];
    let mut values = vec![theta.clone()];
    for step in 0..steps {
        sys.rhs(&theta, &mut k1)?;
        axpy(&mut tmp, &theta, 0.5 * dt, &k1);
        sys.rhs(&tmp, &mut k2)?;
        axpy(&mut tmp, &theta, 0.5 * dt, &k2);
        sys.rhs(&tmp, &mut k3)?;
        axpy(&mut tmp, &theta, dt, &k3);
        sys.rhs(&tmp, &mut k4)?;
        theta
            .par_iter_mut()
            .enumerate()
            .for_each(|(s, v)| *v += dt / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]));
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "lattice solution diverged after {} steps",
                step + 1
            )));
        }
        let done = step + 1;
        if done % keep == 0 || done == steps {
            let t = if done == steps { 0.0 } else { horizon - done as f64 * dt };
            times.push(t);
            values.push(theta.clone());
        }
    }
    times.reverse();
    values.reverse();
    Ok(ThetaGrid {
        grid: sys.grid,
        times,
        values,
    })
}

fn axpy(out: &mut [f64], x: &[f64], a: f64, y: &[f64]) {
    out.par_iter_mut()
        .enumerate()
        .for_each(|(i, o)| *o = x[i] + a * y[i]);
}

impl ThetaGrid {
    pub fn grid(&self) -> &InventoryGrid {
        &self.grid
    }

    /// Stored times, ascending.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Values at stored time index `k`, indexed like the grid.
    pub fn values_at(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("at least one time node")
    }

    /// `θ(t, q)`, linear in time between stored nodes.
    pub fn query_theta(&self, t: f64, q: &[f64]) -> Result<f64> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        let s = self.grid.index_of(q)?;
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return Ok(self.values[0][s]);
        }
        if k >= self.times.len() {
            return Ok(self.values[self.times.len() - 1][s]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Ok((1.0 - w) * self.values[k - 1][s] + w * self.values[k][s])
    }

    /// Writes `t, q_0..q_{d-1}, theta` for every stored node and state.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.grid.d();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("q_{i}")));
        header.push("theta".into());
        w.write_record(&header)?;
        for (t, vals) in self.times.iter().zip(&self.values) {
            for (s, v) in vals.iter().enumerate() {
                let mut row = vec![fmt(*t)];
                row.extend(self.grid.state(s).iter().map(|&x| fmt(x)));
                row.push(fmt(*v));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}
