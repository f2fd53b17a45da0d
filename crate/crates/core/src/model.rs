//! Market specification: assets, correlations, intensity curves, client
//! tiers, and validation.
//!
//! A [`MarketSpec`] is the serde-facing document. [`MarketSpec::validate`]
//! turns it into an immutable [`CheckedSpec`], in which every asset carries
//! an explicit list of tiers: a spec written in the single-size form (one
//! intensity per side, fixed trade size, no costs) is stored as one tier
//! with a Dirac size distribution and zero fixed costs.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on `Σ weights = 1` for size distributions.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
const LATTICE_TOL: f64 = 1e-9;

/// Objective of the market maker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Expected CARA utility of terminal mark-to-market wealth.
    #[serde(rename = "model_a", alias = "A", alias = "a")]
    ModelA,
    /// Expected PnL minus a running quadratic inventory penalty.
    #[serde(rename = "model_b", alias = "B", alias = "b")]
    ModelB,
}

/// Bid (market maker buys) or ask (market maker sells).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Bid, Side::Ask];

    /// Direction of the inventory change caused by a fill on this side.
    pub fn inventory_sign(self) -> f64 {
        match self {
            Side::Bid => 1.0,
            Side::Ask => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

/// Execution intensity `Λ(δ)` as a function of the quote offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityCurve {
    /// `Λ(δ) = scale · exp(−decay · δ)`.
    Exponential { scale: f64, decay: f64 },
    /// `Λ(δ) = scale / (1 + exp(steepness · (δ − center)))`.
    Logistic {
        scale: f64,
        steepness: f64,
        #[serde(default)]
        center: f64,
    },
    /// Sampled curve with monotone cubic interpolation.
    Tabulated(TabulatedCurve),
}

impl IntensityCurve {
    pub fn exponential(scale: f64, decay: f64) -> Self {
        IntensityCurve::Exponential { scale, decay }
    }

    pub fn value(&self, delta: f64) -> f64 {
        match *self {
            IntensityCurve::Exponential { scale, decay } => scale * (-decay * delta).exp(),
            IntensityCurve::Logistic {
                scale,
                steepness,
                center,
            } => {
                let x = steepness * (delta - center);
                if x > 0.0 {
                    let e = (-x).exp();
                    scale * e / (1.0 + e)
                } else {
                    scale / (1.0 + x.exp())
                }
            }
            IntensityCurve::Tabulated(ref t) => t.value(delta),
        }
    }

    /// `(scale, decay)` for exponential curves.
    pub fn as_exponential(&self) -> Option<(f64, f64)> {
        match *self {
            IntensityCurve::Exponential { scale, decay } => Some((scale, decay)),
            _ => None,
        }
    }

    /// Characteristic offset scale, used to size finite-difference steps.
    pub fn length_scale(&self) -> f64 {
        match *self {
            IntensityCurve::Exponential { decay, .. } => 1.0 / decay,
            IntensityCurve::Logistic { steepness, .. } => 1.0 / steepness,
            IntensityCurve::Tabulated(_) => 1.0,
        }
    }

    fn validate(&self, ctx: &str) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            IntensityCurve::Exponential { scale, decay } => {
                if !ok(scale) || !ok(decay) {
                    return Err(Error::Validation(format!(
                        "{ctx}: exponential intensity needs scale > 0 and decay > 0"
                    )));
                }
            }
            IntensityCurve::Logistic {
                scale,
                steepness,
                center,
            } => {
                if !ok(scale) || !ok(steepness) || !center.is_finite() {
                    return Err(Error::Validation(format!(
                        "{ctx}: logistic intensity needs scale > 0, steepness > 0, finite center"
                    )));
                }
            }
            IntensityCurve::Tabulated(_) => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawTable {
    points: Vec<[f64; 2]>,
}

/// Strictly decreasing sampled intensity curve.
///
/// Between samples the curve is a Fritsch–Carlson monotone cubic; outside
/// the sampled range it continues as exponentials fitted to the first two
/// and last two samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct TabulatedCurve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    left_rate: f64,
    right_rate: f64,
}

impl PartialEq for TabulatedCurve {
    fn eq(&self, other: &Self) -> bool {
        self.xs == other.xs && self.ys == other.ys
    }
}

impl TryFrom<RawTable> for TabulatedCurve {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Self> {
        TabulatedCurve::new(raw.points.iter().map(|p| (p[0], p[1])).collect())
    }
}

impl From<TabulatedCurve> for RawTable {
    fn from(t: TabulatedCurve) -> Self {
        RawTable {
            points: t.xs.iter().zip(&t.ys).map(|(&x, &y)| [x, y]).collect(),
        }
    }
}

impl TabulatedCurve {
    /// Builds the interpolant from `(δ, Λ)` samples.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Validation(
                "tabulated intensity needs at least two samples".into(),
            ));
        }
        for w in points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if !(x1 > x0) {
                return Err(Error::Validation(format!(
                    "tabulated intensity offsets must be strictly increasing ({x0} then {x1})"
                )));
            }
            if !(y1 < y0) {
                return Err(Error::Validation(format!(
                    "tabulated intensity must be strictly decreasing ({y0} then {y1})"
                )));
            }
        }
        if points.iter().any(|&(x, y)| !x.is_finite() || !(y > 0.0) || !y.is_finite()) {
            return Err(Error::Validation(
                "tabulated intensity samples must be finite with positive values".into(),
            ));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = xs.len();
        let secant: Vec<f64> = (0..n - 1)
            .map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]))
            .collect();
        let left_rate = (ys[0] / ys[1]).ln() / (xs[1] - xs[0]);
        let right_rate = (ys[n - 2] / ys[n - 1]).ln() / (xs[n - 1] - xs[n - 2]);
        let mut slopes = vec![0.0; n];
        slopes[0] = -left_rate * ys[0];
        slopes[n - 1] = -right_rate * ys[n - 1];
        for k in 1..n - 1 {
            slopes[k] = 0.5 * (secant[k - 1] + secant[k]);
        }
        for k in 0..n - 1 {
            let a = slopes[k] / secant[k];
            let b = slopes[k + 1] / secant[k];
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slopes[k] = tau * a * secant[k];
                slopes[k + 1] = tau * b * secant[k];
            }
        }
        Ok(TabulatedCurve {
            xs,
            ys,
            slopes,
            left_rate,
            right_rate,
        })
    }

    pub fn value(&self, delta: f64) -> f64 {
        let n = self.xs.len();
        if delta <= self.xs[0] {
            return self.ys[0] * (self.left_rate * (self.xs[0] - delta)).exp();
        }
        if delta >= self.xs[n - 1] {
            return self.ys[n - 1] * (-self.right_rate * (delta - self.xs[n - 1])).exp();
        }
        let k = self.xs.partition_point(|&x| x <= delta) - 1;
        let h = self.xs[k + 1] - self.xs[k];
        let t = (delta - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[k]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[k]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[k + 1]
            + (t3 - t2) * h * self.slopes[k + 1]
    }
}

/// One atom of a discrete request-size distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeAtom {
    pub size: f64,
    pub weight: f64,
}

/// Finite distribution of request sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SizeDist {
    pub atoms: Vec<SizeAtom>,
}

impl SizeDist {
    pub fn dirac(size: f64) -> Self {
        SizeDist {
            atoms: vec![SizeAtom { size, weight: 1.0 }],
        }
    }

    pub fn is_dirac_at(&self, size: f64) -> bool {
        self.atoms.len() == 1 && self.atoms[0].size == size && self.atoms[0].weight == 1.0
    }

    fn validate(&self, ctx: &str) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::Validation(format!("{ctx}: empty size distribution")));
        }
        for a in &self.atoms {
            if !(a.size > 0.0) || !a.size.is_finite() {
                return Err(Error::Validation(format!(
                    "{ctx}: request sizes must be positive, got {}",
                    a.size
                )));
            }
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::Validation(format!(
                    "{ctx}: size weights must be positive, got {}",
                    a.weight
                )));
            }
        }
        let total: f64 = self.atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Validation(format!(
                "{ctx}: size distribution weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Flow on one side of one tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideSpec {
    pub intensity: IntensityCurve,
    pub sizes: SizeDist,
    #[serde(default)]
    pub fixed_cost: f64,
}

/// A client tier: independent bid and ask flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub bid: SideSpec,
    pub ask: SideSpec,
}

impl TierSpec {
    pub fn side(&self, side: Side) -> &SideSpec {
        match side {
            Side::Bid => &self.bid,
            Side::Ask => &self.ask,
        }
    }

    /// Tier whose bid and ask flows are identical.
    pub fn symmetric(intensity: IntensityCurve, sizes: SizeDist, fixed_cost: f64) -> Self {
        let s = SideSpec {
            intensity,
            sizes,
            fixed_cost,
        };
        TierSpec {
            bid: s.clone(),
            ask: s,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.bid == self.ask
    }
}

/// Per-asset parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Volatility, price units per square-root time unit.
    pub sigma: f64,
    /// Trade size (lot) in asset units; inventories live on multiples of it.
    pub size: f64,
    /// Risk limit, a multiple of `size`.
    pub risk_limit: f64,
    /// Initial reference price used by the simulator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    /// Shorthand for identical bid and ask intensities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<IntensityCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid: Option<IntensityCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ask: Option<IntensityCurve>,
}

impl AssetSpec {
    /// Asset with symmetric exponential intensities.
    pub fn exponential(sigma: f64, size: f64, risk_limit: f64, scale: f64, decay: f64) -> Self {
        AssetSpec {
            name: None,
            sigma,
            size,
            risk_limit,
            price: None,
            intensity: Some(IntensityCurve::exponential(scale, decay)),
            bid: None,
            ask: None,
        }
    }

    fn side_curves(&self, i: usize) -> Result<(IntensityCurve, IntensityCurve)> {
        match (&self.intensity, &self.bid, &self.ask) {
            (Some(c), None, None) => Ok((c.clone(), c.clone())),
            (None, Some(b), Some(a)) => Ok((b.clone(), a.clone())),
            (None, None, None) => Err(Error::Validation(format!(
                "asset {i}: no intensity given (use `intensity`, `bid`/`ask`, or `tiers`)"
            ))),
            _ => Err(Error::Validation(format!(
                "asset {i}: give either `intensity` or both `bid` and `ask`"
            ))),
        }
    }

    fn has_curves(&self) -> bool {
        self.intensity.is_some() || self.bid.is_some() || self.ask.is_some()
    }
}

/// Serde-facing market specification document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub assets: Vec<AssetSpec>,
    pub correlation: Vec<Vec<f64>>,
    pub gamma: f64,
    pub objective: Objective,
    pub horizon: f64,
    /// Per-asset client tiers; when present, asset-level intensities must be absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiers: Option<Vec<Vec<TierSpec>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    /// Lower bound `−δ∞` on quote offsets is given as the positive `δ∞`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_floor: Option<f64>,
}

impl MarketSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Rewrites asset-level intensities as explicit single tiers (Dirac
    /// sizes at the lot, zero fixed costs). Specs that already carry tiers
    /// are returned unchanged, so the map is idempotent.
    pub fn canonical(&self) -> Result<MarketSpec> {
        if self.tiers.is_some() {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        let mut tiers = Vec::with_capacity(self.assets.len());
        for (i, a) in self.assets.iter().enumerate() {
            let (b, k) = a.side_curves(i)?;
            tiers.push(vec![TierSpec {
                bid: SideSpec {
                    intensity: b,
                    sizes: SizeDist::dirac(a.size),
                    fixed_cost: 0.0,
                },
                ask: SideSpec {
                    intensity: k,
                    sizes: SizeDist::dirac(a.size),
                    fixed_cost: 0.0,
                },
            }]);
        }
        for a in &mut out.assets {
            a.intensity = None;
            a.bid = None;
            a.ask = None;
        }
        out.tiers = Some(tiers);
        Ok(out)
    }

    /// Validates the spec and assembles the covariance matrix.
    pub fn validate(&self) -> Result<CheckedSpec> {
        let d = self.assets.len();
        if d == 0 {
            return Err(Error::Validation("at least one asset is required".into()));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Validation(format!(
                "risk aversion must be positive, got {}",
                self.gamma
            )));
        }
        if self.gamma == 0.0 && self.objective == Objective::ModelA {
            return Err(Error::Validation(
                "risk aversion must be positive for model A".into(),
            ));
        }
        if !self.horizon.is_finite() || self.horizon < 0.0 {
            return Err(Error::Validation(format!(
                "horizon must be non-negative, got {}",
                self.horizon
            )));
        }
        if let Some(f) = self.delta_floor {
            if !(f > 0.0) {
                return Err(Error::Validation(format!(
                    "delta_floor must be positive, got {f}"
                )));
            }
        }

        let mut sigma = Vec::with_capacity(d);
        let mut lot = Vec::with_capacity(d);
        let mut limit = Vec::with_capacity(d);
        let mut price = Vec::with_capacity(d);
        for (i, a) in self.assets.iter().enumerate() {
            if !(a.sigma > 0.0) || !a.sigma.is_finite() {
                return Err(Error::Validation(format!(
                    "asset {i}: volatility must be positive, got {}",
                    a.sigma
                )));
            }
            if !(a.size > 0.0) || !a.size.is_finite() {
                return Err(Error::Validation(format!(
                    "asset {i}: trade size must be positive, got {}",
                    a.size
                )));
            }
            if !(a.risk_limit > 0.0) || !a.risk_limit.is_finite() {
                return Err(Error::Validation(format!(
                    "asset {i}: risk limit must be positive, got {}",
                    a.risk_limit
                )));
            }
            if !is_multiple(a.risk_limit, a.size) {
                return Err(Error::Validation(format!(
                    "asset {i}: risk limit not a multiple of trade size ({} vs {})",
                    a.risk_limit, a.size
                )));
            }
            let p = a.price.unwrap_or(100.0);
            if !p.is_finite() {
                return Err(Error::Validation(format!("asset {i}: price must be finite")));
            }
            sigma.push(a.sigma);
            lot.push(a.size);
            limit.push(a.risk_limit);
            price.push(p);
        }

        let rho = self.correlation_matrix()?;
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] = rho[(i, j)] * sigma[i] * sigma[j];
            }
        }

        let drift = match &self.drift {
            None => DVector::zeros(d),
            Some(m) => {
                if m.len() != d || m.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Validation(format!(
                        "drift must be {d} finite numbers"
                    )));
                }
                DVector::from_column_slice(m)
            }
        };

        let tiers = match &self.tiers {
            None => {
                let canon = self.canonical()?;
                canon.tiers.expect("canonical spec has tiers")
            }
            Some(tiers) => {
                if tiers.len() != d {
                    return Err(Error::Validation(format!(
                        "expected tiers for {d} assets, got {}",
                        tiers.len()
                    )));
                }
                for (i, a) in self.assets.iter().enumerate() {
                    if a.has_curves() {
                        return Err(Error::Validation(format!(
                            "asset {i}: asset-level intensities cannot be combined with tiers"
                        )));
                    }
                }
                tiers.clone()
            }
        };
        for (i, asset_tiers) in tiers.iter().enumerate() {
            if asset_tiers.is_empty() {
                return Err(Error::Validation(format!("asset {i}: empty tier list")));
            }
            for (n, tier) in asset_tiers.iter().enumerate() {
                for side in Side::BOTH {
                    let s = tier.side(side);
                    let ctx = format!("asset {i} tier {n} {}", side.as_str());
                    s.intensity.validate(&ctx)?;
                    s.sizes.validate(&ctx)?;
                    if !s.fixed_cost.is_finite() || s.fixed_cost < 0.0 {
                        return Err(Error::Validation(format!(
                            "{ctx}: fixed cost must be finite and non-negative"
                        )));
                    }
                }
            }
        }

        let reduces_to_base = tiers.iter().zip(&lot).all(|(ts, &z)| {
            ts.len() == 1
                && Side::BOTH.iter().all(|&s| {
                    let side = ts[0].side(s);
                    side.sizes.is_dirac_at(z) && side.fixed_cost == 0.0
                })
        });
        if self.tiers.is_some() && !reduces_to_base && self.delta_floor.is_none() {
            return Err(Error::Validation(
                "delta_floor is required when tiers, size distributions or fixed costs are used"
                    .into(),
            ));
        }

        Ok(CheckedSpec {
            source: self.clone(),
            sigma,
            correlation: rho,
            covariance: cov,
            drift,
            lot,
            risk_limit: limit,
            price,
            tiers,
        })
    }

    fn correlation_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.assets.len();
        if self.correlation.len() != d || self.correlation.iter().any(|r| r.len() != d) {
            return Err(Error::Validation(format!(
                "correlation must be a {d}x{d} matrix"
            )));
        }
        let rho = DMatrix::from_fn(d, d, |i, j| self.correlation[i][j]);
        for i in 0..d {
            for j in 0..d {
                let r = rho[(i, j)];
                if !r.is_finite() || r.abs() > 1.0 {
                    return Err(Error::Validation(format!(
                        "correlation out of range: rho[{i}][{j}] = {r}"
                    )));
                }
                if (r - rho[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "correlation matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
            if (rho[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "correlation diagonal must be 1, got {}",
                    rho[(i, i)]
                )));
            }
        }
        let spec = linalg::sym_eig(&rho)?;
        let min = spec.eigenvalues[0];
        if min < -linalg::PSD_CLAMP_TOL * spec.max_abs() {
            return Err(Error::Validation(format!(
                "correlation matrix is not positive semi-definite (eigenvalue {min:.3e})"
            )));
        }
        Ok(rho)
    }
}

fn is_multiple(x: f64, unit: f64) -> bool {
    let r = x / unit;
    (r - r.round()).abs() <= LATTICE_TOL * r.abs().max(1.0)
}

/// Number of whole lots in `x`, if `x` is a multiple of `unit`.
pub(crate) fn lots(x: f64, unit: f64) -> Option<i64> {
    is_multiple(x, unit).then(|| (x / unit).round() as i64)
}

/// A validated, immutable market specification.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedSpec {
    source: MarketSpec,
    sigma: Vec<f64>,
    correlation: DMatrix<f64>,
    covariance: DMatrix<f64>,
    drift: DVector<f64>,
    lot: Vec<f64>,
    risk_limit: Vec<f64>,
    price: Vec<f64>,
    tiers: Vec<Vec<TierSpec>>,
}

/// One independent order-flow stream: asset × tier × side × size atom.
#[derive(Debug, Clone, Copy)]
pub struct Channel<'a> {
    pub asset: usize,
    pub tier: usize,
    pub side: Side,
    pub atom: usize,
    pub size: f64,
    pub weight: f64,
    pub cost: f64,
    pub curve: &'a IntensityCurve,
}

impl CheckedSpec {
    pub fn d(&self) -> usize {
        self.sigma.len()
    }

    /// The document this spec was validated from; re-validating it yields an equal spec.
    pub fn to_spec(&self) -> MarketSpec {
        self.source.clone()
    }

    pub fn gamma(&self) -> f64 {
        self.source.gamma
    }

    pub fn objective(&self) -> Objective {
        self.source.objective
    }

    pub fn horizon(&self) -> f64 {
        self.source.horizon
    }

    pub fn delta_floor(&self) -> Option<f64> {
        self.source.delta_floor
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    /// Covariance matrix `Σ = (ρᵢⱼ σᵢ σⱼ)`.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }

    pub fn lot(&self, asset: usize) -> f64 {
        self.lot[asset]
    }

    pub fn risk_limit(&self, asset: usize) -> f64 {
        self.risk_limit[asset]
    }

    pub fn initial_price(&self, asset: usize) -> f64 {
        self.price[asset]
    }

    pub fn tiers(&self, asset: usize) -> &[TierSpec] {
        &self.tiers[asset]
    }

    /// `ξ = γ` for model A and `ξ = 0` for model B.
    pub fn xi(&self) -> f64 {
        effective_xi(self)
    }

    /// True when bid and ask flows coincide for every tier of every asset.
    pub fn is_side_symmetric(&self) -> bool {
        self.tiers.iter().flatten().all(TierSpec::is_symmetric)
    }

    /// All flow channels in a fixed order (asset, tier, side, atom).
    pub fn channels(&self) -> Vec<Channel<'_>> {
        let mut out = Vec::new();
        for (asset, ts) in self.tiers.iter().enumerate() {
            for (tier, t) in ts.iter().enumerate() {
                for side in Side::BOTH {
                    let s = t.side(side);
                    for (atom, a) in s.sizes.atoms.iter().enumerate() {
                        out.push(Channel {
                            asset,
                            tier,
                            side,
                            atom,
                            size: a.size,
                            weight: a.weight,
                            cost: s.fixed_cost,
                            curve: &s.intensity,
                        });
                    }
                }
            }
        }
        out
    }

    /// Returns `true` if a fill of `size` on `side` keeps asset `asset` within its limit.
    pub fn fill_allowed(&self, q: &[f64], asset: usize, side: Side, size: f64) -> bool {
        let next = q[asset] + side.inventory_sign() * size;
        next.abs() <= self.risk_limit[asset] * (1.0 + LATTICE_TOL) + LATTICE_TOL
    }

    /// Checks `|qᵢ| ≤ Qᵢ` for every asset.
    pub fn check_inventory(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.d()
            || q
                .iter()
                .zip(&self.risk_limit)
                .any(|(x, l)| !x.is_finite() || x.abs() > l * (1.0 + LATTICE_TOL))
        {
            return Err(Error::InventoryOutOfBounds(q.to_vec()));
        }
        Ok(())
    }
}

/// `ξ = γ` for model A and `ξ = 0` for model B.
pub fn effective_xi(spec: &CheckedSpec) -> f64 {
    match spec.objective() {
        Objective::ModelA => spec.gamma(),
        Objective::ModelB => 0.0,
    }
}
