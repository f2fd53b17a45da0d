//! Quotes derived from a value function.
//!
//! The greedy quote for a fill of size `z` on the bid side of asset `i` is
//! `δ*(p)` with `p = (θ(t,q) − θ(t,q + z eᵢ) + c) / z`, and symmetrically on
//! the ask side. Fills that would breach a risk limit are withdrawn.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::closedform::{fmt, Asymptotics, RiccatiSolution};
use crate::error::{Error, Result};
use crate::exact::ThetaGrid;
use crate::hamiltonian;
use crate::model::{CheckedSpec, Channel, Side};

pub use crate::hamiltonian::delta_star;

/// Anything that can evaluate `θ(t, q)`.
pub trait ThetaSource {
    fn theta(&self, t: f64, q: &[f64]) -> Result<f64>;
}

impl ThetaSource for RiccatiSolution {
    fn theta(&self, t: f64, q: &[f64]) -> Result<f64> {
        RiccatiSolution::theta(self, t, q)
    }
}

impl ThetaSource for ThetaGrid {
    fn theta(&self, t: f64, q: &[f64]) -> Result<f64> {
        self.query_theta(t, q)
    }
}

/// Quoted offset, or withdrawal at a risk limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Offer {
    Quoted(f64),
    Withdrawn,
}

impl Offer {
    pub fn offset(self) -> Option<f64> {
        match self {
            Offer::Quoted(d) => Some(d),
            Offer::Withdrawn => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quote {
    pub asset: usize,
    pub tier: usize,
    pub side: Side,
    pub size: f64,
    pub offer: Offer,
}

impl Quote {
    /// Quoted price around reference price `s`: `s − δ` on the bid, `s + δ` on the ask.
    pub fn price(&self, s: f64) -> Option<f64> {
        self.offer.offset().map(|d| match self.side {
            Side::Bid => s - d,
            Side::Ask => s + d,
        })
    }
}

/// Quotes for every channel, in [`CheckedSpec::channels`] order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuoteSet {
    pub t: f64,
    pub q: Vec<f64>,
    pub quotes: Vec<Quote>,
}

impl QuoteSet {
    pub fn find(&self, asset: usize, tier: usize, side: Side, size: f64) -> Option<&Quote> {
        self.quotes
            .iter()
            .find(|x| x.asset == asset && x.tier == tier && x.side == side && x.size == size)
    }

    /// Writes `t, asset, tier, size, side, offset, price, gated`, with
    /// prices quoted around `reference` (one price per asset).
    pub fn write_csv<W: Write>(&self, out: W, reference: &[f64]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "asset", "tier", "size", "side", "offset", "price", "gated"])?;
        for x in &self.quotes {
            let (off, price) = match x.offer {
                Offer::Quoted(d) => (fmt(d), fmt(x.price(reference[x.asset]).expect("quoted"))),
                Offer::Withdrawn => (String::new(), String::new()),
            };
            w.write_record([
                fmt(self.t),
                x.asset.to_string(),
                x.tier.to_string(),
                fmt(x.size),
                x.side.as_str().to_string(),
                off,
                price,
                (x.offer == Offer::Withdrawn).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

fn build<F>(spec: &CheckedSpec, t: f64, q: &[f64], mut p_of: F) -> Result<QuoteSet>
where
    F: FnMut(&Channel<'_>) -> Result<f64>,
{
    spec.check_inventory(q)?;
    let xi = spec.xi();
    let floor = spec.delta_floor();
    let mut quotes = Vec::new();
    for c in spec.channels() {
        let offer = if spec.fill_allowed(q, c.asset, c.side, c.size) {
            let p = p_of(&c)?;
            Offer::Quoted(delta_star(c.curve, xi, c.size, p, floor)?)
        } else {
            Offer::Withdrawn
        };
        quotes.push(Quote {
            asset: c.asset,
            tier: c.tier,
            side: c.side,
            size: c.size,
            offer,
        });
    }
    Ok(QuoteSet {
        t,
        q: q.to_vec(),
        quotes,
    })
}

/// Greedy quotes from finite differences of any value function.
pub fn greedy_quotes<S: ThetaSource + ?Sized>(
    source: &S,
    spec: &CheckedSpec,
    t: f64,
    q: &[f64],
) -> Result<QuoteSet> {
    let here = source.theta(t, q)?;
    let mut next = q.to_vec();
    build(spec, t, q, |c| {
        next.copy_from_slice(q);
        next[c.asset] += c.side.inventory_sign() * c.size;
        Ok((here - source.theta(t, &next)? + c.cost) / c.size)
    })
}

/// `p` for a channel when `θ = −qᵀAq − qᵀB − C`.
pub fn quadratic_p(a: &DMatrix<f64>, b: &DVector<f64>, aq: &DVector<f64>, c: &Channel<'_>) -> f64 {
    let i = c.asset;
    let z = c.size;
    let sign = c.side.inventory_sign();
    sign * (2.0 * aq[i] + b[i]) + z * a[(i, i)] + c.cost / z
}

/// Greedy quotes from `(A, B)` directly; equal to [`greedy_quotes`] on the proxy.
pub fn quadratic_quotes(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    spec: &CheckedSpec,
    t: f64,
    q: &[f64],
) -> Result<QuoteSet> {
    let aq = a * DVector::from_column_slice(q);
    build(spec, t, q, |c| Ok(quadratic_p(a, b, &aq, c)))
}

/// Greedy quotes of the closed-form proxy at `(t, q)`.
pub fn proxy_quotes(sol: &RiccatiSolution, spec: &CheckedSpec, t: f64, q: &[f64]) -> Result<QuoteSet> {
    quadratic_quotes(&sol.eval_a(t)?, &sol.eval_b(t)?, spec, t, q)
}

/// Time-independent quotes from the ergodic limits.
pub fn asymptotic_quotes(lim: &Asymptotics, spec: &CheckedSpec, q: &[f64]) -> Result<QuoteSet> {
    let b = lim.b_inf.as_ref().ok_or_else(|| {
        Error::Unsupported("drift is not in the image of the risk matrix; B has no limit".into())
    })?;
    quadratic_quotes(&lim.a_inf, b, spec, f64::NAN, q)
}

/// Half-spread and mid-quote skew of the limiting quotes for one size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadSkew {
    pub asset: usize,
    pub tier: usize,
    pub size: f64,
    /// `(δᵇ + δᵃ) / 2`.
    pub half_spread: f64,
    /// `(δᵃ − δᵇ) / 2`, the shift of the mid-quote from the reference price.
    pub skew: f64,
}

/// Spread/skew decomposition of the limiting quotes.
///
/// Requires exponential intensities with identical bid and ask flows in
/// every tier; then
/// `half_spread = ½√γ z Γᵢᵢ + c/z + δ₀(z)` and
/// `skew = −√γ (Γq)ᵢ + (D₊^{-1/2} Â⁺ D₊^{1/2} μ)ᵢ`.
pub fn spread_skew(lim: &Asymptotics, spec: &CheckedSpec, q: &[f64]) -> Result<Vec<SpreadSkew>> {
    spec.check_inventory(q)?;
    let xi = spec.xi();
    let g = &lim.gamma_matrix;
    let gq = g * DVector::from_column_slice(q);
    let mut out = Vec::new();
    for i in 0..spec.d() {
        for (n, tier) in spec.tiers(i).iter().enumerate() {
            if !tier.is_symmetric() || tier.bid.intensity.as_exponential().is_none() {
                return Err(Error::Unsupported(format!(
                    "spread/skew form needs symmetric exponential intensities (asset {i}, tier {n})"
                )));
            }
            let (a, k) = tier.bid.intensity.as_exponential().expect("checked");
            for atom in &tier.bid.sizes.atoms {
                let z = atom.size;
                let base = hamiltonian::ham_exponential(a, k, xi, z, 0.0).argmax;
                out.push(SpreadSkew {
                    asset: i,
                    tier: n,
                    size: z,
                    half_spread: 0.5 * lim.sqrt_gamma * z * g[(i, i)] + tier.bid.fixed_cost / z + base,
                    skew: -lim.sqrt_gamma * gq[i] + lim.drift_skew[i],
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::RiccatiSolution;
    use crate::model::{AssetSpec, MarketSpec, Objective};

    fn spec() -> CheckedSpec {
        MarketSpec {
            assets: vec![
                AssetSpec::exponential(0.3, 1.0, 4.0, 1.0, 1.0),
                AssetSpec::exponential(0.2, 1.0, 4.0, 2.0, 1.5),
            ],
            correlation: vec![vec![1.0, 0.6], vec![0.6, 1.0]],
            gamma: 0.5,
            objective: Objective::ModelA,
            horizon: 2.0,
            tiers: None,
            drift: Some(vec![0.01, -0.02]),
            delta_floor: None,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn proxy_quotes_match_greedy_on_proxy() {
        let spec = spec();
        let sol = RiccatiSolution::from_spec(&spec).unwrap();
        for q in [[0.0, 0.0], [2.0, -1.0], [-3.0, 3.0]] {
            let a = greedy_quotes(&sol, &spec, 0.5, &q).unwrap();
            let b = proxy_quotes(&sol, &spec, 0.5, &q).unwrap();
            for (x, y) in a.quotes.iter().zip(&b.quotes) {
                let (dx, dy) = (x.offer.offset().unwrap(), y.offer.offset().unwrap());
                assert!((dx - dy).abs() < 1e-9, "{dx} vs {dy}");
            }
        }
    }

    #[test]
    fn withdraws_at_limits() {
        let spec = spec();
        let sol = RiccatiSolution::from_spec(&spec).unwrap();
        let qs = proxy_quotes(&sol, &spec, 0.0, &[4.0, -4.0]).unwrap();
        assert_eq!(qs.find(0, 0, Side::Bid, 1.0).unwrap().offer, Offer::Withdrawn);
        assert!(qs.find(0, 0, Side::Ask, 1.0).unwrap().offer.offset().is_some());
        assert_eq!(qs.find(1, 0, Side::Ask, 1.0).unwrap().offer, Offer::Withdrawn);
        assert!(proxy_quotes(&sol, &spec, 0.0, &[5.0, 0.0]).is_err());
    }

    #[test]
    fn spread_skew_matches_asymptotic_quotes() {
        let spec = spec();
        let sol = RiccatiSolution::from_spec(&spec).unwrap();
        let lim = sol.asymptotics();
        let q = [1.0, -2.0];
        let qs = asymptotic_quotes(&lim, &spec, &q).unwrap();
        for ss in spread_skew(&lim, &spec, &q).unwrap() {
            let b = qs.find(ss.asset, 0, Side::Bid, ss.size).unwrap().offer.offset().unwrap();
            let a = qs.find(ss.asset, 0, Side::Ask, ss.size).unwrap().offer.offset().unwrap();
            assert!((0.5 * (a + b) - ss.half_spread).abs() < 1e-12);
            assert!((0.5 * (a - b) - ss.skew).abs() < 1e-12);
        }
    }
}
