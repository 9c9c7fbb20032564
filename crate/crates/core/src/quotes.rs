//! Quote ingestion, validation and normalization.
//!
//! All bound computations work on the zero-rate canonical form: strikes are
//! replaced by `k · DF(t)` and raw maturities by their ranks `1..n`. Only the
//! order of maturities matters once rates are folded into the strikes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::VALIDATION_TOL;

/// A single observed call quote. In a [`QuoteSurface`] `maturity` is the raw
/// maturity label; in a [`NormalizedSurface`] it is the rank index `1..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub asset: String,
    pub maturity: u32,
    pub strike: f64,
    pub price: f64,
}

/// Raw tabular quote record, as read from the quotes CSV.
#[derive(Debug, Clone, Deserialize)]
pub struct QuoteRecord {
    pub asset: String,
    pub maturity: u32,
    pub strike: f64,
    pub price: f64,
}

/// A validated but not yet normalized set of quotes.
#[derive(Debug, Clone)]
pub struct QuoteSurface {
    pub spots: BTreeMap<String, f64>,
    pub discount_factors: BTreeMap<u32, f64>,
    pub quotes: Vec<Quote>,
    pub maturity_order: Vec<u32>,
}

/// The canonical form every other module consumes: discount factors all 1,
/// maturities a contiguous `1..n` range.
#[derive(Debug, Clone)]
pub struct NormalizedSurface {
    pub spots: BTreeMap<String, f64>,
    pub quotes: Vec<Quote>,
    pub n_maturities: u32,
}

/// Flat-rate convenience: `DF = exp(-r * tau)`.
pub fn discount_factor_from_rate(rate: f64, tau: f64) -> f64 {
    (-rate * tau).exp()
}

/// Build a validated surface from tabular records.
///
/// Exactly duplicated rows collapse to one observation; rows that agree on
/// (asset, maturity, strike) but disagree on price are a contradiction.
pub fn load_surface(
    records: &[QuoteRecord],
    spots: &BTreeMap<String, f64>,
    discount_factors: &BTreeMap<u32, f64>,
) -> Result<QuoteSurface, Error> {
    for (asset, s) in spots {
        if *s < 0.0 {
            return Err(Error::NegativeValue(format!("spot of `{asset}` is {s}")));
        }
    }
    for (t, df) in discount_factors {
        if !(*df > 0.0 && *df <= 1.0) {
            return Err(Error::NegativeValue(format!(
                "discount factor {df} for maturity {t} outside (0,1]"
            )));
        }
    }

    let mut seen: BTreeMap<(String, u32, u64), f64> = BTreeMap::new();
    let mut quotes: Vec<Quote> = Vec::new();
    let mut maturities: BTreeSet<u32> = BTreeSet::new();
    for r in records {
        if r.strike < 0.0 {
            return Err(Error::NegativeValue(format!(
                "strike {} of `{}`",
                r.strike, r.asset
            )));
        }
        if r.price < 0.0 {
            return Err(Error::NegativeValue(format!(
                "price {} of `{}`",
                r.price, r.asset
            )));
        }
        let spot = *spots
            .get(&r.asset)
            .ok_or_else(|| Error::MissingSpot(r.asset.clone()))?;
        if !discount_factors.contains_key(&r.maturity) {
            return Err(Error::MissingDiscountFactor(r.maturity));
        }
        // Strike-0 quotes restate the spot; anything else is arbitrage at ingestion.
        if r.strike == 0.0 && (r.price - spot).abs() > 1e-8 {
            return Err(Error::StrikeZeroMismatch {
                asset: r.asset.clone(),
                price: r.price,
                spot,
            });
        }
        let key = (r.asset.clone(), r.maturity, r.strike.to_bits());
        match seen.get(&key) {
            Some(&p) if p == r.price => continue,
            Some(&p) => {
                return Err(Error::ConflictingDuplicate {
                    asset: r.asset.clone(),
                    maturity: r.maturity,
                    strike: r.strike,
                    a: p,
                    b: r.price,
                })
            }
            None => {
                seen.insert(key, r.price);
                maturities.insert(r.maturity);
                quotes.push(Quote {
                    asset: r.asset.clone(),
                    maturity: r.maturity,
                    strike: r.strike,
                    price: r.price,
                });
            }
        }
    }
    Ok(QuoteSurface {
        spots: spots.clone(),
        discount_factors: discount_factors.clone(),
        quotes,
        maturity_order: maturities.into_iter().collect(),
    })
}

impl QuoteSurface {
    /// Replace strikes by `k · DF(t)` and maturities by rank indices.
    pub fn normalize(&self) -> NormalizedSurface {
        let rank: BTreeMap<u32, u32> = self
            .maturity_order
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, i as u32 + 1))
            .collect();
        let mut quotes: Vec<Quote> = self
            .quotes
            .iter()
            .map(|q| Quote {
                asset: q.asset.clone(),
                maturity: rank[&q.maturity],
                strike: q.strike * self.discount_factors[&q.maturity],
                price: q.price,
            })
            .collect();
        quotes.sort_by(|a, b| {
            (&a.asset, a.maturity)
                .cmp(&(&b.asset, b.maturity))
                .then(a.strike.total_cmp(&b.strike))
        });
        NormalizedSurface {
            spots: self.spots.clone(),
            quotes,
            n_maturities: self.maturity_order.len() as u32,
        }
    }
}

impl NormalizedSurface {
    /// Normalization is idempotent; on an already normalized surface it is
    /// the identity.
    pub fn normalize(&self) -> NormalizedSurface {
        self.clone()
    }

    /// Spot of an asset, if present.
    pub fn spot(&self, asset: &str) -> Result<f64, Error> {
        self.spots
            .get(asset)
            .copied()
            .ok_or_else(|| Error::UnknownAsset(asset.to_string()))
    }

    fn known_asset(&self, asset: &str) -> Result<(), Error> {
        if self.spots.contains_key(asset) {
            Ok(())
        } else {
            Err(Error::UnknownAsset(asset.to_string()))
        }
    }

    /// The set `S_t`: quotes of the asset with maturity exactly `t`, sorted
    /// by strike.
    pub fn slice(&self, asset: &str, t: u32) -> Result<Vec<(f64, f64)>, Error> {
        self.known_asset(asset)?;
        let mut out: Vec<(f64, f64)> = self
            .quotes
            .iter()
            .filter(|q| q.asset == asset && q.maturity == t)
            .map(|q| (q.strike, q.price))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }

    /// The set `S_{>=t}`: quotes of the asset with maturity `t` or later.
    pub fn slice_geq(&self, asset: &str, t: u32) -> Result<Vec<(f64, f64)>, Error> {
        self.known_asset(asset)?;
        let mut out: Vec<(f64, f64)> = self
            .quotes
            .iter()
            .filter(|q| q.asset == asset && q.maturity >= t)
            .map(|q| (q.strike, q.price))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Ok(out)
    }

    /// Quotes of the asset with maturity `t` or later, keeping maturities.
    pub fn quotes_geq(&self, asset: &str, t: u32) -> Vec<&Quote> {
        self.quotes
            .iter()
            .filter(|q| q.asset == asset && q.maturity >= t)
            .collect()
    }

    /// All strikes quoted for the asset at maturities `<= t`, deduplicated.
    pub fn strikes_leq(&self, asset: &str, t: u32) -> Vec<f64> {
        let mut ks: Vec<f64> = self
            .quotes
            .iter()
            .filter(|q| q.asset == asset && q.maturity <= t)
            .map(|q| q.strike)
            .collect();
        ks.sort_by(f64::total_cmp);
        ks.dedup_by(|a, b| (*a - *b).abs() <= VALIDATION_TOL);
        ks
    }
}

fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(rdr: R) -> Result<Vec<T>, Error> {
    let mut reader = csv::Reader::from_reader(rdr);
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        let rec: T = rec.map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        out.push(rec);
    }
    Ok(out)
}

/// Read quote records from `asset,maturity,strike,price` CSV.
pub fn read_quotes_csv(path: &Path) -> Result<Vec<QuoteRecord>, Error> {
    read_csv(std::fs::File::open(path)?)
}

#[derive(Debug, Deserialize)]
struct SpotRecord {
    asset: String,
    spot: f64,
}

/// Read spots from `asset,spot` CSV.
pub fn read_spots_csv(path: &Path) -> Result<BTreeMap<String, f64>, Error> {
    let recs: Vec<SpotRecord> = read_csv(std::fs::File::open(path)?)?;
    Ok(recs.into_iter().map(|r| (r.asset, r.spot)).collect())
}

#[derive(Debug, Deserialize)]
struct DiscountRecord {
    maturity: u32,
    df: f64,
}

/// Read discount factors from `maturity,df` CSV.
pub fn read_discounts_csv(path: &Path) -> Result<BTreeMap<u32, f64>, Error> {
    let recs: Vec<DiscountRecord> = read_csv(std::fs::File::open(path)?)?;
    Ok(recs.into_iter().map(|r| (r.maturity, r.df)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spots_map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(a, s)| (a.to_string(), *s)).collect()
    }

    fn rec(asset: &str, maturity: u32, strike: f64, price: f64) -> QuoteRecord {
        QuoteRecord {
            asset: asset.to_string(),
            maturity,
            strike,
            price,
        }
    }

    #[test]
    fn identity_ingestion() {
        let spots = spots_a();
        let dfs = [(52u32, 1.0)].into_iter().collect();
        let s = load_surface(&[rec("A", 52, 10.0, 5.0)], &spots, &dfs).unwrap();
        assert_eq!(s.quotes.len(), 1);
    }

    fn spots_a() -> BTreeMap<String, f64> {
        spots_map(&[("A", 12.0)])
    }

    #[test]
    fn dedup_identical_rows() {
        let spots = spots_a();
        let dfs = [(52u32, 1.0)].into_iter().collect();
        let s = load_surface(
            &[rec("A", 52, 10.0, 5.0), rec("A", 52, 10.0, 5.0)],
            &spots,
            &dfs,
        )
        .unwrap();
        assert_eq!(s.quotes.len(), 1);
    }

    #[test]
    fn conflicting_duplicate_is_error() {
        let spots = spots_a();
        let dfs = [(52u32, 1.0)].into_iter().collect();
        let e = load_surface(
            &[rec("A", 52, 10.0, 5.0), rec("A", 52, 10.0, 6.0)],
            &spots,
            &dfs,
        )
        .unwrap_err();
        assert_eq!(e.code(), "ConflictingDuplicate");
    }

    #[test]
    fn normalize_scales_strikes() {
        let spots = spots_a();
        let df = (-0.05f64).exp();
        let dfs = [(52u32, df)].into_iter().collect();
        let s = load_surface(&[rec("A", 52, 10.0, 5.0)], &spots, &dfs).unwrap();
        let n = s.normalize();
        assert!((n.quotes[0].strike - 9.512294245007139).abs() < 1e-12);
        assert_eq!(n.quotes[0].maturity, 1);
        assert_eq!(n.quotes[0].price, 5.0);
    }

    #[test]
    fn normalize_zero_strike_fixed_point() {
        let spots = spots_a();
        let dfs = [(52u32, 0.9)].into_iter().collect();
        let s = load_surface(&[rec("A", 52, 0.0, 12.0)], &spots, &dfs).unwrap();
        assert_eq!(s.normalize().quotes[0].strike, 0.0);
    }

    #[test]
    fn slice_filters_by_maturity() {
        let spots = spots_a();
        let dfs = [(1u32, 1.0), (2, 1.0)].into_iter().collect();
        let s = load_surface(
            &[rec("A", 1, 10.0, 5.0), rec("A", 2, 20.0, 2.0)],
            &spots,
            &dfs,
        )
        .unwrap()
        .normalize();
        assert_eq!(s.slice("A", 2).unwrap(), vec![(20.0, 2.0)]);
        assert_eq!(s.slice_geq("A", 1).unwrap().len(), 2);
        assert!(s.slice("A", 3).unwrap().is_empty());
        assert_eq!(s.slice("B", 1).unwrap_err().code(), "UnknownAsset");
    }

    #[test]
    fn maturity_relabeling_only_order_matters() {
        let spots = spots_a();
        let dfs1: BTreeMap<u32, f64> = [(5u32, 1.0), (9, 1.0)].into_iter().collect();
        let dfs2: BTreeMap<u32, f64> = [(100u32, 1.0), (200, 1.0)].into_iter().collect();
        let a = load_surface(
            &[rec("A", 5, 10.0, 5.0), rec("A", 9, 20.0, 2.0)],
            &spots,
            &dfs1,
        )
        .unwrap()
        .normalize();
        let b = load_surface(
            &[rec("A", 100, 10.0, 5.0), rec("A", 200, 20.0, 2.0)],
            &spots,
            &dfs2,
        )
        .unwrap()
        .normalize();
        assert_eq!(a.quotes, b.quotes);
    }

    #[test]
    fn strike_zero_must_match_spot() {
        let spots = spots_a();
        let dfs = [(52u32, 1.0)].into_iter().collect();
        let e = load_surface(&[rec("A", 52, 0.0, 11.0)], &spots, &dfs).unwrap_err();
        assert_eq!(e.code(), "StrikeZeroMismatch");
    }
}
