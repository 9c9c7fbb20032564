//! Joint no-arbitrage checks across maturities via convex hulls.
//!
//! A quote set admits a consistent martingale iff (a) every quote dominates
//! its intrinsic value and (b) no quote of maturity `t` lies strictly above
//! the lower convex envelope of all quotes with maturity `>= t`. The same
//! envelopes yield an explicit witness: a nondecreasing sequence of valid
//! call-price curves through all the quotes.

use serde::Serialize;

use crate::error::Error;
use crate::psi::PsiFunction;
use crate::quotes::NormalizedSurface;
use crate::VALIDATION_TOL;

/// Lower boundary of the convex hull of `(strike, price)` points, with the
/// two ideal points folded into the evaluation rule: `+inf` left of the first
/// vertex, piecewise linear between vertices, constant after the last.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerEnvelope {
    vertices: Vec<(f64, f64)>,
}

/// Build the lower envelope. Collinear interior points are not vertices;
/// slopes between consecutive vertices are strictly increasing and negative.
pub fn lower_envelope(points: &[(f64, f64)]) -> Result<LowerEnvelope, Error> {
    if points.is_empty() {
        return Err(Error::EmptyInput("lower_envelope of no points".into()));
    }
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // per strike only the cheapest point can be on the lower boundary
    pts.dedup_by(|b, a| (b.0 - a.0).abs() <= VALIDATION_TOL * (1.0 + a.0.abs()));

    // monotone chain, keeping the boundary convex and dropping collinear points
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            let scale = (b.0 - a.0).abs().max(p.0 - a.0) * (1.0 + a.1.abs());
            if cross <= 1e-12 * scale.max(1.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    // the flat extension to the right makes everything after the price
    // minimum interior: cut at the first non-negative slope
    let mut cut = hull.len();
    for i in 0..hull.len() - 1 {
        if hull[i + 1].1 >= hull[i].1 {
            cut = i + 1;
            break;
        }
    }
    hull.truncate(cut);
    Ok(LowerEnvelope { vertices: hull })
}

impl LowerEnvelope {
    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Evaluate with the ideal-point rule.
    pub fn eval(&self, k: f64) -> f64 {
        let v = &self.vertices;
        if k < v[0].0 - VALIDATION_TOL {
            return f64::INFINITY;
        }
        if k >= v.last().unwrap().0 {
            return v.last().unwrap().1;
        }
        let i = v.partition_point(|&(x, _)| x <= k).max(1);
        let (x0, y0) = v[i - 1];
        let (x1, y1) = v[i];
        y0 + (y1 - y0) * (k - x0) / (x1 - x0)
    }
}

/// Kind of a detected inconsistency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    /// Price below intrinsic value `X_0 - k`.
    IntrinsicViolation,
    /// Quote strictly inside the convex hull of later-or-equal maturities.
    InteriorPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub asset: String,
    pub maturity: u32,
    pub strike: f64,
    pub price: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArbitrageReport {
    pub consistent: bool,
    pub violations: Vec<Violation>,
}

/// Check conditions (a) and (b) for one asset of a normalized surface.
pub fn check_no_arbitrage(
    surface: &NormalizedSurface,
    asset: &str,
    tol: f64,
) -> Result<ArbitrageReport, Error> {
    let spot = surface.spot(asset)?;
    let mut violations = Vec::new();
    for q in surface.quotes.iter().filter(|q| q.asset == asset) {
        if q.price < spot - q.strike - tol {
            violations.push(Violation {
                kind: ViolationKind::IntrinsicViolation,
                asset: asset.to_string(),
                maturity: q.maturity,
                strike: q.strike,
                price: q.price,
                detail: format!("price {} below intrinsic {}", q.price, spot - q.strike),
            });
        }
    }
    for t in 1..=surface.n_maturities {
        let slice_t = surface.slice(asset, t)?;
        if slice_t.is_empty() {
            continue;
        }
        let geq = surface.slice_geq(asset, t)?;
        let env = lower_envelope(&geq)?;
        for (k, c) in slice_t {
            let e = env.eval(k);
            if c > e + tol {
                violations.push(Violation {
                    kind: ViolationKind::InteriorPoint,
                    asset: asset.to_string(),
                    maturity: t,
                    strike: k,
                    price: c,
                    detail: format!("envelope of later maturities at k={k} is {e} < {c}"),
                });
            }
        }
    }
    Ok(ArbitrageReport {
        consistent: violations.is_empty(),
        violations,
    })
}

/// The future vertex set `F` for a target maturity: hull vertices of
/// `S_{>= t*}` (with the spot pinned at strike 0) whose maturity exceeds
/// `t*`, strike-deduplicated keeping the cheapest.
#[derive(Debug, Clone, Serialize)]
pub struct FutureVertexSet {
    pub target_maturity: u32,
    /// `(strike, price)` pairs, sorted by strike.
    pub vertices: Vec<(f64, f64)>,
}

pub fn future_vertices(
    surface: &NormalizedSurface,
    asset: &str,
    t_star: u32,
    tol: f64,
) -> Result<FutureVertexSet, Error> {
    let report = check_no_arbitrage(surface, asset, tol)?;
    if !report.consistent {
        return Err(Error::ArbitragePresent(format!(
            "{} violation(s) for `{asset}`",
            report.violations.len()
        )));
    }
    future_vertices_unchecked(surface, asset, t_star, tol)
}

/// Same hull computation without the consistency gate; callers that build
/// LPs to *test* feasibility need it on possibly inconsistent surfaces.
pub fn future_vertices_unchecked(
    surface: &NormalizedSurface,
    asset: &str,
    t_star: u32,
    tol: f64,
) -> Result<FutureVertexSet, Error> {
    let spot = surface.spot(asset)?;
    let mut pts = surface.slice_geq(asset, t_star)?;
    pts.push((0.0, spot));
    let env = lower_envelope(&pts)?;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &(k, c) in env.vertices() {
        // keep the vertex only if some strictly-future quote realizes it
        let realized = surface
            .quotes_geq(asset, t_star + 1)
            .iter()
            .any(|q| (q.strike - k).abs() <= tol && (q.price - c).abs() <= tol);
        if realized {
            match out.last() {
                Some(&(lk, lc)) if (lk - k).abs() <= tol => {
                    if c < lc {
                        *out.last_mut().unwrap() = (k, c);
                    }
                }
                _ => out.push((k, c)),
            }
        }
    }
    Ok(FutureVertexSet {
        target_maturity: t_star,
        vertices: out,
    })
}

/// Witness construction: the envelope sequence with the joint steepest-slope
/// extension down to zero.
#[derive(Debug, Clone)]
pub struct WitnessEnvelopes {
    /// One valid call-price curve per maturity, nondecreasing in `t`.
    pub psis: Vec<PsiFunction>,
    /// Largest zero-crossing over all curves; any support bound `L >=` this
    /// keeps the witness feasible.
    pub support_bound: f64,
}

pub fn witness_envelopes(
    surface: &NormalizedSurface,
    asset: &str,
    tol: f64,
) -> Result<WitnessEnvelopes, Error> {
    let report = check_no_arbitrage(surface, asset, tol)?;
    if !report.consistent {
        return Err(Error::ArbitragePresent(format!(
            "{} violation(s) for `{asset}`",
            report.violations.len()
        )));
    }
    let spot = surface.spot(asset)?;
    let mut envelopes: Vec<LowerEnvelope> = Vec::new();
    for t in 1..=surface.n_maturities.max(1) {
        let mut pts = surface.slice_geq(asset, t)?;
        pts.push((0.0, spot));
        envelopes.push(lower_envelope(&pts)?);
    }
    // s* = the largest strictly negative slope over all envelopes, -1 when
    // every envelope is degenerate flat.
    let mut s_star = f64::NEG_INFINITY;
    for env in &envelopes {
        for w in env.vertices().windows(2) {
            let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            if s < 0.0 {
                s_star = s_star.max(s);
            }
        }
    }
    if !s_star.is_finite() || s_star >= 0.0 {
        s_star = -1.0;
    }
    let mut psis = Vec::with_capacity(envelopes.len());
    let mut support_bound: f64 = 0.0;
    for env in &envelopes {
        let mut pts: Vec<(f64, f64)> = env.vertices().to_vec();
        let &(x_t, v_t) = env.vertices().last().unwrap();
        if v_t > 0.0 {
            let zero = x_t + v_t / (-s_star);
            pts.push((zero, 0.0));
            support_bound = support_bound.max(zero);
        } else {
            support_bound = support_bound.max(x_t);
        }
        psis.push(PsiFunction::new(pts, 0.0)?);
    }
    Ok(WitnessEnvelopes {
        psis,
        support_bound,
    })
}

/// Default LP support bound: twice the largest of the witness bound, the
/// quoted strikes and the spot.
pub fn default_support_bound(
    surface: &NormalizedSurface,
    asset: &str,
    witness_bound: f64,
) -> f64 {
    let spot = surface.spots.get(asset).copied().unwrap_or(0.0);
    let max_strike = surface
        .quotes
        .iter()
        .filter(|q| q.asset == asset)
        .map(|q| q.strike)
        .fold(0.0f64, f64::max);
    2.0 * witness_bound.max(max_strike).max(spot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psi::{check_nondecreasing, distribution_of_psi};
    use crate::quotes::{load_surface, QuoteRecord};
    use std::collections::BTreeMap;

    pub(crate) fn surface(
        spot: f64,
        quotes: &[(u32, f64, f64)],
    ) -> crate::quotes::NormalizedSurface {
        let spots: BTreeMap<String, f64> = [("A".to_string(), spot)].into_iter().collect();
        let dfs: BTreeMap<u32, f64> = quotes.iter().map(|&(t, _, _)| (t, 1.0)).collect();
        let recs: Vec<QuoteRecord> = quotes
            .iter()
            .map(|&(t, k, c)| QuoteRecord {
                asset: "A".into(),
                maturity: t,
                strike: k,
                price: c,
            })
            .collect();
        load_surface(&recs, &spots, &dfs).unwrap().normalize()
    }

    /// Brute-force hull oracle: a point is a vertex iff it is not on or
    /// above any chord between two other points (or dominated to the right).
    fn brute_force_vertices(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let env = |k: f64| -> f64 {
            // min over all chords and flat extensions of feasible envelopes:
            // evaluate the lower hull by LP-free enumeration
            let mut best = f64::INFINITY;
            for &(x, y) in points {
                if (x - k).abs() < 1e-12 {
                    best = best.min(y);
                }
            }
            for &(x1, y1) in points {
                for &(x2, y2) in points {
                    if x2 > x1 + 1e-12 && k >= x1 - 1e-12 && k <= x2 + 1e-12 {
                        best = best.min(y1 + (y2 - y1) * (k - x1) / (x2 - x1));
                    }
                }
            }
            // flat extension to the right of any point
            for &(x, y) in points {
                if k >= x - 1e-12 {
                    best = best.min(y);
                }
            }
            best
        };
        let mut verts: Vec<(f64, f64)> = Vec::new();
        for &(x, y) in points {
            if (env(x) - y).abs() > 1e-9 {
                continue; // not on the boundary
            }
            // vertex iff removing it raises the envelope at x
            let others: Vec<(f64, f64)> = points
                .iter()
                .copied()
                .filter(|&p| p != (x, y))
                .collect();
            let env_without = |k: f64| -> f64 {
                let mut best = f64::INFINITY;
                for &(x1, y1) in &others {
                    if k >= x1 - 1e-12 {
                        best = best.min(y1);
                    }
                    for &(x2, y2) in &others {
                        if x2 > x1 + 1e-12 && k >= x1 - 1e-12 && k <= x2 + 1e-12 {
                            best = best.min(y1 + (y2 - y1) * (k - x1) / (x2 - x1));
                        }
                    }
                }
                best
            };
            if env_without(x) > y + 1e-9 {
                verts.push((x, y));
            }
        }
        verts.sort_by(|a, b| a.0.total_cmp(&b.0));
        verts
    }

    #[test]
    fn all_three_are_vertices() {
        let pts = [(10.0, 5.0), (20.0, 2.0), (30.0, 1.0)];
        let env = lower_envelope(&pts).unwrap();
        assert_eq!(env.vertices(), &pts);
        assert_eq!(brute_force_vertices(&pts), pts.to_vec());
    }

    #[test]
    fn collinear_middle_point_dropped() {
        let pts = [(10.0, 4.0), (20.0, 3.0), (30.0, 2.0)];
        let env = lower_envelope(&pts).unwrap();
        assert_eq!(env.vertices(), &[(10.0, 4.0), (30.0, 2.0)]);
    }

    #[test]
    fn singleton_envelope_rule() {
        let env = lower_envelope(&[(10.0, 5.0)]).unwrap();
        assert_eq!(env.vertices(), &[(10.0, 5.0)]);
        assert_eq!(env.eval(15.0), 5.0);
        assert!(env.eval(5.0).is_infinite());
    }

    #[test]
    fn rising_tail_is_interior() {
        let pts = [(10.0, 5.0), (20.0, 2.0), (30.0, 3.0)];
        let env = lower_envelope(&pts).unwrap();
        assert_eq!(env.vertices(), &[(10.0, 5.0), (20.0, 2.0)]);
        assert_eq!(env.eval(30.0), 2.0);
    }

    #[test]
    fn single_quote_consistent() {
        let s = surface(12.0, &[(1, 10.0, 5.0)]);
        let r = check_no_arbitrage(&s, "A", 1e-9).unwrap();
        assert!(r.consistent);
    }

    #[test]
    fn calendar_interior_point_detected() {
        let s = surface(12.0, &[(1, 10.0, 5.0), (2, 10.0, 4.0)]);
        let r = check_no_arbitrage(&s, "A", 1e-9).unwrap();
        assert!(!r.consistent);
        assert_eq!(r.violations.len(), 1);
        let v = &r.violations[0];
        assert_eq!(v.kind, ViolationKind::InteriorPoint);
        assert_eq!((v.maturity, v.strike, v.price), (1, 10.0, 5.0));
    }

    #[test]
    fn intrinsic_violation_detected() {
        let s = surface(10.0, &[(1, 5.0, 1.0)]);
        let r = check_no_arbitrage(&s, "A", 1e-9).unwrap();
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::IntrinsicViolation));
    }

    #[test]
    fn future_vertices_empty_and_singleton() {
        let s = surface(12.0, &[(1, 10.0, 5.0)]);
        let f = future_vertices(&s, "A", 1, 1e-9).unwrap();
        assert!(f.vertices.is_empty());

        let s = surface(12.0, &[(1, 10.0, 3.0), (2, 15.0, 2.0)]);
        let f = future_vertices(&s, "A", 1, 1e-9).unwrap();
        assert_eq!(f.vertices, vec![(15.0, 2.0)]);
    }

    #[test]
    fn future_vertices_from_hull() {
        // the strike-10 future quote shares a strike with a cheaper current
        // quote, so only the strike-20 quote survives as a future vertex
        let s = surface(12.0, &[(1, 10.0, 4.0), (2, 10.0, 4.5), (2, 20.0, 2.9)]);
        let f = future_vertices(&s, "A", 1, 1e-9).unwrap();
        assert_eq!(f.vertices, vec![(20.0, 2.9)]);
        // cross-check vertex status against the brute-force hull
        let oracle = brute_force_vertices(&[(0.0, 12.0), (10.0, 4.0), (20.0, 2.9)]);
        assert!(oracle.contains(&(20.0, 2.9)));
    }

    #[test]
    fn witness_single_quote() {
        let s = surface(12.0, &[(1, 10.0, 5.0)]);
        let w = witness_envelopes(&s, "A", 1e-9).unwrap();
        assert_eq!(w.psis.len(), 1);
        let g = &w.psis[0];
        assert_eq!(g.at_zero(), 12.0);
        assert_eq!(g.eval(10.0), 5.0);
        // slope set {-0.7}; extension hits zero at 10 + 5/0.7
        let zero = 10.0 + 5.0 / 0.7;
        assert!((w.support_bound - zero).abs() < 1e-9);
        assert!(g.eval(zero).abs() < 1e-12);
        // the witness inverts to a distribution with mean = spot
        let d = distribution_of_psi(g).unwrap();
        assert!((d.mean() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn witness_degenerate_flat() {
        // only a strike-0 quote: envelope {(0, X0)}, s* defaults to -1
        let s = surface(12.0, &[(1, 0.0, 12.0)]);
        let w = witness_envelopes(&s, "A", 1e-9).unwrap();
        assert!((w.support_bound - 12.0).abs() < 1e-12);
        assert!(w.psis[0].eval(12.0).abs() < 1e-12);
    }

    #[test]
    fn witness_sequence_nondecreasing() {
        let s = surface(12.0, &[(1, 10.0, 4.0), (2, 10.0, 5.0), (2, 20.0, 1.0)]);
        let w = witness_envelopes(&s, "A", 1e-9).unwrap();
        let check = check_nondecreasing(&w.psis, 1e-9).unwrap();
        assert!(check.nondecreasing, "violation: {:?}", check.violation);
    }

    #[test]
    fn envelope_below_points() {
        let pts = [(5.0, 8.0), (10.0, 5.0), (12.0, 4.5), (20.0, 2.0)];
        let env = lower_envelope(&pts).unwrap();
        for &(k, c) in &pts {
            assert!(env.eval(k) <= c + 1e-12);
        }
    }
}
