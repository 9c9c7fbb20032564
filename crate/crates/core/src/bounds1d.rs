//! Best-possible bounds on `E[g(X_t*)]` for a one-asset piecewise-linear
//! payoff, given call quotes across maturities.
//!
//! The extremal martingale can be taken as a Markov chain supported on the
//! finite breakpoint set (quote strikes, payoff kinks, 0 and the support
//! bound), so each bound is a finite LP over marginal weights and pairwise
//! transition weights.

use serde::{Deserialize, Serialize};

use crate::arbitrage::{check_no_arbitrage, future_vertices_unchecked, witness_envelopes};
use crate::error::Error;
use crate::lp::{LpModel, LpStatus, Relation, Sense};
use crate::psi::DiscreteDistribution;
use crate::quotes::NormalizedSurface;
use crate::{ATOM_TOL, VALIDATION_TOL};

/// Continuous piecewise-linear payoff: interpolated through `breakpoints`,
/// extended affinely with `terminal_slope` past the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payoff1D {
    pub breakpoints: Vec<(f64, f64)>,
    pub terminal_slope: f64,
}

impl Payoff1D {
    pub fn new(breakpoints: Vec<(f64, f64)>, terminal_slope: f64) -> Result<Self, Error> {
        if breakpoints.is_empty() {
            return Err(Error::EmptyInput("payoff needs at least one breakpoint".into()));
        }
        for w in breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidInput(format!(
                    "payoff breakpoints must be strictly increasing, got {} after {}",
                    w[1].0, w[0].0
                )));
            }
        }
        Ok(Payoff1D {
            breakpoints,
            terminal_slope,
        })
    }

    /// `(x - strike)^+`
    pub fn call(strike: f64) -> Self {
        if strike <= 0.0 {
            Payoff1D {
                breakpoints: vec![(0.0, 0.0)],
                terminal_slope: 1.0,
            }
        } else {
            Payoff1D {
                breakpoints: vec![(0.0, 0.0), (strike, 0.0)],
                terminal_slope: 1.0,
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let b = &self.breakpoints;
        let last = *b.last().unwrap();
        if x >= last.0 {
            return last.1 + self.terminal_slope * (x - last.0);
        }
        if x <= b[0].0 {
            // extend the first segment (or the terminal slope if degenerate)
            let s = if b.len() >= 2 {
                (b[1].1 - b[0].1) / (b[1].0 - b[0].0)
            } else {
                self.terminal_slope
            };
            return b[0].1 + s * (x - b[0].0);
        }
        let i = b.partition_point(|&(bx, _)| bx <= x);
        let (x0, y0) = b[i - 1];
        let (x1, y1) = b[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// x-values where the slope actually changes.
    pub fn kinks(&self) -> Vec<f64> {
        let b = &self.breakpoints;
        let mut out = Vec::new();
        for i in 0..b.len() {
            let left = if i == 0 {
                if b.len() >= 2 {
                    (b[1].1 - b[0].1) / (b[1].0 - b[0].0)
                } else {
                    self.terminal_slope
                }
            } else {
                (b[i].1 - b[i - 1].1) / (b[i].0 - b[i - 1].0)
            };
            let right = if i + 1 < b.len() {
                (b[i + 1].1 - b[i].1) / (b[i + 1].0 - b[i].0)
            } else {
                self.terminal_slope
            };
            if (right - left).abs() > VALIDATION_TOL {
                out.push(b[i].0);
            }
        }
        out
    }

    pub fn max_abs_slope(&self) -> f64 {
        let b = &self.breakpoints;
        let mut m = self.terminal_slope.abs();
        for w in b.windows(2) {
            m = m.max(((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs());
        }
        m
    }
}

/// Sorted distinct support points for the LP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakpointSet {
    pub points: Vec<f64>,
}

impl BreakpointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `{0, L}` plus strikes quoted at maturities `<= t_star`, future-vertex
/// strikes, and the payoff kinks.
pub fn breakpoint_set(
    surface: &NormalizedSurface,
    asset: &str,
    t_star: u32,
    payoff: &Payoff1D,
    l_bound: f64,
    tol: f64,
) -> Result<BreakpointSet, Error> {
    let spot = surface.spot(asset)?;
    let mut pts: Vec<f64> = vec![0.0, l_bound];
    pts.extend(surface.strikes_leq(asset, t_star));
    let fut = future_vertices_unchecked(surface, asset, t_star, tol)?;
    pts.extend(fut.vertices.iter().map(|&(k, _)| k));
    pts.extend(payoff.kinks());
    let need = pts
        .iter()
        .copied()
        .fold(spot, f64::max);
    if l_bound < need - VALIDATION_TOL {
        return Err(Error::SupportBoundTooSmall {
            have: l_bound,
            need,
        });
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|b, a| (*b - *a).abs() <= VALIDATION_TOL * (1.0 + a.abs()));
    Ok(BreakpointSet { points: pts })
}

/// A quoted instrument other than a plain call: payoff at some maturity
/// with an observed price.
#[derive(Debug, Clone)]
pub struct QuotedInstrument {
    pub maturity: u32,
    pub payoff: Payoff1D,
    pub price: f64,
}

/// Assemble the bound LP. Variables: marginal weights `P[t][n]` for
/// `t = 1..t*` and pair weights `P[t][n1][n2]` for `t = 1..t*-1`.
pub fn build_lp_1d(
    surface: &NormalizedSurface,
    asset: &str,
    t_star: u32,
    payoff: &Payoff1D,
    kset: &BreakpointSet,
    sense: Sense,
    instruments: &[QuotedInstrument],
    tol: f64,
) -> Result<LpModel, Error> {
    let spot = surface.spot(asset)?;
    let n = kset.len();
    let ts = t_star as usize;
    let k = &kset.points;

    let mut m = LpModel::new(sense);
    // marginals first, then pair blocks; objective sits on the t* marginals
    let marg = |t: usize, i: usize| (t - 1) * n + i;
    for t in 1..=ts {
        for i in 0..n {
            let obj = if t == ts { payoff.eval(k[i]) } else { 0.0 };
            m.add_var(obj, 0.0, 1.0);
        }
    }
    let pair = |t: usize, i: usize, j: usize| ts * n + (t - 1) * n * n + i * n + j;
    for _ in 0..(ts - 1) * n * n {
        m.add_var(0.0, 0.0, 1.0);
    }

    // total mass
    m.add_row((0..n).map(|i| (marg(1, i), 1.0)).collect(), Relation::Eq, 1.0);

    for t in 1..ts {
        for i in 0..n {
            // pairs marginalize to the current and the next marginal
            let mut row: Vec<(usize, f64)> = (0..n).map(|j| (pair(t, i, j), 1.0)).collect();
            row.push((marg(t, i), -1.0));
            m.add_row(row, Relation::Eq, 0.0);

            let mut row: Vec<(usize, f64)> = (0..n).map(|j| (pair(t, j, i), 1.0)).collect();
            row.push((marg(t + 1, i), -1.0));
            m.add_row(row, Relation::Eq, 0.0);

            // conditional mean preserved from each launch point
            let mut row: Vec<(usize, f64)> = (0..n).map(|j| (pair(t, i, j), k[j])).collect();
            row.push((marg(t, i), -k[i]));
            m.add_row(row, Relation::Eq, 0.0);
        }
    }

    // quoted calls pin expectations at every observed maturity up to t*;
    // the mean itself is the strike-0 call
    for t in 1..=ts {
        m.add_row((0..n).map(|i| (marg(t, i), k[i])).collect(), Relation::Eq, spot);
        for (strike, price) in surface.slice(asset, t as u32)? {
            if strike <= VALIDATION_TOL {
                continue; // covered by the mean row
            }
            let row: Vec<(usize, f64)> = (0..n)
                .map(|i| (marg(t, i), (k[i] - strike).max(0.0)))
                .collect();
            m.add_row(row, Relation::Eq, price);
        }
    }

    for inst in instruments {
        if inst.maturity > t_star {
            return Err(Error::UnsupportedInstrument(format!(
                "quoted instrument at maturity {} past target {}",
                inst.maturity, t_star
            )));
        }
        let t = inst.maturity as usize;
        let row: Vec<(usize, f64)> = (0..n)
            .map(|i| (marg(t, i), inst.payoff.eval(k[i])))
            .collect();
        m.add_row(row, Relation::Eq, inst.price);
    }

    // later-maturity quotes cap call values at t*
    let fut = future_vertices_unchecked(surface, asset, t_star, tol)?;
    for (strike, price) in fut.vertices {
        let row: Vec<(usize, f64)> = (0..n)
            .map(|i| (marg(ts, i), (k[i] - strike).max(0.0)))
            .collect();
        m.add_row(row, Relation::Le, price);
    }

    Ok(m)
}

/// One extremal distribution family: per-time marginals plus the transition
/// pair weights that certify the martingale property.
#[derive(Debug, Clone, Serialize)]
pub struct Witness1D {
    pub marginals: Vec<DiscreteDistribution>,
    /// `(support index at t, support index at t+1, weight)` per step
    pub pairs: Vec<Vec<(usize, usize, f64)>>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsResult {
    pub lower: f64,
    pub upper: f64,
    pub support: Vec<f64>,
    pub witness_lower: Witness1D,
    pub witness_upper: Witness1D,
    pub n_vars: usize,
    pub n_rows: usize,
}

fn extract_witness(
    values: &[f64],
    residual: f64,
    n: usize,
    ts: usize,
    k: &[f64],
) -> Result<Witness1D, Error> {
    let mut marginals = Vec::with_capacity(ts);
    for t in 0..ts {
        let atoms: Vec<(f64, f64)> = (0..n)
            .map(|i| (k[i], values[t * n + i]))
            .filter(|&(_, w)| w > ATOM_TOL)
            .collect();
        marginals.push(DiscreteDistribution::new(atoms)?);
    }
    let mut pairs = Vec::with_capacity(ts.saturating_sub(1));
    for t in 0..ts.saturating_sub(1) {
        let base = ts * n + t * n * n;
        let mut step = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = values[base + i * n + j];
                if w > ATOM_TOL {
                    step.push((i, j, w));
                }
            }
        }
        pairs.push(step);
    }
    Ok(Witness1D {
        marginals,
        pairs,
        max_residual: residual,
    })
}

/// Both bounds for one target, with witnesses.
pub fn bound_payoff_1d(
    surface: &NormalizedSurface,
    asset: &str,
    t_star: u32,
    payoff: &Payoff1D,
    l_bound: f64,
    tol: f64,
) -> Result<BoundsResult, Error> {
    bound_payoff_1d_with_instruments(surface, asset, t_star, payoff, l_bound, &[], tol)
}

pub fn bound_payoff_1d_with_instruments(
    surface: &NormalizedSurface,
    asset: &str,
    t_star: u32,
    payoff: &Payoff1D,
    l_bound: f64,
    instruments: &[QuotedInstrument],
    tol: f64,
) -> Result<BoundsResult, Error> {
    let report = check_no_arbitrage(surface, asset, tol)?;
    if !report.consistent {
        return Err(Error::ArbitragePresent(format!(
            "{} violation(s) for `{asset}`",
            report.violations.len()
        )));
    }
    let wit = witness_envelopes(surface, asset, tol)?;
    if l_bound < wit.support_bound - VALIDATION_TOL {
        return Err(Error::SupportBoundTooSmall {
            have: l_bound,
            need: wit.support_bound,
        });
    }
    let mut kset = breakpoint_set(surface, asset, t_star, payoff, l_bound, tol)?;
    for inst in instruments {
        kset.points.extend(inst.payoff.kinks());
    }
    kset.points.sort_by(f64::total_cmp);
    kset.points
        .dedup_by(|b, a| (*b - *a).abs() <= VALIDATION_TOL * (1.0 + a.abs()));
    if *kset.points.last().unwrap() > l_bound + VALIDATION_TOL {
        return Err(Error::SupportBoundTooSmall {
            have: l_bound,
            need: *kset.points.last().unwrap(),
        });
    }

    let n = kset.len();
    let ts = t_star as usize;
    let mut out: Vec<(f64, Witness1D)> = Vec::with_capacity(2);
    let mut sizes = (0usize, 0usize);
    for sense in [Sense::Minimize, Sense::Maximize] {
        let model = build_lp_1d(surface, asset, t_star, payoff, &kset, sense, instruments, tol)?;
        sizes = (model.num_vars(), model.num_rows());
        let sol = model.solve()?;
        match sol.status {
            LpStatus::Optimal => {
                let w = extract_witness(&sol.values, sol.max_residual, n, ts, &kset.points)?;
                out.push((sol.objective, w));
            }
            _ => return Err(Error::InfeasibleDespiteCheck),
        }
    }
    let (upper, witness_upper) = out.pop().unwrap();
    let (lower, witness_lower) = out.pop().unwrap();
    Ok(BoundsResult {
        lower,
        upper,
        support: kset.points,
        witness_lower,
        witness_upper,
        n_vars: sizes.0,
        n_rows: sizes.1,
    })
}

/// Bounds across a growing support-bound schedule; the interval can only
/// widen as the truncation is relaxed.
pub fn bound_convergence_in_l(
    surface: &NormalizedSurface,
    asset: &str,
    t_star: u32,
    payoff: &Payoff1D,
    l_schedule: &[f64],
    tol: f64,
) -> Result<Vec<BoundsResult>, Error> {
    for w in l_schedule.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidInput(
                "support-bound schedule must be increasing".into(),
            ));
        }
    }
    l_schedule
        .iter()
        .map(|&l| bound_payoff_1d(surface, asset, t_star, payoff, l, tol))
        .collect()
}
