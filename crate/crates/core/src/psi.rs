//! The call-price transform of atomic laws and its inverse.
//!
//! For a law `P` on the nonnegative reals, `psi(t) = E[(X - t)^+]` is the
//! price curve of calls in the strike. It is nonincreasing, convex, bounded
//! below by `psi(0) - t`, and it determines the law uniquely: atoms sit at
//! the slope changes, with weight equal to the slope jump.

use serde::Serialize;

use crate::error::Error;
use crate::ATOM_TOL;

/// An atomic probability law with support in the nonnegative reals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    /// Sorted `(location, weight)` pairs; weights sum to 1.
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    /// Validate and build. Atoms with locations within `ATOM_TOL` are merged;
    /// weights below `ATOM_TOL` are dropped and the rest renormalized.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self, Error> {
        atoms.retain(|&(_, w)| w > ATOM_TOL);
        if atoms.is_empty() {
            return Err(Error::EmptyInput("distribution without atoms".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if x < -ATOM_TOL {
                return Err(Error::NegativeValue(format!("atom location {x}")));
            }
            match merged.last_mut() {
                Some(last) if (x - last.0).abs() <= ATOM_TOL => last.1 += w,
                _ => merged.push((x.max(0.0), w)),
            }
        }
        let total: f64 = merged.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "atom weights sum to {total}, expected 1"
            )));
        }
        for (_, w) in merged.iter_mut() {
            *w /= total;
        }
        Ok(Self { atoms: merged })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(x, w)| x * w).sum()
    }
}

/// A piecewise-linear convex call-price curve.
///
/// `points` are the breakpoints `(x, value)` starting at `x = 0`; beyond the
/// last breakpoint the curve continues with `terminal_slope` (0 for curves
/// that come from finite-support laws).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiFunction {
    points: Vec<(f64, f64)>,
    terminal_slope: f64,
}

impl PsiFunction {
    /// Build from breakpoints, merging x-ties and checking the transform
    /// properties: nonincreasing, convex, slopes in `[-1, 0]`, terminal
    /// slope 0 and terminal value 0.
    pub fn new(points: Vec<(f64, f64)>, terminal_slope: f64) -> Result<Self, Error> {
        let f = Self::new_unchecked(points, terminal_slope)?;
        f.validate()?;
        Ok(f)
    }

    fn new_unchecked(mut points: Vec<(f64, f64)>, terminal_slope: f64) -> Result<Self, Error> {
        if points.is_empty() {
            return Err(Error::EmptyInput("psi without breakpoints".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for (x, v) in points {
            match merged.last() {
                Some(&(lx, _)) if (x - lx).abs() <= ATOM_TOL => {}
                _ => merged.push((x, v)),
            }
        }
        if merged[0].0.abs() > ATOM_TOL {
            // anchor at zero with slope -1 toward the first breakpoint? No:
            // callers must supply the value at 0 explicitly.
            return Err(Error::InvalidPsi(format!(
                "first breakpoint at x={}, expected x=0",
                merged[0].0
            )));
        }
        merged[0].0 = 0.0;
        Ok(Self {
            points: merged,
            terminal_slope,
        })
    }

    fn validate(&self) -> Result<(), Error> {
        const TOL: f64 = 1e-9;
        let mut prev_slope = -1.0 - TOL;
        for w in self.points.windows(2) {
            let (x0, v0) = w[0];
            let (x1, v1) = w[1];
            let slope = (v1 - v0) / (x1 - x0);
            if slope < -1.0 - TOL {
                return Err(Error::InvalidPsi(format!("slope {slope} < -1")));
            }
            if slope > TOL {
                return Err(Error::InvalidPsi(format!("increasing segment (slope {slope})")));
            }
            if slope < prev_slope - TOL {
                return Err(Error::InvalidPsi(format!(
                    "convexity violated: slope {slope} after {prev_slope}"
                )));
            }
            prev_slope = prev_slope.max(slope);
        }
        if self.terminal_slope.abs() > TOL {
            return Err(Error::InvalidPsi(format!(
                "terminal slope {} != 0",
                self.terminal_slope
            )));
        }
        let last = self.points.last().unwrap();
        if last.1.abs() > TOL * (1.0 + self.points[0].1.abs()) {
            return Err(Error::InvalidPsi(format!(
                "terminal value {} != 0",
                last.1
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Value at `t >= 0` by linear interpolation.
    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t >= pts.last().unwrap().0 {
            return pts.last().unwrap().1 + self.terminal_slope * (t - pts.last().unwrap().0);
        }
        let i = pts.partition_point(|&(x, _)| x <= t);
        // pts[i-1].x <= t < pts[i].x
        let (x0, v0) = pts[i - 1];
        let (x1, v1) = pts[i];
        v0 + (v1 - v0) * (t - x0) / (x1 - x0)
    }

    /// Slope of the segment immediately right of `t`.
    pub fn right_derivative(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t >= pts.last().unwrap().0 - ATOM_TOL {
            return self.terminal_slope;
        }
        let i = pts.partition_point(|&(x, _)| x <= t + ATOM_TOL);
        let (x0, v0) = pts[i - 1];
        let (x1, v1) = pts[i];
        (v1 - v0) / (x1 - x0)
    }

    /// Value at 0; equals the mean of the underlying law.
    pub fn at_zero(&self) -> f64 {
        self.points[0].1
    }
}

/// The transform `t -> sum_i w_i (x_i - t)^+` of an atomic law.
///
/// Breakpoints are placed at 0 and at every atom location.
pub fn psi_of_distribution(d: &DiscreteDistribution) -> PsiFunction {
    let atoms = d.atoms();
    let mut points = Vec::with_capacity(atoms.len() + 1);
    let eval = |t: f64| -> f64 {
        atoms
            .iter()
            .map(|&(x, w)| w * (x - t).max(0.0))
            .sum::<f64>()
    };
    if atoms[0].0 > ATOM_TOL {
        points.push((0.0, eval(0.0)));
    }
    for &(x, _) in atoms {
        points.push((x, eval(x)));
    }
    PsiFunction::new_unchecked(points, 0.0).expect("atomic transform is well formed")
}

/// Invert a valid transform: atoms at slope-change points, weight equal to
/// the slope jump (`F(x) = 1 + psi'(x+)`).
pub fn distribution_of_psi(psi: &PsiFunction) -> Result<DiscreteDistribution, Error> {
    psi.validate()?;
    let pts = psi.points();
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    let mut slope_before = -1.0; // below the support everything is above t
    for (i, &(x, _)) in pts.iter().enumerate() {
        let slope_after = if i + 1 < pts.len() {
            let (x1, v1) = pts[i + 1];
            (v1 - pts[i].1) / (x1 - x)
        } else {
            psi.terminal_slope
        };
        let jump = slope_after - slope_before;
        if jump > ATOM_TOL {
            atoms.push((x, jump));
        }
        slope_before = slope_after;
    }
    DiscreteDistribution::new(atoms)
}

/// Verdict of the nondecreasing-sequence check, with the first violation.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCheck {
    pub nondecreasing: bool,
    /// `(i, x)` such that `psi_i(x) > psi_{i+1}(x)`.
    pub violation: Option<(usize, f64)>,
}

/// Check `psi_1 <= psi_2 <= ...` pointwise. Since both sides are affine
/// between consecutive breakpoints of the union, checking at the union of
/// breakpoints is equivalent to checking everywhere.
pub fn check_nondecreasing(psis: &[PsiFunction], tol: f64) -> Result<MonotoneCheck, Error> {
    if psis.len() < 2 {
        return Ok(MonotoneCheck {
            nondecreasing: true,
            violation: None,
        });
    }
    let mean0 = psis[0].at_zero();
    for p in psis.iter().skip(1) {
        if (p.at_zero() - mean0).abs() > tol {
            return Err(Error::MeanMismatch(mean0, p.at_zero()));
        }
    }
    let mut xs: Vec<f64> = psis
        .iter()
        .flat_map(|p| p.points().iter().map(|&(x, _)| x))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= ATOM_TOL);
    for i in 0..psis.len() - 1 {
        for &x in &xs {
            if psis[i].eval(x) > psis[i + 1].eval(x) + tol {
                return Ok(MonotoneCheck {
                    nondecreasing: false,
                    violation: Some((i, x)),
                });
            }
        }
    }
    Ok(MonotoneCheck {
        nondecreasing: true,
        violation: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(atoms: &[(f64, f64)]) -> DiscreteDistribution {
        DiscreteDistribution::new(atoms.to_vec()).unwrap()
    }

    #[test]
    fn psi_single_atom() {
        let p = psi_of_distribution(&dist(&[(5.0, 1.0)]));
        assert_eq!(p.eval(3.0), 2.0);
        assert_eq!(p.eval(5.0), 0.0);
        assert_eq!(p.eval(7.0), 0.0);
    }

    #[test]
    fn psi_two_atoms() {
        let p = psi_of_distribution(&dist(&[(0.0, 0.5), (10.0, 0.5)]));
        assert_eq!(p.eval(4.0), 3.0);
        assert_eq!(p.at_zero(), 5.0);
    }

    #[test]
    fn right_derivative_counts_mass_above() {
        let p = psi_of_distribution(&dist(&[(0.0, 0.5), (10.0, 0.5)]));
        assert_eq!(p.right_derivative(4.0), -0.5);
        assert_eq!(p.right_derivative(11.0), 0.0);
        let q = psi_of_distribution(&dist(&[(5.0, 1.0)]));
        assert_eq!(q.right_derivative(0.0), -1.0);
    }

    #[test]
    fn inverse_of_two_slope_curve() {
        // value 5 at 0, slope -1 on [0,2], slope -0.5 on [2,8], 0 after.
        let psi = PsiFunction::new(vec![(0.0, 5.0), (2.0, 3.0), (8.0, 0.0)], 0.0).unwrap();
        let d = distribution_of_psi(&psi).unwrap();
        assert_eq!(d.atoms().len(), 2);
        assert!((d.atoms()[0].0 - 2.0).abs() < 1e-12 && (d.atoms()[0].1 - 0.5).abs() < 1e-12);
        assert!((d.atoms()[1].0 - 8.0).abs() < 1e-12 && (d.atoms()[1].1 - 0.5).abs() < 1e-12);
        // round trip and mean check: 0.5*2 + 0.5*8 = 5 = psi(0)
        assert!((d.mean() - psi.at_zero()).abs() < 1e-12);
        let back = psi_of_distribution(&d);
        for &(x, v) in psi.points() {
            assert!((back.eval(x) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_single_atom() {
        let psi = psi_of_distribution(&dist(&[(5.0, 1.0)]));
        let d = distribution_of_psi(&psi).unwrap();
        assert_eq!(d.atoms(), &[(5.0, 1.0)]);
    }

    #[test]
    fn slope_below_minus_one_rejected() {
        let e = PsiFunction::new(vec![(0.0, 6.0), (5.0, 0.0)], 0.0).unwrap_err();
        assert_eq!(e.code(), "InvalidPsi");
    }

    #[test]
    fn nondecreasing_pairs() {
        let p1 = psi_of_distribution(&dist(&[(5.0, 1.0)]));
        let p2 = psi_of_distribution(&dist(&[(0.0, 0.5), (10.0, 0.5)]));
        let ok = check_nondecreasing(&[p1.clone(), p1.clone()], 1e-9).unwrap();
        assert!(ok.nondecreasing);
        let ok = check_nondecreasing(&[p1.clone(), p2.clone()], 1e-9).unwrap();
        assert!(ok.nondecreasing);
        let bad = check_nondecreasing(&[p2, p1], 1e-9).unwrap();
        assert!(!bad.nondecreasing);
        assert_eq!(bad.violation, Some((0, 5.0)));
    }

    #[test]
    fn mean_mismatch_detected() {
        let p1 = psi_of_distribution(&dist(&[(5.0, 1.0)]));
        let p2 = psi_of_distribution(&dist(&[(6.0, 1.0)]));
        assert_eq!(
            check_nondecreasing(&[p1, p2], 1e-9).unwrap_err().code(),
            "MeanMismatch"
        );
    }

    prop_compose! {
        fn arb_distribution(max_atoms: usize)
            (n in 1..=max_atoms)
            (locs in prop::collection::vec(0.0f64..100.0, n),
             raw_w in prop::collection::vec(0.05f64..1.0, n))
            -> DiscreteDistribution
        {
            let total: f64 = raw_w.iter().sum();
            let mut atoms: Vec<(f64, f64)> = locs
                .iter()
                .zip(&raw_w)
                .map(|(&x, &w)| ((x * 64.0).round() / 64.0, w / total))
                .collect();
            // exact renormalization after rounding locations
            let t: f64 = atoms.iter().map(|a| a.1).sum();
            for a in atoms.iter_mut() { a.1 /= t; }
            DiscreteDistribution::new(atoms).unwrap()
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(d in arb_distribution(8)) {
            let back = distribution_of_psi(&psi_of_distribution(&d)).unwrap();
            prop_assert_eq!(back.atoms().len(), d.atoms().len());
            for (a, b) in back.atoms().iter().zip(d.atoms()) {
                prop_assert!((a.0 - b.0).abs() <= 1e-12);
                prop_assert!((a.1 - b.1).abs() <= 1e-12);
            }
        }

        #[test]
        fn transform_properties_hold(d in arb_distribution(8)) {
            let p = psi_of_distribution(&d);
            // psi(0) = mean
            prop_assert!((p.at_zero() - d.mean()).abs() <= 1e-12);
            // nonincreasing, convex, >= psi(0) - t, eventually 0
            let mut prev_slope = f64::NEG_INFINITY;
            for w in p.points().windows(2) {
                let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                prop_assert!(s <= 1e-12);
                prop_assert!(s >= -1.0 - 1e-12);
                prop_assert!(s >= prev_slope - 1e-12);
                prev_slope = s;
            }
            for &(x, v) in p.points() {
                prop_assert!(v >= p.at_zero() - x - 1e-12);
            }
            prop_assert!(p.points().last().unwrap().1.abs() <= 1e-12);
        }
    }
}
