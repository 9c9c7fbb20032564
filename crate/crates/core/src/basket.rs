//! Single-period bounds on a basket option given prices of other baskets.
//!
//! With payoffs `(w'x - k)^+` the constraint functions are affine on each
//! cell of the hyperplane arrangement cut by the strikes and the box, so an
//! extremal distribution can be taken atomic on the arrangement vertices.
//! The bound is then an LP over vertex weights.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::lp::{LpModel, LpStatus, Relation, Sense};
use crate::ATOM_TOL;

pub const MAX_ASSETS: usize = 6;
pub const MAX_CONSTRAINTS: usize = 24;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasketConstraint {
    pub weights: Vec<f64>,
    pub strike: f64,
    pub price: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasketTarget {
    pub weights: Vec<f64>,
    pub strike: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasketInstance {
    pub n: usize,
    #[serde(rename = "L")]
    pub l_bound: f64,
    pub constraints: Vec<BasketConstraint>,
    pub target: BasketTarget,
}

impl BasketInstance {
    pub fn validate(&self) -> Result<(), Error> {
        if self.n == 0 || self.l_bound <= 0.0 {
            return Err(Error::InvalidInput(
                "need n >= 1 and a positive support bound".into(),
            ));
        }
        if self.n > MAX_ASSETS || self.constraints.len() > MAX_CONSTRAINTS {
            return Err(Error::DimensionLimitExceeded(format!(
                "n={} (max {MAX_ASSETS}), m={} (max {MAX_CONSTRAINTS})",
                self.n,
                self.constraints.len()
            )));
        }
        if self.target.weights.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "target has {} weights for {} assets",
                self.target.weights.len(),
                self.n
            )));
        }
        if self.target.weights.iter().any(|&w| w < 0.0) || self.target.strike < 0.0 {
            return Err(Error::InvalidInput(
                "target weights and strike must be nonnegative".into(),
            ));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.weights.len() != self.n {
                return Err(Error::InvalidInput(format!(
                    "constraint {i} has {} weights for {} assets",
                    c.weights.len(),
                    self.n
                )));
            }
            if c.strike < 0.0 || c.price < 0.0 {
                return Err(Error::NegativeValue(format!(
                    "constraint {i} strike/price"
                )));
            }
        }
        Ok(())
    }
}

/// Arrangement vertices inside `[0, L]^n`, each with the indices of the
/// hyperplanes that generated it (constraints first, then `x_h = 0`, then
/// `x_h = L`).
#[derive(Debug, Clone, Serialize)]
pub struct VertexSet {
    pub points: Vec<Vec<f64>>,
    pub generators: Vec<Vec<usize>>,
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot falls below the singularity threshold.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// All points of the box where `n` independent hyperplanes from
/// `{w_i'x = k_i} ∪ {x_h = 0} ∪ {x_h = L}` meet.
pub fn enumerate_vertices(instance: &BasketInstance) -> Result<VertexSet, Error> {
    vertices_of_family(instance, false)
}

/// Support points for the bound LP: the arrangement vertices plus the
/// vertices contributed by the target's own kink plane. Without the latter
/// an extremal law could not place an atom on the target kink and the lower
/// bound would come out too high.
pub fn support_vertices(instance: &BasketInstance) -> Result<VertexSet, Error> {
    vertices_of_family(instance, true)
}

fn vertices_of_family(
    instance: &BasketInstance,
    include_target: bool,
) -> Result<VertexSet, Error> {
    instance.validate()?;
    let n = instance.n;
    let l = instance.l_bound;
    let m = instance.constraints.len();

    // hyperplane family as (normal, offset)
    let mut planes: Vec<(Vec<f64>, f64)> = instance
        .constraints
        .iter()
        .map(|c| (c.weights.clone(), c.strike))
        .collect();
    if include_target {
        planes.push((instance.target.weights.clone(), instance.target.strike));
    }
    for h in 0..n {
        let mut e = vec![0.0; n];
        e[h] = 1.0;
        planes.push((e.clone(), 0.0));
        planes.push((e, l));
    }

    let dedup_tol = 1e-9 * l.max(1.0);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut generators: Vec<Vec<usize>> = Vec::new();

    // iterate over n-subsets of the 2n + m planes in lexicographic order
    let total = planes.len();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            let inside = x.iter().all(|&v| v >= -dedup_tol && v <= l + dedup_tol);
            if inside {
                let x: Vec<f64> = x.iter().map(|&v| v.clamp(0.0, l)).collect();
                let dup = points
                    .iter()
                    .any(|p| p.iter().zip(&x).all(|(a, b)| (a - b).abs() <= dedup_tol));
                if !dup {
                    points.push(x);
                    generators.push(idx.clone());
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return finish(points, generators, m, n);
            }
            i -= 1;
            if idx[i] != i + total - n {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }

    fn finish(
        mut points: Vec<Vec<f64>>,
        mut generators: Vec<Vec<usize>>,
        _m: usize,
        _n: usize,
    ) -> Result<VertexSet, Error> {
        // deterministic order: lexicographic by coordinates
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&i, &j| {
            points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let points2 = order.iter().map(|&i| points[i].clone()).collect();
        let gens2 = order.iter().map(|&i| generators[i].clone()).collect();
        points = points2;
        generators = gens2;
        Ok(VertexSet { points, generators })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BasketBound {
    pub value: f64,
    /// atomic witness: `(vertex, weight)` pairs with positive weight
    pub witness: Vec<(Vec<f64>, f64)>,
    pub n_vertices: usize,
    pub max_residual: f64,
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sided bound: LP over vertex weights matching all quoted baskets.
pub fn bound_basket(instance: &BasketInstance, sense: Sense) -> Result<BasketBound, Error> {
    let verts = support_vertices(instance)?;
    let mut m = LpModel::new(sense);
    let vars: Vec<usize> = verts
        .points
        .iter()
        .map(|v| m.add_var(pos(dot(&instance.target.weights, v) - instance.target.strike), 0.0, 1.0))
        .collect();
    m.add_row(
        vars.iter().map(|&v| (v, 1.0)).collect(),
        Relation::Eq,
        1.0,
    );
    for c in &instance.constraints {
        let row: Vec<(usize, f64)> = verts
            .points
            .iter()
            .zip(&vars)
            .map(|(p, &v)| (v, pos(dot(&c.weights, p) - c.strike)))
            .collect();
        m.add_row(row, Relation::Eq, c.price);
    }
    let sol = m.solve()?;
    match sol.status {
        LpStatus::Optimal => {
            let witness: Vec<(Vec<f64>, f64)> = verts
                .points
                .iter()
                .zip(&sol.values)
                .filter(|&(_, &w)| w > ATOM_TOL)
                .map(|(p, &w)| (p.clone(), w))
                .collect();
            Ok(BasketBound {
                value: sol.objective,
                witness,
                n_vertices: verts.points.len(),
                max_residual: sol.max_residual,
            })
        }
        LpStatus::Infeasible => Err(Error::Infeasible),
        LpStatus::Unbounded => Err(Error::Unbounded),
    }
}

/// Lower and upper bound for the same instance.
pub fn bound_basket_both(instance: &BasketInstance) -> Result<(BasketBound, BasketBound), Error> {
    Ok((
        bound_basket(instance, Sense::Minimize)?,
        bound_basket(instance, Sense::Maximize)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(
        n: usize,
        l: f64,
        constraints: Vec<BasketConstraint>,
        target: BasketTarget,
    ) -> BasketInstance {
        BasketInstance {
            n,
            l_bound: l,
            constraints,
            target,
        }
    }

    fn binom(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    // oracle: test every candidate point from a fine grid for membership in
    // the vertex set by checking it lies on n independent hyperplanes
    fn brute_force_vertices_1d(l: f64, strikes: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0, l];
        v.extend(strikes.iter().copied().filter(|&k| k > 0.0 && k < l));
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    #[test]
    fn vertices_1d() {
        let i = inst(
            1,
            10.0,
            vec![BasketConstraint {
                weights: vec![1.0],
                strike: 4.0,
                price: 6.2,
            }],
            BasketTarget {
                weights: vec![1.0],
                strike: 7.0,
            },
        );
        let v = enumerate_vertices(&i).unwrap();
        let got: Vec<f64> = v.points.iter().map(|p| p[0]).collect();
        assert_eq!(got, brute_force_vertices_1d(10.0, &[4.0]));
        assert_eq!(got, vec![0.0, 4.0, 10.0]);

        // the LP support additionally carries the target's kink point
        let s = support_vertices(&i).unwrap();
        let got: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        assert_eq!(got, vec![0.0, 4.0, 7.0, 10.0]);
    }

    #[test]
    fn vertices_box_only() {
        let i = inst(
            2,
            1.0,
            vec![],
            BasketTarget {
                weights: vec![1.0, 1.0],
                strike: 0.0,
            },
        );
        let v = enumerate_vertices(&i).unwrap();
        assert_eq!(
            v.points,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
    }

    #[test]
    fn vertices_with_diagonal_cut() {
        let i = inst(
            2,
            1.0,
            vec![BasketConstraint {
                weights: vec![1.0, 1.0],
                strike: 1.5,
                price: 0.2,
            }],
            BasketTarget {
                weights: vec![1.0, 1.0],
                strike: 1.0,
            },
        );
        let v = enumerate_vertices(&i).unwrap();
        assert_eq!(v.points.len(), 6);
        assert!(v.points.contains(&vec![0.5, 1.0]));
        assert!(v.points.contains(&vec![1.0, 0.5]));
        assert!(v.points.len() <= binom(2 * 2 + 1, 2));
    }

    #[test]
    fn vertex_count_within_binomial_cap() {
        let i = inst(
            3,
            2.0,
            vec![
                BasketConstraint {
                    weights: vec![1.0, 1.0, 1.0],
                    strike: 2.0,
                    price: 1.1,
                },
                BasketConstraint {
                    weights: vec![1.0, -1.0, 0.5],
                    strike: 0.5,
                    price: 0.4,
                },
            ],
            BasketTarget {
                weights: vec![1.0, 0.0, 0.0],
                strike: 1.0,
            },
        );
        let v = enumerate_vertices(&i).unwrap();
        assert!(v.points.len() <= binom(2 * 3 + 2, 3));
        for p in &v.points {
            assert!(p.iter().all(|&c| (0.0..=2.0).contains(&c)));
        }
    }

    #[test]
    fn replication_of_quoted_basket() {
        let c = BasketConstraint {
            weights: vec![1.0, 2.0],
            strike: 1.0,
            price: 0.7,
        };
        let i = inst(
            2,
            2.0,
            vec![c.clone()],
            BasketTarget {
                weights: c.weights.clone(),
                strike: c.strike,
            },
        );
        let (lo, hi) = bound_basket_both(&i).unwrap();
        assert!((lo.value - 0.7).abs() < 1e-6);
        assert!((hi.value - 0.7).abs() < 1e-6);
    }

    #[test]
    fn agrees_with_one_dim_bounds() {
        // forward constraint pins the mean at 10; target (x - 5)^+, L = 20
        let i = inst(
            1,
            20.0,
            vec![BasketConstraint {
                weights: vec![1.0],
                strike: 0.0,
                price: 10.0,
            }],
            BasketTarget {
                weights: vec![1.0],
                strike: 5.0,
            },
        );
        let (lo, hi) = bound_basket_both(&i).unwrap();
        assert!((lo.value - 5.0).abs() < 1e-6);
        assert!((hi.value - 7.5).abs() < 1e-6);

        // cross-module agreement
        use crate::bounds1d::{bound_payoff_1d, Payoff1D};
        use crate::quotes::{load_surface, QuoteRecord};
        use std::collections::BTreeMap;
        let spots: BTreeMap<String, f64> = [("A".to_string(), 10.0)].into_iter().collect();
        let dfs: BTreeMap<u32, f64> = [(1, 1.0)].into_iter().collect();
        let s = load_surface(&[] as &[QuoteRecord], &spots, &dfs)
            .unwrap()
            .normalize();
        let r = bound_payoff_1d(&s, "A", 1, &Payoff1D::call(5.0), 20.0, 1e-9).unwrap();
        assert!((lo.value - r.lower).abs() < 1e-6);
        assert!((hi.value - r.upper).abs() < 1e-6);
    }

    #[test]
    fn zero_strike_target_is_linear() {
        let i = inst(
            2,
            30.0,
            vec![
                BasketConstraint {
                    weights: vec![1.0, 0.0],
                    strike: 0.0,
                    price: 10.0,
                },
                BasketConstraint {
                    weights: vec![0.0, 1.0],
                    strike: 0.0,
                    price: 4.0,
                },
            ],
            BasketTarget {
                weights: vec![2.0, 3.0],
                strike: 0.0,
            },
        );
        let (lo, hi) = bound_basket_both(&i).unwrap();
        assert!((lo.value - 32.0).abs() < 1e-6);
        assert!((hi.value - 32.0).abs() < 1e-6);
    }

    #[test]
    fn inconsistent_prices_are_infeasible() {
        // a forward priced above the box maximum can't come from any law
        let i = inst(
            1,
            10.0,
            vec![BasketConstraint {
                weights: vec![1.0],
                strike: 0.0,
                price: 15.0,
            }],
            BasketTarget {
                weights: vec![1.0],
                strike: 5.0,
            },
        );
        let err = bound_basket(&i, Sense::Maximize).unwrap_err();
        assert!(matches!(err, Error::Infeasible));
    }

    #[test]
    fn bound_dominates_generating_distribution() {
        // build prices from a known law, then check the LP brackets its
        // target expectation
        let law = [(vec![2.0, 1.0], 0.3), (vec![6.0, 3.0], 0.5), (vec![1.0, 8.0], 0.2)];
        let c1w = vec![1.0, 1.0];
        let c1k = 4.0;
        let price1: f64 = law
            .iter()
            .map(|(p, w)| w * pos(dot(&c1w, p) - c1k))
            .sum();
        let tgt = BasketTarget {
            weights: vec![1.0, 2.0],
            strike: 5.0,
        };
        let expect: f64 = law
            .iter()
            .map(|(p, w)| w * pos(dot(&tgt.weights, p) - tgt.strike))
            .sum();
        let i = inst(
            2,
            10.0,
            vec![BasketConstraint {
                weights: c1w,
                strike: c1k,
                price: price1,
            }],
            tgt,
        );
        let (lo, hi) = bound_basket_both(&i).unwrap();
        assert!(lo.value <= expect + 1e-7, "{} vs {}", lo.value, expect);
        assert!(hi.value >= expect - 1e-7, "{} vs {}", hi.value, expect);
        assert!(lo.max_residual < 1e-7 && hi.max_residual < 1e-7);
    }

    #[test]
    fn dimension_limit_enforced() {
        let i = inst(
            7,
            1.0,
            vec![],
            BasketTarget {
                weights: vec![1.0; 7],
                strike: 0.5,
            },
        );
        let err = enumerate_vertices(&i).unwrap_err();
        assert!(matches!(err, Error::DimensionLimitExceeded { .. }));
    }
}
