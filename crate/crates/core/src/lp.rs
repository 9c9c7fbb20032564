//! Thin linear-programming layer over two backends: a sparse revised
//! simplex for small models (returns vertex solutions) and an interior-point
//! solver for the large lattice models, where simplex pricing over hundreds
//! of thousands of columns is too slow.
//!
//! Models are built as sparse rows over bounded variables; solutions carry
//! the optimal objective, the primal point, and the worst constraint
//! residual so callers can assert feasibility quality.

use crate::error::Error;

/// Models at least this large go to the interior-point backend.
const INTERIOR_POINT_THRESHOLD: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    terms: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// Sparse LP: `opt c'x  s.t. rows, lo <= x <= hi`.
#[derive(Debug, Clone)]
pub struct LpModel {
    sense: Sense,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    /// max over rows of constraint violation at the returned point
    pub max_residual: f64,
}

impl LpModel {
    pub fn new(sense: Sense) -> Self {
        LpModel {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Add a variable with objective coefficient and bounds; returns its index.
    pub fn add_var(&mut self, obj: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(obj);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(Row {
            terms,
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn solve(&self) -> Result<LpSolution, Error> {
        if self.num_vars() >= INTERIOR_POINT_THRESHOLD {
            self.solve_interior_point()
        } else {
            self.solve_simplex()
        }
    }

    fn solve_simplex(&self) -> Result<LpSolution, Error> {
        let dir = match self.sense {
            Sense::Minimize => minilp::OptimizationDirection::Minimize,
            Sense::Maximize => minilp::OptimizationDirection::Maximize,
        };
        let mut problem = minilp::Problem::new(dir);
        let vars: Vec<minilp::Variable> = (0..self.num_vars())
            .map(|i| problem.add_var(self.objective[i], (self.lower[i], self.upper[i])))
            .collect();
        for row in &self.rows {
            let terms: Vec<(minilp::Variable, f64)> =
                row.terms.iter().map(|&(i, c)| (vars[i], c)).collect();
            let op = match row.relation {
                Relation::Le => minilp::ComparisonOp::Le,
                Relation::Eq => minilp::ComparisonOp::Eq,
                Relation::Ge => minilp::ComparisonOp::Ge,
            };
            problem.add_constraint(&terms, op, row.rhs);
        }
        match problem.solve() {
            // the backend reports an unbounded ray as an "optimal" infinite
            // objective rather than an error
            Ok(sol) if sol.objective().is_infinite() => Ok(LpSolution {
                status: LpStatus::Unbounded,
                objective: sol.objective(),
                values: Vec::new(),
                max_residual: f64::NAN,
            }),
            Ok(sol) => {
                let values: Vec<f64> = vars.iter().map(|&v| sol[v]).collect();
                Ok(LpSolution {
                    status: LpStatus::Optimal,
                    objective: sol.objective(),
                    max_residual: self.max_residual(&values),
                    values,
                })
            }
            Err(minilp::Error::Infeasible) => Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                values: Vec::new(),
                max_residual: f64::NAN,
            }),
            Err(minilp::Error::Unbounded) => Ok(LpSolution {
                status: LpStatus::Unbounded,
                objective: match self.sense {
                    Sense::Minimize => f64::NEG_INFINITY,
                    Sense::Maximize => f64::INFINITY,
                },
                values: Vec::new(),
                max_residual: f64::NAN,
            }),
        }
    }

    /// Conic formulation `min q'x  s.t.  Ax + s = b, s in {0}^p x R^q_+`:
    /// equality rows first, inequalities and finite variable bounds after.
    fn solve_interior_point(&self) -> Result<LpSolution, Error> {
        use clarabel::algebra::CscMatrix;
        use clarabel::solver::{
            DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
        };

        let n = self.num_vars();
        let sign = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let q: Vec<f64> = self.objective.iter().map(|c| sign * c).collect();

        // (row index, col, coeff) triplets, equality block then inequality
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut next_row = 0usize;
        for row in self.rows.iter().filter(|r| r.relation == Relation::Eq) {
            for &(i, c) in &row.terms {
                triplets.push((next_row, i, c));
            }
            b.push(row.rhs);
            next_row += 1;
        }
        let n_eq = next_row;
        for row in self.rows.iter().filter(|r| r.relation != Relation::Eq) {
            let flip = if row.relation == Relation::Ge { -1.0 } else { 1.0 };
            for &(i, c) in &row.terms {
                triplets.push((next_row, i, flip * c));
            }
            b.push(flip * row.rhs);
            next_row += 1;
        }
        for i in 0..n {
            if self.lower[i].is_finite() {
                triplets.push((next_row, i, -1.0));
                b.push(-self.lower[i]);
                next_row += 1;
            }
            if self.upper[i].is_finite() {
                triplets.push((next_row, i, 1.0));
                b.push(self.upper[i]);
                next_row += 1;
            }
        }
        let n_ineq = next_row - n_eq;

        // CSC assembly; triplets arrive in row order, so entries within a
        // column stay sorted by row index
        let mut colptr = vec![0usize; n + 1];
        for &(_, col, _) in &triplets {
            colptr[col + 1] += 1;
        }
        for i in 0..n {
            colptr[i + 1] += colptr[i];
        }
        let mut rowval = vec![0usize; triplets.len()];
        let mut nzval = vec![0.0f64; triplets.len()];
        let mut cursor = colptr.clone();
        for &(row, col, val) in &triplets {
            rowval[cursor[col]] = row;
            nzval[cursor[col]] = val;
            cursor[col] += 1;
        }
        let a = CscMatrix::new(next_row, n, colptr, rowval, nzval);
        let p = CscMatrix::zeros((n, n));

        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if n_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }
        if n_ineq > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_ineq));
        }
        let settings = DefaultSettings {
            verbose: false,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::NumericalFailure(format!("solver setup failed: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let values = sol.x.clone();
                Ok(LpSolution {
                    status: LpStatus::Optimal,
                    objective: sign * sol.obj_val,
                    max_residual: self.max_residual(&values),
                    values,
                })
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    objective: f64::NAN,
                    values: Vec::new(),
                    max_residual: f64::NAN,
                })
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                Ok(LpSolution {
                    status: LpStatus::Unbounded,
                    objective: match self.sense {
                        Sense::Minimize => f64::NEG_INFINITY,
                        Sense::Maximize => f64::INFINITY,
                    },
                    values: Vec::new(),
                    max_residual: f64::NAN,
                })
            }
            other => Err(Error::NumericalFailure(format!(
                "interior-point solver stopped: {other:?}"
            ))),
        }
    }

    /// Worst violation of rows and bounds at `x`.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            let lhs: f64 = row.terms.iter().map(|&(i, c)| c * x[i]).sum();
            let r = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(r);
        }
        for i in 0..x.len() {
            worst = worst.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        worst
    }

    /// Plain-text dump of the model for debugging.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let sense = match self.sense {
            Sense::Minimize => "min",
            Sense::Maximize => "max",
        };
        write!(s, "{sense}").unwrap();
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                write!(s, " {c:+}*x{i}").unwrap();
            }
        }
        s.push('\n');
        for row in &self.rows {
            let op = match row.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            for &(i, c) in &row.terms {
                write!(s, " {c:+}*x{i}").unwrap();
            }
            writeln!(s, " {op} {}", row.rhs).unwrap();
        }
        for i in 0..self.num_vars() {
            writeln!(s, "  {} <= x{i} <= {}", self.lower[i], self.upper[i]).unwrap();
        }
        s
    }
}
