//! Bounds on `E[g(X^I, X^II)]` for two assets.
//!
//! Two engines share the same inputs:
//! - an exact LP indexed by paths of grid regions, with one scaled atom per
//!   region step and terminal mass on graph vertices;
//! - an approximate LP over an ε-square lattice with quote rows relaxed by
//!   ±tε, whose value is within `M√2·ε·t*` of the exact one.

use serde::{Deserialize, Serialize};

use crate::arbitrage::{check_no_arbitrage, future_vertices};
use crate::error::Error;
use crate::lp::{LpModel, LpStatus, Relation, Sense};
use crate::quotes::NormalizedSurface;
use crate::{ATOM_TOL, VALIDATION_TOL};

pub const DEFAULT_VAR_BUDGET: usize = 2_000_000;

/// Two-asset continuous piecewise-linear payoff. The general form is a max
/// of affine pieces `a·x + b·y + c`; `lines` are its kink lines `a·x + b·y
/// = c`, which the graphs and the restricted lattice need explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payoff2D {
    Canonical {
        alpha: f64,
        beta: f64,
        k: f64,
    },
    General {
        pieces: Vec<(f64, f64, f64)>,
        lines: Vec<(f64, f64, f64)>,
    },
}

impl Payoff2D {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Payoff2D::Canonical { alpha, beta, k } => (alpha * x + beta * y - k).max(0.0),
            Payoff2D::General { pieces, .. } => pieces
                .iter()
                .map(|&(a, b, c)| a * x + b * y + c)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Kink lines as `a·x + b·y = c`.
    pub fn lines(&self) -> Vec<(f64, f64, f64)> {
        match self {
            Payoff2D::Canonical { alpha, beta, k } => vec![(*alpha, *beta, *k)],
            Payoff2D::General { lines, .. } => lines.clone(),
        }
    }

    /// Error bracket of the ε-lattice method after `t*` steps.
    pub fn bracket(&self, eps: f64, t_star: u32) -> f64 {
        let m = match self {
            Payoff2D::Canonical { alpha, beta, .. } => {
                return (alpha.abs() + beta.abs()) * eps * t_star as f64
            }
            Payoff2D::General { pieces, .. } => pieces
                .iter()
                .map(|&(a, b, _)| (a * a + b * b).sqrt())
                .fold(0.0f64, f64::max),
        };
        m * std::f64::consts::SQRT_2 * eps * t_star as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// One time slice of the graph family: grid lines at that maturity's quoted
/// strikes, plus (at `t*` only) future-vertex strikes and the payoff lines.
#[derive(Debug, Clone, Serialize)]
pub struct Graph {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub extra_lines: Vec<(f64, f64, f64)>,
    /// rectangular cells of the axis-aligned skeleton, x-major order
    pub rects: Vec<Rect>,
    /// arrangement vertices inside the box, lexicographic
    pub vertices: Vec<(f64, f64)>,
    /// full region count including oblique-line splits (Euler formula)
    pub n_regions: usize,
}

impl Graph {
    /// Index of the cell containing the point; boundary points resolve to
    /// the lexicographically smallest adjacent cell.
    pub fn region_of(&self, x: f64, y: f64) -> Option<usize> {
        let tol = VALIDATION_TOL;
        self.rects
            .iter()
            .position(|r| x >= r.x0 - tol && x <= r.x1 + tol && y >= r.y0 - tol && y <= r.y1 + tol)
    }

    pub fn vertex_index(&self, x: f64, y: f64) -> Option<usize> {
        self.vertices
            .iter()
            .position(|&(vx, vy)| (vx - x).abs() <= 1e-9 && (vy - y).abs() <= 1e-9)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphSpec {
    pub l_bound: f64,
    pub graphs: Vec<Graph>,
}

fn sorted_lines(mut v: Vec<f64>, l: f64) -> Vec<f64> {
    v.retain(|&x| x > VALIDATION_TOL && x < l - VALIDATION_TOL);
    v.push(0.0);
    v.push(l);
    v.sort_by(f64::total_cmp);
    v.dedup_by(|b, a| (*b - *a).abs() <= 1e-9);
    v
}

/// Intersection of `a1 x + b1 y = c1` and `a2 x + b2 y = c2`, if unique.
fn line_intersection(l1: (f64, f64, f64), l2: (f64, f64, f64)) -> Option<(f64, f64)> {
    let det = l1.0 * l2.1 - l1.1 * l2.0;
    let scale = (l1.0.abs() + l1.1.abs()) * (l2.0.abs() + l2.1.abs());
    if det.abs() <= 1e-12 * scale.max(1.0) {
        return None;
    }
    Some((
        (l1.2 * l2.1 - l1.1 * l2.2) / det,
        (l1.0 * l2.2 - l1.2 * l2.0) / det,
    ))
}

fn build_graph(
    x_strikes: Vec<f64>,
    y_strikes: Vec<f64>,
    extra_lines: Vec<(f64, f64, f64)>,
    l: f64,
) -> Graph {
    let xs = sorted_lines(x_strikes, l);
    let ys = sorted_lines(y_strikes, l);

    let mut rects = Vec::new();
    for wx in xs.windows(2) {
        for wy in ys.windows(2) {
            rects.push(Rect {
                x0: wx[0],
                x1: wx[1],
                y0: wy[0],
                y1: wy[1],
            });
        }
    }

    // all lines in (a, b, c) form
    let mut lines: Vec<(f64, f64, f64)> = Vec::new();
    lines.extend(xs.iter().map(|&a| (1.0, 0.0, a)));
    lines.extend(ys.iter().map(|&b| (0.0, 1.0, b)));
    lines.extend(extra_lines.iter().copied());

    let tol = 1e-9 * l.max(1.0);
    let mut vertices: Vec<(f64, f64)> = Vec::new();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            if let Some((x, y)) = line_intersection(lines[i], lines[j]) {
                if x >= -tol && x <= l + tol && y >= -tol && y <= l + tol {
                    let p = (x.clamp(0.0, l), y.clamp(0.0, l));
                    if !vertices
                        .iter()
                        .any(|&(vx, vy)| (vx - p.0).abs() <= tol && (vy - p.1).abs() <= tol)
                    {
                        vertices.push(p);
                    }
                }
            }
        }
    }
    vertices.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    // region count via Euler's formula on the clipped arrangement:
    // bounded faces = edges - vertices + 1 for a connected plane graph
    let mut n_edges = 0usize;
    for &(a, b, c) in &lines {
        let mut on: Vec<(f64, f64)> = vertices
            .iter()
            .copied()
            .filter(|&(x, y)| (a * x + b * y - c).abs() <= tol * (a.abs() + b.abs()).max(1.0))
            .collect();
        on.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
        if on.len() >= 2 {
            n_edges += on.len() - 1;
        }
    }
    let n_regions = n_edges + 1 - vertices.len();

    Graph {
        xs,
        ys,
        extra_lines,
        rects,
        vertices,
        n_regions,
    }
}

/// Graphs `G_1..G_t*` for a pair of assets on a common surface.
pub fn build_graphs(
    surface: &NormalizedSurface,
    asset_i: &str,
    asset_ii: &str,
    t_star: u32,
    payoff: &Payoff2D,
    l_bound: f64,
    tol: f64,
) -> Result<GraphSpec, Error> {
    for asset in [asset_i, asset_ii] {
        let rep = check_no_arbitrage(surface, asset, tol)?;
        if !rep.consistent {
            return Err(Error::ArbitragePresent(format!(
                "{} violation(s) for `{asset}`",
                rep.violations.len()
            )));
        }
    }
    let mut graphs = Vec::with_capacity(t_star as usize);
    for t in 1..=t_star {
        let mut xk: Vec<f64> = surface.slice(asset_i, t)?.iter().map(|&(k, _)| k).collect();
        let mut yk: Vec<f64> = surface.slice(asset_ii, t)?.iter().map(|&(k, _)| k).collect();
        let mut extra = Vec::new();
        if t == t_star {
            xk.extend(
                future_vertices(surface, asset_i, t_star, tol)?
                    .vertices
                    .iter()
                    .map(|&(k, _)| k),
            );
            yk.extend(
                future_vertices(surface, asset_ii, t_star, tol)?
                    .vertices
                    .iter()
                    .map(|&(k, _)| k),
            );
            extra = payoff.lines();
        }
        graphs.push(build_graph(xk, yk, extra, l_bound));
    }
    Ok(GraphSpec {
        l_bound,
        graphs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness2D {
    /// per time step: `((x, y), mass)` atoms
    pub marginals: Vec<Vec<((f64, f64), f64)>>,
    /// per step `t -> t+1`: `(from, to, mass)`
    pub transitions: Vec<Vec<((f64, f64), (f64, f64), f64)>>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Bounds2D {
    pub lower: f64,
    pub upper: f64,
    pub witness_lower: Witness2D,
    pub witness_upper: Witness2D,
    pub n_vars: usize,
    pub n_rows: usize,
    /// lattice-method error bracket, absent for the exact engine
    pub bracket: Option<f64>,
}

// ---------------------------------------------------------------------------
// exact path LP

struct ExactLayout {
    t_star: usize,
    /// number of paths at each level 1..t*-1
    level_paths: Vec<usize>,
    /// region counts per level
    level_regions: Vec<usize>,
    /// var-block offsets: (p, zx, zy) per level
    blocks: Vec<(usize, usize, usize)>,
    /// terminal block offset and vertex count
    terminal: (usize, usize),
    n_vars: usize,
}

fn exact_layout(spec: &GraphSpec, t_star: usize) -> ExactLayout {
    let mut level_paths = Vec::new();
    let mut level_regions = Vec::new();
    let mut blocks = Vec::new();
    let mut n = 0usize;
    let mut paths = 1usize;
    for t in 1..t_star {
        let r = spec.graphs[t - 1].rects.len();
        paths *= r;
        level_paths.push(paths);
        level_regions.push(r);
        blocks.push((n, n + paths, n + 2 * paths));
        n += 3 * paths;
    }
    let nv = spec.graphs[t_star - 1].vertices.len();
    let terminal = (n, nv);
    n += paths * nv;
    ExactLayout {
        t_star,
        level_paths,
        level_regions,
        blocks,
        terminal,
        n_vars: n,
    }
}

impl ExactLayout {
    fn prefix_count(&self) -> usize {
        self.level_paths.last().copied().unwrap_or(1)
    }
    fn term_var(&self, prefix: usize, v: usize) -> usize {
        self.terminal.0 + prefix * self.terminal.1 + v
    }
    /// region index of the last step of path `p` at level `t` (1-based)
    fn last_region(&self, t: usize, p: usize) -> usize {
        p % self.level_regions[t - 1]
    }
    fn var_p(&self, t: usize, p: usize) -> usize {
        self.blocks[t - 1].0 + p
    }
    fn var_zx(&self, t: usize, p: usize) -> usize {
        self.blocks[t - 1].1 + p
    }
    fn var_zy(&self, t: usize, p: usize) -> usize {
        self.blocks[t - 1].2 + p
    }
    fn is_terminal_level(&self, t: usize) -> bool {
        t == self.t_star
    }
}

/// Coefficients of the atom coordinate `X^h` of path `p` at level `t < t*`,
/// as terms over `(P, ẑ)`.
fn atom_terms(
    spec: &GraphSpec,
    lay: &ExactLayout,
    t: usize,
    p: usize,
    x_coord: bool,
) -> [(usize, f64); 2] {
    let r = &spec.graphs[t - 1].rects[lay.last_region(t, p)];
    if x_coord {
        [(lay.var_p(t, p), r.x0), (lay.var_zx(t, p), r.x1 - r.x0)]
    } else {
        [(lay.var_p(t, p), r.y0), (lay.var_zy(t, p), r.y1 - r.y0)]
    }
}

/// `(X^h - k)^+` of path `p` at level `t < t*` as linear terms; valid
/// because the strike line is a grid line of `G_t`, so the cell lies fully
/// on one side.
fn call_terms(
    spec: &GraphSpec,
    lay: &ExactLayout,
    t: usize,
    p: usize,
    x_coord: bool,
    strike: f64,
) -> Vec<(usize, f64)> {
    let r = &spec.graphs[t - 1].rects[lay.last_region(t, p)];
    let (lo, hi) = if x_coord { (r.x0, r.x1) } else { (r.y0, r.y1) };
    if hi <= strike + VALIDATION_TOL {
        return Vec::new();
    }
    debug_assert!(lo >= strike - VALIDATION_TOL);
    let z = if x_coord {
        lay.var_zx(t, p)
    } else {
        lay.var_zy(t, p)
    };
    vec![(lay.var_p(t, p), lo - strike), (z, hi - lo)]
}

fn build_exact_model(
    surface: &NormalizedSurface,
    asset_i: &str,
    asset_ii: &str,
    spec: &GraphSpec,
    lay: &ExactLayout,
    payoff: &Payoff2D,
    sense: Sense,
    tol: f64,
) -> Result<LpModel, Error> {
    let t_star = lay.t_star;
    let verts = &spec.graphs[t_star - 1].vertices;
    let mut m = LpModel::new(sense);
    for _ in 0..lay.terminal.0 {
        m.add_var(0.0, 0.0, 1.0);
    }
    for _ in 0..lay.prefix_count() {
        for &(vx, vy) in verts {
            m.add_var(payoff.eval(vx, vy), 0.0, 1.0);
        }
    }

    // total mass at level 1
    if t_star == 1 {
        m.add_row(
            (0..verts.len()).map(|v| (lay.term_var(0, v), 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
    } else {
        m.add_row(
            (0..lay.level_paths[0])
                .map(|p| (lay.var_p(1, p), 1.0))
                .collect(),
            Relation::Eq,
            1.0,
        );
    }

    // wedge: 0 <= ẑ <= P
    for t in 1..t_star {
        for p in 0..lay.level_paths[t - 1] {
            m.add_row(
                vec![(lay.var_zx(t, p), 1.0), (lay.var_p(t, p), -1.0)],
                Relation::Le,
                0.0,
            );
            m.add_row(
                vec![(lay.var_zy(t, p), 1.0), (lay.var_p(t, p), -1.0)],
                Relation::Le,
                0.0,
            );
        }
    }

    // telescoping + martingale, prefix by prefix
    for t in 2..=t_star {
        let prefixes = lay.level_paths[t - 2];
        for pre in 0..prefixes {
            if lay.is_terminal_level(t) {
                let mut mass: Vec<(usize, f64)> = (0..verts.len())
                    .map(|v| (lay.term_var(pre, v), 1.0))
                    .collect();
                mass.push((lay.var_p(t - 1, pre), -1.0));
                m.add_row(mass, Relation::Eq, 0.0);
                for x_coord in [true, false] {
                    let mut row: Vec<(usize, f64)> = verts
                        .iter()
                        .enumerate()
                        .map(|(v, &(vx, vy))| {
                            (lay.term_var(pre, v), if x_coord { vx } else { vy })
                        })
                        .collect();
                    for (var, c) in atom_terms(spec, lay, t - 1, pre, x_coord) {
                        row.push((var, -c));
                    }
                    m.add_row(row, Relation::Eq, 0.0);
                }
            } else {
                let nr = lay.level_regions[t - 1];
                let mut mass: Vec<(usize, f64)> = (0..nr)
                    .map(|r| (lay.var_p(t, pre * nr + r), 1.0))
                    .collect();
                mass.push((lay.var_p(t - 1, pre), -1.0));
                m.add_row(mass, Relation::Eq, 0.0);
                for x_coord in [true, false] {
                    let mut row: Vec<(usize, f64)> = Vec::new();
                    for r in 0..nr {
                        row.extend(atom_terms(spec, lay, t, pre * nr + r, x_coord));
                    }
                    for (var, c) in atom_terms(spec, lay, t - 1, pre, x_coord) {
                        row.push((var, -c));
                    }
                    m.add_row(row, Relation::Eq, 0.0);
                }
            }
        }
    }

    // quote rows: the mean (strike-0 call) plus every quoted strike, at
    // each maturity up to t*; future-vertex caps at t*
    let spot_i = surface.spot(asset_i)?;
    let spot_ii = surface.spot(asset_ii)?;
    for t in 1..=t_star {
        for (asset, x_coord, spot) in [(asset_i, true, spot_i), (asset_ii, false, spot_ii)] {
            let mut targets: Vec<(f64, f64, Relation)> = vec![(0.0, spot, Relation::Eq)];
            for (k, c) in surface.slice(asset, t as u32)? {
                if k > VALIDATION_TOL {
                    targets.push((k, c, Relation::Eq));
                }
            }
            if t == t_star {
                for (k, c) in future_vertices(surface, asset, t_star as u32, tol)?.vertices {
                    targets.push((k, c, Relation::Le));
                }
            }
            for (strike, price, rel) in targets {
                let mut row: Vec<(usize, f64)> = Vec::new();
                if lay.is_terminal_level(t) {
                    for pre in 0..lay.prefix_count() {
                        for (v, &(vx, vy)) in verts.iter().enumerate() {
                            let coord = if x_coord { vx } else { vy };
                            let c = (coord - strike).max(0.0);
                            if c != 0.0 {
                                row.push((lay.term_var(pre, v), c));
                            }
                        }
                    }
                } else {
                    for p in 0..lay.level_paths[t - 1] {
                        row.extend(call_terms(spec, lay, t, p, x_coord, strike));
                    }
                }
                m.add_row(row, rel, price);
            }
        }
    }

    Ok(m)
}

/// Exact two-asset bound via the path-region LP.
pub fn bound_payoff_2d_exact(
    surface: &NormalizedSurface,
    asset_i: &str,
    asset_ii: &str,
    t_star: u32,
    payoff: &Payoff2D,
    l_bound: f64,
    budget: usize,
    tol: f64,
) -> Result<Bounds2D, Error> {
    let spec = build_graphs(surface, asset_i, asset_ii, t_star, payoff, l_bound, tol)?;
    let lay = exact_layout(&spec, t_star as usize);
    if lay.n_vars > budget {
        return Err(Error::PathBudgetExceeded {
            need: lay.n_vars,
            budget,
        });
    }
    let solve = |sense: Sense| -> Result<(f64, Witness2D, usize, usize), Error> {
        let m = build_exact_model(surface, asset_i, asset_ii, &spec, &lay, payoff, sense, tol)?;
        let sol = m.solve()?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::InfeasibleDespiteCheck);
        }
        let w = extract_exact_witness(&spec, &lay, &sol.values, sol.max_residual);
        Ok((sol.objective, w, m.num_vars(), m.num_rows()))
    };
    let (lo, hi) = rayon::join(|| solve(Sense::Minimize), || solve(Sense::Maximize));
    let (lower, witness_lower, n_vars, n_rows) = lo?;
    let (upper, witness_upper, _, _) = hi?;
    Ok(Bounds2D {
        lower,
        upper,
        witness_lower,
        witness_upper,
        n_vars,
        n_rows,
        bracket: None,
    })
}

fn extract_exact_witness(
    spec: &GraphSpec,
    lay: &ExactLayout,
    values: &[f64],
    residual: f64,
) -> Witness2D {
    let t_star = lay.t_star;
    let verts = &spec.graphs[t_star - 1].vertices;
    let atom_of = |t: usize, p: usize| -> Option<(f64, f64, f64)> {
        let mass = values[lay.var_p(t, p)];
        if mass <= 1e-12 {
            return None;
        }
        let r = &spec.graphs[t - 1].rects[lay.last_region(t, p)];
        let x = r.x0 + (r.x1 - r.x0) * values[lay.var_zx(t, p)] / mass;
        let y = r.y0 + (r.y1 - r.y0) * values[lay.var_zy(t, p)] / mass;
        Some((x, y, mass))
    };
    let mut marginals: Vec<Vec<((f64, f64), f64)>> = Vec::new();
    let mut transitions: Vec<Vec<((f64, f64), (f64, f64), f64)>> = Vec::new();
    for t in 1..t_star {
        let mut marg = Vec::new();
        for p in 0..lay.level_paths[t - 1] {
            if let Some((x, y, mass)) = atom_of(t, p) {
                marg.push(((x, y), mass));
            }
        }
        marginals.push(marg);
    }
    // transitions between intermediate levels
    for t in 1..t_star.saturating_sub(1) {
        let nr = lay.level_regions[t];
        let mut step = Vec::new();
        for p in 0..lay.level_paths[t - 1] {
            if let Some((x, y, _)) = atom_of(t, p) {
                for r in 0..nr {
                    if let Some((x2, y2, m2)) = atom_of(t + 1, p * nr + r) {
                        step.push(((x, y), (x2, y2), m2));
                    }
                }
            }
        }
        transitions.push(step);
    }
    // terminal marginal and final transition
    let mut term = Vec::new();
    let mut last_step = Vec::new();
    for pre in 0..lay.prefix_count() {
        let from = if t_star >= 2 {
            atom_of(t_star - 1, pre).map(|(x, y, _)| (x, y))
        } else {
            None
        };
        for (v, &(vx, vy)) in verts.iter().enumerate() {
            let mass = values[lay.term_var(pre, v)];
            if mass > ATOM_TOL {
                term.push(((vx, vy), mass));
                if let Some(f) = from {
                    last_step.push((f, (vx, vy), mass));
                }
            }
        }
    }
    marginals.push(term);
    if t_star >= 2 {
        transitions.push(last_step);
    }
    Witness2D {
        marginals,
        transitions,
        max_residual: residual,
    }
}

// ---------------------------------------------------------------------------
// ε-lattice approximation

#[derive(Debug, Clone, Serialize)]
pub struct LatticeSpec {
    pub eps: f64,
    pub restricted: bool,
    /// node set per time step, x-major order
    pub nodes: Vec<Vec<(f64, f64)>>,
}

/// Chebyshev distance from a point to a segment, minimized by ternary
/// search (the distance is convex along the segment).
fn cheb_dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let d = |s: f64| -> f64 {
        let x = a.0 + s * (b.0 - a.0);
        let y = a.1 + s * (b.1 - a.1);
        (p.0 - x).abs().max((p.1 - y).abs())
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if d(m1) <= d(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    d(0.5 * (lo + hi)).min(d(0.0)).min(d(1.0))
}

/// Clip `a·x + b·y = c` to the box `[0, L]²`; `None` if it misses.
fn clip_line_to_box(line: (f64, f64, f64), l: f64) -> Option<((f64, f64), (f64, f64))> {
    let (a, b, c) = line;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let tol = 1e-9 * l.max(1.0);
    for &(e_a, e_b, e_c) in &[(1.0, 0.0, 0.0), (1.0, 0.0, l), (0.0, 1.0, 0.0), (0.0, 1.0, l)] {
        if let Some((x, y)) = line_intersection((a, b, c), (e_a, e_b, e_c)) {
            if x >= -tol && x <= l + tol && y >= -tol && y <= l + tol {
                let p = (x.clamp(0.0, l), y.clamp(0.0, l));
                if !pts
                    .iter()
                    .any(|&(px, py)| (px - p.0).abs() <= tol && (py - p.1).abs() <= tol)
                {
                    pts.push(p);
                }
            }
        }
    }
    if pts.len() >= 2 {
        Some((pts[0], pts[1]))
    } else {
        None
    }
}

/// Lattice node sets: the full ε-grid on `[0, L+(t−1)ε]²`, or only nodes
/// within `t·ε` (per coordinate) of some graph edge.
pub fn build_lattice(spec: &GraphSpec, t_star: u32, eps: f64, restricted: bool) -> LatticeSpec {
    let l = spec.l_bound;
    // union of edges over all time slices
    let mut vlines: Vec<f64> = Vec::new();
    let mut hlines: Vec<f64> = Vec::new();
    let mut segments: Vec<((f64, f64), (f64, f64))> = Vec::new();
    for g in &spec.graphs {
        vlines.extend(&g.xs);
        hlines.extend(&g.ys);
        for &line in &g.extra_lines {
            if let Some(seg) = clip_line_to_box(line, l) {
                segments.push(seg);
            }
        }
    }
    vlines.sort_by(f64::total_cmp);
    vlines.dedup_by(|b, a| (*b - *a).abs() <= 1e-9);
    hlines.sort_by(f64::total_cmp);
    hlines.dedup_by(|b, a| (*b - *a).abs() <= 1e-9);

    let mut nodes = Vec::with_capacity(t_star as usize);
    for t in 1..=t_star {
        let reach = (t as f64) * eps + 1e-9;
        let hi = l + (t as f64 - 1.0) * eps;
        let steps = (hi / eps + 1e-9).floor() as usize;
        let mut set = Vec::new();
        for i in 0..=steps {
            let x = i as f64 * eps;
            for j in 0..=steps {
                let y = j as f64 * eps;
                if restricted {
                    let near_v = vlines
                        .iter()
                        .any(|&a| (x - a).abs() <= reach && y <= l + reach);
                    let near_h = !near_v
                        && hlines
                            .iter()
                            .any(|&b| (y - b).abs() <= reach && x <= l + reach);
                    let near_s = !near_v
                        && !near_h
                        && segments
                            .iter()
                            .any(|&(p, q)| cheb_dist_to_segment((x, y), p, q) <= reach);
                    if !(near_v || near_h || near_s) {
                        continue;
                    }
                }
                set.push((x, y));
            }
        }
        nodes.push(set);
    }
    LatticeSpec {
        eps,
        restricted,
        nodes,
    }
}

/// Approximate two-asset bound on the ε-lattice; quote rows relaxed by
/// ±tε, mean rows exact, later-maturity caps relaxed by t*ε.
pub fn bound_payoff_2d_approx(
    surface: &NormalizedSurface,
    asset_i: &str,
    asset_ii: &str,
    t_star: u32,
    payoff: &Payoff2D,
    l_bound: f64,
    eps: f64,
    restricted: bool,
    budget: usize,
    tol: f64,
) -> Result<Bounds2D, Error> {
    if eps <= 0.0 {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    let spec = build_graphs(surface, asset_i, asset_ii, t_star, payoff, l_bound, tol)?;
    let lattice = build_lattice(&spec, t_star, eps, restricted);
    let ts = t_star as usize;
    let n_vars: usize = if ts == 1 {
        lattice.nodes[0].len()
    } else {
        (0..ts - 1)
            .map(|t| lattice.nodes[t].len() * lattice.nodes[t + 1].len())
            .sum()
    };
    if n_vars > budget {
        return Err(Error::NodeBudgetExceeded {
            need: n_vars,
            budget,
        });
    }

    let solve = |sense: Sense| -> Result<(f64, Witness2D, usize, usize), Error> {
        let m = build_approx_model(surface, asset_i, asset_ii, &lattice, ts, payoff, sense, tol)?;
        let sol = m.solve()?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::InfeasibleDespiteCheck);
        }
        let w = extract_approx_witness(&lattice, ts, &sol.values, sol.max_residual);
        Ok((sol.objective, w, m.num_vars(), m.num_rows()))
    };
    let (lo, hi) = rayon::join(|| solve(Sense::Minimize), || solve(Sense::Maximize));
    let (lower, witness_lower, n_vars, n_rows) = lo?;
    let (upper, witness_upper, _, _) = hi?;
    Ok(Bounds2D {
        lower,
        upper,
        witness_lower,
        witness_upper,
        n_vars,
        n_rows,
        bracket: Some(payoff.bracket(eps, t_star)),
    })
}

/// Marginal of time `t` (1-based) as sparse terms `(var, f(node))` over the
/// pair variables; `f` maps a node to its row coefficient.
fn marginal_terms<F: Fn((f64, f64)) -> f64>(
    lattice: &LatticeSpec,
    ts: usize,
    offsets: &[usize],
    t: usize,
    f: F,
) -> Vec<(usize, f64)> {
    let mut row = Vec::new();
    if ts == 1 {
        for (i, &node) in lattice.nodes[0].iter().enumerate() {
            let c = f(node);
            if c != 0.0 {
                row.push((i, c));
            }
        }
        return row;
    }
    if t < ts {
        // marginal of t from Q_t, summing over the destination index
        let n_to = lattice.nodes[t].len();
        for (i, &node) in lattice.nodes[t - 1].iter().enumerate() {
            let c = f(node);
            if c != 0.0 {
                for j in 0..n_to {
                    row.push((offsets[t - 1] + i * n_to + j, c));
                }
            }
        }
    } else {
        // marginal of t* from Q_{t*-1}, summing over the source index
        let n_to = lattice.nodes[ts - 1].len();
        let n_from = lattice.nodes[ts - 2].len();
        for (j, &node) in lattice.nodes[ts - 1].iter().enumerate() {
            let c = f(node);
            if c != 0.0 {
                for i in 0..n_from {
                    row.push((offsets[ts - 2] + i * n_to + j, c));
                }
            }
        }
    }
    row
}

fn build_approx_model(
    surface: &NormalizedSurface,
    asset_i: &str,
    asset_ii: &str,
    lattice: &LatticeSpec,
    ts: usize,
    payoff: &Payoff2D,
    sense: Sense,
    tol: f64,
) -> Result<LpModel, Error> {
    let eps = lattice.eps;
    let mut m = LpModel::new(sense);
    // pair-variable blocks Q_t, t = 1..t*-1 (plain marginals when t* = 1)
    let mut offsets = Vec::new();
    if ts == 1 {
        offsets.push(0);
        for &(x, y) in &lattice.nodes[0] {
            m.add_var(payoff.eval(x, y), 0.0, 1.0);
        }
    } else {
        let mut off = 0usize;
        for t in 0..ts - 1 {
            offsets.push(off);
            let block = lattice.nodes[t].len() * lattice.nodes[t + 1].len();
            let last = t == ts - 2;
            let n_to = lattice.nodes[t + 1].len();
            for idx in 0..block {
                let obj = if last {
                    let (x, y) = lattice.nodes[t + 1][idx % n_to];
                    payoff.eval(x, y)
                } else {
                    0.0
                };
                m.add_var(obj, 0.0, 1.0);
            }
            off += block;
        }
    }

    // total mass
    m.add_row(
        marginal_terms(lattice, ts, &offsets, 1, |_| 1.0),
        Relation::Eq,
        1.0,
    );

    if ts >= 2 {
        // chain consistency at interior times
        for t in 2..ts {
            let n_here = lattice.nodes[t - 1].len();
            let n_prev = lattice.nodes[t - 2].len();
            let n_next = lattice.nodes[t].len();
            for j in 0..n_here {
                let mut row: Vec<(usize, f64)> = (0..n_prev)
                    .map(|i| (offsets[t - 2] + i * n_here + j, 1.0))
                    .collect();
                row.extend((0..n_next).map(|k| (offsets[t - 1] + j * n_next + k, -1.0)));
                m.add_row(row, Relation::Eq, 0.0);
            }
        }
        // martingale rows per source node
        for t in 0..ts - 1 {
            let n_to = lattice.nodes[t + 1].len();
            for (i, &(xi, yi)) in lattice.nodes[t].iter().enumerate() {
                for (coord_x, base) in [(true, xi), (false, yi)] {
                    let row: Vec<(usize, f64)> = (0..n_to)
                        .filter_map(|j| {
                            let (xj, yj) = lattice.nodes[t + 1][j];
                            let c = if coord_x { xj - base } else { yj - base };
                            (c != 0.0).then_some((offsets[t] + i * n_to + j, c))
                        })
                        .collect();
                    if !row.is_empty() {
                        m.add_row(row, Relation::Eq, 0.0);
                    }
                }
            }
        }
    }

    let spot_i = surface.spot(asset_i)?;
    let spot_ii = surface.spot(asset_ii)?;
    for t in 1..=ts {
        for (asset, x_coord, spot) in [(asset_i, true, spot_i), (asset_ii, false, spot_ii)] {
            // exact mean row
            let row = marginal_terms(lattice, ts, &offsets, t, |(x, y)| {
                if x_coord {
                    x
                } else {
                    y
                }
            });
            m.add_row(row, Relation::Eq, spot);
            // relaxed quote rows
            let relax = t as f64 * eps;
            for (k, c) in surface.slice(asset, t as u32)? {
                if k <= VALIDATION_TOL {
                    continue;
                }
                let row = marginal_terms(lattice, ts, &offsets, t, |(x, y)| {
                    ((if x_coord { x } else { y }) - k).max(0.0)
                });
                m.add_row(row.clone(), Relation::Le, c + relax);
                m.add_row(row, Relation::Ge, c - relax);
            }
            if t == ts {
                for (k, c) in future_vertices(surface, asset, ts as u32, tol)?.vertices {
                    let row = marginal_terms(lattice, ts, &offsets, t, |(x, y)| {
                        ((if x_coord { x } else { y }) - k).max(0.0)
                    });
                    m.add_row(row, Relation::Le, c + ts as f64 * eps);
                }
            }
        }
    }

    Ok(m)
}

fn extract_approx_witness(
    lattice: &LatticeSpec,
    ts: usize,
    values: &[f64],
    residual: f64,
) -> Witness2D {
    let mut marginals: Vec<Vec<((f64, f64), f64)>> = vec![Vec::new(); ts];
    let mut transitions: Vec<Vec<((f64, f64), (f64, f64), f64)>> = Vec::new();
    if ts == 1 {
        for (i, &node) in lattice.nodes[0].iter().enumerate() {
            if values[i] > ATOM_TOL {
                marginals[0].push((node, values[i]));
            }
        }
        return Witness2D {
            marginals,
            transitions,
            max_residual: residual,
        };
    }
    let mut off = 0usize;
    for t in 0..ts - 1 {
        let n_from = lattice.nodes[t].len();
        let n_to = lattice.nodes[t + 1].len();
        let mut step = Vec::new();
        let mut from_mass = vec![0.0; n_from];
        let mut to_mass = vec![0.0; n_to];
        for i in 0..n_from {
            for j in 0..n_to {
                let w = values[off + i * n_to + j];
                if w > ATOM_TOL {
                    step.push((lattice.nodes[t][i], lattice.nodes[t + 1][j], w));
                    from_mass[i] += w;
                    to_mass[j] += w;
                }
            }
        }
        if t == 0 {
            for (i, &mass) in from_mass.iter().enumerate() {
                if mass > ATOM_TOL {
                    marginals[0].push((lattice.nodes[0][i], mass));
                }
            }
        }
        for (j, &mass) in to_mass.iter().enumerate() {
            if mass > ATOM_TOL {
                marginals[t + 1].push((lattice.nodes[t + 1][j], mass));
            }
        }
        transitions.push(step);
        off += n_from * n_to;
    }
    Witness2D {
        marginals,
        transitions,
        max_residual: residual,
    }
}
