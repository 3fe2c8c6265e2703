//! Finite-difference discretization of `L_ε = −ε∇² + b·∇ + c` on periodic grids,
//! the principal (positive) eigenpair, and the diagnostics built on it.

use faer::linalg::solvers::SolveCore;
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{periodic_delta, Anchor, FieldModel, Point2, RecurrentComponent};
use crate::pressure::{build_lyapunov_scalar, global_pressure, Convention};
use crate::profiles::{blowup_profile, BlowupProfile};

/// Uniform periodic grid with `n` points per axis on `[0, 1)^dim`, indexed `i + n·j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
}

impl Grid {
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    /// Cell volume `h^dim`.
    pub fn cell(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }
    pub fn point(&self, idx: usize) -> Point2 {
        let h = self.h();
        if self.dim == 1 {
            [idx as f64 * h, 0.0]
        } else {
            [(idx % self.n) as f64 * h, (idx / self.n) as f64 * h]
        }
    }
    fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }
    fn index(&self, i: usize, j: usize) -> usize {
        i + self.n * j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Central,
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizeOptions {
    /// Switch to exponential fitting when the grid Péclet number exceeds `peclet_cap`.
    pub fitting: bool,
    pub peclet_cap: f64,
}

impl Default for DiscretizeOptions {
    fn default() -> Self {
        Self { fitting: true, peclet_cap: 2.0 }
    }
}

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .with_min_len(4096)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.vals[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    /// `|A|·|x|`, the scale against which residuals are measured.
    pub fn abs_matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| (self.vals[k] * x[self.cols[k]]).abs())
                    .sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.n + 1];
        for &c in &self.cols {
            counts[c + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0; self.cols.len()];
        let mut vals = vec![0.0; self.vals.len()];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                cols[next[c]] = r;
                vals[next[c]] = self.vals[k];
                next[c] += 1;
            }
        }
        Csr { n: self.n, row_ptr: counts, cols, vals }
    }

    /// Gershgorin lower bound on the real parts of the spectrum.
    pub fn gershgorin_lower(&self) -> f64 {
        (0..self.n)
            .map(|r| {
                let mut diag = 0.0;
                let mut off = 0.0;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    if self.cols[k] == r {
                        diag += self.vals[k];
                    } else {
                        off += self.vals[k].abs();
                    }
                }
                diag - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn shifted_faer(&self, shift: f64) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.vals.len());
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                let v = if c == r { self.vals[k] - shift } else { self.vals[k] };
                trip.push(Triplet::new(r, c, v));
            }
        }
        SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &trip)
            .map_err(|e| Error::InvalidArgument(format!("sparse assembly failed: {e:?}")))
    }
}

/// Assembled `L_ε` (or its adjoint) on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub eps: f64,
    pub scheme: Scheme,
    /// `max |b_a| h / ε` over nodes and axes.
    pub peclet: f64,
    pub matrix: Csr,
    pub adjoint: bool,
}

impl DiscreteOperator {
    pub fn adjoint(&self) -> DiscreteOperator {
        DiscreteOperator { matrix: self.matrix.transpose(), adjoint: !self.adjoint, ..self.clone() }
    }
}

/// `(Pe/2)·coth(Pe/2)`.
fn fitting_factor(pe: f64) -> f64 {
    let a = 0.5 * pe.abs();
    if a < 1e-4 {
        1.0 + a * a / 3.0
    } else {
        a / a.tanh()
    }
}

/// Discretize `−ε∇² + b·∇ + c` for explicit coefficients.
pub fn discretize_coefficients(
    dim: usize,
    n: usize,
    eps: f64,
    b: &(dyn Fn(Point2) -> Point2 + Sync),
    c: &(dyn Fn(Point2) -> f64 + Sync),
    opts: &DiscretizeOptions,
) -> Result<DiscreteOperator> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    if !(dim == 1 || dim == 2) || n < 4 {
        return Err(Error::InvalidArgument(format!("need dim ∈ {{1, 2}} and N ≥ 4, got dim={dim}, N={n}")));
    }
    let grid = Grid { dim, n };
    let h = grid.h();
    let len = grid.len();
    let drift: Vec<Point2> = (0..len).into_par_iter().map(|i| b(grid.point(i))).collect();
    let peclet = drift
        .iter()
        .flat_map(|v| v.iter().take(dim).map(|x| x.abs() * h / eps))
        .fold(0.0f64, f64::max);
    let scheme = if peclet <= opts.peclet_cap {
        Scheme::Central
    } else if opts.fitting {
        Scheme::Fitted
    } else {
        return Err(Error::Resolution { peclet, cap: opts.peclet_cap });
    };
    let stencil = 2 * dim + 1;
    let rows: Vec<Vec<(usize, f64)>> = (0..len)
        .into_par_iter()
        .map(|idx| {
            let p = grid.point(idx);
            let mut entries = Vec::with_capacity(stencil);
            let mut diag = 0.0;
            for axis in 0..dim {
                let ba = drift[idx][axis];
                let sigma = match scheme {
                    Scheme::Central => 1.0,
                    Scheme::Fitted => fitting_factor(ba * h / eps),
                };
                let d = eps * sigma / (h * h);
                let up = -d + ba / (2.0 * h);
                let lo = -d - ba / (2.0 * h);
                let (fwd, bwd) = if dim == 1 {
                    ((idx + 1) % n, (idx + n - 1) % n)
                } else {
                    let (i, j) = grid.ij(idx);
                    if axis == 0 {
                        (grid.index((i + 1) % n, j), grid.index((i + n - 1) % n, j))
                    } else {
                        (grid.index(i, (j + 1) % n), grid.index(i, (j + n - 1) % n))
                    }
                };
                entries.push((fwd, up));
                entries.push((bwd, lo));
                diag -= up + lo;
            }
            entries.push((idx, diag + c(p)));
            entries.sort_by_key(|e| e.0);
            entries
        })
        .collect();
    let mut row_ptr = Vec::with_capacity(len + 1);
    let mut cols = Vec::with_capacity(len * stencil);
    let mut vals = Vec::with_capacity(len * stencil);
    row_ptr.push(0);
    for row in rows {
        for (col, v) in row {
            cols.push(col);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Ok(DiscreteOperator {
        grid,
        eps,
        scheme,
        peclet,
        matrix: Csr { n: len, row_ptr, cols, vals },
        adjoint: false,
    })
}

/// Discretize `L_ε` for a catalog field.
pub fn discretize(field: &FieldModel, eps: f64, n: usize, opts: &DiscretizeOptions) -> Result<DiscreteOperator> {
    discretize_coefficients(field.dim(), n, eps, &|x| field.drift(x), &|x| field.killing_at(x), opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenOptions {
    /// Relative tolerance on the eigenvalue bracket or residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 3000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// Positive eigenvector with `Σ u² h^dim = 1`.
    pub u: Vec<f64>,
    /// `‖L u − λ u‖` in the grid norm.
    pub residual: f64,
    /// Collatz–Wielandt bracket `[min (Lu)/u, max (Lu)/u]` over non-negligible entries.
    pub bracket: [f64; 2],
    pub iterations: usize,
    pub factorizations: usize,
    pub min_u: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cw_bracket(u: &[f64], w: &[f64]) -> [f64; 2] {
    let umax = u.iter().copied().fold(0.0f64, f64::max);
    let floor = 1e-10 * umax;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, b) in u.iter().zip(w) {
        if *a > floor {
            let r = b / a;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    [lo, hi]
}

/// Principal eigenpair by shifted inverse iteration, the shift kept below the
/// eigenvalue with positive eigenvector so that every iterate stays positive.
pub fn leading_eigenpair(op: &DiscreteOperator, opts: &EigenOptions) -> Result<EigenPair> {
    faer::set_global_parallelism(faer::Par::Seq);
    let a = &op.matrix;
    let len = a.n;
    let lower = a.gershgorin_lower();
    let mut shift = lower - 1.0 - 1e-3 * lower.abs();
    let factor = |s: f64| -> Result<_> {
        a.shifted_faer(s)?
            .sp_lu()
            .map_err(|e| Error::NonConvergence(format!("sparse LU failed: {e:?}")))
    };
    let mut lu = factor(shift)?;
    let mut factorizations = 1;
    let mut u = vec![1.0 / (len as f64).sqrt(); len];
    let mut lambda = f64::NAN;
    let mut bracket = [f64::NEG_INFINITY, f64::INFINITY];
    let mut residual;
    let mut iterations = 0;
    let mut rhs = Mat::<f64>::zeros(len, 1);
    loop {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence(format!(
                "inverse iteration: bracket [{}, {}] after {iterations} iterations",
                bracket[0], bracket[1]
            )));
        }
        iterations += 1;
        for (i, x) in u.iter().enumerate() {
            rhs[(i, 0)] = *x;
        }
        lu.solve_in_place_with_conj(faer::Conj::No, rhs.as_mut());
        let mut y: Vec<f64> = (0..len).map(|i| rhs[(i, 0)]).collect();
        let s = y.iter().sum::<f64>().signum();
        let ny = norm(&y) * s;
        if !(ny.is_finite() && ny != 0.0) {
            return Err(Error::NonConvergence("inverse iteration produced a degenerate iterate".into()));
        }
        for v in y.iter_mut() {
            *v /= ny;
        }
        let ymax = y.iter().copied().fold(0.0f64, f64::max);
        let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
        if ymin < -1e-8 * ymax {
            return Err(Error::Positivity(format!(
                "iterate changes sign (min/max = {:e}); refine the grid",
                ymin / ymax
            )));
        }
        u = y;
        let w = a.matvec(&u);
        let prev = lambda;
        lambda = u.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>();
        bracket = cw_bracket(&u, &w);
        residual = norm(&w.iter().zip(&u).map(|(w, u)| w - lambda * u).collect::<Vec<_>>());
        let scale = lambda.abs().max(1.0);
        let scale_a = norm(&a.abs_matvec(&u));
        if bracket[1] - bracket[0] <= opts.tol * scale
            || (residual <= opts.tol * scale.max(1e-3 * scale_a) && (lambda - prev).abs() <= opts.tol * scale)
        {
            break;
        }
        // Move the shift up to the Collatz–Wielandt lower bound once it pays off.
        let width = bracket[1] - bracket[0];
        let candidate = bracket[0] - width.max(1e-8 * scale);
        if factorizations < 8 && candidate < lambda && (lambda - shift) > 8.0 * (lambda - candidate) {
            shift = candidate;
            lu = factor(shift)?;
            factorizations += 1;
        }
    }
    let grid = op.grid;
    let scale = (u.iter().map(|x| x * x).sum::<f64>() * grid.cell()).sqrt();
    for v in u.iter_mut() {
        *v = (*v / scale).max(0.0);
    }
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EigenPair {
        lambda,
        // unit Euclidean norm before rescaling, so the grid-norm residual is unchanged
        residual,
        u,
        bracket,
        iterations,
        factorizations,
        min_u,
    })
}

/// Normalized measure `u² e^{−𝓛/ε} / Σ u² e^{−𝓛/ε}` and `v = e^{−𝓛/2ε} u`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedMeasure {
    /// Per-node mass, summing to one.
    pub mass: Vec<f64>,
    /// `v / v̄`.
    pub v_rel: Vec<f64>,
    /// `log v̄`.
    pub log_vbar: f64,
    pub argmax: usize,
}

pub fn weighted_measure(pair: &EigenPair, field: &FieldModel, eps: f64, grid: Grid) -> Result<WeightedMeasure> {
    if pair.u.len() != grid.len() {
        return Err(Error::InvalidArgument("eigenvector does not match the grid".into()));
    }
    let logv: Vec<f64> = pair
        .u
        .iter()
        .enumerate()
        .map(|(i, u)| u.ln() - field.lyapunov(grid.point(i)) / (2.0 * eps))
        .collect();
    let (argmax, log_vbar) = logv
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, l)| if l > acc.1 { (i, l) } else { acc });
    if !log_vbar.is_finite() {
        return Err(Error::Positivity("eigenvector vanishes".into()));
    }
    let v_rel: Vec<f64> = logv.iter().map(|l| (l - log_vbar).exp()).collect();
    let total: f64 = v_rel.iter().map(|v| v * v).sum();
    let mass = v_rel.iter().map(|v| v * v / total).collect();
    Ok(WeightedMeasure { mass, v_rel, log_vbar, argmax })
}

/// Sub-grid location of the maximum of `log v` by a parabola through each axis.
pub fn refined_argmax(measure: &WeightedMeasure, grid: Grid) -> Point2 {
    let idx = measure.argmax;
    let p = grid.point(idx);
    let lv = |k: usize| measure.v_rel[k].ln();
    let mut out = p;
    let n = grid.n;
    for axis in 0..grid.dim {
        let (fwd, bwd) = if grid.dim == 1 {
            ((idx + 1) % n, (idx + n - 1) % n)
        } else {
            let (i, j) = grid.ij(idx);
            if axis == 0 {
                (grid.index((i + 1) % n, j), grid.index((i + n - 1) % n, j))
            } else {
                (grid.index(i, (j + 1) % n), grid.index(i, (j + n - 1) % n))
            }
        };
        let (lm, l0, lp) = (lv(bwd), lv(idx), lv(fwd));
        let curv = lm - 2.0 * l0 + lp;
        if curv < 0.0 && lm.is_finite() && lp.is_finite() {
            let off = (0.5 * (lm - lp) / curv).clamp(-0.5, 0.5);
            out[axis] = (p[axis] + off * grid.h()).rem_euclid(1.0);
        }
    }
    out
}

/// Periodic linear (1-D) or bilinear (2-D) interpolation of grid values.
pub fn interpolate(grid: Grid, values: &[f64], x: Point2) -> f64 {
    let n = grid.n;
    let locate = |t: f64| {
        let s = t.rem_euclid(1.0) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        (i, (i + 1) % n, s - i as f64)
    };
    let (i0, i1, fx) = locate(x[0]);
    if grid.dim == 1 {
        return values[i0] * (1.0 - fx) + values[i1] * fx;
    }
    let (j0, j1, fy) = locate(x[1]);
    let v = |i, j| values[grid.index(i, j)];
    (v(i0, j0) * (1.0 - fx) + v(i1, j0) * fx) * (1.0 - fy) + (v(i0, j1) * (1.0 - fx) + v(i1, j1) * fx) * fy
}

/// Transverse offset (ambient coordinates) and longitudinal position of `x`
/// relative to a component.
pub fn component_coordinates(field: &FieldModel, comp: &RecurrentComponent, x: Point2) -> (Vec<f64>, Point2) {
    let dim = field.dim();
    match comp.anchor {
        Anchor::Point(p) => ((0..dim).map(|a| periodic_delta(x[a], p[a])).collect(), [0.0, 0.0]),
        Anchor::Line { origin, direction } if direction[0] == 0 => {
            (vec![periodic_delta(x[0], origin[0])], [(x[1] - origin[1]).rem_euclid(1.0), 0.0])
        }
        Anchor::Line { origin, .. } => {
            (vec![periodic_delta(x[1], origin[1])], [(x[0] - origin[0]).rem_euclid(1.0), 0.0])
        }
        Anchor::Everywhere | Anchor::Abstract => (Vec::new(), x),
    }
}

/// Grid size rule for studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NRule {
    Fixed { n: usize },
    /// Next power of two above `factor/√ε`, clamped to `[min, max]`.
    Scaled { factor: f64, min: usize, max: usize },
}

impl Default for NRule {
    fn default() -> Self {
        NRule::Scaled { factor: 8.0, min: 64, max: 512 }
    }
}

impl NRule {
    pub fn grid_size(&self, eps: f64) -> usize {
        match *self {
            NRule::Fixed { n } => n,
            NRule::Scaled { factor, min, max } => {
                let target = (factor / eps.sqrt()).ceil().max(1.0) as usize;
                target.next_power_of_two().clamp(min, max)
            }
        }
    }
}

fn tube(eps: f64, mult: f64) -> f64 {
    (mult * eps.sqrt()).min(0.25)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub eps: f64,
    pub n: usize,
    pub scheme: Scheme,
    pub peclet: f64,
    pub lambda: f64,
    pub argmax: Point2,
    /// Distance from the refined maximum point of `v_ε` to the recurrent set.
    pub dmax: f64,
    /// Weighted-measure mass in the `5√ε` tube of each component.
    pub masses: Vec<f64>,
    /// `max v_ε / v̄_ε` over the `10√ε` tube of each component.
    pub gammas: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyTable {
    pub field: String,
    pub labels: Vec<String>,
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `log dmax` against `log ε`; absent when some `dmax` is zero.
    pub slope: Option<f64>,
}

/// Everything `eigen` computes for one `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenRun {
    pub op: DiscreteOperator,
    pub pair: EigenPair,
    pub measure: WeightedMeasure,
}

pub fn solve_field(
    field: &FieldModel,
    eps: f64,
    n: usize,
    dopts: &DiscretizeOptions,
    eopts: &EigenOptions,
) -> Result<EigenRun> {
    let op = discretize(field, eps, n, dopts)?;
    let pair = leading_eigenpair(&op, eopts)?;
    let measure = weighted_measure(&pair, field, eps, op.grid)?;
    Ok(EigenRun { op, pair, measure })
}

/// Tube masses (radius `5√ε`) and modulating-coefficient estimates (radius `10√ε`),
/// radii capped at ¼.
pub fn tube_statistics(field: &FieldModel, measure: &WeightedMeasure, grid: Grid, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let r_mass = tube(eps, 5.0);
    let r_gamma = tube(eps, 10.0);
    field
        .components
        .iter()
        .map(|comp| {
            let mut mass = 0.0;
            let mut gamma = 0.0f64;
            for idx in 0..grid.len() {
                let d = field.distance_to(comp, grid.point(idx));
                if d <= r_mass {
                    mass += measure.mass[idx];
                }
                if d <= r_gamma {
                    gamma = gamma.max(measure.v_rel[idx]);
                }
            }
            (mass, gamma)
        })
        .unzip()
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn convergence_study(
    field: &FieldModel,
    eps_list: &[f64],
    rule: &NRule,
    dopts: &DiscretizeOptions,
    eopts: &EigenOptions,
) -> Result<StudyTable> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("ε list must be non-empty and strictly decreasing".into()));
    }
    let rows: Vec<Result<StudyRow>> = eps_list
        .par_iter()
        .map(|&eps| {
            let n = rule.grid_size(eps);
            let run = solve_field(field, eps, n, dopts, eopts)?;
            let grid = run.op.grid;
            let argmax = refined_argmax(&run.measure, grid);
            let (masses, gammas) = tube_statistics(field, &run.measure, grid, eps);
            Ok(StudyRow {
                eps,
                n,
                scheme: run.op.scheme,
                peclet: run.op.peclet,
                lambda: run.pair.lambda,
                argmax,
                dmax: field.distance_to_recurrent_set(argmax),
                masses,
                gammas,
                iterations: run.pair.iterations,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.dmax > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.dmax.ln()).collect();
        Some(fit_slope(&xs, &ys))
    } else {
        None
    };
    Ok(StudyTable {
        field: field.name.clone(),
        labels: field.components.iter().map(|c| c.label.clone()).collect(),
        rows,
        slope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupComparison {
    pub label: String,
    /// Local maximum of `v_ε / v̄_ε` near the component.
    pub gamma: f64,
    /// `‖w_ε − w‖ / ‖w‖` over the sampled neighborhood.
    pub rel_l2: f64,
    /// Measured over predicted transverse second moment of `w_ε²`; absent without
    /// transverse directions.
    pub covariance_ratio: Option<f64>,
    pub samples: usize,
}

/// Components with `γ̂` below this are not compared.
pub const CHARGE_THRESHOLD: f64 = 1e-3;

/// Compare the rescaled eigenfunction near a component with its predicted blow-up
/// profile. Returns `None` for uncharged components.
pub fn blowup_extract(
    field: &FieldModel,
    comp: &RecurrentComponent,
    profile: &BlowupProfile,
    measure: &WeightedMeasure,
    grid: Grid,
    eps: f64,
) -> Result<Option<BlowupComparison>> {
    let r_cmp = tube(eps, 4.0);
    let r_mom = tube(eps, 10.0);
    let near: Vec<(usize, Vec<f64>, Point2)> = (0..grid.len())
        .filter_map(|idx| {
            let x = grid.point(idx);
            let (off, long) = component_coordinates(field, comp, x);
            let d = off.iter().map(|v| v * v).sum::<f64>().sqrt();
            (d <= r_mom).then_some((idx, off, long))
        })
        .collect();
    let gamma = near.iter().map(|(i, _, _)| measure.v_rel[*i]).fold(0.0f64, f64::max);
    if gamma < CHARGE_THRESHOLD {
        return Ok(None);
    }
    let m = profile.transverse_dim();
    let scale = eps.sqrt();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut samples = 0;
    let mut second = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut weight = 0.0;
    for (idx, off, long) in &near {
        let w = measure.v_rel[*idx] / gamma;
        let d = off.iter().map(|v| v * v).sum::<f64>().sqrt();
        if off.len() != m {
            return Err(Error::InvalidArgument(format!(
                "`{}`: anchor has {} transverse directions, profile has {m}",
                comp.label,
                off.len()
            )));
        }
        if m > 0 {
            let xv = DVector::from_column_slice(off);
            second += &xv * xv.transpose() * (w * w);
            weight += w * w;
        }
        if d <= r_cmp {
            let y = DVector::from_iterator(m, off.iter().map(|v| v / scale));
            let pred = profile.transverse_ambient(&y) * profile.longitudinal_at(*long);
            num += (w - pred).powi(2);
            den += pred * pred;
            samples += 1;
        }
    }
    let covariance_ratio = if m > 0 {
        let measured = second / weight;
        let s_inv = (profile.s_ambient() * 4.0)
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("profile form of `{}`", comp.label)))?;
        let predicted = s_inv * eps;
        Some(measured.trace() / predicted.trace())
    } else {
        None
    };
    Ok(Some(BlowupComparison {
        label: comp.label.clone(),
        gamma,
        rel_l2: (num / den).sqrt(),
        covariance_ratio,
        samples,
    }))
}

/// Profiles for every component of a catalog field, using its scalar weight `Π`.
pub fn field_profiles(field: &FieldModel, n_long: usize) -> Result<Vec<BlowupProfile>> {
    field
        .components
        .iter()
        .map(|c| blowup_profile(c, &build_lyapunov_scalar(&c.splitting, field.pi)?, n_long))
        .collect()
}

/// Relative residual of the gauge-transformed eigenproblem
/// `−ε∇²v + Ω·∇v + (c − ½∇²𝓛 + Ψ/ε) v = λ v` evaluated with central differences
/// on `v = e^{−𝓛/2ε} u`, measured against `‖|A|·|v|‖`.
pub fn gauge_residual(pair: &EigenPair, field: &FieldModel, eps: f64, grid: Grid) -> Result<f64> {
    let gop = discretize_coefficients(
        grid.dim,
        grid.n,
        eps,
        &|x| field.omega(x),
        &|x| field.gauge_potential(x, eps),
        &DiscretizeOptions { fitting: false, peclet_cap: f64::INFINITY },
    )?;
    let logv: Vec<f64> = pair
        .u
        .iter()
        .enumerate()
        .map(|(i, u)| u.ln() - field.lyapunov(grid.point(i)) / (2.0 * eps))
        .collect();
    let top = logv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = logv.iter().map(|l| (l - top).exp()).collect();
    let av = gop.matrix.matvec(&v);
    let r: Vec<f64> = av.iter().zip(&v).map(|(a, v)| a - pair.lambda * v).collect();
    let mut scale = gop.matrix.abs_matvec(&v);
    for (s, v) in scale.iter_mut().zip(&v) {
        *s += (pair.lambda * v).abs();
    }
    Ok(norm(&r) / norm(&scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Both,
    Neither,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Both => "both",
            Verdict::Neither => "neither",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrimination {
    pub field: String,
    pub eps: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Linear extrapolation of `λ_ε` to `ε = 0` through the two smallest `ε`.
    pub extrapolated: f64,
    pub tp_stable: f64,
    pub tp_unstable: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// Which pressure convention the extrapolated principal eigenvalue matches.
pub fn discriminate_field(
    field: &FieldModel,
    eps_list: &[f64],
    rule: &NRule,
    tolerance: f64,
    dopts: &DiscretizeOptions,
    eopts: &EigenOptions,
) -> Result<Discrimination> {
    if eps_list.len() < 2 {
        return Err(Error::InvalidArgument("discrimination needs at least two ε values".into()));
    }
    let study = convergence_study(field, eps_list, rule, dopts, eopts)?;
    let k = study.rows.len();
    let (e1, l1) = (study.rows[k - 2].eps, study.rows[k - 2].lambda);
    let (e2, l2) = (study.rows[k - 1].eps, study.rows[k - 1].lambda);
    let extrapolated = (e1 * l2 - e2 * l1) / (e1 - e2);
    let stable = global_pressure(&field.components, Convention::Stable)?;
    let unstable = global_pressure(&field.components, Convention::Unstable)?;
    let tp_stable = stable.tp;
    let tp_unstable = unstable.tp;
    let ms = (extrapolated - tp_stable).abs() <= tolerance;
    let mu = (extrapolated - tp_unstable).abs() <= tolerance;
    let verdict = match (ms, mu) {
        (true, true) => Verdict::Both,
        (true, false) => Verdict::Stable,
        (false, true) => Verdict::Unstable,
        (false, false) => Verdict::Neither,
    };
    Ok(Discrimination {
        field: field.name.clone(),
        eps: study.rows.iter().map(|r| r.eps).collect(),
        lambdas: study.rows.iter().map(|r| r.lambda).collect(),
        extrapolated,
        tp_stable,
        tp_unstable,
        tolerance,
        verdict,
    })
}
