//! Rate function `I_T(x) = inf ∫₀ᵀ ½|γ̇ + Ω(γ)|² + Ψ(γ) dt` over curves with
//! `γ(0) = x`: Hamiltonian shooting, direct path minimization, the quadratic
//! lower bound near a component, and a Feynman–Kac Monte Carlo estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FieldModel, Point2, RecurrentComponent};

/// Drift rotation part `Ω` and potential `Ψ` on a flat chart of dimension 1 or 2.
/// Unused coordinates must stay identically zero.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;
    fn omega(&self, x: Point2) -> Point2;
    /// `J[i][j] = ∂Ω_i/∂x_j`.
    fn omega_jacobian(&self, x: Point2) -> [[f64; 2]; 2];
    fn psi(&self, x: Point2) -> f64;
    fn grad_psi(&self, x: Point2) -> Point2;
}

impl Dynamics for FieldModel {
    fn dim(&self) -> usize {
        FieldModel::dim(self)
    }
    fn omega(&self, x: Point2) -> Point2 {
        FieldModel::omega(self, x)
    }
    fn omega_jacobian(&self, x: Point2) -> [[f64; 2]; 2] {
        FieldModel::omega_jacobian(self, x)
    }
    fn psi(&self, x: Point2) -> f64 {
        FieldModel::psi(self, x)
    }
    fn grad_psi(&self, x: Point2) -> Point2 {
        FieldModel::grad_psi(self, x)
    }
}

/// Linear-quadratic model `Ω = Wx`, `Ψ = ⟨Px, x⟩` with `P` symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub dim: usize,
    pub w: [[f64; 2]; 2],
    pub p: [[f64; 2]; 2],
}

impl QuadraticModel {
    pub fn scalar(w: f64, p: f64) -> Self {
        Self { dim: 1, w: [[w, 0.0], [0.0, 0.0]], p: [[p, 0.0], [0.0, 0.0]] }
    }
}

fn matvec(m: &[[f64; 2]; 2], x: Point2) -> Point2 {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

impl Dynamics for QuadraticModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn omega(&self, x: Point2) -> Point2 {
        matvec(&self.w, x)
    }
    fn omega_jacobian(&self, _x: Point2) -> [[f64; 2]; 2] {
        self.w
    }
    fn psi(&self, x: Point2) -> f64 {
        let px = matvec(&self.p, x);
        px[0] * x[0] + px[1] * x[1]
    }
    fn grad_psi(&self, x: Point2) -> Point2 {
        let px = matvec(&self.p, x);
        [2.0 * px[0], 2.0 * px[1]]
    }
}

/// Point `(x, p)` of phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Point2,
    pub p: Point2,
}

/// `H(x, p) = ½|p|² − ⟨Ω(x), p⟩ − Ψ(x)`.
pub fn hamiltonian(dynamics: &dyn Dynamics, z: PhasePoint) -> f64 {
    let o = dynamics.omega(z.x);
    0.5 * (z.p[0] * z.p[0] + z.p[1] * z.p[1]) - (o[0] * z.p[0] + o[1] * z.p[1]) - dynamics.psi(z.x)
}

type State = [f64; 4];

fn vector_field(d: &dyn Dynamics, z: &State) -> State {
    let x = [z[0], z[1]];
    let p = [z[2], z[3]];
    let o = d.omega(x);
    let j = d.omega_jacobian(x);
    let g = d.grad_psi(x);
    [
        p[0] - o[0],
        p[1] - o[1],
        j[0][0] * p[0] + j[1][0] * p[1] + g[0],
        j[0][1] * p[0] + j[1][1] * p[1] + g[1],
    ]
}

fn lagrangian(d: &dyn Dynamics, z: &State) -> f64 {
    0.5 * (z[2] * z[2] + z[3] * z[3]) + d.psi([z[0], z[1]])
}

/// Sampled solution of the Hamiltonian system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Point2>,
    pub p: Vec<Point2>,
    /// `∫ ½|p|² + Ψ(x) dt`, by the stage quadrature of the integrator.
    pub action: f64,
    /// `max_k |H(z_k) − H(z_0)|`.
    pub energy_drift: f64,
}

const GL_SQ3: f64 = 0.288_675_134_594_812_9; // √3 / 6

/// Two-stage Gauss–Legendre (order 4, symplectic) integration of
/// `ẋ = p − Ω`, `ṗ = (∂Ω/∂x)ᵀ p + ∇Ψ`.
pub fn hamiltonian_flow(dynamics: &dyn Dynamics, z0: PhasePoint, horizon: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("need 0 < dt ≤ T, got dt={dt}, T={horizon}")));
    }
    let a = [[0.25, 0.25 - GL_SQ3], [0.25 + GL_SQ3, 0.25]];
    let n = (horizon / dt).ceil() as usize;
    let h = horizon / n as f64;
    let mut z: State = [z0.x[0], z0.x[1], z0.p[0], z0.p[1]];
    let h0 = hamiltonian(dynamics, z0);
    let mut out = Trajectory {
        t: Vec::with_capacity(n + 1),
        x: Vec::with_capacity(n + 1),
        p: Vec::with_capacity(n + 1),
        action: 0.0,
        energy_drift: 0.0,
    };
    out.t.push(0.0);
    out.x.push(z0.x);
    out.p.push(z0.p);
    for step in 0..n {
        let f0 = vector_field(dynamics, &z);
        let mut k = [f0, f0];
        let mut converged = false;
        let mut stages = [z, z];
        for _ in 0..100 {
            for i in 0..2 {
                for c in 0..4 {
                    stages[i][c] = z[c] + h * (a[i][0] * k[0][c] + a[i][1] * k[1][c]);
                }
            }
            let next = [vector_field(dynamics, &stages[0]), vector_field(dynamics, &stages[1])];
            let mut diff = 0.0f64;
            let mut scale = 1.0f64;
            for i in 0..2 {
                for c in 0..4 {
                    diff = diff.max((next[i][c] - k[i][c]).abs());
                    scale = scale.max(next[i][c].abs());
                }
            }
            k = next;
            if diff <= 1e-15 * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::IntegratorFailure(format!("stage iteration diverged at step {step}")));
        }
        for i in 0..2 {
            for c in 0..4 {
                stages[i][c] = z[c] + h * (a[i][0] * k[0][c] + a[i][1] * k[1][c]);
            }
        }
        out.action += 0.5 * h * (lagrangian(dynamics, &stages[0]) + lagrangian(dynamics, &stages[1]));
        for c in 0..4 {
            z[c] += 0.5 * h * (k[0][c] + k[1][c]);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegratorFailure(format!("non-finite state at step {step}")));
        }
        let pz = PhasePoint { x: [z[0], z[1]], p: [z[2], z[3]] };
        out.energy_drift = out.energy_drift.max((hamiltonian(dynamics, pz) - h0).abs());
        out.t.push((step + 1) as f64 * h);
        out.x.push(pz.x);
        out.p.push(pz.p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShootOptions {
    pub dt: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    /// Largest horizon accepted.
    pub horizon_bound: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { dt: 1e-3, tolerance: 1e-10, max_iter: 50, horizon_bound: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremalResult {
    pub trajectory: Trajectory,
    pub action: f64,
    /// `|p(T)|`.
    pub boundary_residual: f64,
    /// `|γ̇(T) + Ω(γ(T))|`.
    pub endpoint_residual: f64,
    pub energy_drift: f64,
    pub iterations: usize,
}

fn norm2(v: Point2) -> f64 {
    v[0].hypot(v[1])
}

/// Newton shooting on `p₀ ↦ p(T)` with a central-difference Jacobian.
pub fn extremal_shoot(dynamics: &dyn Dynamics, x: Point2, horizon: f64, opts: &ShootOptions) -> Result<ExtremalResult> {
    if horizon > opts.horizon_bound {
        return Err(Error::HorizonTooLong { t: horizon, bound: opts.horizon_bound });
    }
    let d = dynamics.dim();
    let end_p = |p0: Point2| -> Result<(Point2, Trajectory)> {
        let tr = hamiltonian_flow(dynamics, PhasePoint { x, p: p0 }, horizon, opts.dt)?;
        Ok((*tr.p.last().expect("non-empty"), tr))
    };
    let mut p0 = [0.0; 2];
    let (mut f, mut tr) = end_p(p0)?;
    let mut iterations = 0;
    while norm2(f) > opts.tolerance {
        if iterations >= opts.max_iter {
            return Err(Error::ShootingFailure { iterations, residual: norm2(f) });
        }
        iterations += 1;
        let mut jac = [[0.0; 2]; 2];
        for j in 0..d {
            let delta = 1e-6 * (1.0 + p0[j].abs());
            let mut pp = p0;
            let mut pm = p0;
            pp[j] += delta;
            pm[j] -= delta;
            let (fp, _) = end_p(pp)?;
            let (fm, _) = end_p(pm)?;
            for i in 0..d {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * delta);
            }
        }
        let step = if d == 1 {
            [-f[0] / jac[0][0], 0.0]
        } else {
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            [
                -(jac[1][1] * f[0] - jac[0][1] * f[1]) / det,
                -(-jac[1][0] * f[0] + jac[0][0] * f[1]) / det,
            ]
        };
        if !(step[0].is_finite() && step[1].is_finite()) {
            return Err(Error::ShootingFailure { iterations, residual: norm2(f) });
        }
        let mut lambda = 1.0;
        loop {
            let trial = [p0[0] + lambda * step[0], p0[1] + lambda * step[1]];
            match end_p(trial) {
                Ok((ft, trt)) if norm2(ft) < norm2(f) || lambda < 1e-3 => {
                    p0 = trial;
                    f = ft;
                    tr = trt;
                    break;
                }
                _ if lambda < 1e-3 => return Err(Error::ShootingFailure { iterations, residual: norm2(f) }),
                _ => lambda *= 0.5,
            }
        }
    }
    let xt = *tr.x.last().expect("non-empty");
    let pt = *tr.p.last().expect("non-empty");
    let o = dynamics.omega(xt);
    // γ̇(T) = p(T) − Ω(γ(T))
    let vel = [pt[0] - o[0], pt[1] - o[1]];
    let endpoint_residual = norm2([vel[0] + o[0], vel[1] + o[1]]);
    Ok(ExtremalResult {
        action: tr.action,
        boundary_residual: norm2(pt),
        endpoint_residual,
        energy_drift: tr.energy_drift,
        trajectory: tr,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeResult {
    pub action: f64,
    pub path: Vec<Point2>,
    /// Converged by the gradient criterion rather than stagnation or the iteration cap.
    pub certified: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Discrete action on a piecewise-linear path with midpoint quadrature, and its gradient.
fn discrete_action(d: &dyn Dynamics, x0: Point2, nodes: &[Point2], h: f64, grad: &mut [Point2]) -> f64 {
    let n = nodes.len();
    for g in grad.iter_mut() {
        *g = [0.0; 2];
    }
    let mut total = 0.0;
    for k in 0..n {
        let a = if k == 0 { x0 } else { nodes[k - 1] };
        let b = nodes[k];
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let o = d.omega(mid);
        let j = d.omega_jacobian(mid);
        let gp = d.grad_psi(mid);
        let r = [(b[0] - a[0]) / h + o[0], (b[1] - a[1]) / h + o[1]];
        total += h * (0.5 * (r[0] * r[0] + r[1] * r[1]) + d.psi(mid));
        // ∂/∂mid of the segment cost: h(Jᵀr + ∇Ψ); each endpoint gets half.
        let jr = [j[0][0] * r[0] + j[1][0] * r[1], j[0][1] * r[0] + j[1][1] * r[1]];
        let common = [0.5 * h * (jr[0] + gp[0]), 0.5 * h * (jr[1] + gp[1])];
        for c in 0..2 {
            grad[k][c] += r[c] + common[c];
            if k > 0 {
                grad[k - 1][c] += -r[c] + common[c];
            }
        }
    }
    total
}

/// Solve `K y = q` per coordinate, `K = (1/h)·tridiag(−1, 2, −1)` with last diagonal 1.
fn apply_preconditioner(q: &[Point2], h: f64) -> Vec<Point2> {
    let n = q.len();
    let mut out = vec![[0.0; 2]; n];
    for c in 0..2 {
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for i in 0..n {
            let diag = if i + 1 == n { 1.0 } else { 2.0 } / h;
            let off = -1.0 / h;
            let rhs = q[i][c];
            if i == 0 {
                cp[i] = off / diag;
                dp[i] = rhs / diag;
            } else {
                let m = diag - off * cp[i - 1];
                cp[i] = off / m;
                dp[i] = (rhs - off * dp[i - 1]) / m;
            }
        }
        out[n - 1][c] = dp[n - 1];
        for i in (0..n - 1).rev() {
            out[i][c] = dp[i] - cp[i] * out[i + 1][c];
        }
    }
    out
}

fn dot(a: &[Point2], b: &[Point2]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x[0] * y[0] + x[1] * y[1]).sum()
}

/// Preconditioned L-BFGS with backtracking on the discrete action over `N` segments.
pub fn action_minimize(dynamics: &dyn Dynamics, x: Point2, horizon: f64, segments: usize) -> Result<MinimizeResult> {
    if segments < 8 {
        return Err(Error::InvalidArgument("at least 8 segments required".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let n = segments;
    let h = horizon / n as f64;
    let dim = dynamics.dim();
    let mut nodes = vec![x; n];
    let mut grad = vec![[0.0; 2]; n];
    let mut f = discrete_action(dynamics, x, &nodes, h, &mut grad);
    let mask = |v: &mut Vec<Point2>| {
        if dim == 1 {
            for p in v.iter_mut() {
                p[1] = 0.0;
            }
        }
    };
    mask(&mut grad);
    let memory = 12;
    let mut s_hist: Vec<Vec<Point2>> = Vec::new();
    let mut y_hist: Vec<Vec<Point2>> = Vec::new();
    let max_iter = 5000;
    let mut certified = false;
    let mut iterations = 0;
    let mut stall = 0;
    let mut gnorm = dot(&grad, &apply_preconditioner(&grad, h)).sqrt();
    while iterations < max_iter {
        if gnorm <= 1e-9 * (1.0 + f.abs()) {
            certified = true;
            break;
        }
        iterations += 1;
        // two-loop recursion
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                qi[0] -= a * yi[0];
                qi[1] -= a * yi[1];
            }
            alphas.push((a, rho));
        }
        let mut r = apply_preconditioner(&q, h);
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let kinv_y = apply_preconditioner(y, h);
            let gamma = dot(s, y) / dot(y, &kinv_y);
            for v in r.iter_mut() {
                v[0] *= gamma;
                v[1] *= gamma;
            }
        }
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &r);
            for (ri, si) in r.iter_mut().zip(s) {
                ri[0] += (a - b) * si[0];
                ri[1] += (a - b) * si[1];
            }
        }
        let mut dir: Vec<Point2> = r.iter().map(|v| [-v[0], -v[1]]).collect();
        mask(&mut dir);
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            dir = apply_preconditioner(&grad, h).iter().map(|v| [-v[0], -v[1]]).collect();
            mask(&mut dir);
            slope = dot(&grad, &dir);
            s_hist.clear();
            y_hist.clear();
        }
        let mut step = 1.0;
        let mut new_grad = vec![[0.0; 2]; n];
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<Point2> = nodes
                .iter()
                .zip(&dir)
                .map(|(p, d)| [p[0] + step * d[0], p[1] + step * d[1]])
                .collect();
            let ft = discrete_action(dynamics, x, &trial, h, &mut new_grad);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft)) = accepted else { break };
        mask(&mut new_grad);
        let s: Vec<Point2> = trial.iter().zip(&nodes).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
        let y: Vec<Point2> = new_grad.iter().zip(&grad).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
        if dot(&s, &y) > 1e-300 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        if (f - ft).abs() <= 1e-16 * f.abs().max(1e-300) {
            stall += 1;
        } else {
            stall = 0;
        }
        nodes = trial;
        grad = new_grad;
        f = ft;
        gnorm = dot(&grad, &apply_preconditioner(&grad, h)).sqrt();
        if stall >= 5 {
            break;
        }
    }
    if gnorm <= 1e-9 * (1.0 + f.abs()) {
        certified = true;
    }
    let mut path = Vec::with_capacity(n + 1);
    path.push(x);
    path.extend(nodes);
    Ok(MinimizeResult { action: f, path, certified, iterations, gradient_norm: gnorm })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticBound {
    /// Least-squares `C` in `I ≈ C‖x′‖²`.
    pub c_fit: f64,
    pub min_ratio: f64,
    /// `(‖x′‖, I_T(x), I_T(x)/‖x′‖²)` per retained sample.
    pub samples: Vec<(f64, f64, f64)>,
    pub pass: bool,
}

/// `min I_T(x)/‖x′‖²` over samples, `x′` the offset from the component.
pub fn quadratic_bound_fit(
    field: &FieldModel,
    comp: &RecurrentComponent,
    horizon: f64,
    samples: &[Point2],
    opts: &ShootOptions,
) -> Result<QuadraticBound> {
    let results: Vec<Result<Option<(f64, f64)>>> = samples
        .par_iter()
        .map(|&x| {
            let r = field.distance_to(comp, x);
            if !(r > 1e-12) {
                return Ok(None);
            }
            let e = extremal_shoot(field, x, horizon, opts)?;
            Ok(Some((r, e.action)))
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        if let Some((d, i)) = r? {
            rows.push((d, i, i / (d * d)));
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no sample off the component".into()));
    }
    let num: f64 = rows.iter().map(|(d, i, _)| i * d * d).sum();
    let den: f64 = rows.iter().map(|(d, _, _)| d.powi(4)).sum();
    let min_ratio = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    Ok(QuadraticBound { c_fit: num / den, min_ratio, samples: rows, pass: min_ratio > 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McOptions {
    pub n_paths: usize,
    pub seed: u64,
    /// Time step; `None` selects `min(1e−3, ε/10)`.
    pub dt: Option<f64>,
    /// Paths per random stream.
    pub block: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { n_paths: 100_000, seed: 0, dt: None, block: 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub dt: f64,
}

/// `Θ(t, x) = E_x[v(X_t) exp(−∫₀ᵗ V(X_s) ds)]` for `dX = −Ω dt + √(2ε) dW`,
/// `V = c − ½∇²𝓛 + Ψ/ε`, by Euler–Maruyama with trapezoidal weights.
///
/// Paths are grouped in blocks; block `k` draws from the ChaCha stream `(seed, k)`, so
/// results do not depend on the number of threads.
pub fn feynman_kac_mc(
    field: &FieldModel,
    x: Point2,
    t: f64,
    eps: f64,
    v: &(dyn Fn(Point2) -> f64 + Sync),
    opts: &McOptions,
) -> Result<McEstimate> {
    if !(eps > 0.0) || !(t > 0.0) || opts.n_paths == 0 || opts.block == 0 {
        return Err(Error::InvalidArgument("need ε > 0, t > 0 and at least one path".into()));
    }
    let dt_target = opts.dt.unwrap_or_else(|| (1e-3f64).min(eps / 10.0));
    if !(dt_target > 0.0) {
        return Err(Error::InvalidArgument("time step must be positive".into()));
    }
    let steps = (t / dt_target).ceil() as usize;
    let dt = t / steps as f64;
    let dim = field.dim();
    let sigma = (2.0 * eps * dt).sqrt();
    let n_blocks = opts.n_paths.div_ceil(opts.block);
    let blocks: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64);
            let count = opts.block.min(opts.n_paths - b * opts.block);
            let mut vals = Vec::with_capacity(count);
            for _ in 0..count {
                let mut p = x;
                let mut pot = field.gauge_potential(p, eps);
                let mut integral = 0.0;
                for _ in 0..steps {
                    let o = field.omega(p);
                    let n0: f64 = StandardNormal.sample(&mut rng);
                    p[0] = p[0] - o[0] * dt + sigma * n0;
                    if dim == 2 {
                        let n1: f64 = StandardNormal.sample(&mut rng);
                        p[1] = p[1] - o[1] * dt + sigma * n1;
                    }
                    p[0] -= p[0].floor();
                    p[1] -= p[1].floor();
                    let next = field.gauge_potential(p, eps);
                    integral += 0.5 * dt * (pot + next);
                    pot = next;
                }
                vals.push(v(p) * (-integral).exp());
            }
            vals
        })
        .collect();
    let n = opts.n_paths as f64;
    let mean = blocks.iter().flatten().sum::<f64>() / n;
    let var = if opts.n_paths > 1 {
        blocks.iter().flatten().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate { mean, std_error: (var / n).sqrt(), n_paths: opts.n_paths, dt })
}

/// Size constants of a field on an `n`-point grid: `sup|Ω|`, `sup|∂Ω/∂x|`, `sup Ψ`, `sup|∇Ψ|`.
pub fn field_constants(field: &FieldModel, n: usize) -> [f64; 4] {
    let ny = if field.dim() == 1 { 1 } else { n };
    let mut out = [0.0f64; 4];
    for j in 0..ny {
        for i in 0..n {
            let x = [i as f64 / n as f64, j as f64 / n as f64];
            let jac = field.omega_jacobian(x);
            out[0] = out[0].max(norm2(field.omega(x)));
            out[1] = out[1].max(jac.iter().flatten().map(|v| v * v).sum::<f64>().sqrt());
            out[2] = out[2].max(field.psi(x));
            out[3] = out[3].max(norm2(field.grad_psi(x)));
        }
    }
    out
}
