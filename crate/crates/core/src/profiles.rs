//! Longitudinal densities on cycles and tori, transverse Gaussian blow-up
//! profiles, and the assembled limit measure.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{diophantine_check, Anchor, ComponentKind, DiophantineReport, Killing, Point2, RecurrentComponent, TrigSeries, TrigTerm};
use crate::pressure::LyapunovData;
use crate::speclin::{infinite_gramian, min_sym_eigenvalue, symmetrize, SquareMatrix};

/// Divisors `|m·k|` below this are refused.
pub const SMALL_DIVISOR_FLOOR: f64 = 1e-10;

/// Default Fourier truncation per axis for torus densities.
pub const DEFAULT_TRUNCATION: i32 = 64;

fn fft_in_place(data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    fft.process(data);
}

/// Signed frequency index for position `k` of a length-`n` transform; Nyquist maps to `None`.
fn signed_freq(k: usize, n: usize) -> Option<f64> {
    if n % 2 == 0 && k == n / 2 {
        None
    } else if k <= n / 2 {
        Some(k as f64)
    } else {
        Some(k as f64 - n as f64)
    }
}

/// Spectral derivative of periodic samples over a period `period`.
pub fn spectral_derivative(samples: &[f64], period: f64) -> Vec<f64> {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_in_place(&mut buf, false);
    for (k, v) in buf.iter_mut().enumerate() {
        *v = match signed_freq(k, n) {
            Some(m) => *v * Complex64::new(0.0, TAU * m / period),
            None => Complex64::new(0.0, 0.0),
        };
    }
    fft_in_place(&mut buf, true);
    buf.iter().map(|z| z.re / n as f64).collect()
}

/// Normalized periodic density `f` solving `f′ + (c − ⟨c⟩) f = 0`, `max f = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleDensity {
    pub period: f64,
    pub theta: Vec<f64>,
    pub f: Vec<f64>,
    pub mean_c: f64,
    /// `max |f′ + (c − ⟨c⟩) f|` with `f′` by spectral differentiation.
    pub residual: f64,
    #[serde(skip)]
    log_coeffs: Vec<Complex64>,
    #[serde(skip)]
    log_shift: f64,
}

impl CycleDensity {
    /// Trigonometric interpolation of `f` at any phase.
    pub fn eval(&self, theta: f64) -> f64 {
        let n = self.log_coeffs.len();
        let mut acc = 0.0;
        for (k, c) in self.log_coeffs.iter().enumerate() {
            if let Some(m) = signed_freq(k, n) {
                let ph = TAU * m * theta / self.period;
                acc += c.re * ph.cos() - c.im * ph.sin();
            }
        }
        (acc - self.log_shift).exp()
    }

    /// `∫₀^T f² dθ`.
    pub fn l2_mass(&self) -> f64 {
        self.period / self.f.len() as f64 * self.f.iter().map(|x| x * x).sum::<f64>()
    }
}

/// Cycle density from `N ≥ 8` uniform samples of `c` on `[0, T)`.
pub fn cycle_density(c: &[f64], period: f64) -> Result<CycleDensity> {
    let n = c.len();
    if n < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 samples, got {n}")));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidArgument(format!("period {period} must be positive")));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("killing samples must be finite".into()));
    }
    let mut buf: Vec<Complex64> = c.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_in_place(&mut buf, false);
    let mean_c = buf[0].re / n as f64;
    // Coefficients of −∫(c − ⟨c⟩), scaled by 1/N.
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..n {
        if let Some(m) = signed_freq(k, n) {
            let omega = TAU * m / period;
            coeffs[k] = -buf[k] / Complex64::new(0.0, omega) / n as f64;
        }
    }
    let mut logf = coeffs.clone();
    fft_in_place(&mut logf, true);
    let logf: Vec<f64> = logf.iter().map(|z| z.re).collect();
    let shift = logf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = logf.iter().map(|l| (l - shift).exp()).collect();
    let df = spectral_derivative(&f, period);
    let residual = (0..n)
        .map(|j| (df[j] + (c[j] - mean_c) * f[j]).abs())
        .fold(0.0, f64::max);
    Ok(CycleDensity {
        period,
        theta: (0..n).map(|j| j as f64 * period / n as f64).collect(),
        f,
        mean_c,
        residual,
        log_coeffs: coeffs,
        log_shift: shift,
    })
}

/// Cycle density from a function of the phase, rejecting non-periodic input.
pub fn cycle_density_fn(c: impl Fn(f64) -> f64, period: f64, n: usize) -> Result<CycleDensity> {
    let (a, b) = (c(0.0), c(period));
    let mismatch = (a - b).abs();
    if mismatch > 1e-9 * (1.0 + a.abs()) {
        return Err(Error::NonPeriodic { mismatch });
    }
    let samples: Vec<f64> = (0..n).map(|j| c(j as f64 * period / n as f64)).collect();
    cycle_density(&samples, period)
}

/// Normalized density on an irrational torus solving `k·∇f + (c − μ₂) f = 0`, `max f = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusDensity {
    pub k: [f64; 2],
    /// Real Fourier series of `log f` before normalization.
    pub h: TrigSeries,
    pub mu2: f64,
    /// Grid size per axis; samples are indexed `i + n·j` at `(i/n, j/n)`.
    pub n: usize,
    pub f: Vec<f64>,
    pub log_max: f64,
    pub residual: f64,
    pub dropped_modes: usize,
    pub diophantine: DiophantineReport,
}

impl TorusDensity {
    pub fn eval(&self, x: Point2) -> f64 {
        (self.h.eval(x) - self.log_max).exp()
    }

    /// `∫∫ f²` over the unit square.
    pub fn l2_mass(&self) -> f64 {
        self.f.iter().map(|x| x * x).sum::<f64>() / self.f.len() as f64
    }
}

fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        for j in 0..n {
            col[j] = data[i + n * j];
        }
        fft.process(&mut col);
        for j in 0..n {
            data[i + n * j] = col[j];
        }
    }
}

/// `k₁∂₁f + k₂∂₂f` of periodic samples by 2-D spectral differentiation.
pub fn spectral_transport(f: &[f64], n: usize, k: [f64; 2]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft2(&mut buf, n, false);
    for j in 0..n {
        for i in 0..n {
            let v = &mut buf[i + n * j];
            *v = match (signed_freq(i, n), signed_freq(j, n)) {
                (Some(a), Some(b)) => *v * Complex64::new(0.0, TAU * (a * k[0] + b * k[1])),
                _ => Complex64::new(0.0, 0.0),
            };
        }
    }
    fft2(&mut buf, n, true);
    let scale = (n * n) as f64;
    buf.iter().map(|z| z.re / scale).collect()
}

/// Torus density from a real Fourier table, truncated at `|m|∞ ≤ truncation`.
pub fn torus_density(c: &TrigSeries, k: [f64; 2], truncation: i32, n: usize) -> Result<TorusDensity> {
    if truncation < 1 || n < 8 {
        return Err(Error::InvalidArgument("truncation ≥ 1 and n ≥ 8 required".into()));
    }
    let mut h = TrigSeries::constant(0.0);
    let mut kept = TrigSeries::constant(c.mean);
    let mut dropped = 0;
    for t in &c.terms {
        if t.cos == 0.0 && t.sin == 0.0 {
            continue;
        }
        if t.mode == [0, 0] {
            kept.mean += t.cos;
            continue;
        }
        if t.mode[0].abs().max(t.mode[1].abs()) > truncation {
            dropped += 1;
            continue;
        }
        let d = t.mode[0] as f64 * k[0] + t.mode[1] as f64 * k[1];
        if d.abs() < SMALL_DIVISOR_FLOOR {
            return Err(Error::SmallDivisor {
                m1: t.mode[0] as i64,
                m2: t.mode[1] as i64,
                divisor: d.abs(),
                floor: SMALL_DIVISOR_FLOOR,
            });
        }
        // k·∇ (a cos 2πφ + b sin 2πφ) = −(cos·cos 2πφ + sin·sin 2πφ)
        h.terms.push(TrigTerm { mode: t.mode, cos: t.sin / (TAU * d), sin: -t.cos / (TAU * d) });
        kept.terms.push(*t);
    }
    let diophantine = diophantine_check(k[0], k[1], truncation as i64, 1.0, 1e-6)?;
    if diophantine.min_raw_divisor <= 1e-12 * k[0].hypot(k[1]) {
        let [m1, m2] = diophantine.min_raw_pair;
        return Err(Error::Rationality { m1, m2 });
    }
    let hv: Vec<f64> = (0..n * n)
        .map(|idx| h.eval([(idx % n) as f64 / n as f64, (idx / n) as f64 / n as f64]))
        .collect();
    let log_max = hv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = hv.iter().map(|x| (x - log_max).exp()).collect();
    let df = spectral_transport(&f, n, k);
    let mu2 = kept.mean;
    let residual = (0..n * n)
        .map(|idx| {
            let x = [(idx % n) as f64 / n as f64, (idx / n) as f64 / n as f64];
            (df[idx] + (kept.eval(x) - mu2) * f[idx]).abs()
        })
        .fold(0.0, f64::max);
    Ok(TorusDensity {
        k,
        h,
        mu2,
        n,
        f,
        log_max,
        residual,
        dropped_modes: dropped,
        diophantine,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Longitudinal {
    None,
    Cycle(CycleDensity),
    Torus(TorusDensity),
}

impl Longitudinal {
    pub fn l2_mass(&self) -> f64 {
        match self {
            Longitudinal::None => 1.0,
            Longitudinal::Cycle(d) => d.l2_mass(),
            Longitudinal::Torus(d) => d.l2_mass(),
        }
    }
}

/// Predicted blow-up limit `exp(−⟨Sy, y⟩)·f` in the splitting coordinates `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupProfile {
    pub label: String,
    pub kind: ComponentKind,
    /// `S = (¼M_s⁻¹ + ½A_s) ⊕ ½A_u` in the splitting basis.
    pub s: SquareMatrix,
    /// Splitting basis; ambient transverse coordinates are `basis · y`.
    pub basis: SquareMatrix,
    pub stable_dim: usize,
    pub lambda_profile: f64,
    pub longitudinal: Longitudinal,
}

impl BlowupProfile {
    pub fn transverse_dim(&self) -> usize {
        self.s.nrows()
    }

    /// `S` in ambient transverse coordinates.
    pub fn s_ambient(&self) -> SquareMatrix {
        &self.basis * &self.s * self.basis.transpose()
    }

    /// Gaussian factor at splitting coordinates `y`.
    pub fn transverse(&self, y: &DVector<f64>) -> f64 {
        (-(y.dot(&(&self.s * y)))).exp()
    }

    /// Gaussian factor at ambient transverse coordinates `x`.
    pub fn transverse_ambient(&self, x: &DVector<f64>) -> f64 {
        self.transverse(&(self.basis.transpose() * x))
    }

    /// Longitudinal factor: phase `θ` on a cycle, point of the unit square on a torus.
    pub fn longitudinal_at(&self, p: Point2) -> f64 {
        match &self.longitudinal {
            Longitudinal::None => 1.0,
            Longitudinal::Cycle(d) => d.eval(p[0]),
            Longitudinal::Torus(d) => d.eval(p),
        }
    }
}

/// Build the blow-up profile of a component; `n_long` is the longitudinal grid size.
pub fn blowup_profile(comp: &RecurrentComponent, lyap: &LyapunovData, n_long: usize) -> Result<BlowupProfile> {
    let split = &comp.splitting;
    let (ms, mu) = (split.stable_dim(), split.unstable_dim());
    if lyap.a_s.nrows() != ms || lyap.a_u.nrows() != mu {
        return Err(Error::InvalidArgument(format!(
            "Lyapunov data does not match the splitting of `{}`",
            comp.label
        )));
    }
    let n = ms + mu;
    let mut s = DMatrix::zeros(n, n);
    if ms > 0 {
        let m_inv = infinite_gramian(&split.stable_block)?
            .try_inverse()
            .ok_or_else(|| Error::ConstraintViolation("stable Gramian is singular".into()))?;
        let ss = symmetrize(&(m_inv * 0.25 + &lyap.a_s * 0.5));
        if min_sym_eigenvalue(&ss) <= 0.0 {
            return Err(Error::ConstraintViolation(format!(
                "`{}`: stable profile block is not positive definite; increase Π_s",
                comp.label
            )));
        }
        s.view_mut((0, 0), (ms, ms)).copy_from(&ss);
    }
    if mu > 0 {
        s.view_mut((ms, ms), (mu, mu)).copy_from(&(&lyap.a_u * 0.5));
    }
    let longitudinal = match &comp.killing {
        Killing::Point(_) => Longitudinal::None,
        Killing::Cycle { period, c } => {
            let p = *period;
            Longitudinal::Cycle(cycle_density_fn(|th| c.eval([th / p, 0.0]), p, n_long)?)
        }
        Killing::Torus { k, c } => Longitudinal::Torus(torus_density(c, *k, DEFAULT_TRUNCATION, n_long)?),
    };
    Ok(BlowupProfile {
        label: comp.label.clone(),
        kind: comp.kind(),
        s,
        basis: split.basis.clone(),
        stable_dim: ms,
        lambda_profile: comp.killing.average() - split.trace_stable(),
        longitudinal,
    })
}

/// `∫ exp(−power·⟨Sx, x⟩) dx = π^{m/2} / √det(power·S)`.
pub fn gaussian_mass(s: &SquareMatrix, power: u32) -> Result<f64> {
    if power != 1 && power != 2 {
        return Err(Error::InvalidArgument("power must be 1 or 2".into()));
    }
    let m = s.nrows();
    if m == 0 {
        return Ok(1.0);
    }
    if min_sym_eigenvalue(s) <= 0.0 {
        return Err(Error::NotPositiveDefinite("Gaussian form".into()));
    }
    let det = (symmetrize(s) * power as f64).determinant();
    Ok(PI.powf(m as f64 / 2.0) / det.sqrt())
}

/// Pointwise eigenvalue `(Lw)(y)/w(y)` of the transverse blow-up operator
/// `−∇²w + ⟨(B − 2A)y, ∇w⟩ + (R − tr A + ⟨ψ₂y, y⟩) w` applied analytically to the
/// Gaussian profile. A constant value equal to `R − Tr B_s` certifies the profile.
pub fn blowup_eigenvalue_at(profile: &BlowupProfile, comp: &RecurrentComponent, lyap: &LyapunovData, y: &DVector<f64>) -> f64 {
    let d = comp.splitting.block_diag();
    let s = &profile.s;
    let sy = s * y;
    let lap = 4.0 * sy.dot(&sy) - 2.0 * s.trace();
    let drift = ((&d - &lyap.a * 2.0) * y).dot(&(-&sy * 2.0));
    -lap + drift + comp.killing.average() - lyap.a.trace() + y.dot(&(&lyap.psi2 * y))
}

/// Max-norm residual `|L_h w − λ w|` of the central-difference blow-up operator on
/// the box `[−half_width, half_width]^m` (times one period for a cycle) with spacing `h`.
pub fn blowup_discrete_residual(
    profile: &BlowupProfile,
    comp: &RecurrentComponent,
    lyap: &LyapunovData,
    h: f64,
    half_width: f64,
) -> Result<f64> {
    let m = profile.transverse_dim();
    if m > 2 {
        return Err(Error::InvalidArgument("transverse dimension above 2".into()));
    }
    let d = comp.splitting.block_diag();
    let drift = &d - &lyap.a * 2.0;
    let steps = (half_width / h).round() as i64;
    let h = half_width / steps as f64;
    let (period, c_series) = match &comp.killing {
        Killing::Point(c) => (None, TrigSeries::constant(*c)),
        Killing::Cycle { period, c } => (Some(*period), c.clone()),
        Killing::Torus { .. } => {
            return Err(Error::InvalidArgument("torus profiles have no transverse residual".into()))
        }
    };
    let lambda = profile.lambda_profile;
    let (n_theta, h_theta) = match period {
        Some(p) => {
            let n = (p / h).round().max(8.0) as usize;
            (n, p / n as f64)
        }
        None => (1, 0.0),
    };
    let w = |y: &DVector<f64>, th: f64| profile.transverse(y) * profile.longitudinal_at([th, 0.0]);
    let mut worst = 0.0f64;
    let idx_range: Vec<i64> = (-steps + 1..steps).collect();
    let mut ys: Vec<DVector<f64>> = Vec::new();
    match m {
        0 => ys.push(DVector::zeros(0)),
        1 => ys.extend(idx_range.iter().map(|&i| DVector::from_element(1, i as f64 * h))),
        _ => {
            for &i in &idx_range {
                for &j in &idx_range {
                    ys.push(DVector::from_vec(vec![i as f64 * h, j as f64 * h]));
                }
            }
        }
    }
    for it in 0..n_theta {
        let th = it as f64 * h_theta;
        let cth = match period {
            Some(p) => c_series.eval([th / p, 0.0]),
            None => c_series.mean,
        };
        for y in &ys {
            let w0 = w(y, th);
            let mut lap = 0.0;
            let mut grad = DVector::zeros(m);
            for a in 0..m {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[a] += h;
                ym[a] -= h;
                let (wp, wm) = (w(&yp, th), w(&ym, th));
                lap += (wp - 2.0 * w0 + wm) / (h * h);
                grad[a] = (wp - wm) / (2.0 * h);
            }
            let mut val = -lap + (&drift * y).dot(&grad) + (cth - lyap.a.trace() + y.dot(&(&lyap.psi2 * y))) * w0;
            if let Some(p) = period {
                let wp = w(y, (th + h_theta) % p);
                let wm = w(y, (th - h_theta + p) % p);
                val += (wp - wm) / (2.0 * h_theta);
            }
            worst = worst.max((val - lambda * w0).abs());
        }
    }
    Ok(worst)
}

/// One atom of a limit measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub label: String,
    pub kind: ComponentKind,
    pub gamma: f64,
    pub weight: f64,
    /// `∫ w² dx′` over transverse directions.
    pub transverse_mass: f64,
    /// `∫ f² dθ` along the component (1 for points).
    pub longitudinal_mass: f64,
    #[serde(skip)]
    pub anchor: Anchor,
    #[serde(skip)]
    pub longitudinal: Longitudinal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitMeasure {
    pub atoms: Vec<Atom>,
    /// `1 / Σ γ² ∫w² ∫f²`.
    pub normalizer: f64,
}

pub struct AtomInput<'a> {
    pub profile: &'a BlowupProfile,
    pub anchor: Anchor,
    pub gamma: f64,
}

pub fn assemble_limit_measure(inputs: &[AtomInput<'_>]) -> Result<LimitMeasure> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no eligible components".into()))?;
    if inputs.iter().any(|a| a.profile.kind != first.profile.kind) {
        return Err(Error::InvariantViolation(
            "eligible components must all have the same kind".into(),
        ));
    }
    if inputs.iter().any(|a| !(a.gamma >= 0.0) || !a.gamma.is_finite()) {
        return Err(Error::InvalidArgument("modulating coefficients must be finite and ≥ 0".into()));
    }
    if inputs.iter().all(|a| a.gamma == 0.0) {
        return Err(Error::InvalidArgument("at least one modulating coefficient must be positive".into()));
    }
    let mut atoms = Vec::with_capacity(inputs.len());
    let mut total = 0.0;
    for a in inputs {
        let tm = gaussian_mass(&a.profile.s, 2)?;
        let lm = a.profile.longitudinal.l2_mass();
        let raw = a.gamma * a.gamma * tm * lm;
        total += raw;
        atoms.push(Atom {
            label: a.profile.label.clone(),
            kind: a.profile.kind,
            gamma: a.gamma,
            weight: raw,
            transverse_mass: tm,
            longitudinal_mass: lm,
            anchor: a.anchor,
            longitudinal: a.profile.longitudinal.clone(),
        });
    }
    let normalizer = 1.0 / total;
    for a in &mut atoms {
        a.weight *= normalizer;
    }
    Ok(LimitMeasure { atoms, normalizer })
}

impl LimitMeasure {
    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `∫ h dμ`, each atom integrated against its normalized squared density.
    pub fn integrate(&self, h: impl Fn(Point2) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for a in &self.atoms {
            let v = match (&a.anchor, &a.longitudinal) {
                (Anchor::Point(p), _) => h(*p),
                (Anchor::Line { origin, direction }, Longitudinal::Cycle(d)) => {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for (th, f) in d.theta.iter().zip(&d.f) {
                        let s = th / d.period;
                        let p = [origin[0] + s * direction[0] as f64, origin[1] + s * direction[1] as f64];
                        num += f * f * h(p);
                        den += f * f;
                    }
                    num / den
                }
                (Anchor::Everywhere, Longitudinal::Torus(d)) => {
                    let n = d.n;
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for (idx, f) in d.f.iter().enumerate() {
                        num += f * f * h([(idx % n) as f64 / n as f64, (idx / n) as f64 / n as f64]);
                        den += f * f;
                    }
                    num / den
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "atom `{}` has no geometric placement",
                        a.label
                    )))
                }
            };
            acc += a.weight * v;
        }
        Ok(acc)
    }
}
