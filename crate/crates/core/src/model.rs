//! Recurrent components and the benchmark drift fields on the circle and the 2-torus.
//!
//! All manifolds use period-one coordinates. Points are stored as `[f64; 2]`; on
//! the circle the second coordinate is ignored.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::speclin::{spectral_split, HyperbolicSplitting, SquareMatrix, DEFAULT_HYPERBOLICITY_FLOOR};

pub type Point2 = [f64; 2];

/// One real Fourier term `cos·cos(2π m·θ) + sin·sin(2π m·θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub mode: [i32; 2],
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Real trigonometric polynomial in period-one coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigSeries {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigSeries {
    pub fn constant(c: f64) -> Self {
        Self { mean: c, terms: Vec::new() }
    }

    /// Builder helper: add `cos·cos(2π m·θ) + sin·sin(2π m·θ)`.
    pub fn with_term(mut self, mode: [i32; 2], cos: f64, sin: f64) -> Self {
        self.terms.push(TrigTerm { mode, cos, sin });
        self
    }

    pub fn eval(&self, x: Point2) -> f64 {
        let mut acc = self.mean;
        for t in &self.terms {
            let ph = TAU * (t.mode[0] as f64 * x[0] + t.mode[1] as f64 * x[1]);
            let (s, c) = ph.sin_cos();
            acc += t.cos * c + t.sin * s;
        }
        acc
    }

    pub fn gradient(&self, x: Point2) -> Point2 {
        let mut g = [0.0; 2];
        for t in &self.terms {
            let ph = TAU * (t.mode[0] as f64 * x[0] + t.mode[1] as f64 * x[1]);
            let (s, c) = ph.sin_cos();
            let d = TAU * (t.sin * c - t.cos * s);
            g[0] += d * t.mode[0] as f64;
            g[1] += d * t.mode[1] as f64;
        }
        g
    }

    pub fn shifted(&self, kappa: f64) -> Self {
        let mut out = self.clone();
        out.mean += kappa;
        out
    }

    /// Largest |m₁|, |m₂| among non-zero terms.
    pub fn max_mode(&self) -> i32 {
        self.terms
            .iter()
            .filter(|t| t.cos != 0.0 || t.sin != 0.0)
            .map(|t| t.mode[0].abs().max(t.mode[1].abs()))
            .max()
            .unwrap_or(0)
    }

    /// Restriction to the closed line `s ↦ origin + s·direction`, `s ∈ [0, 1)`,
    /// returned as a one-dimensional series in `s`. `direction` must be integral.
    pub fn restrict_line(&self, origin: Point2, direction: [i32; 2]) -> Self {
        let mut out = Self::constant(self.mean);
        for t in &self.terms {
            let along = t.mode[0] * direction[0] + t.mode[1] * direction[1];
            let a = TAU * (t.mode[0] as f64 * origin[0] + t.mode[1] as f64 * origin[1]);
            let (sa, ca) = a.sin_cos();
            // cos(a + φ) = ca cosφ − sa sinφ ; sin(a + φ) = sa cosφ + ca sinφ
            let cc = t.cos * ca + t.sin * sa;
            let ss = -t.cos * sa + t.sin * ca;
            if along == 0 {
                out.mean += cc;
            } else {
                out.terms.push(TrigTerm { mode: [along, 0], cos: cc, sin: ss });
            }
        }
        out
    }

    /// Complex Fourier coefficients `c_m` with `c(θ) = Σ c_m e^{2πi m·θ}`; each real
    /// term contributes to `m` and `−m`.
    pub fn complex_coefficients(&self) -> Vec<([i32; 2], Complex64)> {
        let mut out = vec![([0, 0], Complex64::new(self.mean, 0.0))];
        for t in &self.terms {
            if t.mode == [0, 0] {
                out[0].1 += t.cos;
                continue;
            }
            out.push((t.mode, Complex64::new(0.5 * t.cos, -0.5 * t.sin)));
            out.push(([-t.mode[0], -t.mode[1]], Complex64::new(0.5 * t.cos, 0.5 * t.sin)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Point,
    Cycle,
    Torus,
}

impl ComponentKind {
    /// Dimension-rule priority: tori outrank cycles, which outrank points.
    pub fn priority(self) -> u8 {
        match self {
            ComponentKind::Point => 0,
            ComponentKind::Cycle => 1,
            ComponentKind::Torus => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Point => "point",
            ComponentKind::Cycle => "cycle",
            ComponentKind::Torus => "torus",
        }
    }
}

/// Killing data restricted to a component.
#[derive(Debug, Clone, PartialEq)]
pub enum Killing {
    Point(f64),
    /// `c` is a series in the normalized phase `θ / period`.
    Cycle { period: f64, c: TrigSeries },
    Torus { k: [f64; 2], c: TrigSeries },
}

impl Killing {
    pub fn kind(&self) -> ComponentKind {
        match self {
            Killing::Point(_) => ComponentKind::Point,
            Killing::Cycle { .. } => ComponentKind::Cycle,
            Killing::Torus { .. } => ComponentKind::Torus,
        }
    }

    /// `R(ω)`: the value at a point, the time average along a cycle or torus.
    pub fn average(&self) -> f64 {
        match self {
            Killing::Point(c) => *c,
            Killing::Cycle { c, .. } | Killing::Torus { c, .. } => c.mean,
        }
    }
}

/// Where a component sits on the model manifold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor {
    /// No geometric placement (abstract component).
    Abstract,
    Point(Point2),
    /// Closed line through `origin` along an integral `direction`.
    Line { origin: Point2, direction: [i32; 2] },
    /// The whole manifold.
    Everywhere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentComponent {
    pub label: String,
    pub killing: Killing,
    pub transverse_b: SquareMatrix,
    pub splitting: HyperbolicSplitting,
    pub anchor: Anchor,
}

impl RecurrentComponent {
    pub fn kind(&self) -> ComponentKind {
        self.killing.kind()
    }

    pub fn transverse_dim(&self) -> usize {
        self.transverse_b.nrows()
    }
}

/// Validate and assemble a component.
pub fn build_component(
    label: &str,
    killing: Killing,
    transverse_b: SquareMatrix,
    anchor: Anchor,
) -> Result<RecurrentComponent> {
    build_component_with_floor(label, killing, transverse_b, anchor, DEFAULT_HYPERBOLICITY_FLOOR)
}

pub fn build_component_with_floor(
    label: &str,
    killing: Killing,
    transverse_b: SquareMatrix,
    anchor: Anchor,
    floor: f64,
) -> Result<RecurrentComponent> {
    match &killing {
        Killing::Point(c) if !c.is_finite() => {
            return Err(Error::InvalidArgument(format!("{label}: killing value is not finite")))
        }
        Killing::Cycle { period, .. } if !(*period > 0.0) || !period.is_finite() => {
            return Err(Error::InvalidArgument(format!("{label}: cycle period must be positive")))
        }
        Killing::Torus { k, .. } => {
            if k[0] * k[0] + k[1] * k[1] == 0.0 {
                return Err(Error::InvalidArgument(format!("{label}: zero torus frequency")));
            }
            let scan = diophantine_check(k[0], k[1], 64, 1.0, 0.0)?;
            if scan.min_raw_divisor <= 1e-12 * k[0].hypot(k[1]) {
                let [m1, m2] = scan.min_raw_pair;
                return Err(Error::Rationality { m1, m2 });
            }
        }
        _ => {}
    }
    let splitting = spectral_split(&transverse_b, floor).map_err(|e| match e {
        Error::Hyperbolicity { .. } | Error::Orthogonality { .. } => {
            Error::InvalidArgument(format!("component `{label}`: {e}"))
        }
        other => other,
    })?;
    Ok(RecurrentComponent {
        label: label.to_string(),
        killing,
        transverse_b,
        splitting,
        anchor,
    })
}

/// Result of scanning integer modes for small divisors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiophantineReport {
    /// `min |m·k| (m₁² + m₂²)^α` over the scanned modes.
    pub min_divisor: f64,
    pub worst_pair: [i64; 2],
    /// `min |m·k|` without the weight.
    pub min_raw_divisor: f64,
    pub min_raw_pair: [i64; 2],
    pub pass: bool,
}

/// Scan `0 < m₁² + m₂² ≤ M²` for the weighted divisor `|m₁k₁ + m₂k₂|·(m₁² + m₂²)^α`.
pub fn diophantine_check(k1: f64, k2: f64, cutoff: i64, alpha: f64, c: f64) -> Result<DiophantineReport> {
    if cutoff < 1 {
        return Err(Error::InvalidArgument("cutoff must be at least 1".into()));
    }
    if !(k1.is_finite() && k2.is_finite()) || k1 * k1 + k2 * k2 == 0.0 {
        return Err(Error::InvalidArgument("frequencies must be finite and not both zero".into()));
    }
    let mut best = (f64::INFINITY, [0i64, 0]);
    let mut raw = (f64::INFINITY, [0i64, 0]);
    for m1 in -cutoff..=cutoff {
        for m2 in -cutoff..=cutoff {
            let r2 = m1 * m1 + m2 * m2;
            if r2 == 0 || r2 > cutoff * cutoff {
                continue;
            }
            let d = (m1 as f64 * k1 + m2 as f64 * k2).abs();
            let w = d * (r2 as f64).powf(alpha);
            if w < best.0 {
                best = (w, [m1, m2]);
            }
            if d < raw.0 {
                raw = (d, [m1, m2]);
            }
        }
    }
    Ok(DiophantineReport {
        min_divisor: best.0,
        worst_pair: best.1,
        min_raw_divisor: raw.0,
        min_raw_pair: raw.1,
        pass: best.0 >= c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Circle,
    Torus2,
}

impl Manifold {
    pub fn dim(self) -> usize {
        match self {
            Manifold::Circle => 1,
            Manifold::Torus2 => 2,
        }
    }
}

/// Catalog entries.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    CircleSinkSource,
    TorusShearCycles,
    TorusGradientPoints,
    TorusIrrationalFlow { k: [f64; 2] },
    CircleZeroDrift,
    TorusZeroDrift,
}

pub const CATALOG: &[&str] = &[
    "circle_sink_source",
    "torus_shear_cycles",
    "torus_gradient_points",
    "torus_irrational_flow",
    "circle_zero_drift",
    "torus_zero_drift",
];

/// Parameters accepted by [`benchmark_field`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    /// Scalar weight `Π` (> 2) shared by all stable and unstable directions.
    pub pi: f64,
    /// Torus frequencies for `torus_irrational_flow`.
    pub k: [f64; 2],
    pub killing: TrigSeries,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            pi: 4.0,
            k: [1.0, (1.0 + 5f64.sqrt()) / 2.0],
            killing: TrigSeries::constant(0.0),
        }
    }
}

/// A drift field `b = Ω + ∇𝓛` on the circle or torus with killing term `c`.
///
/// The gradient fields use `𝓛 = κΦ` with `∇Φ = b` and `κ = 4/Π`, so that
/// `Ω = (1 − κ) b` in the gradient directions and `Ψ = ¼κ(2 − κ)|b_grad|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    pub name: String,
    pub manifold: Manifold,
    shape: Shape,
    pub pi: f64,
    pub kappa: f64,
    pub killing: TrigSeries,
    pub components: Vec<RecurrentComponent>,
}

/// Signed periodic difference in `[-½, ½)`.
pub fn periodic_delta(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - (d + 0.5).floor()
}

impl FieldModel {
    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    /// Gradient part `∇Φ` of the drift (the non-gradient part is handled separately).
    fn grad_part(&self, x: Point2) -> Point2 {
        match self.shape {
            Shape::CircleSinkSource => [(TAU * x[0]).sin(), 0.0],
            Shape::TorusShearCycles => [-(TAU * x[0]).sin(), 0.0],
            Shape::TorusGradientPoints => [-(TAU * x[0]).sin(), -(TAU * x[1]).sin()],
            _ => [0.0, 0.0],
        }
    }

    /// Constant non-gradient part of the drift.
    fn rotation_part(&self) -> Point2 {
        match self.shape {
            Shape::TorusShearCycles => [0.0, 1.0],
            Shape::TorusIrrationalFlow { k } => k,
            _ => [0.0, 0.0],
        }
    }

    pub fn drift(&self, x: Point2) -> Point2 {
        let g = self.grad_part(x);
        let r = self.rotation_part();
        [g[0] + r[0], g[1] + r[1]]
    }

    pub fn omega(&self, x: Point2) -> Point2 {
        let g = self.grad_part(x);
        let r = self.rotation_part();
        let s = 1.0 - self.kappa;
        [s * g[0] + r[0], s * g[1] + r[1]]
    }

    /// `∂Ω_i/∂x_j`.
    pub fn omega_jacobian(&self, x: Point2) -> [[f64; 2]; 2] {
        let s = 1.0 - self.kappa;
        match self.shape {
            Shape::CircleSinkSource => [[s * TAU * (TAU * x[0]).cos(), 0.0], [0.0, 0.0]],
            Shape::TorusShearCycles => [[-s * TAU * (TAU * x[0]).cos(), 0.0], [0.0, 0.0]],
            Shape::TorusGradientPoints => [
                [-s * TAU * (TAU * x[0]).cos(), 0.0],
                [0.0, -s * TAU * (TAU * x[1]).cos()],
            ],
            _ => [[0.0; 2]; 2],
        }
    }

    pub fn lyapunov(&self, x: Point2) -> f64 {
        let k = self.kappa / TAU;
        match self.shape {
            Shape::CircleSinkSource => -k * (TAU * x[0]).cos(),
            Shape::TorusShearCycles => k * (TAU * x[0]).cos(),
            Shape::TorusGradientPoints => k * ((TAU * x[0]).cos() + (TAU * x[1]).cos()),
            _ => 0.0,
        }
    }

    pub fn grad_lyapunov(&self, x: Point2) -> Point2 {
        let g = self.grad_part(x);
        [self.kappa * g[0], self.kappa * g[1]]
    }

    /// `∇²𝓛` (the analyst's Laplacian, negative at maxima).
    pub fn laplacian_lyapunov(&self, x: Point2) -> f64 {
        let k = self.kappa * TAU;
        match self.shape {
            Shape::CircleSinkSource => k * (TAU * x[0]).cos(),
            Shape::TorusShearCycles => -k * (TAU * x[0]).cos(),
            Shape::TorusGradientPoints => -k * ((TAU * x[0]).cos() + (TAU * x[1]).cos()),
            _ => 0.0,
        }
    }

    /// `Ψ = ¼(|∇𝓛|² + 2⟨∇𝓛, Ω⟩)`.
    pub fn psi(&self, x: Point2) -> f64 {
        let g = self.grad_part(x);
        0.25 * self.kappa * (2.0 - self.kappa) * (g[0] * g[0] + g[1] * g[1])
    }

    pub fn grad_psi(&self, x: Point2) -> Point2 {
        let f = 0.25 * self.kappa * (2.0 - self.kappa);
        // d/dx sin²(2πx) = 2π sin(4πx)
        let d = |t: f64| f * TAU * (2.0 * TAU * t).sin();
        match self.shape {
            Shape::CircleSinkSource | Shape::TorusShearCycles => [d(x[0]), 0.0],
            Shape::TorusGradientPoints => [d(x[0]), d(x[1])],
            _ => [0.0, 0.0],
        }
    }

    pub fn killing_at(&self, x: Point2) -> f64 {
        match self.manifold {
            Manifold::Circle => self.killing.eval([x[0], 0.0]),
            Manifold::Torus2 => self.killing.eval(x),
        }
    }

    /// Gauge potential `c + Δ𝓛/2 + Ψ/ε` with `Δ = −∇²`, i.e. `c_ε / ε`.
    pub fn gauge_potential(&self, x: Point2, eps: f64) -> f64 {
        self.killing_at(x) - 0.5 * self.laplacian_lyapunov(x) + self.psi(x) / eps
    }

    /// Periodic distance from `x` to a component's support.
    pub fn distance_to(&self, comp: &RecurrentComponent, x: Point2) -> f64 {
        distance_to_anchor(self.manifold, &comp.anchor, x)
    }

    /// Distance to the nearest declared component; zero for the zero-drift fields,
    /// where every point is stationary.
    pub fn distance_to_recurrent_set(&self, x: Point2) -> f64 {
        if self.components.is_empty() {
            return 0.0;
        }
        self.components
            .iter()
            .map(|c| self.distance_to(c, x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Same field with `c` replaced.
    pub fn with_killing(&self, killing: TrigSeries) -> Result<Self> {
        let params = FieldParams {
            pi: self.pi,
            k: match self.shape {
                Shape::TorusIrrationalFlow { k } => k,
                _ => FieldParams::default().k,
            },
            killing,
        };
        benchmark_field(&self.name, &params)
    }

    /// Minimum of `Ψ` on an `n`-point-per-axis grid and the largest distance from a
    /// grid zero of `Ψ` (≤ `tol`) to the recurrent set.
    pub fn psi_grid_check(&self, n: usize, tol: f64) -> (f64, f64) {
        let h = 1.0 / n as f64;
        let ny = if self.dim() == 1 { 1 } else { n };
        let mut min_psi = f64::INFINITY;
        let mut worst = 0.0f64;
        for j in 0..ny {
            for i in 0..n {
                let x = [i as f64 * h, j as f64 * h];
                let p = self.psi(x);
                min_psi = min_psi.min(p);
                if p <= tol && !self.components.is_empty() {
                    worst = worst.max(self.distance_to_recurrent_set(x));
                }
            }
        }
        (min_psi, worst)
    }
}

pub fn distance_to_anchor(manifold: Manifold, anchor: &Anchor, x: Point2) -> f64 {
    let dim = manifold.dim();
    match *anchor {
        Anchor::Abstract => f64::NAN,
        Anchor::Everywhere => 0.0,
        Anchor::Point(p) => {
            let dx = periodic_delta(x[0], p[0]);
            let dy = if dim == 2 { periodic_delta(x[1], p[1]) } else { 0.0 };
            dx.hypot(dy)
        }
        Anchor::Line { origin, direction } => {
            // Axis-aligned lines only: distance along the normal axis.
            if direction[1] != 0 && direction[0] == 0 {
                periodic_delta(x[0], origin[0]).abs()
            } else if direction[0] != 0 && direction[1] == 0 {
                periodic_delta(x[1], origin[1]).abs()
            } else {
                // General closed geodesic: brute force over a fine parametrization.
                let n = 4096;
                (0..n)
                    .map(|i| {
                        let s = i as f64 / n as f64;
                        let q = [
                            origin[0] + s * direction[0] as f64,
                            origin[1] + s * direction[1] as f64,
                        ];
                        periodic_delta(x[0], q[0]).hypot(periodic_delta(x[1], q[1]))
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Instantiate a catalog field.
pub fn benchmark_field(name: &str, params: &FieldParams) -> Result<FieldModel> {
    let shape = match name {
        "circle_sink_source" => Shape::CircleSinkSource,
        "torus_shear_cycles" => Shape::TorusShearCycles,
        "torus_gradient_points" => Shape::TorusGradientPoints,
        "torus_irrational_flow" => Shape::TorusIrrationalFlow { k: params.k },
        "circle_zero_drift" => Shape::CircleZeroDrift,
        "torus_zero_drift" => Shape::TorusZeroDrift,
        _ => return Err(Error::UnknownField(name.to_string())),
    };
    if !(params.pi > 2.0) || !params.pi.is_finite() {
        return Err(Error::OutOfRange(format!("Π = {} must exceed 2", params.pi)));
    }
    if params.killing.mean.is_nan() || params.killing.terms.iter().any(|t| !(t.cos.is_finite() && t.sin.is_finite())) {
        return Err(Error::OutOfRange("killing coefficients must be finite".into()));
    }
    let manifold = match shape {
        Shape::CircleSinkSource | Shape::CircleZeroDrift => Manifold::Circle,
        _ => Manifold::Torus2,
    };
    if manifold == Manifold::Circle && params.killing.terms.iter().any(|t| t.mode[1] != 0) {
        return Err(Error::OutOfRange("circle killing terms must have mode [m, 0]".into()));
    }
    let kappa = 4.0 / params.pi;
    let c = &params.killing;
    let mat = |v: &[f64]| DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v));
    let mut components = Vec::new();
    match shape {
        Shape::CircleSinkSource => {
            components.push(build_component(
                "source",
                Killing::Point(c.eval([0.0, 0.0])),
                mat(&[TAU]),
                Anchor::Point([0.0, 0.0]),
            )?);
            components.push(build_component(
                "sink",
                Killing::Point(c.eval([0.5, 0.0])),
                mat(&[-TAU]),
                Anchor::Point([0.5, 0.0]),
            )?);
        }
        Shape::TorusShearCycles => {
            for (label, x0, b) in [("stable_cycle", 0.0, -TAU), ("unstable_cycle", 0.5, TAU)] {
                components.push(build_component(
                    label,
                    Killing::Cycle { period: 1.0, c: c.restrict_line([x0, 0.0], [0, 1]) },
                    mat(&[b]),
                    Anchor::Line { origin: [x0, 0.0], direction: [0, 1] },
                )?);
            }
        }
        Shape::TorusGradientPoints => {
            for (label, p) in [
                ("sink", [0.0, 0.0]),
                ("saddle_x", [0.5, 0.0]),
                ("saddle_y", [0.0, 0.5]),
                ("source", [0.5, 0.5]),
            ] {
                let bx = if p[0] == 0.0 { -TAU } else { TAU };
                let by = if p[1] == 0.0 { -TAU } else { TAU };
                components.push(build_component(
                    label,
                    Killing::Point(c.eval(p)),
                    mat(&[bx, by]),
                    Anchor::Point(p),
                )?);
            }
        }
        Shape::TorusIrrationalFlow { k } => {
            components.push(build_component(
                "torus",
                Killing::Torus { k, c: c.clone() },
                DMatrix::zeros(0, 0),
                Anchor::Everywhere,
            )?);
        }
        Shape::CircleZeroDrift | Shape::TorusZeroDrift => {}
    }
    let field = FieldModel {
        name: name.to_string(),
        manifold,
        shape,
        pi: params.pi,
        kappa,
        killing: c.clone(),
        components,
    };
    let (min_psi, _) = field.psi_grid_check(64, 1e-10);
    if min_psi < -1e-12 {
        return Err(Error::InvariantViolation(format!("Ψ takes negative value {min_psi:e}")));
    }
    Ok(field)
}

/// Golden ratio, the default second torus frequency.
pub const GOLDEN: f64 = 1.618_033_988_749_895;

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn point_component() {
        let c = build_component("p", Killing::Point(0.5), dmatrix![-1.0, 0.0; 0.0, 2.0], Anchor::Abstract).unwrap();
        assert_eq!(c.splitting.stable_dim(), 1);
        assert_eq!(c.splitting.unstable_dim(), 1);
    }

    #[test]
    fn cycle_component() {
        let k = Killing::Cycle { period: 1.0, c: TrigSeries::constant(1.0).with_term([1, 0], 1.0, 0.0) };
        assert!(build_component("g", k, dmatrix![-3.0], Anchor::Abstract).is_ok());
    }

    #[test]
    fn rational_torus_rejected() {
        let k = Killing::Torus { k: [1.0, 2.0], c: TrigSeries::constant(1.0) };
        let err = build_component("t", k, DMatrix::zeros(0, 0), Anchor::Everywhere).unwrap_err();
        match err {
            Error::Rationality { m1, m2 } => assert_eq!(m1 * 1 + m2 * 2, 0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn nonhyperbolic_component_named() {
        let err = build_component("bad", Killing::Point(0.0), dmatrix![0.0], Anchor::Abstract).unwrap_err();
        assert!(err.to_string().contains("bad"));
    }

    #[test]
    fn diophantine_rational() {
        let r = diophantine_check(1.0, 2.0, 10, 1.0, 1e-6).unwrap();
        assert_eq!(r.min_divisor, 0.0);
        assert!(!r.pass);
        let [m1, m2] = r.worst_pair;
        assert_eq!(m1 + 2 * m2, 0);
    }

    /// Independent scan over the first quadrant and its mirror.
    fn brute_min(k1: f64, k2: f64, m: i64, alpha: f64) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..=m {
            for b in -m..=m {
                let r2 = a * a + b * b;
                if r2 == 0 || r2 > m * m {
                    continue;
                }
                let v = (a as f64 * k1 + b as f64 * k2).abs() * (r2 as f64).powf(alpha);
                best = best.min(v);
            }
        }
        best
    }

    #[test]
    fn diophantine_irrational() {
        for k2 in [GOLDEN, 2f64.sqrt()] {
            let r = diophantine_check(1.0, k2, 100, 1.0, 1e-3).unwrap();
            assert!(r.min_divisor > 0.0 && r.pass);
            assert_eq!(r.min_divisor, brute_min(1.0, k2, 100, 1.0));
        }
    }

    #[test]
    fn catalog_components() {
        let f = benchmark_field("circle_sink_source", &FieldParams::default()).unwrap();
        let bs: Vec<f64> = f.components.iter().map(|c| c.transverse_b[(0, 0)]).collect();
        assert_eq!(bs, vec![TAU, -TAU]);
        let f = benchmark_field("torus_shear_cycles", &FieldParams { killing: TrigSeries::constant(1.5), ..Default::default() }).unwrap();
        assert_eq!(f.components.len(), 2);
        assert!(f.components.iter().all(|c| c.kind() == ComponentKind::Cycle));
        let params = FieldParams { killing: TrigSeries::constant(2.0).with_term([1, 0], 1.0, 0.0), ..Default::default() };
        let f = benchmark_field("torus_irrational_flow", &params).unwrap();
        assert_eq!(f.components.len(), 1);
        assert_eq!(f.psi([0.3, 0.7]), 0.0);
        assert_eq!(f.lyapunov([0.3, 0.7]), 0.0);
        assert!(matches!(benchmark_field("nope", &params), Err(Error::UnknownField(_))));
        assert!(matches!(
            benchmark_field("circle_sink_source", &FieldParams { pi: 1.5, ..Default::default() }),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn psi_zero_set_matches_components() {
        for name in ["circle_sink_source", "torus_shear_cycles", "torus_gradient_points"] {
            let f = benchmark_field(name, &FieldParams::default()).unwrap();
            let n = 128;
            let (min_psi, worst) = f.psi_grid_check(n, 1e-10);
            assert!(min_psi >= 0.0, "{name}");
            assert!(worst <= 1.0 / n as f64, "{name}: {worst}");
        }
    }

    #[test]
    fn local_quadratic_data_matches_weighted_gramian() {
        // Hessian of 𝓛 at each component equals 2A with A = 2B/Π.
        for pi in [2.5, 4.0, 7.0] {
            let f = benchmark_field("torus_gradient_points", &FieldParams { pi, ..Default::default() }).unwrap();
            for c in &f.components {
                let Anchor::Point(p) = c.anchor else { unreachable!() };
                let h = 1e-4;
                for axis in 0..2 {
                    let mut xp = p;
                    let mut xm = p;
                    xp[axis] += h;
                    xm[axis] -= h;
                    let second = (f.lyapunov(xp) - 2.0 * f.lyapunov(p) + f.lyapunov(xm)) / (h * h);
                    let b = c.transverse_b[(axis, axis)];
                    assert!((second - 4.0 * b / pi).abs() < 1e-5, "{second} {}", 4.0 * b / pi);
                }
            }
        }
    }

    #[test]
    fn restriction_to_line() {
        let c = TrigSeries::constant(1.0).with_term([1, 2], 0.3, -0.7).with_term([1, 0], 0.5, 0.1);
        let r = c.restrict_line([0.5, 0.0], [0, 1]);
        for i in 0..17 {
            let s = i as f64 / 17.0;
            assert!((r.eval([s, 0.0]) - c.eval([0.5, s])).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn decomposition_holds(x in 0.0f64..1.0, y in 0.0f64..1.0, pi in 2.1f64..10.0) {
            for name in ["circle_sink_source", "torus_shear_cycles", "torus_gradient_points"] {
                let f = benchmark_field(name, &FieldParams { pi, ..Default::default() }).unwrap();
                let p = [x, y];
                let (b, o, g) = (f.drift(p), f.omega(p), f.grad_lyapunov(p));
                // finite-difference gradient of 𝓛
                let h = 1e-6;
                let fd0 = (f.lyapunov([x + h, y]) - f.lyapunov([x - h, y])) / (2.0 * h);
                let fd1 = (f.lyapunov([x, y + h]) - f.lyapunov([x, y - h])) / (2.0 * h);
                prop_assert!((fd0 - g[0]).abs() < 1e-7);
                if f.dim() == 2 { prop_assert!((fd1 - g[1]).abs() < 1e-7); }
                prop_assert!((b[0] - o[0] - g[0]).abs() < 1e-14);
                prop_assert!((b[1] - o[1] - g[1]).abs() < 1e-14);
                let psi = 0.25 * (g[0] * g[0] + g[1] * g[1] + 2.0 * (g[0] * o[0] + g[1] * o[1]));
                prop_assert!((psi - f.psi(p)).abs() < 1e-12);
                prop_assert!(f.psi(p) >= 0.0);
            }
        }

        #[test]
        fn diophantine_monotone_in_cutoff(k2 in 0.3f64..3.0, m in 2i64..30) {
            let a = diophantine_check(1.0, k2, m, 1.0, 0.0).unwrap();
            let b = diophantine_check(1.0, k2, m + 5, 1.0, 0.0).unwrap();
            prop_assert!(b.min_divisor <= a.min_divisor);
            let flipped = diophantine_check(-1.0, -k2, m, 1.0, 0.0).unwrap();
            prop_assert_eq!(flipped.min_divisor, a.min_divisor);
        }
    }
}
