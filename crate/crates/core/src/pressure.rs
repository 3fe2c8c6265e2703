//! Quadratic Lyapunov data per component, component pressures and the global
//! support selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComponentKind, RecurrentComponent};
use crate::speclin::{
    infinite_gramian, min_sym_eigenvalue, symmetrize, weighted_infinite_gramian, HyperbolicSplitting,
    Side, SquareMatrix,
};

/// Absolute tolerance for ties in the global maximum.
pub const TIE_TOL: f64 = 1e-12;

/// Quadratic data `A = A_s ⊕ A_u` of the local Lyapunov function, in the splitting basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovData {
    pub a_s: SquareMatrix,
    pub a_u: SquareMatrix,
    pub a: SquareMatrix,
    /// `½(BᵀA + AB − 2A²)` with `B = diag(B_s, B_u)`.
    pub psi2: SquareMatrix,
    pub pi_s: SquareMatrix,
    pub pi_u: SquareMatrix,
}

impl LyapunovData {
    pub fn trace_a(&self) -> f64 {
        self.a.trace()
    }
}

/// Build `A_s`, `A_u` and `ψ₂` from the weights `Π_s`, `Π_u`.
pub fn build_lyapunov(split: &HyperbolicSplitting, pi_s: &SquareMatrix, pi_u: &SquareMatrix) -> Result<LyapunovData> {
    let (ms, mu) = (split.stable_dim(), split.unstable_dim());
    if pi_s.nrows() != ms || pi_u.nrows() != mu {
        return Err(Error::InvalidArgument(format!(
            "Π sizes ({}, {}) do not match the splitting ({ms}, {mu})",
            pi_s.nrows(),
            pi_u.nrows()
        )));
    }
    let a_s = weighted_infinite_gramian(&split.stable_block, pi_s, Side::Stable)?;
    let a_u = weighted_infinite_gramian(&split.unstable_block, pi_u, Side::Unstable)?;
    let n = ms + mu;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (ms, ms)).copy_from(&a_s);
    a.view_mut((ms, ms), (mu, mu)).copy_from(&a_u);
    let b = split.block_diag();
    let psi2 = symmetrize(&((b.transpose() * &a + &a * &b - &a * &a * 2.0) * 0.5));
    if n > 0 && min_sym_eigenvalue(&psi2) <= 0.0 {
        return Err(Error::ConstraintViolation("ψ₂ is not positive definite".into()));
    }
    if ms > 0 {
        let m_s = infinite_gramian(&split.stable_block)?;
        let m_inv = m_s
            .try_inverse()
            .ok_or_else(|| Error::ConstraintViolation("stable Gramian is singular".into()))?;
        let decay = &m_inv * 0.25 + &a_s * 0.5;
        if min_sym_eigenvalue(&decay) <= 0.0 {
            return Err(Error::ConstraintViolation("¼M_s⁻¹ + ½A_s is not positive definite".into()));
        }
    }
    Ok(LyapunovData {
        a_s,
        a_u,
        a,
        psi2,
        pi_s: pi_s.clone(),
        pi_u: pi_u.clone(),
    })
}

/// `Π_s = p·I`, `Π_u = p·I` sized for a splitting.
pub fn build_lyapunov_scalar(split: &HyperbolicSplitting, pi: f64) -> Result<LyapunovData> {
    let ms = split.stable_dim();
    let mu = split.unstable_dim();
    build_lyapunov(split, &(DMatrix::identity(ms, ms) * pi), &(DMatrix::identity(mu, mu) * pi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `R(ω) − Tr B_s`.
    #[default]
    Stable,
    /// `R(ω) − Tr B_u`.
    Unstable,
}

impl Convention {
    pub fn as_str(self) -> &'static str {
        match self {
            Convention::Stable => "stable",
            Convention::Unstable => "unstable",
        }
    }
}

pub fn component_pressure(comp: &RecurrentComponent, convention: Convention) -> f64 {
    let r = comp.killing.average();
    match convention {
        Convention::Stable => r - comp.splitting.trace_stable(),
        Convention::Unstable => r - comp.splitting.trace_unstable(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentPressure {
    pub label: String,
    pub kind: ComponentKind,
    pub stable: f64,
    pub unstable: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureReport {
    pub convention: Convention,
    pub components: Vec<ComponentPressure>,
    pub tp_stable: f64,
    pub tp_unstable: f64,
    /// Global value under the selected convention.
    pub tp: f64,
    /// Indices attaining `tp` within [`TIE_TOL`].
    pub argmax: Vec<usize>,
    /// `argmax` after the dimension rule.
    pub eligible: Vec<usize>,
}

/// Global maximum, ties, and the dimension rule on plain `(kind, value)` pairs.
pub fn select_support(values: &[(ComponentKind, f64)]) -> Result<(f64, Vec<usize>, Vec<usize>)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no components".into()));
    }
    let tp = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let argmax: Vec<usize> = (0..values.len())
        .filter(|&i| (values[i].1 - tp).abs() <= TIE_TOL)
        .collect();
    let top = argmax.iter().map(|&i| values[i].0.priority()).max().unwrap_or(0);
    let eligible = argmax
        .iter()
        .copied()
        .filter(|&i| values[i].0.priority() == top)
        .collect();
    Ok((tp, argmax, eligible))
}

pub fn global_pressure(comps: &[RecurrentComponent], convention: Convention) -> Result<PressureReport> {
    if comps.is_empty() {
        return Err(Error::InvalidArgument("no components".into()));
    }
    let components: Vec<ComponentPressure> = comps
        .iter()
        .map(|c| ComponentPressure {
            label: c.label.clone(),
            kind: c.kind(),
            stable: component_pressure(c, Convention::Stable),
            unstable: component_pressure(c, Convention::Unstable),
        })
        .collect();
    let pick = |conv: Convention| -> Vec<(ComponentKind, f64)> {
        components
            .iter()
            .map(|c| (c.kind, if conv == Convention::Stable { c.stable } else { c.unstable }))
            .collect()
    };
    let (tp_stable, _, _) = select_support(&pick(Convention::Stable))?;
    let (tp_unstable, _, _) = select_support(&pick(Convention::Unstable))?;
    let (tp, argmax, eligible) = select_support(&pick(convention))?;
    Ok(PressureReport {
        convention,
        components,
        tp_stable,
        tp_unstable,
        tp,
        argmax,
        eligible,
    })
}
