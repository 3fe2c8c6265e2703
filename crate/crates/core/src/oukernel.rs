//! Ornstein–Uhlenbeck kernel operators `Q_t, R_t, P_t, U_t`, the Kolmogorov
//! integral by Gauss–Hermite quadrature, and the small/large-time asymptotics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pressure::LyapunovData;
use crate::speclin::{
    finite_gramian, infinite_gramian, mat_exp, max_sym_eigenvalue, min_sym_eigenvalue, pd_sqrt, symmetrize,
    HyperbolicSplitting, SquareMatrix,
};

/// Operators of one spectral block at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuBlock {
    pub q: SquareMatrix,
    pub q_inv: SquareMatrix,
    /// `ln det Q_t`.
    pub log_det_q: f64,
    pub r: SquareMatrix,
    pub r_inv: SquareMatrix,
    /// `R⁻¹ Q⁻¹ e^{−tB}`.
    pub p: SquareMatrix,
    /// `e^{−tBᵀ}(Q⁻¹ − Q⁻¹R⁻²Q⁻¹)e^{−tB}`.
    pub u: SquareMatrix,
    pub exp_neg: SquareMatrix,
    /// `Q⁻¹ e^{−tB}`.
    pub q_inv_exp: SquareMatrix,
}

fn inverse(m: &SquareMatrix, what: &str) -> Result<SquareMatrix> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::ConstraintViolation(format!("{what} is singular")))
}

fn ou_block(b: &SquareMatrix, a: &SquareMatrix, t: f64, stable: bool) -> Result<OuBlock> {
    let n = b.nrows();
    let which = if stable { "stable" } else { "unstable" };
    if n == 0 {
        let z = DMatrix::zeros(0, 0);
        return Ok(OuBlock {
            q: z.clone(),
            q_inv: z.clone(),
            log_det_q: 0.0,
            r: z.clone(),
            r_inv: z.clone(),
            p: z.clone(),
            u: z.clone(),
            exp_neg: z.clone(),
            q_inv_exp: z,
        });
    }
    let exp_neg = mat_exp(b, -t)?;
    let exp_pos = mat_exp(b, t)?;
    let a_inv = inverse(a, &format!("{which} A"))?;
    // Q⁻¹ − Q⁻¹R⁻²Q⁻¹ = (Q − ½A⁻¹)⁻¹ with R² = Q⁻¹ − 2A.
    let (q, q_inv, log_det_q, q_inv_exp, u) = if stable {
        // M_t = e^{tB} Q_t e^{tBᵀ} = ∫₀ᵗ e^{σB}e^{σBᵀ}dσ stays well conditioned as Q_t blows up.
        let m_t = finite_gramian(&(-b), t)?;
        let m_inv = symmetrize(&inverse(&m_t, "stable Gramian")?);
        let q = symmetrize(&(&exp_neg * &m_t * exp_neg.transpose()));
        let q_inv = symmetrize(&(exp_pos.transpose() * &m_inv * &exp_pos));
        let log_det_q = m_t.determinant().ln() - 2.0 * t * b.trace();
        let q_inv_exp = exp_pos.transpose() * &m_inv;
        let inner = &m_t - &exp_pos * &a_inv * exp_pos.transpose() * 0.5;
        let u = symmetrize(&inverse(&symmetrize(&inner), "stable U kernel")?);
        (q, q_inv, log_det_q, q_inv_exp, u)
    } else {
        let q = finite_gramian(b, t)?;
        let q_inv = symmetrize(&inverse(&q, "unstable Gramian")?);
        let log_det_q = q.determinant().ln();
        let q_inv_exp = &q_inv * &exp_neg;
        let inner = symmetrize(&(&q - &a_inv * 0.5));
        let u = symmetrize(&(exp_neg.transpose() * inverse(&inner, "unstable U kernel")? * &exp_neg));
        (q, q_inv, log_det_q, q_inv_exp, u)
    };
    let r2 = symmetrize(&(&q_inv - a * 2.0));
    if min_sym_eigenvalue(&r2) <= 0.0 {
        return Err(Error::ConstraintViolation(format!("{which} block: Q⁻¹ − 2A is not positive definite")));
    }
    let r = pd_sqrt(&r2)?;
    let r_inv = symmetrize(&inverse(&r, "R")?);
    let p = &r_inv * &q_inv_exp;
    Ok(OuBlock { q, q_inv, log_det_q, r, r_inv, p, u, exp_neg, q_inv_exp })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuOperatorFamily {
    pub t: f64,
    pub stable: OuBlock,
    pub unstable: OuBlock,
}

pub fn ou_operators(split: &HyperbolicSplitting, lyap: &LyapunovData, t: f64) -> Result<OuOperatorFamily> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} must be positive")));
    }
    Ok(OuOperatorFamily {
        t,
        stable: ou_block(&split.stable_block, &lyap.a_s, t, true)?,
        unstable: ou_block(&split.unstable_block, &lyap.a_u, t, false)?,
    })
}

fn block_diag(a: &SquareMatrix, b: &SquareMatrix) -> SquareMatrix {
    let (m, n) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(m + n, m + n);
    out.view_mut((0, 0), (m, m)).copy_from(a);
    out.view_mut((m, m), (n, n)).copy_from(b);
    out
}

impl OuOperatorFamily {
    pub fn dim(&self) -> usize {
        self.stable.q.nrows() + self.unstable.q.nrows()
    }

    pub fn q(&self) -> SquareMatrix {
        block_diag(&self.stable.q, &self.unstable.q)
    }

    pub fn q_inv(&self) -> SquareMatrix {
        block_diag(&self.stable.q_inv, &self.unstable.q_inv)
    }

    pub fn r(&self) -> SquareMatrix {
        block_diag(&self.stable.r, &self.unstable.r)
    }

    pub fn r_inv(&self) -> SquareMatrix {
        block_diag(&self.stable.r_inv, &self.unstable.r_inv)
    }

    pub fn p(&self) -> SquareMatrix {
        block_diag(&self.stable.p, &self.unstable.p)
    }

    pub fn u(&self) -> SquareMatrix {
        block_diag(&self.stable.u, &self.unstable.u)
    }

    pub fn exp_neg(&self) -> SquareMatrix {
        block_diag(&self.stable.exp_neg, &self.unstable.exp_neg)
    }

    /// `q(x, y, t) = ¼⟨Q⁻¹(e^{−tB}x − y), e^{−tB}x − y⟩ − ½⟨Ay, y⟩`.
    pub fn q_direct(&self, lyap: &LyapunovData, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let d = self.exp_neg() * x - y;
        0.25 * d.dot(&(self.q_inv() * &d)) - 0.5 * y.dot(&(&lyap.a * y))
    }

    /// The same form after completing the square: `¼⟨Ux, x⟩ + ¼‖Ry − Px‖²`.
    pub fn q_completed(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let d = self.r() * y - self.p() * x;
        0.25 * x.dot(&(self.u() * x)) + 0.25 * d.norm_squared()
    }
}

/// Gauss–Hermite nodes and weights for the weight `e^{−x²}`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Quadrature controls for [`kolmogorov_apply`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    pub degree: usize,
    /// Bound on the relative difference between degree `n` and `2n`.
    pub tolerance: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { degree: 80, tolerance: 1e-8 }
    }
}

fn tensor_sum(
    dim: usize,
    nodes: &[f64],
    weights: &[f64],
    mut f: impl FnMut(&DVector<f64>) -> f64,
) -> f64 {
    let n = nodes.len();
    let total = n.pow(dim as u32);
    let mut xi = DVector::zeros(dim);
    let mut acc = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut wt = 1.0;
        for a in 0..dim {
            let k = rem % n;
            rem /= n;
            xi[a] = nodes[k];
            wt *= weights[k];
        }
        acc += wt * f(&xi);
    }
    acc
}

/// `T_t(z)(x) = (4π)^{−m/2}(det Q_t)^{−1/2} ∫ z(y) e^{−¼⟨Q⁻¹(e^{−tB}x − y), e^{−tB}x − y⟩} dy`,
/// evaluated at each point `x` (splitting coordinates).
///
/// The integral is rewritten as `e^{−¼⟨Ux,x⟩} ∫ w(y) e^{−¼‖Ry − Px‖²} dy` with
/// `w = z e^{−½⟨Ay,y⟩}` and integrated by tensor Gauss–Hermite after `y = R⁻¹(Px + 2ξ)`.
pub fn kolmogorov_apply(
    z: &(dyn Fn(&DVector<f64>) -> f64 + Sync),
    lyap: &LyapunovData,
    fam: &OuOperatorFamily,
    points: &[DVector<f64>],
    quad: QuadSpec,
) -> Result<Vec<f64>> {
    let m = fam.dim();
    if quad.degree < 2 {
        return Err(Error::InvalidArgument("quadrature degree must be at least 2".into()));
    }
    if points.iter().any(|p| p.len() != m) {
        return Err(Error::InvalidArgument(format!("points must have dimension {m}")));
    }
    let (r_inv, p, u, a) = (fam.r_inv(), fam.p(), fam.u(), lyap.a.clone());
    let log_det_q = fam.stable.log_det_q + fam.unstable.log_det_q;
    let det_r_inv = r_inv.determinant();
    let prefactor = PI.powf(-(m as f64) / 2.0) * det_r_inv * (-0.5 * log_det_q).exp();
    let rules = [gauss_hermite(quad.degree), gauss_hermite(2 * quad.degree)];
    let eval = |x: &DVector<f64>, rule: &(Vec<f64>, Vec<f64>)| -> f64 {
        let px = &p * x;
        let s = tensor_sum(m, &rule.0, &rule.1, |xi| {
            let y = &r_inv * (&px + xi * 2.0);
            z(&y) * (-0.5 * y.dot(&(&a * &y))).exp()
        });
        (-0.25 * x.dot(&(&u * x))).exp() * prefactor * s
    };
    let out: Vec<Result<f64>> = points
        .par_iter()
        .map(|x| {
            let lo = eval(x, &rules[0]);
            let hi = eval(x, &rules[1]);
            let diff = (hi - lo).abs() / hi.abs().max(1e-300);
            if diff > quad.tolerance {
                Err(Error::Quadrature { difference: diff, tolerance: quad.tolerance })
            } else {
                Ok(hi)
            }
        })
        .collect();
    out.into_iter().collect()
}

/// The stable Gaussian `z(y) = exp(−¼⟨M_s⁻¹ y_s, y_s⟩)` that the semigroup rescales.
pub fn stable_gaussian(split: &HyperbolicSplitting) -> Result<impl Fn(&DVector<f64>) -> f64 + Sync> {
    let ms = split.stable_dim();
    let m_inv = if ms > 0 {
        infinite_gramian(&split.stable_block)?
            .try_inverse()
            .ok_or_else(|| Error::ConstraintViolation("stable Gramian is singular".into()))?
    } else {
        DMatrix::zeros(0, 0)
    };
    Ok(move |y: &DVector<f64>| {
        let ys = y.rows(0, ms).into_owned();
        (-0.25 * ys.dot(&(&m_inv * &ys))).exp()
    })
}

/// Semigroup check on the stable Gaussian at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemigroupCheck {
    pub t: f64,
    /// `sup |T_t z · e^{−t Tr B_s} − z| / sup z`.
    pub deviation: f64,
    /// Same with the opposite exponent sign, `sup |T_t z · e^{t Tr B_s} − z| / sup z`.
    pub deviation_opposite_sign: f64,
    /// `T_t(z)(0)`.
    pub value_at_origin: f64,
}

/// Compare `T_t z` with `e^{t Tr B_s} z` on the given points.
pub fn semigroup_check(
    split: &HyperbolicSplitting,
    lyap: &LyapunovData,
    t: f64,
    points: &[DVector<f64>],
    quad: QuadSpec,
) -> Result<SemigroupCheck> {
    let z = stable_gaussian(split)?;
    let fam = ou_operators(split, lyap, t)?;
    let mut pts = vec![DVector::zeros(fam.dim())];
    pts.extend_from_slice(points);
    let tz = kolmogorov_apply(&z, lyap, &fam, &pts, quad)?;
    let tr = split.trace_stable();
    let sup = pts.iter().map(|x| z(x)).fold(0.0, f64::max);
    let dev = |sign: f64| {
        pts.iter()
            .zip(&tz)
            .map(|(x, v)| (v * (-sign * t * tr).exp() - z(x)).abs())
            .fold(0.0, f64::max)
            / sup
    };
    Ok(SemigroupCheck { t, deviation: dev(1.0), deviation_opposite_sign: dev(-1.0), value_at_origin: tz[0] })
}

/// One asymptotic statement with its measured deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticItem {
    pub id: String,
    pub statement: String,
    pub t: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub items: Vec<AsymptoticItem>,
    /// Smallest and largest eigenvalue of `U_s` and `U_u` at both times.
    pub u_sign: Vec<(String, f64, f64)>,
}

impl AsymptoticsReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }
}

fn rel(a: &SquareMatrix, b: &SquareMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    (a - b).norm() / b.norm().max(1e-300)
}

fn sym(b: &SquareMatrix) -> SquareMatrix {
    symmetrize(b)
}

/// Evaluate the small-time items at `t_small` (relative tolerance 1e−2) and the
/// large-time items at `t_large` (tolerance 1e−6).
pub fn asymptotics_suite(
    split: &HyperbolicSplitting,
    lyap: &LyapunovData,
    t_small: f64,
    t_large: f64,
) -> Result<AsymptoticsReport> {
    if !(0.0 < t_small && t_small < t_large) {
        return Err(Error::InvalidArgument("need 0 < t_small < t_large".into()));
    }
    let small = ou_operators(split, lyap, t_small)?;
    let large = ou_operators(split, lyap, t_large)?;
    let (bs, bu) = (&split.stable_block, &split.unstable_block);
    let (ms, mu) = (bs.nrows(), bu.nrows());
    let id = |n: usize| DMatrix::<f64>::identity(n, n);
    let tol_s = 1e-2;
    let tol_l = 1e-6;
    let mut items = Vec::new();
    let mut push = |id: &str, statement: &str, t: f64, deviation: f64, tolerance: f64| {
        items.push(AsymptoticItem {
            id: id.into(),
            statement: statement.into(),
            t,
            deviation,
            tolerance,
            pass: deviation <= tolerance,
        });
    };
    let t = t_small;
    for (tag, blk, b, a, m) in [("s", &small.stable, bs, &lyap.a_s, ms), ("u", &small.unstable, bu, &lyap.a_u, mu)] {
        let (n1, n3) = if tag == "s" { ("(i)1", "(i)3") } else { ("(i)2", "(i)4") };
        let q_exp = (id(m) - sym(b) * t) * t;
        let qi_exp = id(m) / t + sym(b);
        push(
            n1,
            &format!("Q_{tag},t = t[I − t·sym B_{tag}] and Q_{tag},t⁻¹ = I/t + sym B_{tag}"),
            t,
            rel(&blk.q, &q_exp).max(rel(&blk.q_inv, &qi_exp)),
            tol_s,
        );
        let r2 = &blk.r * &blk.r;
        let r2_exp = id(m) / t + sym(b) - a * 2.0;
        let r2i_exp = (id(m) - (sym(b) - a * 2.0) * t) * t;
        push(
            n3,
            &format!("R_{tag},t² = I/t + sym B_{tag} − 2A_{tag} and R_{tag},t⁻² = t[I − t(sym B_{tag} − 2A_{tag})]"),
            t,
            rel(&r2, &r2_exp).max(rel(&(&blk.r_inv * &blk.r_inv), &r2i_exp)),
            tol_s,
        );
    }
    push(
        "(i)5",
        "U_s,t = −2A_s and U_u,t = −2A_u",
        t,
        rel(&small.stable.u, &(&lyap.a_s * -2.0)).max(rel(&small.unstable.u, &(&lyap.a_u * -2.0))),
        tol_s,
    );
    let item6 = |blk: &OuBlock, m: usize| rel(&(&blk.r_inv * &blk.r_inv * &blk.q_inv_exp), &id(m));
    push(
        "(i)6",
        "R_t⁻² Q_t⁻¹ e^{−tB} = I on both blocks",
        t,
        item6(&small.stable, ms).max(item6(&small.unstable, mu)),
        tol_s,
    );
    let m = ms + mu;
    let log_det = small.stable.log_det_q + small.unstable.log_det_q;
    push("(i)7", "det Q_t = t^m (1 + O(t))", t, (log_det - m as f64 * t.ln()).exp_m1().abs(), tol_s);

    let t = t_large;
    let m_s = if ms > 0 { Some(infinite_gramian(bs)?) } else { None };
    let q_u_inf = if mu > 0 { Some(infinite_gramian(&(-bu))?) } else { None };
    let q_s_growth = if ms > 0 { max_sym_eigenvalue(&large.stable.q_inv) } else { 0.0 };
    let q_u_dev = q_u_inf.as_ref().map_or(0.0, |qi| rel(&large.unstable.q, qi));
    push("(ii)1", "Q_s,t → ∞ and Q_u,t → Q_u,∞", t, q_s_growth.max(q_u_dev), tol_l);
    let r_s_lim = if ms > 0 { rel(&large.stable.r, &pd_sqrt(&(&lyap.a_s * -2.0))?) } else { 0.0 };
    let r_u_lim = match &q_u_inf {
        Some(qi) => {
            let target = pd_sqrt(&symmetrize(&(qi.clone().try_inverse().expect("positive definite") - &lyap.a_u * 2.0)))?;
            rel(&large.unstable.r, &target)
        }
        None => 0.0,
    };
    push("(ii)2", "R_s,t → √(−2A_s) and R_u,t → √(Q_u,∞⁻¹ − 2A_u)", t, r_s_lim.max(r_u_lim), tol_l);
    let (qe, ps, us) = match &m_s {
        Some(ms_) => {
            let qe = large.stable.q_inv_exp.norm();
            let ps = large.stable.p.norm().max((&large.stable.r_inv * &large.stable.p).norm());
            let target = ms_.clone().try_inverse().expect("positive definite");
            (qe, ps, rel(&large.stable.u, &target))
        }
        None => (0.0, 0.0, 0.0),
    };
    push("(ii)3", "Q_s,t⁻¹e^{−tB_s} → 0, P_s,t → 0, U_s,t → M_s⁻¹", t, qe.max(ps).max(us), tol_l);
    let pu = large.unstable.p.norm().max((&large.unstable.r_inv * &large.unstable.p).norm());
    let uu = large.unstable.u.norm();
    push("(ii)4", "P_u,t → 0 and U_u,t → 0", t, q_u_dev.max(pu).max(uu), tol_l);
    let d3 = match &m_s {
        Some(ms_) => {
            let log_lhs = 2.0 * t * split.trace_stable() + large.stable.log_det_q;
            (log_lhs - ms_.determinant().ln()).exp_m1().abs()
        }
        None => 0.0,
    };
    push("(iii)", "e^{2t Tr B_s} det Q_s,t → det M_s", t, d3, tol_l);

    let mut u_sign = Vec::new();
    for (name, fam) in [("small", &small), ("large", &large)] {
        for (blk_name, blk) in [("U_s", &fam.stable), ("U_u", &fam.unstable)] {
            if blk.u.nrows() > 0 {
                u_sign.push((format!("{blk_name}@{name}"), min_sym_eigenvalue(&blk.u), max_sym_eigenvalue(&blk.u)));
            }
        }
    }
    Ok(AsymptoticsReport { items, u_sign })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pressure::build_lyapunov_scalar;
    use crate::speclin::spectral_split;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn setup(b: SquareMatrix, pi: f64) -> (HyperbolicSplitting, LyapunovData) {
        let s = spectral_split(&b, 1e-6).unwrap();
        let l = build_lyapunov_scalar(&s, pi).unwrap();
        (s, l)
    }

    #[test]
    fn hermite_moments() {
        for n in [5, 80, 160] {
            let (x, w) = gauss_hermite(n);
            let s0: f64 = w.iter().sum();
            let s2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            let s4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
            assert!((s0 - PI.sqrt()).abs() < 1e-13, "{n} {s0}");
            assert!((s2 - PI.sqrt() / 2.0).abs() < 1e-13);
            assert!((s4 - 0.75 * PI.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn small_time_r() {
        let (s, l) = setup(dmatrix![-1.0], 4.0);
        let f = ou_operators(&s, &l, 0.01).unwrap();
        assert!((f.stable.r[(0, 0)] - 10.0).abs() < 0.1);
        let f = ou_operators(&s, &l, 1e-6).unwrap();
        assert!((f.stable.u[(0, 0)] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn large_time_unstable_u_vanishes() {
        let (s, l) = setup(dmatrix![2.0], 4.0);
        let f = ou_operators(&s, &l, 50.0).unwrap();
        assert!(f.unstable.u.norm() <= 1e-6);
    }

    #[test]
    fn scalar_det_limit() {
        let (s, l) = setup(dmatrix![-1.0], 4.0);
        let f = ou_operators(&s, &l, 10.0).unwrap();
        let v = (-20.0 + f.stable.log_det_q).exp();
        assert!((v - 0.5).abs() <= 1e-8);
    }

    /// `E[exp(−α Y²)]` for `Y ~ N(a, 2Q)`.
    fn gaussian_oracle(alpha: f64, a: f64, q: f64) -> f64 {
        let d = 1.0 + 4.0 * alpha * q;
        d.powf(-0.5) * (-alpha * a * a / d).exp()
    }

    #[test]
    fn unstable_gaussian_closed_form() {
        let (s, l) = setup(dmatrix![1.5], 3.0);
        for &t in &[0.05, 0.7, 3.0] {
            let f = ou_operators(&s, &l, t).unwrap();
            let alpha = 0.3;
            let z = move |y: &DVector<f64>| (-alpha * y[0] * y[0]).exp();
            let pts: Vec<DVector<f64>> = [-1.0, 0.0, 0.4, 2.0].iter().map(|&x| DVector::from_element(1, x)).collect();
            let vals = kolmogorov_apply(&z, &l, &f, &pts, QuadSpec::default()).unwrap();
            let q = ((1.0 - (-3.0 * t).exp()) / 3.0) as f64;
            for (x, v) in pts.iter().zip(vals) {
                let a = (-1.5 * t).exp() * x[0];
                let exact = gaussian_oracle(alpha, a, q);
                assert!((v - exact).abs() < 1e-10 * exact.max(1e-3), "t={t} {v} {exact}");
            }
        }
    }

    #[test]
    fn identity_limit() {
        let (s, l) = setup(dmatrix![-1.0, 0.0; 0.0, 2.0], 4.0);
        let f = ou_operators(&s, &l, 1e-4).unwrap();
        let z = |y: &DVector<f64>| (-(0.2 * y[0] * y[0] + 0.1 * y[1] * y[1])).exp() * (1.0 + 0.1 * y[0]);
        let pts = vec![DVector::from_vec(vec![0.3, -0.5]), DVector::from_vec(vec![1.0, 1.0])];
        let vals = kolmogorov_apply(&z, &l, &f, &pts, QuadSpec::default()).unwrap();
        for (x, v) in pts.iter().zip(vals) {
            assert!((v - z(x)).abs() < 1e-3);
        }
    }

    #[test]
    fn semigroup_rescales_stable_gaussian() {
        let pts: Vec<DVector<f64>> = (0..5).map(|i| DVector::from_element(1, i as f64 * 0.7 - 1.4)).collect();
        let (s, l) = setup(dmatrix![-1.0], 4.0);
        for t in [0.1, 1.0, 5.0] {
            let c = semigroup_check(&s, &l, t, &pts, QuadSpec::default()).unwrap();
            assert!(c.deviation < 1e-6, "t={t} {}", c.deviation);
        }
        let c = semigroup_check(&s, &l, 1.0, &pts, QuadSpec::default()).unwrap();
        assert!((c.value_at_origin - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn suite_passes_on_reference_blocks() {
        for b in [
            dmatrix![-1.0],
            dmatrix![2.0],
            dmatrix![-1.0, 0.5; 0.0, -1.5],
            dmatrix![1.0, 0.3; 0.0, 2.0],
            dmatrix![-1.0, 0.0; 0.0, 2.0],
        ] {
            let (s, l) = setup(b.clone(), 4.0);
            let r = asymptotics_suite(&s, &l, 1e-3, 50.0).unwrap();
            for item in &r.items {
                assert!(item.pass, "{b} {item:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn completed_square_matches(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, y0 in -2.0f64..2.0, y1 in -2.0f64..2.0, t in 0.01f64..5.0) {
            let (s, l) = setup(dmatrix![-1.0, 0.3; -0.3, -0.8], 3.0);
            let f = ou_operators(&s, &l, t).unwrap();
            let x = DVector::from_vec(vec![x0, x1]);
            let y = DVector::from_vec(vec![y0, y1]);
            let a = f.q_direct(&l, &x, &y);
            let b = f.q_completed(&x, &y);
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }

        #[test]
        fn u_sign_pattern(t in 0.01f64..20.0, b in 0.3f64..3.0) {
            let (s, l) = setup(DMatrix::from_diagonal(&DVector::from_vec(vec![-b, b])), 4.0);
            let f = ou_operators(&s, &l, t).unwrap();
            prop_assert!(min_sym_eigenvalue(&f.stable.u) >= 0.0);
            prop_assert!(max_sym_eigenvalue(&f.unstable.u) <= 0.0);
        }
    }
}
