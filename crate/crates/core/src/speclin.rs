//! Dense linear algebra for the hyperbolic blocks: matrix exponential,
//! stable/unstable splitting, Lyapunov solves and Gramians.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Square real matrix. Zero-sized matrices stand for absent blocks.
pub type SquareMatrix = DMatrix<f64>;

/// Largest ‖tB‖₁ accepted by [`mat_exp`].
pub const MAX_EXP_NORM: f64 = 1e4;

/// Default floor on |Re λ| for hyperbolicity.
pub const DEFAULT_HYPERBOLICITY_FLOOR: f64 = 1e-6;

/// Default tolerance on the stable/unstable coupling after projection.
pub const DEFAULT_ORTHOGONALITY_TOL: f64 = 1e-8;

pub(crate) fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    Ok(())
}

pub(crate) fn norm1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Relative asymmetry ‖M − Mᵀ‖_F / max(1, ‖M‖_F).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm() / m.norm().max(1.0)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `e^{tB}` by scaling and squaring with a Padé approximant.
pub fn mat_exp(b: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_square(b, "B")?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} is not finite")));
    }
    let n = b.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let tb = b * t;
    let norm = norm1(&tb);
    if norm > MAX_EXP_NORM {
        return Err(Error::OutOfRange(format!(
            "‖tB‖₁ = {norm:.3e} exceeds {MAX_EXP_NORM:e}"
        )));
    }
    let e = tb.exp();
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::OutOfRange("matrix exponential overflowed".into()));
    }
    Ok(e)
}

/// Eigenvalues as (re, im) pairs.
pub fn eigenvalues(b: &DMatrix<f64>) -> Vec<(f64, f64)> {
    if b.nrows() == 0 {
        return Vec::new();
    }
    b.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

/// Orthogonal stable/unstable decomposition of a hyperbolic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicSplitting {
    /// `Uₛᵀ B Uₛ`, all eigenvalues with negative real part.
    pub stable_block: SquareMatrix,
    /// `Uᵤᵀ B Uᵤ`, all eigenvalues with positive real part.
    pub unstable_block: SquareMatrix,
    /// Orthogonal basis; stable columns first.
    pub basis: SquareMatrix,
}

impl HyperbolicSplitting {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn stable_dim(&self) -> usize {
        self.stable_block.nrows()
    }

    pub fn unstable_dim(&self) -> usize {
        self.unstable_block.nrows()
    }

    pub fn trace_stable(&self) -> f64 {
        self.stable_block.trace()
    }

    pub fn trace_unstable(&self) -> f64 {
        self.unstable_block.trace()
    }

    /// `diag(B_s, B_u)` in the adapted basis.
    pub fn block_diag(&self) -> SquareMatrix {
        let (ms, n) = (self.stable_dim(), self.dim());
        let mut out = DMatrix::zeros(n, n);
        out.view_mut((0, 0), (ms, ms)).copy_from(&self.stable_block);
        out.view_mut((ms, ms), (n - ms, n - ms))
            .copy_from(&self.unstable_block);
        out
    }

    /// `U diag(B_s, B_u) Uᵀ`, which equals the original matrix.
    pub fn reconstruct(&self) -> SquareMatrix {
        &self.basis * self.block_diag() * self.basis.transpose()
    }
}

/// Matrix sign function by scaled Newton iteration.
fn matrix_sign(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    let mut s = b.clone();
    for _ in 0..100 {
        let inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NonConvergence("singular iterate in sign iteration".into()))?;
        let det = s.determinant().abs();
        let mu = if det > 0.0 && det.is_finite() {
            det.powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&s * mu + inv / mu) * 0.5;
        let diff = (&next - &s).norm();
        s = next;
        if diff <= 1e-14 * s.norm().max(1.0) {
            // One unscaled polish step.
            let inv = s.clone().try_inverse().unwrap_or_else(|| s.clone());
            return Ok((&s + inv) * 0.5);
        }
    }
    Err(Error::NonConvergence("matrix sign iteration".into()))
}

/// Split `B` into orthogonal stable and unstable blocks with default tolerances.
pub fn spectral_split(b: &DMatrix<f64>, floor: f64) -> Result<HyperbolicSplitting> {
    spectral_split_with(b, floor, DEFAULT_ORTHOGONALITY_TOL)
}

pub fn spectral_split_with(
    b: &DMatrix<f64>,
    floor: f64,
    orthogonality_tol: f64,
) -> Result<HyperbolicSplitting> {
    check_square(b, "B")?;
    let n = b.nrows();
    let eig = eigenvalues(b);
    if let Some(&(re, im)) = eig
        .iter()
        .min_by(|a, c| a.0.abs().total_cmp(&c.0.abs()))
    {
        if re.abs() < floor {
            return Err(Error::Hyperbolicity { re, im, floor });
        }
    }
    let ms = eig.iter().filter(|z| z.0 < 0.0).count();
    if ms == 0 || ms == n {
        let empty = DMatrix::zeros(0, 0);
        let (stable_block, unstable_block) = if ms == n {
            (b.clone(), empty)
        } else {
            (empty, b.clone())
        };
        return Ok(HyperbolicSplitting {
            stable_block,
            unstable_block,
            basis: DMatrix::identity(n, n),
        });
    }
    let sign = matrix_sign(b)?;
    let proj = (DMatrix::identity(n, n) - sign) * 0.5;
    let eig_p = SymmetricEigen::new(symmetrize(&proj));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig_p.eigenvalues[j].total_cmp(&eig_p.eigenvalues[i]));
    let mut basis = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col: DVector<f64> = eig_p.eigenvectors.column(i).into_owned();
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col = -col;
        }
        basis.set_column(k, &col);
    }
    let full = basis.transpose() * b * &basis;
    let scale = b.norm().max(1.0);
    let coupling = full
        .view((ms, 0), (n - ms, ms))
        .norm()
        .max(full.view((0, ms), (ms, n - ms)).norm())
        / scale;
    if coupling > orthogonality_tol {
        return Err(Error::Orthogonality {
            coupling,
            tolerance: orthogonality_tol,
        });
    }
    Ok(HyperbolicSplitting {
        stable_block: full.view((0, 0), (ms, ms)).into_owned(),
        unstable_block: full.view((ms, ms), (n - ms, n - ms)).into_owned(),
        basis,
    })
}

/// Real quasi-triangular Schur form `A = Z T Zᵀ`.
fn real_schur(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (z, t) = a.clone().schur().unpack();
    (z, t)
}

/// Diagonal block boundaries of a quasi-triangular matrix.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let tiny = 1e-13 * t.norm().max(1.0);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > tiny {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

/// Solve `P Y + Y Qᵀ = R` for blocks of size at most two.
fn small_sylvester(p: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (np, nq) = (p.nrows(), q.nrows());
    let dim = np * nq;
    let mut k = DMatrix::zeros(dim, dim);
    // vec is column-major: index (i, j) -> j * np + i.
    for j in 0..nq {
        for i in 0..np {
            let row = j * np + i;
            for l in 0..np {
                k[(row, j * np + l)] += p[(i, l)];
            }
            for l in 0..nq {
                k[(row, l * np + i)] += q[(j, l)];
            }
        }
    }
    let rhs = DVector::from_iterator(dim, r.iter().copied());
    let sol = k.lu().solve(&rhs).ok_or_else(|| {
        Error::InvalidArgument("Lyapunov operator is singular (eigenvalues sum to zero)".into())
    })?;
    let y = DMatrix::from_column_slice(np, nq, sol.as_slice());
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "Lyapunov operator is singular (eigenvalues sum to zero)".into(),
        ));
    }
    Ok(y)
}

/// Solve `A X + X Aᵀ = C` by the Bartels–Stewart method.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(a, "A")?;
    check_square(c, "C")?;
    let n = a.nrows();
    if c.nrows() != n {
        return Err(Error::InvalidArgument("A and C have different sizes".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (z, t) = real_schur(a);
    let ct = z.transpose() * c * &z;
    let blocks = schur_blocks(&t);
    let mut y = DMatrix::<f64>::zeros(n, n);
    // T Y + Y Tᵀ = C̃ with T upper quasi-triangular: sweep blocks from the bottom right.
    for bi in (0..blocks.len()).rev() {
        let (i0, pi) = blocks[bi];
        for bj in (0..blocks.len()).rev() {
            let (j0, pj) = blocks[bj];
            let mut rhs = ct.view((i0, j0), (pi, pj)).into_owned();
            let ie = i0 + pi;
            let je = j0 + pj;
            if ie < n {
                rhs -= t.view((i0, ie), (pi, n - ie)) * y.view((ie, j0), (n - ie, pj));
            }
            if je < n {
                rhs -= y.view((i0, je), (pi, n - je)) * t.view((j0, je), (pj, n - je)).transpose();
            }
            let tii = t.view((i0, i0), (pi, pi)).into_owned();
            let tjj = t.view((j0, j0), (pj, pj)).into_owned();
            let block = small_sylvester(&tii, &tjj, &rhs)?;
            y.view_mut((i0, j0), (pi, pj)).copy_from(&block);
        }
    }
    Ok(&z * y * z.transpose())
}

fn require_spectrum(b: &DMatrix<f64>, stable: bool, what: &str) -> Result<()> {
    for (re, im) in eigenvalues(b) {
        let bad = if stable { re >= 0.0 } else { re <= 0.0 };
        if bad {
            return Err(Error::DivergentIntegral(format!(
                "{what}: eigenvalue {re:+.6e}{im:+.6e}i is not {}",
                if stable { "in the open left half-plane" } else { "in the open right half-plane" }
            )));
        }
    }
    Ok(())
}

/// `Q_t = ∫₀ᵗ e^{−sB} e^{−sBᵀ} ds` for `t ≥ 0`.
pub fn finite_gramian(b: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_square(b, "B")?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} must be finite and non-negative")));
    }
    let n = b.nrows();
    if t == 0.0 || n == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let eig = eigenvalues(b);
    let min_pair = eig
        .iter()
        .flat_map(|a| eig.iter().map(move |c| ((a.0 + c.0).powi(2) + (a.1 + c.1).powi(2)).sqrt()))
        .fold(f64::INFINITY, f64::min);
    let scale = norm1(b).max(1e-300);
    let q = if t * scale <= 1.0 || min_pair < 1e-3 * scale.max(1.0) {
        gramian_van_loan(b, t)?
    } else {
        // B Q + Q Bᵀ = I − e^{−tB} e^{−tBᵀ}
        let e = mat_exp(b, -t)?;
        let rhs = DMatrix::identity(n, n) - &e * e.transpose();
        solve_lyapunov(b, &rhs)?
    };
    Ok(symmetrize(&q))
}

/// Van Loan block exponential: the top-right block of `exp(t [[B, I], [0, −Bᵀ]])` is `e^{tB} Q_t`.
fn gramian_van_loan(b: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(b);
    m.view_mut((0, n), (n, n)).fill_with_identity();
    m.view_mut((n, n), (n, n)).copy_from(&(-b.transpose()));
    let e = mat_exp(&m, t)?;
    let x = e.view((0, n), (n, n)).into_owned();
    Ok(mat_exp(b, -t)? * x)
}

/// `M = ∫₀^∞ e^{tB} e^{tBᵀ} dt` for a stable block; solves `B M + M Bᵀ = −I`.
pub fn infinite_gramian(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(b, "B")?;
    require_spectrum(b, true, "infinite Gramian")?;
    let n = b.nrows();
    let m = solve_lyapunov(b, &(-DMatrix::identity(n, n)))?;
    Ok(symmetrize(&m))
}

/// Which half of the spectrum a block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Stable,
    Unstable,
}

/// Quadratic coefficient of the local Lyapunov function for one block.
///
/// Stable: `A_s = −(∫₀^∞ e^{tB}Π e^{tBᵀ}dt)⁻¹`. Unstable: `A_u = (∫₀^∞ e^{−tB}Π e^{−tBᵀ}dt)⁻¹`.
/// `Π` must be symmetric with `Π − 2I` positive definite.
pub fn weighted_infinite_gramian(
    block: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    side: Side,
) -> Result<DMatrix<f64>> {
    check_square(block, "block")?;
    check_square(pi, "Π")?;
    let n = block.nrows();
    if pi.nrows() != n {
        return Err(Error::InvalidArgument("Π and block have different sizes".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if asymmetry(pi) > 1e-12 {
        return Err(Error::ConstraintViolation("Π must be symmetric".into()));
    }
    let shifted = symmetrize(pi) - DMatrix::identity(n, n) * 2.0;
    if min_sym_eigenvalue(&shifted) <= 0.0 {
        return Err(Error::ConstraintViolation("Π − 2I must be positive definite".into()));
    }
    let pis = symmetrize(pi);
    match side {
        Side::Stable => {
            require_spectrum(block, true, "stable weighted Gramian")?;
            let x = solve_lyapunov(block, &(-&pis))?;
            let inv = symmetrize(&x).try_inverse().ok_or_else(|| {
                Error::NotPositiveDefinite("weighted Gramian is singular".into())
            })?;
            Ok(symmetrize(&(-inv)))
        }
        Side::Unstable => {
            require_spectrum(block, false, "unstable weighted Gramian")?;
            let x = solve_lyapunov(&(-block), &(-&pis))?;
            let inv = symmetrize(&x).try_inverse().ok_or_else(|| {
                Error::NotPositiveDefinite("weighted Gramian is singular".into())
            })?;
            Ok(symmetrize(&inv))
        }
    }
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Symmetric positive-definite square root.
pub fn pd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m, "M")?;
    if asymmetry(m) > 1e-10 {
        return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    if let Some(&l) = eig.eigenvalues.iter().find(|&&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite(format!("eigenvalue {l:e}")));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    /// Composite Simpson on a fine grid as an independent Gramian oracle.
    fn simpson_gramian(b: &DMatrix<f64>, t: f64, n: usize) -> DMatrix<f64> {
        let h = t / n as f64;
        let step = mat_exp(b, -h).unwrap();
        let mut e = DMatrix::identity(b.nrows(), b.nrows());
        let mut acc = DMatrix::zeros(b.nrows(), b.nrows());
        for k in 0..=n {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += &e * e.transpose() * w;
            e = &step * e;
        }
        acc * (h / 3.0)
    }

    #[test]
    fn exp_of_diagonal() {
        let b = dmatrix![1.0, 0.0; 0.0, -2.0];
        let e = mat_exp(&b, 0.5).unwrap();
        assert!((e[(0, 0)] - 0.5f64.exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn exp_of_rotation() {
        let b = dmatrix![0.0, -1.0; 1.0, 0.0];
        let e = mat_exp(&b, 0.7).unwrap();
        assert!((e[(0, 0)] - 0.7f64.cos()).abs() < 1e-14);
        assert!((e[(1, 0)] - 0.7f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn exp_rejects_huge_norm() {
        let b = dmatrix![1.0];
        assert!(matches!(mat_exp(&b, 2e4), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn split_diagonal() {
        let b = dmatrix![-1.0, 0.0; 0.0, 2.0];
        let s = spectral_split(&b, 1e-6).unwrap();
        assert_eq!(s.stable_block, dmatrix![-1.0]);
        assert_eq!(s.unstable_block, dmatrix![2.0]);
        assert!(close(&s.basis, &DMatrix::identity(2, 2), 1e-14));
    }

    #[test]
    fn split_rejects_nonhyperbolic() {
        let b = dmatrix![-1.0, 0.0; 0.0, 1e-8];
        assert!(matches!(spectral_split(&b, 1e-6), Err(Error::Hyperbolicity { .. })));
    }

    #[test]
    fn split_rejects_oblique() {
        let b = dmatrix![-1.0, 1.0; 0.0, 1.0];
        assert!(matches!(spectral_split(&b, 1e-6), Err(Error::Orthogonality { .. })));
    }

    #[test]
    fn split_rotated_blocks() {
        let th = 0.4f64;
        let r = dmatrix![th.cos(), -th.sin(), 0.0; th.sin(), th.cos(), 0.0; 0.0, 0.0, 1.0];
        let d = dmatrix![-1.0, 0.5, 0.0; -0.5, -1.0, 0.0; 0.0, 0.0, 3.0];
        let b = &r * d * r.transpose();
        let s = spectral_split(&b, 1e-6).unwrap();
        assert_eq!(s.stable_dim(), 2);
        assert!((s.trace_stable() + 2.0).abs() < 1e-12);
        assert!((s.trace_unstable() - 3.0).abs() < 1e-12);
        assert!(close(&s.reconstruct(), &b, 1e-12));
    }

    #[test]
    fn lyapunov_with_complex_pair() {
        let a = dmatrix![-1.0, 2.0, 0.3; -2.0, -1.0, 0.0; 0.1, 0.0, -0.5];
        let c = dmatrix![1.0, 0.2, 0.0; 0.2, 2.0, 0.1; 0.0, 0.1, 1.0];
        let x = solve_lyapunov(&a, &c).unwrap();
        let r = &a * &x + &x * a.transpose() - &c;
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn infinite_gramian_scalar() {
        let m = infinite_gramian(&dmatrix![-2.0]).unwrap();
        assert!((m[(0, 0)] - 0.25).abs() < 1e-15);
        assert!(matches!(infinite_gramian(&dmatrix![1.0]), Err(Error::DivergentIntegral(_))));
    }

    #[test]
    fn finite_gramian_scalar_closed_form() {
        // Q_t = (e^{-2tb} - 1) / (-2b)
        for &(b, t) in &[(-1.0, 0.3), (-1.0, 50.0), (2.0, 5.0), (0.5, 1e-4)] {
            let q = finite_gramian(&dmatrix![b], t).unwrap()[(0, 0)];
            let exact = ((-2.0 * t * b).exp() - 1.0) / (-2.0 * b);
            assert!((q - exact).abs() <= 1e-12 * exact.abs(), "b={b} t={t} {q} {exact}");
        }
    }

    #[test]
    fn finite_gramian_nilpotent() {
        // B = [[0,1],[0,0]] has no Lyapunov solution; the block-exponential route still works.
        let b = dmatrix![0.0, 1.0; 0.0, 0.0];
        let q = finite_gramian(&b, 2.0).unwrap();
        let oracle = simpson_gramian(&b, 2.0, 2000);
        assert!(close(&q, &oracle, 1e-10));
    }

    #[test]
    fn weighted_scalar() {
        // A_s = 2B/Π for a scalar block.
        let a = weighted_infinite_gramian(&dmatrix![-1.0], &dmatrix![4.0], Side::Stable).unwrap();
        assert!((a[(0, 0)] + 0.5).abs() < 1e-14);
        let a = weighted_infinite_gramian(&dmatrix![2.0], &dmatrix![4.0], Side::Unstable).unwrap();
        assert!((a[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(matches!(
            weighted_infinite_gramian(&dmatrix![-1.0], &dmatrix![2.0], Side::Stable),
            Err(Error::ConstraintViolation(_))
        ));
    }

    #[test]
    fn sqrt_roundtrip() {
        let m = dmatrix![4.0, 1.0; 1.0, 3.0];
        let s = pd_sqrt(&m).unwrap();
        assert!(close(&(&s * &s), &m, 1e-14));
        assert!(pd_sqrt(&dmatrix![1.0, 0.0; 0.0, -1.0]).is_err());
    }

    fn stable_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let m = DMatrix::from_row_slice(n, n, &v);
            // Shift well into the left half-plane.
            let shift = norm1(&m) + 0.5;
            m - DMatrix::identity(n, n) * shift
        })
    }

    proptest! {
        #[test]
        fn gramian_matches_quadrature(b in (1usize..4).prop_flat_map(stable_matrix), t in 0.05f64..3.0) {
            let q = finite_gramian(&b, t).unwrap();
            let oracle = simpson_gramian(&b, t, 4000);
            prop_assert!(close(&q, &oracle, 1e-9));
        }

        #[test]
        fn infinite_gramian_residual(b in (1usize..5).prop_flat_map(stable_matrix)) {
            let m = infinite_gramian(&b).unwrap();
            let n = b.nrows();
            let r = &b * &m + &m * b.transpose() + DMatrix::identity(n, n);
            prop_assert!(r.norm() <= 1e-10 * m.norm().max(1.0));
            prop_assert!(min_sym_eigenvalue(&m) > 0.0);
        }

        #[test]
        fn weighted_sign_structure(b in (1usize..4).prop_flat_map(stable_matrix), p in 2.1f64..10.0) {
            let n = b.nrows();
            let pi = DMatrix::identity(n, n) * p;
            let a_s = weighted_infinite_gramian(&b, &pi, Side::Stable).unwrap();
            prop_assert!(max_sym_eigenvalue(&a_s) < 0.0);
            let a_u = weighted_infinite_gramian(&(-&b), &pi, Side::Unstable).unwrap();
            prop_assert!(min_sym_eigenvalue(&a_u) > 0.0);
        }

        #[test]
        fn split_reconstructs(
            s in (1usize..3).prop_flat_map(stable_matrix),
            u in (1usize..3).prop_flat_map(stable_matrix),
            angle in 0.0f64..6.0,
        ) {
            let (ms, mu) = (s.nrows(), u.nrows());
            let n = ms + mu;
            let mut d = DMatrix::zeros(n, n);
            d.view_mut((0, 0), (ms, ms)).copy_from(&s);
            d.view_mut((ms, ms), (mu, mu)).copy_from(&(-&u));
            // Orthogonal mixing by a Givens rotation across the two blocks.
            let mut r = DMatrix::identity(n, n);
            let (c, sn) = (angle.cos(), angle.sin());
            r[(0, 0)] = c; r[(0, n - 1)] = -sn; r[(n - 1, 0)] = sn; r[(n - 1, n - 1)] = c;
            let b = &r * d * r.transpose();
            let split = spectral_split(&b, 1e-6).unwrap();
            prop_assert_eq!(split.stable_dim(), ms);
            prop_assert!(close(&split.reconstruct(), &b, 1e-10));
            prop_assert!(close(&(split.basis.transpose() * &split.basis), &DMatrix::identity(n, n), 1e-12));
            prop_assert!((split.trace_stable() - s.trace()).abs() < 1e-10 * (1.0 + s.trace().abs()));
        }
    }
}
