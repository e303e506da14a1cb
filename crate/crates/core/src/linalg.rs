//! Dense linear-algebra helpers shared by the estimators: spectra,
//! eigenvectors, the discrete Lyapunov solver, symmetric square roots,
//! Hermitian solves and numerical rank.

use nalgebra::{ComplexField, DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{McError, Result};

/// Double-precision machine epsilon, 2^-52.
pub const EPS: f64 = f64::EPSILON;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_c(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Eigenvalues sorted by descending modulus, ties by ascending argument.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    let mut ev = raw_eigenvalues(a);
    sort_spectrum(&mut ev);
    ev
}

fn schur_iterations(n: usize) -> usize {
    200 * n.max(4)
}

/// Symmetric orthogonal reflector `I − 2vvᵀ/vᵀv` with `v = (1, 2, …, n)`.
/// Used as a fixed similarity when the QR iteration stalls on a matrix
/// (shift and permutation matrices are the classic cases).
fn reflector(n: usize) -> DMatrix<f64> {
    let v = DVector::from_fn(n, |i, _| (i + 1) as f64);
    DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared())
}

fn is_nilpotent(a: &DMatrix<f64>) -> bool {
    nilpotency_index(a).is_some()
}

/// True when the nonzero pattern of `A` is an acyclic graph, which makes
/// `A` nilpotent whatever the values. Sparse random draws hit this often at
/// small `N`; their computed eigenvalues are then pure roundoff.
pub fn structurally_nilpotent(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let mut indegree = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                indegree[j] += 1;
            }
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&j| indegree[j] == 0).collect();
    let mut seen = 0;
    while let Some(i) = ready.pop() {
        seen += 1;
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(j);
                }
            }
        }
    }
    seen == n
}

/// Smallest `k ≤ N` with `A^k = 0` in exact floating-point arithmetic.
pub fn nilpotency_index(a: &DMatrix<f64>) -> Option<usize> {
    let mut p = a.clone();
    for k in 1..=a.nrows() {
        if p.iter().all(|&x| x == 0.0) {
            return Some(k);
        }
        p = &p * a;
    }
    None
}

fn raw_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    let n = a.nrows();
    if structurally_nilpotent(a) {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    if let Some(s) = Schur::try_new(a.clone(), EPS, schur_iterations(n)) {
        return s.complex_eigenvalues().iter().copied().collect();
    }
    if is_nilpotent(a) {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    let h = reflector(n);
    if let Some(s) = Schur::try_new(&h * a * &h, EPS, schur_iterations(n)) {
        return s.complex_eigenvalues().iter().copied().collect();
    }
    let (_, t) = complex_schur(a);
    t.diagonal().iter().copied().collect()
}

/// Complex Schur form `A = Z T Z*` with `T` upper triangular.
pub fn complex_schur(a: &DMatrix<f64>) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    if let Some(s) = Schur::try_new(to_complex(a), EPS, schur_iterations(n)) {
        return s.unpack();
    }
    let h = reflector(n);
    let (z, t) = Schur::try_new(to_complex(&(&h * a * &h)), EPS, 10 * schur_iterations(n))
        .expect("complex Schur iteration did not converge")
        .unpack();
    (to_complex(&h) * z, t)
}

pub fn sort_spectrum(ev: &mut [Complex64]) {
    ev.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(a.arg().total_cmp(&b.arg()))
    });
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    raw_eigenvalues(a).iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Smallest pairwise distance between eigenvalues (infinite for N = 1).
pub fn min_gap(ev: &[Complex64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..ev.len() {
        for j in (i + 1)..ev.len() {
            gap = gap.min((ev[i] - ev[j]).norm());
        }
    }
    gap
}

/// Eigenvector of `a` for the (simple) eigenvalue `lambda` by shifted
/// inverse iteration. Returned with unit 2-norm and its largest entry real.
fn inverse_iteration(a: &CMatrix, lambda: Complex64, scale: f64) -> CVector {
    let n = a.nrows();
    // the zero matrix still needs a representable shift
    let mut delta = 64.0 * EPS * if scale > 0.0 { scale } else { 1.0 };
    let start = CVector::from_fn(n, |k, _| {
        Complex64::new(1.0 / (k as f64 + 1.0), 0.37 / (k as f64 + 2.0))
    });
    for _ in 0..8 {
        let shift = lambda + Complex64::new(delta, delta);
        let m = a - CMatrix::identity(n, n) * shift;
        let lu = m.lu();
        let mut v = start.clone();
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&v) {
                Some(w) => {
                    let nrm = w.norm();
                    if !nrm.is_finite() || nrm == 0.0 {
                        ok = false;
                        break;
                    }
                    v = w / Complex64::new(nrm, 0.0);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let (imax, _) = v
                .iter()
                .enumerate()
                .fold((0, 0.0), |(bi, bm), (i, z)| if z.norm() > bm { (i, z.norm()) } else { (bi, bm) });
            let phase = v[imax].conj() / v[imax].norm();
            return v * phase;
        }
        delta *= 1e3;
    }
    CVector::from_element(n, Complex64::new(f64::NAN, f64::NAN))
}

/// Eigendecomposition `A = V diag(λ) V⁻¹` of a real matrix.
///
/// Eigenvalues follow [`sort_spectrum`]; columns of `V` have unit norm.
/// Conjugate eigenvalues receive conjugate eigenvectors and real
/// eigenvalues receive real eigenvectors, so real quantities assembled from
/// the factors stay real up to rounding.
pub fn eigen_decompose(a: &DMatrix<f64>) -> (Vec<Complex64>, CMatrix) {
    let n = a.nrows();
    let lambdas = eigenvalues(a);
    let ac = to_complex(a);
    let scale = a.norm();
    let mut v = CMatrix::zeros(n, n);
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let li = lambdas[i];
        if li.im == 0.0 {
            let vec = inverse_iteration(&ac, li, scale).map(|z| Complex64::new(z.re, 0.0));
            let nrm = vec.norm();
            v.set_column(i, &(vec / Complex64::new(nrm, 0.0)));
            done[i] = true;
            continue;
        }
        let vec = inverse_iteration(&ac, li, scale);
        v.set_column(i, &vec);
        done[i] = true;
        // conjugate partner: nearest remaining eigenvalue to conj(λ_i)
        let target = li.conj();
        let partner = (0..n)
            .filter(|&j| !done[j])
            .min_by(|&p, &q| (lambdas[p] - target).norm().total_cmp(&(lambdas[q] - target).norm()));
        if let Some(j) = partner {
            if (lambdas[j] - target).norm() <= 1e-12 * (1.0 + li.norm()) {
                v.set_column(j, &vec.map(|z| z.conj()));
                done[j] = true;
            }
        }
    }
    (lambdas, v)
}

/// Solves the discrete Lyapunov (Stein) equation `X = A X Aᵀ + Q`.
///
/// Complex Schur form `A = Z T Z*` reduces the problem to
/// `Y = T Y T* + Z* Q Z`, solved column by column from the last one with
/// triangular back-substitution (Kitagawa / Bartels–Stewart). O(N³).
/// Requires `|λ_i λ̄_j| ≠ 1`, which holds whenever ρ(A) < 1.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let (z, t) = complex_schur(a);
    let qt = z.adjoint() * to_complex(q) * &z;
    let mut y = CMatrix::zeros(n, n);
    for j in (0..n).rev() {
        // w = Σ_{l>j} conj(T_jl) Y[:, l]
        let mut w = CVector::zeros(n);
        for l in (j + 1)..n {
            let c = t[(j, l)].conj();
            if c != Complex64::new(0.0, 0.0) {
                w.axpy(c, &y.column(l), Complex64::new(1.0, 0.0));
            }
        }
        let mut rhs: CVector = qt.column(j).into_owned() + &t * w;
        // (I - conj(T_jj) T) y_j = rhs, upper triangular
        let tjj = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in (i + 1)..n {
                s += tjj * t[(i, k)] * rhs[k];
            }
            rhs[i] = s / (Complex64::new(1.0, 0.0) - tjj * t[(i, i)]);
        }
        y.set_column(j, &rhs);
    }
    let x = (&z * y * z.adjoint()).map(|c| c.re);
    (&x + x.transpose()) * 0.5
}

/// Symmetric square root and inverse square root through `G = Q D Qᵀ`,
/// together with the eigenvalues (ascending).
pub fn sym_sqrt_pair(g: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let eig = g.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let d = &eig.eigenvalues;
    let sq = DMatrix::from_diagonal(&d.map(|x| x.max(0.0).sqrt()));
    let isq = DMatrix::from_diagonal(&d.map(|x| 1.0 / x.max(0.0).sqrt()));
    let half = q * sq * q.transpose();
    let inv_half = q * isq * q.transpose();
    let mut ev: Vec<f64> = d.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    (half, inv_half, DVector::from_vec(ev))
}

/// Ratio of extreme singular values; infinite when the smallest is zero.
pub fn condition_number<T: ComplexField>(m: &DMatrix<T>) -> f64
where
    T::RealField: Into<f64>,
{
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv: Vec<f64> = m.clone().singular_values().iter().map(|x| x.clone().into()).collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Linear solver for (numerically) Hermitian positive definite systems:
/// Cholesky when it succeeds, otherwise LU with complete pivoting.
pub enum HermitianSolver<T: ComplexField> {
    Cholesky(nalgebra::Cholesky<T, nalgebra::Dyn>),
    FullPivLu(nalgebra::FullPivLU<T, nalgebra::Dyn, nalgebra::Dyn>),
}

impl<T: ComplexField> HermitianSolver<T>
where
    T::RealField: Into<f64>,
{
    /// Factors `m`; errors when the matrix is exactly singular in working
    /// precision (a zero pivot under complete pivoting).
    pub fn new(m: &DMatrix<T>, what: &'static str) -> Result<Self> {
        if let Some(ch) = m.clone().cholesky() {
            let diag_ok = ch
                .l_dirty()
                .diagonal()
                .iter()
                .all(|d| {
                    let v: f64 = d.clone().real().into();
                    v.is_finite() && v > 0.0
                });
            if diag_ok {
                return Ok(Self::Cholesky(ch));
            }
        }
        let lu = m.clone().full_piv_lu();
        if lu.is_invertible() {
            Ok(Self::FullPivLu(lu))
        } else {
            Err(McError::Singular {
                what,
                condition: condition_number(m),
            })
        }
    }

    pub fn solve(&self, b: &DVector<T>) -> Option<DVector<T>> {
        match self {
            Self::Cholesky(ch) => Some(ch.solve(b)),
            Self::FullPivLu(lu) => lu.solve(b),
        }
    }
}

/// Singular values below `max(rows, cols) · eps · σ_max` count as zero.
pub fn rank_threshold(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * EPS * sigma_max
}

pub fn numerical_rank(sigma: &[f64], rows: usize, cols: usize) -> usize {
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let thr = rank_threshold(rows, cols, smax);
    sigma.iter().filter(|&&s| s > thr).count()
}

/// Thin SVD with singular values sorted in descending order.
/// Returns `(U, σ, Vᵀ)` with `U: rows×k`, `Vᵀ: k×cols`, `k = min(rows, cols)`.
pub fn sorted_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let sorted_u = DMatrix::from_fn(u.nrows(), order.len(), |i, k| u[(i, order[k])]);
    let sorted_vt = DMatrix::from_fn(order.len(), vt.ncols(), |k, j| vt[(order[k], j)]);
    let sigma = order.iter().map(|&k| sv[k]).collect();
    (sorted_u, sigma, sorted_vt)
}

pub fn matrix_power_vec(a: &DMatrix<f64>, v: &DVector<f64>, p: usize) -> DVector<f64> {
    let mut out = v.clone();
    for _ in 0..p {
        out = a * out;
    }
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn structural_nilpotency() {
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 2)] = 1.5;
        a[(2, 3)] = -0.2;
        a[(1, 3)] = 4.0;
        assert!(structurally_nilpotent(&a));
        assert_eq!(nilpotency_index(&a), Some(3));
        assert!(eigenvalues(&a).iter().all(|z| z.norm() == 0.0));
        a[(3, 0)] = 1.0;
        assert!(!structurally_nilpotent(&a));
        a[(3, 0)] = 0.0;
        a[(1, 1)] = 0.5;
        assert!(!structurally_nilpotent(&a));
    }

    use super::*;
    use approx::assert_relative_eq;

    fn series_gram(a: &DMatrix<f64>, q: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(a.nrows(), a.nrows());
        let mut p = DMatrix::identity(a.nrows(), a.nrows());
        for _ in 0..terms {
            x += &p * q * p.transpose();
            p = a * p;
        }
        x
    }

    #[test]
    fn lyapunov_matches_series_on_small_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, -0.5, 0.1, 0.4, 0.3, -0.2, 0.0, 0.6, -0.1]);
        let q = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.5, 0.1, 0.0, 0.1, 0.3]);
        let x = solve_discrete_lyapunov(&a, &q);
        let s = series_gram(&a, &q, 400);
        assert!((x - s).abs().max() < 1e-12);
    }

    #[test]
    fn eigen_decompose_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -0.8, 0.1, 0.8, 0.0, 0.0, 0.0, 0.3, 0.5]);
        let (lam, v) = eigen_decompose(&a);
        let av = to_complex(&a) * &v;
        let vl = &v * CMatrix::from_diagonal(&CVector::from_vec(lam.clone()));
        assert!(max_abs_c(&(av - vl)) < 1e-12);
        assert!(lam[0].norm() >= lam[2].norm());
        // conjugate pair ordered by argument
        assert!(lam[0].arg() < lam[1].arg());
    }

    #[test]
    fn rank_and_sqrt() {
        assert_eq!(numerical_rank(&[1.0, 1e-3, 1e-17], 3, 3), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0], 2, 2), 0);
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (h, ih, _) = sym_sqrt_pair(&g);
        assert!((&h * &h - &g).abs().max() < 1e-14);
        assert!((&h * &ih - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        assert_relative_eq!(condition_number(&DMatrix::<f64>::identity(3, 3)), 1.0);
    }

    #[test]
    fn svd_is_sorted() {
        let m = DMatrix::from_fn(4, 7, |i, j| ((i + 1) as f64).powi(-(j as i32)));
        let (u, s, vt) = sorted_svd(&m);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let rec = &u * DMatrix::from_diagonal(&DVector::from_vec(s)) * &vt;
        assert!((rec - m).abs().max() < 1e-13);
    }
}
