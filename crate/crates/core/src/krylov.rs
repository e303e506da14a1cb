//! Truncated Krylov matrices `K_m = (C | AC | … | A^{m-1}C)` and the
//! squeezing diagnostics: orthogonal-component norms θ_j by SVD projection
//! and by Arnoldi, Householder `|r_jj|`, the circular-law proxy κ_j, and the
//! Vandermonde factorization `K_m = V D_c W_m`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{McError, Result};
use crate::exact::EigenData;
use crate::linalg::{self, CMatrix, EPS};
use crate::reservoir::LinearESN;

/// Number of Krylov columns: explicit, or the smallest `m` with
/// `‖A^m C‖_∞ < 2⁻⁵²` (capped at `10 N`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KrylovSize {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for KrylovSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KrylovSize::Auto => s.serialize_str("auto"),
            KrylovSize::Fixed(m) => s.serialize_u64(*m as u64),
        }
    }
}

impl<'de> Deserialize<'de> for KrylovSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(m) => Ok(KrylovSize::Fixed(m)),
            Raw::Str(s) if s == "auto" => Ok(KrylovSize::Auto),
            Raw::Str(s) => s
                .parse()
                .map(KrylovSize::Fixed)
                .map_err(|_| serde::de::Error::custom(format!("expected \"auto\" or an integer, got `{s}`"))),
        }
    }
}

impl std::str::FromStr for KrylovSize {
    type Err = McError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(KrylovSize::Auto);
        }
        s.parse()
            .map(KrylovSize::Fixed)
            .map_err(|_| McError::InvalidArgument(format!("expected `auto` or an integer, got `{s}`")))
    }
}

/// Smallest `m ≤ 10N` with `‖A^m C‖_∞ < 2⁻⁵²`.
pub fn auto_truncation(sys: &LinearESN) -> Result<usize> {
    let rho = sys.spectral_radius();
    if rho >= 1.0 {
        return Err(McError::NoTruncationPoint { rho });
    }
    let cap = 10 * sys.n();
    let mut v = sys.c.clone();
    for m in 0..cap {
        if v.amax() < EPS {
            return Ok(m);
        }
        v = &sys.a * v;
    }
    Ok(cap)
}

pub fn resolve_size(sys: &LinearESN, size: KrylovSize) -> Result<usize> {
    match size {
        KrylovSize::Auto => auto_truncation(sys),
        KrylovSize::Fixed(m) => Ok(m),
    }
}

/// Krylov matrix with its full thin SVD `K = U diag(σ) Wᵀ` (σ descending,
/// `min(N, m)` directions) and the numerical rank at threshold
/// `max(N, m) · eps · σ_max`.
#[derive(Clone, Debug)]
pub struct KrylovBundle {
    pub k: DMatrix<f64>,
    pub m: usize,
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub w: DMatrix<f64>,
    /// θ_1 … θ_{min(m, N)} from the Arnoldi recursion.
    pub theta_norms: Vec<f64>,
    pub rank: usize,
}

impl KrylovBundle {
    /// `U`, `σ`, `W` restricted to the first `r` directions.
    pub fn leading(&self, r: usize) -> (DMatrix<f64>, &[f64], DMatrix<f64>) {
        let r = r.min(self.sigma.len());
        (self.u.columns(0, r).into_owned(), &self.sigma[..r], self.w.columns(0, r).into_owned())
    }
}

pub fn build_krylov(sys: &LinearESN, size: KrylovSize) -> Result<KrylovBundle> {
    let m = resolve_size(sys, size)?;
    let k = sys.krylov_matrix(m);
    let n = sys.n();
    let (u, sigma, wt) = if m == 0 {
        (DMatrix::zeros(n, 0), Vec::new(), DMatrix::zeros(0, 0))
    } else {
        linalg::sorted_svd(&k)
    };
    let rank = linalg::numerical_rank(&sigma, n, m);
    let theta_norms = theta_norms_arnoldi(sys, m.min(n));
    Ok(KrylovBundle { k, m, u, sigma, w: wt.transpose(), theta_norms, rank })
}

/// `K_m = V · diag(c) · W_m` with `W_m[k, j] = λ_k^j`.
#[derive(Clone, Debug)]
pub struct VandermondeFactor {
    pub v: CMatrix,
    pub d_c: CMatrix,
    pub w: CMatrix,
}

impl VandermondeFactor {
    pub fn product(&self) -> CMatrix {
        &self.v * &self.d_c * &self.w
    }
}

pub fn vandermonde_factor(eig: &EigenData, m: usize) -> VandermondeFactor {
    let n = eig.lambdas.len();
    let w = CMatrix::from_fn(n, m, |k, j| eig.lambdas[k].powu(j as u32));
    VandermondeFactor { v: eig.v.clone(), d_c: CMatrix::from_diagonal(&eig.c_coeffs), w }
}

/// `‖θ_1‖ = ‖C‖` and `‖θ_j‖ = ‖(I − U_{j−1}U_{j−1}ᵀ) A^{j−1} C‖` for `j ≥ 2`,
/// where `U_{j−1}` spans the numerical column space of `K_{j−1}`.
pub fn theta_norms_svd(sys: &LinearESN, j_max: usize) -> Vec<f64> {
    let n = sys.n();
    let k = sys.krylov_matrix(j_max);
    (1..=j_max)
        .into_par_iter()
        .map(|j| {
            let col = k.column(j - 1);
            if j == 1 {
                return col.norm();
            }
            let prev = k.columns(0, j - 1).into_owned();
            let (u, s, _) = linalg::sorted_svd(&prev);
            let r = linalg::numerical_rank(&s, n, j - 1);
            let ur = u.columns(0, r);
            let proj = ur * (ur.transpose() * col);
            (col - proj).norm()
        })
        .collect()
}

/// Result of an Arnoldi run on `(A, C)`.
#[derive(Clone, Debug)]
pub struct Arnoldi {
    /// Subdiagonal Hessenberg entries `h_{j+1,j}`, one per completed step.
    pub subdiagonal: Vec<f64>,
    /// Number of orthonormal basis vectors built before breakdown.
    pub dimension: usize,
}

/// Arnoldi with modified Gram–Schmidt and one reorthogonalization pass.
/// Stops when `h_{j+1,j} < eps · ‖A‖_F`, after `steps` steps, or once `N`
/// basis vectors exist.
pub fn arnoldi(a: &DMatrix<f64>, c: &DVector<f64>, steps: usize) -> Arnoldi {
    let n = a.nrows();
    let cn = c.norm();
    if cn == 0.0 || steps == 0 {
        return Arnoldi { subdiagonal: Vec::new(), dimension: 0 };
    }
    let tol = EPS * a.norm();
    let mut q: Vec<DVector<f64>> = vec![c / cn];
    let mut subdiagonal = Vec::new();
    while q.len() < n && subdiagonal.len() + 1 < steps {
        let mut w = a * q.last().unwrap();
        for _ in 0..2 {
            for qi in &q {
                let h = qi.dot(&w);
                w.axpy(-h, qi, 1.0);
            }
        }
        let h = w.norm();
        subdiagonal.push(h);
        if !(h >= tol) || h == 0.0 {
            break;
        }
        q.push(w / h);
    }
    let dimension = q.len();
    Arnoldi { subdiagonal, dimension }
}

/// Dimension of the Krylov space `span{C, AC, …}` detected by Arnoldi
/// breakdown, at most `min(N, m)`.
pub fn krylov_dimension(sys: &LinearESN, m: usize) -> usize {
    arnoldi(&sys.a, &sys.c, m).dimension.min(m)
}

/// θ norms from Arnoldi: `θ_1 = ‖C‖`, `θ_{j+1} = θ_j · h_{j+1,j}`, zero after breakdown.
pub fn theta_norms_arnoldi(sys: &LinearESN, j_max: usize) -> Vec<f64> {
    let run = arnoldi(&sys.a, &sys.c, j_max);
    let mut out = vec![0.0; j_max];
    if j_max == 0 || run.dimension == 0 {
        return out;
    }
    out[0] = sys.c.norm();
    for j in 1..run.dimension.min(j_max) {
        out[j] = out[j - 1] * run.subdiagonal[j - 1];
    }
    out
}

/// `κ_j = sqrt(ρ · N! / (N^j (N − j)!))`, evaluated as a sum of logarithms.
pub fn kappa_approx(n: usize, rho: f64, j: usize) -> Result<f64> {
    if j > n {
        return Err(McError::InvalidArgument(format!("κ_j needs j ≤ N, got j = {j}, N = {n}")));
    }
    let nf = n as f64;
    let log_falling: f64 = ((n - j + 1)..=n).map(|k| (k as f64).ln()).sum();
    Ok((0.5 * (rho.ln() + log_falling - j as f64 * nf.ln())).exp())
}

/// `|r_jj|` from a Householder QR of `K_N`.
pub fn qr_diag(sys: &LinearESN) -> Vec<f64> {
    qr_diag_of(&sys.krylov_matrix(sys.n()))
}

fn qr_diag_of(k: &DMatrix<f64>) -> Vec<f64> {
    let r = k.clone().qr().r();
    (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect()
}

/// One row of the squeezing table; fields that are undefined at index `j`
/// (`r_jj` and `κ_j` for `j > N`) are NaN.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SqueezingRow {
    pub j: usize,
    pub theta_svd: f64,
    pub theta_arnoldi: f64,
    pub r_jj: f64,
    pub kappa: f64,
    pub rho_pow_j: f64,
}

pub fn squeezing_table(sys: &LinearESN, m: usize) -> Vec<SqueezingRow> {
    let n = sys.n();
    let rho = sys.spectral_radius();
    let svd = theta_norms_svd(sys, m);
    let arn = theta_norms_arnoldi(sys, m);
    let rdiag = qr_diag_of(&sys.krylov_matrix(m));
    (1..=m)
        .map(|j| SqueezingRow {
            j,
            theta_svd: svd[j - 1],
            theta_arnoldi: arn[j - 1],
            r_jj: rdiag.get(j - 1).copied().unwrap_or(f64::NAN),
            kappa: kappa_approx(n, rho, j).unwrap_or(f64::NAN),
            rho_pow_j: rho.powi(j as i32),
        })
        .collect()
}

pub fn squeezing_csv(rows: &[SqueezingRow]) -> String {
    let mut s = String::from("j,theta_svd,theta_arnoldi,r_jj,kappa,rho_pow_j\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.j, r.theta_svd, r.theta_arnoldi, r.r_jj, r.kappa, r.rho_pow_j
        ));
    }
    s
}

/// Largest entry of `|K − V D_c W|`.
pub fn vandermonde_residual(k: &DMatrix<f64>, f: &VandermondeFactor) -> f64 {
    let p = f.product();
    k.iter()
        .zip(p.iter())
        .fold(0.0f64, |m, (a, b)| m.max((Complex64::new(*a, 0.0) - b).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{generate, GeneratorKind, GeneratorSpec};
    use approx::assert_relative_eq;

    fn delay(n: usize) -> LinearESN {
        generate(&GeneratorSpec::new(GeneratorKind::DelayShift, n, None, 0)).unwrap()
    }

    fn cyclic(n: usize, rho: f64) -> LinearESN {
        generate(&GeneratorSpec::new(GeneratorKind::Cyclic, n, Some(rho), 0)).unwrap()
    }

    #[test]
    fn delay_auto_truncation() {
        let b = build_krylov(&delay(4), KrylovSize::Auto).unwrap();
        assert_eq!(b.m, 4);
        assert_eq!(b.k, DMatrix::identity(4, 4));
        assert_eq!(b.rank, 4);
        assert_eq!(b.theta_norms, vec![1.0; 4]);
    }

    #[test]
    fn cyclic_columns_and_rank() {
        let b = build_krylov(&cyclic(3, 0.9), KrylovSize::Fixed(6)).unwrap();
        assert_relative_eq!(b.k[(1, 1)], 0.9, epsilon = 1e-15);
        assert_relative_eq!(b.k[(2, 2)], 0.81, epsilon = 1e-15);
        assert_relative_eq!(b.k[(0, 3)], 0.729, epsilon = 1e-15);
        assert_eq!(b.rank, 3);
    }

    #[test]
    fn auto_needs_esp() {
        let sys = LinearESN::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(matches!(build_krylov(&sys, KrylovSize::Auto), Err(McError::NoTruncationPoint { .. })));
        assert!(build_krylov(&sys, KrylovSize::Fixed(3)).is_ok());
    }

    #[test]
    fn theta_delay_and_cyclic() {
        assert_eq!(theta_norms_svd(&delay(4), 6), vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(theta_norms_arnoldi(&delay(4), 6), vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let sys = cyclic(3, 0.9);
        let s = theta_norms_svd(&sys, 5);
        let a = theta_norms_arnoldi(&sys, 5);
        for j in 0..3 {
            assert_relative_eq!(s[j], 0.9f64.powi(j as i32), max_relative = 1e-12);
            assert_relative_eq!(a[j], s[j], max_relative = 1e-8);
        }
        assert!(s[3] < 1e-14 && s[4] < 1e-14);
        assert_eq!(&a[3..], &[0.0, 0.0]);
    }

    #[test]
    fn kappa_examples() {
        assert_relative_eq!(kappa_approx(3, 0.9, 3).unwrap(), 0.2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(kappa_approx(10, 0.9, 0).unwrap(), 0.9f64.sqrt(), max_relative = 1e-14);
        assert!(kappa_approx(3, 0.9, 4).is_err());
        assert!(kappa_approx(1000, 0.9, 1000).unwrap() > 0.0);
    }

    #[test]
    fn qr_diag_examples() {
        assert_eq!(qr_diag(&delay(4)), vec![1.0; 4]);
        let d = qr_diag(&cyclic(3, 0.9));
        assert_relative_eq!(d[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(d[1], 0.9, epsilon = 1e-15);
        assert_relative_eq!(d[2], 0.81, epsilon = 1e-15);
    }

    #[test]
    fn scalar_vandermonde() {
        let sys = LinearESN::new(DMatrix::from_element(1, 1, 0.5), DVector::from_element(1, 2.0)).unwrap();
        let eig = EigenData::of_system(&sys).unwrap();
        let f = vandermonde_factor(&eig, 3);
        assert_relative_eq!(f.w[(0, 2)].re, 0.25);
        let k = sys.krylov_matrix(3);
        assert_eq!(k.as_slice(), &[2.0, 1.0, 0.5]);
        assert!(vandermonde_residual(&k, &f) < 1e-15);
    }

    #[test]
    fn krylov_dimension_examples() {
        assert_eq!(krylov_dimension(&delay(5), 10), 5);
        let sys = LinearESN::new(DMatrix::identity(4, 4) * 0.5, DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0])).unwrap();
        assert_eq!(krylov_dimension(&sys, 10), 1);
    }

    #[test]
    fn size_parsing() {
        assert_eq!("auto".parse::<KrylovSize>().unwrap(), KrylovSize::Auto);
        assert_eq!("150".parse::<KrylovSize>().unwrap(), KrylovSize::Fixed(150));
        let v: KrylovSize = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(v, KrylovSize::Auto);
        let v: KrylovSize = serde_json::from_str("12").unwrap();
        assert_eq!(v, KrylovSize::Fixed(12));
    }
}
