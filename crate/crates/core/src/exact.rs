//! Closed-form memory capacities: the Gram-inverse formula, the eigenbasis
//! Gram, the mask-free `L_A` route, cyclic and delay oracles, the Fischer
//! memory curve and the capacity under stationary (colored) inputs.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{McError, Result};
use crate::linalg::{self, CMatrix, CVector, HermitianSolver};
use crate::reservoir::{GramMethod, GramSpec, LinearESN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    EigenNeutral,
    Osm,
    OsmPlus,
    Montecarlo,
    Oracle,
    Stationary,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::EigenNeutral => "eigen_neutral",
            Method::Osm => "osm",
            Method::OsmPlus => "osm_plus",
            Method::Montecarlo => "montecarlo",
            Method::Oracle => "oracle",
            Method::Stationary => "stationary",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = McError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "naive" => Method::Naive,
            "eigen_neutral" => Method::EigenNeutral,
            "osm" => Method::Osm,
            "osm_plus" => Method::OsmPlus,
            "montecarlo" => Method::Montecarlo,
            "oracle" => Method::Oracle,
            "stationary" => Method::Stationary,
            _ => return Err(McError::InvalidArgument(format!("unknown method `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub n: usize,
    pub rho: f64,
    pub tau_max: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Lags whose value fell outside [0, 1 + 1e-6]; kept, not clipped.
    #[serde(default)]
    pub out_of_range: Vec<usize>,
    /// Largest |Im| discarded when taking the real part of a complex evaluation.
    #[serde(default)]
    pub imaginary_residual: f64,
}

/// Lag-indexed capacities `MC_0, …, MC_{τ_max-1}` and their sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryCurve {
    pub values: Vec<f64>,
    pub total: f64,
    pub method: Method,
    pub meta: CurveMeta,
}

impl MemoryCurve {
    pub fn new(values: Vec<f64>, method: Method, mut meta: CurveMeta) -> Self {
        meta.tau_max = values.len();
        meta.out_of_range = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| !(0.0..=1.0 + 1e-6).contains(&v))
            .map(|(t, _)| t)
            .collect();
        let total = values.iter().sum();
        Self { values, total, method, meta }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,mc\n");
        for (t, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    }

    /// Writes the CSV to `path` and the metadata to `path` with a `.json` extension.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())?;
        let sidecar = serde_json::json!({
            "method": self.method,
            "total": self.total,
            "meta": self.meta,
        });
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

fn meta_for(sys_a: &DMatrix<f64>, tau_max: usize) -> CurveMeta {
    CurveMeta { n: sys_a.nrows(), rho: linalg::spectral_radius(sys_a), tau_max, ..Default::default() }
}

/// Eigen-decomposition `A = V Λ V⁻¹` together with the mask coordinates `c = V⁻¹C`.
#[derive(Clone, Debug)]
pub struct EigenData {
    pub lambdas: Vec<Complex64>,
    pub v: CMatrix,
    pub vinv: CMatrix,
    pub c_coeffs: CVector,
}

impl EigenData {
    /// Errors when two eigenvalues are closer than 1e-10.
    pub fn new(a: &DMatrix<f64>, c: &DVector<f64>) -> Result<Self> {
        let (lambdas, v) = linalg::eigen_decompose(a);
        let gap = linalg::min_gap(&lambdas);
        if gap <= 1e-10 {
            return Err(McError::NotDiagonalizable { min_gap: gap });
        }
        let vinv = v
            .clone()
            .try_inverse()
            .ok_or(McError::NotDiagonalizable { min_gap: gap })?;
        let c_coeffs = &vinv * c.map(|x| Complex64::new(x, 0.0));
        Ok(Self { lambdas, v, vinv, c_coeffs })
    }

    pub fn of_system(sys: &LinearESN) -> Result<Self> {
        Self::new(&sys.a, &sys.c)
    }
}

/// `MC_τ = Cᵀ(Aᵀ)^τ G_x⁻¹ A^τ C` by solving against the supplied Gram.
/// Values outside [0, 1] are retained and listed in `meta.out_of_range`.
pub fn mc_naive(sys: &LinearESN, tau_max: usize, gram: &GramSpec) -> Result<MemoryCurve> {
    sys.check_esp()?;
    if gram.g_x.nrows() != sys.n() {
        return Err(McError::InvalidArgument("Gram dimension does not match system".into()));
    }
    let solver = HermitianSolver::new(&gram.g_x, "state Gram matrix G_x")?;
    let mut v = sys.c.clone();
    let mut values = Vec::with_capacity(tau_max);
    for _ in 0..tau_max {
        let u = solver.solve(&v).ok_or(McError::Singular {
            what: "state Gram matrix G_x",
            condition: gram.condition_estimate,
        })?;
        values.push(v.dot(&u));
        v = &sys.a * v;
    }
    Ok(MemoryCurve::new(values, Method::Naive, meta_for(&sys.a, tau_max)))
}

fn check_contractive(lambdas: &[Complex64]) -> Result<()> {
    let rho = lambdas.iter().fold(0.0f64, |m, l| m.max(l.norm()));
    if rho < 1.0 {
        Ok(())
    } else {
        Err(McError::EspViolation { rho })
    }
}

/// `L_A = (1/(1 − λ_k λ̄_l))_{k,l}`.
pub fn l_matrix(lambdas: &[Complex64]) -> CMatrix {
    let n = lambdas.len();
    CMatrix::from_fn(n, n, |k, l| Complex64::new(1.0, 0.0) / (1.0 - lambdas[k] * lambdas[l].conj()))
}

/// `G_x = Σ_{i,j} c_i c̄_j/(1 − λ_i λ̄_j) v_i v_j*`, normalized (γ(0) = 1).
pub fn gram_eigenbasis(eig: &EigenData) -> Result<GramSpec> {
    check_contractive(&eig.lambdas)?;
    let gap = linalg::min_gap(&eig.lambdas);
    if gap <= 1e-10 {
        return Err(McError::NotDiagonalizable { min_gap: gap });
    }
    let n = eig.lambdas.len();
    let l = l_matrix(&eig.lambdas);
    let c = &eig.c_coeffs;
    let phi = CMatrix::from_fn(n, n, |i, j| c[i] * c[j].conj() * l[(i, j)]);
    let g = &eig.v * phi * eig.v.adjoint();
    let scale = linalg::max_abs_c(&g).max(f64::MIN_POSITIVE);
    let residual = g.iter().fold(0.0f64, |m, z| m.max(z.im.abs())) / scale;
    if residual > 1e-8 {
        return Err(McError::ImaginaryResidual { residual });
    }
    Ok(GramSpec::from_normalized(g.map(|z| z.re), 1.0, GramMethod::Eigenbasis))
}

fn real_quadratic(solver: &HermitianSolver<Complex64>, y: &CVector, what: &'static str) -> Result<Complex64> {
    let u = solver.solve(y).ok_or(McError::Singular { what, condition: f64::INFINITY })?;
    Ok(y.iter().zip(u.iter()).map(|(a, b)| a.conj() * b).sum())
}

/// Mask-free capacity `MC_τ = ι'(Λ*)^τ L_A⁻¹ Λ^τ ι`. Depends on `A` only.
///
/// A nilpotent `A` of index `N` (one Jordan block at zero) is handled in
/// confluent form: the Vandermonde factor becomes `(I_N | 0)`, `L_A = I`,
/// and `MC_τ = 1` for `τ < N`, 0 afterwards.
pub fn mc_neutral(a: &DMatrix<f64>, tau_max: usize) -> Result<MemoryCurve> {
    let n = a.nrows();
    if let Some(k) = linalg::nilpotency_index(a) {
        if k == n {
            let values = (0..tau_max).map(|t| mc_oracle_delay(n, t)).collect();
            return Ok(MemoryCurve::new(values, Method::EigenNeutral, meta_for(a, tau_max)));
        }
        return Err(McError::NotDiagonalizable { min_gap: 0.0 });
    }
    let (lambdas, _) = linalg::eigen_decompose(a);
    let gap = linalg::min_gap(&lambdas);
    if gap <= 1e-10 {
        return Err(McError::NotDiagonalizable { min_gap: gap });
    }
    check_contractive(&lambdas)?;
    let l = l_matrix(&lambdas);
    let solver = HermitianSolver::new(&l, "L_A")?;
    let mut y = CVector::from_element(lambdas.len(), Complex64::new(1.0, 0.0));
    let lam = CVector::from_column_slice(&lambdas);
    let mut values = Vec::with_capacity(tau_max);
    let mut residual = 0.0f64;
    for _ in 0..tau_max {
        let q = real_quadratic(&solver, &y, "L_A")?;
        residual = residual.max(q.im.abs() / q.re.abs().max(1.0));
        values.push(q.re);
        y.component_mul_assign(&lam);
    }
    if residual > 1e-8 {
        return Err(McError::ImaginaryResidual { residual });
    }
    let mut meta = meta_for(a, tau_max);
    meta.imaginary_residual = residual;
    Ok(MemoryCurve::new(values, Method::EigenNeutral, meta))
}

/// Cyclic reservoir `ρÃ` with `C = e₁`: `MC_τ = ρ^{2kN}(1 − ρ^{2N})`, `k = ⌊τ/N⌋`.
pub fn mc_oracle_cyclic(n: usize, rho: f64, tau: usize) -> f64 {
    let k = (tau / n) as i32;
    let r2n = rho.powi(2 * n as i32);
    r2n.powi(k) * (1.0 - r2n)
}

/// Delay line of length `N` with `C = e₁`: full recall of the last `N` inputs.
pub fn mc_oracle_delay(n: usize, tau: usize) -> f64 {
    if tau < n {
        1.0
    } else {
        0.0
    }
}

pub fn oracle_curve(values: Vec<f64>, n: usize, rho: f64) -> MemoryCurve {
    let tau_max = values.len();
    MemoryCurve::new(values, Method::Oracle, CurveMeta { n, rho, tau_max, ..Default::default() })
}

/// Exact normalized Gram of the cyclic reservoir: `diag(ρ^{2i}/(1 − ρ^{2N}))`.
pub fn gram_cyclic(n: usize, rho: f64) -> GramSpec {
    let denom = 1.0 - rho.powi(2 * n as i32);
    let d = DVector::from_fn(n, |i, _| rho.powi(2 * i as i32) / denom);
    GramSpec::from_normalized(DMatrix::from_diagonal(&d), 1.0, GramMethod::ClosedForm)
}

/// Fischer memory curve `F_τ = Cᵀ(Aᵀ)^τ R⁻¹ A^τ C` with `R = A R Aᵀ + σ² I`.
pub fn fischer_curve(sys: &LinearESN, sigma_eps: f64, tau_max: usize) -> Result<Vec<f64>> {
    if !(sigma_eps > 0.0) {
        return Err(McError::InvalidArgument("noise level must be positive".into()));
    }
    sys.check_esp()?;
    let n = sys.n();
    let q = DMatrix::identity(n, n) * (sigma_eps * sigma_eps);
    let r = linalg::solve_discrete_lyapunov(&sys.a, &q);
    let solver = HermitianSolver::new(&r, "Fischer covariance R_x")?;
    let mut v = sys.c.clone();
    let mut out = Vec::with_capacity(tau_max);
    for _ in 0..tau_max {
        let u = solver.solve(&v).ok_or(McError::Singular { what: "Fischer covariance R_x", condition: f64::INFINITY })?;
        out.push(v.dot(&u).max(0.0));
        v = &sys.a * v;
    }
    Ok(out)
}

/// Autocovariance of a stationary scalar input, `γ(j) = γ(−j)`.
pub trait Autocovariance {
    fn gamma(&self, lag: usize) -> f64;

    /// Constants `(K, r)` with `|γ(j)| ≤ K r^j`.
    fn decay_bound(&self) -> (f64, f64);

    /// Number of terms after which the tail `Σ_{j>M} |λ^j γ(j)|` is below `tol`
    /// for eigenvalues of modulus at most `rho`.
    fn horizon(&self, rho: f64, tol: f64) -> Result<usize> {
        let (k, r) = self.decay_bound();
        let q = rho * r;
        if k == 0.0 || q == 0.0 {
            return Ok(1);
        }
        if q >= 1.0 {
            return Err(McError::NoTruncationPoint { rho: q });
        }
        let mut m = 0usize;
        let mut tail = k / (1.0 - q);
        while tail >= tol {
            tail *= q;
            m += 1;
        }
        Ok(m)
    }
}

/// i.i.d. input with variance `var`.
#[derive(Clone, Copy, Debug)]
pub struct WhiteNoise {
    pub var: f64,
}

impl Autocovariance for WhiteNoise {
    fn gamma(&self, lag: usize) -> f64 {
        if lag == 0 {
            self.var
        } else {
            0.0
        }
    }
    fn decay_bound(&self) -> (f64, f64) {
        (self.var, 0.0)
    }
}

/// `γ(j) = var · φ^{|j|}`.
#[derive(Clone, Copy, Debug)]
pub struct Ar1 {
    pub var: f64,
    pub phi: f64,
}

impl Autocovariance for Ar1 {
    fn gamma(&self, lag: usize) -> f64 {
        self.var * self.phi.powi(lag as i32)
    }
    fn decay_bound(&self) -> (f64, f64) {
        (self.var, self.phi.abs())
    }
}

/// Finitely supported autocovariance given by its values at lags 0, 1, ….
#[derive(Clone, Debug)]
pub struct Tabulated {
    pub values: Vec<f64>,
}

impl Autocovariance for Tabulated {
    fn gamma(&self, lag: usize) -> f64 {
        self.values.get(lag).copied().unwrap_or(0.0)
    }
    fn decay_bound(&self) -> (f64, f64) {
        (self.values.iter().fold(0.0f64, |m, x| m.max(x.abs())), 0.0)
    }
    fn horizon(&self, _rho: f64, _tol: f64) -> Result<usize> {
        Ok(self.values.len())
    }
}

fn check_psd(acov: &dyn Autocovariance, window: usize) -> Result<()> {
    let t = DMatrix::from_fn(window, window, |i, j| acov.gamma(i.abs_diff(j)));
    let ev = t.symmetric_eigenvalues();
    let max = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    if min < -1e-10 * max.max(1.0) {
        return Err(McError::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// Capacity under a stationary input with autocovariance `γ`:
/// `MC_τ = g(τ)* (γ(0) H)⁻¹ g(τ)` with `g_k(τ) = Σ_j λ_k^j γ(τ − j)` and
/// `H_{kl} = (γ(0) + Σ_{j≥1} γ(j)(λ_k^j + λ̄_l^j)) / (1 − λ_k λ̄_l)`.
/// Series are cut where the geometric tail bound drops below `series_tol`.
pub fn mc_stationary(
    sys: &LinearESN,
    eig: &EigenData,
    acov: &dyn Autocovariance,
    tau_max: usize,
    series_tol: f64,
) -> Result<MemoryCurve> {
    let g0 = acov.gamma(0);
    if !(g0 > 0.0) {
        return Err(McError::InvalidArgument("γ(0) must be positive".into()));
    }
    check_psd(acov, (2 * tau_max).max(2))?;
    let gap = linalg::min_gap(&eig.lambdas);
    if gap <= 1e-10 {
        return Err(McError::NotDiagonalizable { min_gap: gap });
    }
    check_contractive(&eig.lambdas)?;
    let rho = eig.lambdas.iter().fold(0.0f64, |m, l| m.max(l.norm()));
    let horizon = acov.horizon(rho, series_tol)?;
    let n = eig.lambdas.len();
    let one = Complex64::new(1.0, 0.0);

    // powers λ_k^j for j = 0 ..= tau_max + horizon
    let jmax = tau_max + horizon;
    let mut pows = CMatrix::zeros(n, jmax + 1);
    for k in 0..n {
        let mut p = one;
        for j in 0..=jmax {
            pows[(k, j)] = p;
            p *= eig.lambdas[k];
        }
    }

    let h = CMatrix::from_fn(n, n, |k, l| {
        let mut s = Complex64::new(g0, 0.0);
        for j in 1..=horizon {
            s += acov.gamma(j) * (pows[(k, j)] + pows[(l, j)].conj());
        }
        g0 * s / (one - eig.lambdas[k] * eig.lambdas[l].conj())
    });
    let solver = HermitianSolver::new(&h, "stationary inner matrix")?;

    let mut values = Vec::with_capacity(tau_max);
    let mut residual = 0.0f64;
    for tau in 0..tau_max {
        let g = CVector::from_fn(n, |k, _| {
            (0..=tau + horizon)
                .map(|j| pows[(k, j)] * acov.gamma(tau.abs_diff(j)))
                .sum()
        });
        let q = real_quadratic(&solver, &g, "stationary inner matrix")?;
        residual = residual.max(q.im.abs() / q.re.abs().max(1.0));
        values.push(q.re);
    }
    if residual > 1e-8 {
        return Err(McError::ImaginaryResidual { residual });
    }
    let mut meta = meta_for(&sys.a, tau_max);
    meta.imaginary_residual = residual;
    Ok(MemoryCurve::new(values, Method::Stationary, meta))
}
