//! Linear echo state networks `x_t = A x_{t-1} + C z_t + ζ`: construction,
//! random and structured generators, spectral rescaling, controllability
//! rank, the stationary state covariance and the standardizing change of
//! coordinates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{McError, Result};
use crate::linalg::{self, EPS};
use crate::rng::rng_from_seed;

/// Reservoir matrix families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// i.i.d. N(0, 1) entries.
    Gaussian,
    /// i.i.d. U(-1, 1) entries.
    Uniform,
    /// Each entry nonzero with probability `sparsity`, nonzero entries N(0, 1).
    SparseGaussian,
    /// Orthogonal factor of the QR decomposition of a Gaussian matrix.
    OrthogonalGaussian,
    /// Cyclic permutation: ones on the subdiagonal and in the top-right corner.
    Cyclic,
    /// Nilpotent shift matrix (delay line), never rescaled.
    DelayShift,
    /// Sparse Gaussian with singular values remapped so σ_min/σ_max = `condition_target`.
    ConditionedSparseGaussian,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 7] = [
        GeneratorKind::Gaussian,
        GeneratorKind::Uniform,
        GeneratorKind::SparseGaussian,
        GeneratorKind::OrthogonalGaussian,
        GeneratorKind::Cyclic,
        GeneratorKind::DelayShift,
        GeneratorKind::ConditionedSparseGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Gaussian => "gaussian",
            GeneratorKind::Uniform => "uniform",
            GeneratorKind::SparseGaussian => "sparse_gaussian",
            GeneratorKind::OrthogonalGaussian => "orthogonal_gaussian",
            GeneratorKind::Cyclic => "cyclic",
            GeneratorKind::DelayShift => "delay_shift",
            GeneratorKind::ConditionedSparseGaussian => "conditioned_sparse_gaussian",
        }
    }

    pub fn is_random(self) -> bool {
        !matches!(self, GeneratorKind::Cyclic | GeneratorKind::DelayShift)
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = McError;
    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| McError::InvalidArgument(format!("unknown generator kind `{s}`")))
    }
}

/// Input-mask distributions. Every mask is normalized to unit norm after sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Gaussian,
    Uniform,
    SparseGaussian,
    /// Sparse with U(0, 1) nonzero entries.
    SparseUniform,
    Ones,
    /// The first canonical basis vector e₁ (deterministic).
    #[serde(alias = "e1")]
    FirstBasis,
}

impl std::str::FromStr for MaskKind {
    type Err = McError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => MaskKind::Gaussian,
            "uniform" => MaskKind::Uniform,
            "sparse_gaussian" => MaskKind::SparseGaussian,
            "sparse_uniform" => MaskKind::SparseUniform,
            "ones" => MaskKind::Ones,
            "first_basis" | "e1" => MaskKind::FirstBasis,
            _ => return Err(McError::InvalidArgument(format!("unknown mask kind `{s}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub kind: MaskKind,
    #[serde(default = "default_sparsity")]
    pub sparsity: f64,
}

impl MaskSpec {
    pub fn new(kind: MaskKind) -> Self {
        Self { kind, sparsity: default_sparsity() }
    }
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self::new(MaskKind::Gaussian)
    }
}

fn default_sparsity() -> f64 {
    0.1
}

fn default_condition() -> f64 {
    0.7
}

/// Seeded description of one reservoir draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    /// Fraction of nonzero entries for the sparse kinds, in (0, 1].
    #[serde(default = "default_sparsity")]
    pub sparsity: f64,
    /// σ_min/σ_max target for `conditioned_sparse_gaussian`, in (0, 1].
    #[serde(default = "default_condition")]
    pub condition_target: f64,
    /// Target spectral radius in (0, 1). `None` keeps the raw matrix with
    /// circular-law normalization (random kinds) or unit scale (structured
    /// kinds); `delay_shift` must leave it unset.
    #[serde(default)]
    pub rho_target: Option<f64>,
    /// Input mask distribution; `None` means e₁ for the structured kinds
    /// and a unit Gaussian mask otherwise.
    #[serde(default)]
    pub mask: Option<MaskSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, rho_target: Option<f64>, seed: u64) -> Self {
        Self {
            kind,
            n,
            sparsity: default_sparsity(),
            condition_target: default_condition(),
            rho_target,
            mask: None,
            seed,
        }
    }

    pub fn with_mask(mut self, mask: MaskSpec) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn effective_mask(&self) -> MaskSpec {
        self.mask.unwrap_or(match self.kind {
            GeneratorKind::Cyclic | GeneratorKind::DelayShift => MaskSpec::new(MaskKind::FirstBasis),
            _ => MaskSpec::new(MaskKind::Gaussian),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(McError::InvalidArgument(m));
        if self.n == 0 {
            return bad("state dimension must be positive".into());
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad(format!("sparsity {} outside (0, 1]", self.sparsity));
        }
        if !(self.condition_target > 0.0 && self.condition_target <= 1.0) {
            return bad(format!("condition target {} outside (0, 1]", self.condition_target));
        }
        if let Some(m) = &self.mask {
            if !(m.sparsity > 0.0 && m.sparsity <= 1.0) {
                return bad(format!("mask sparsity {} outside (0, 1]", m.sparsity));
            }
        }
        match (self.kind, self.rho_target) {
            (GeneratorKind::DelayShift, Some(r)) => Err(McError::NotRescalable(format!(
                "delay_shift has spectral radius 0 and cannot be rescaled to {r}"
            ))),
            (_, Some(r)) if !(r > 0.0 && r < 1.0) => bad(format!("rho_target {r} outside (0, 1)")),
            _ => Ok(()),
        }
    }
}

/// Provenance carried alongside a system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemMeta {
    pub kind: Option<GeneratorKind>,
    pub seed: Option<u64>,
    pub rho_target: Option<f64>,
}

/// A linear echo state network with one-dimensional input.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearESN {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub zeta: DVector<f64>,
    pub meta: SystemMeta,
}

impl LinearESN {
    pub fn new(a: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(McError::InvalidArgument(format!(
                "reservoir matrix must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if c.len() != n {
            return Err(McError::InvalidArgument(format!(
                "input mask has length {} but N = {n}",
                c.len()
            )));
        }
        Ok(Self { a, c, zeta: DVector::zeros(n), meta: SystemMeta::default() })
    }

    pub fn with_zeta(mut self, zeta: DVector<f64>) -> Result<Self> {
        if zeta.len() != self.n() {
            return Err(McError::InvalidArgument("input shift length mismatch".into()));
        }
        self.zeta = zeta;
        Ok(self)
    }

    /// Same reservoir, different input mask.
    pub fn with_mask(&self, c: DVector<f64>) -> Result<Self> {
        let mut out = LinearESN::new(self.a.clone(), c)?;
        out.zeta = self.zeta.clone();
        out.meta = self.meta.clone();
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.a)
    }

    /// Errors unless ρ(A) < 1.
    pub fn check_esp(&self) -> Result<f64> {
        let rho = self.spectral_radius();
        if rho < 1.0 {
            Ok(rho)
        } else {
            Err(McError::EspViolation { rho })
        }
    }

    /// `(C | AC | … | A^{m-1}C)` by repeated matrix-vector products.
    pub fn krylov_matrix(&self, m: usize) -> DMatrix<f64> {
        let n = self.n();
        let mut k = DMatrix::zeros(n, m);
        let mut col = self.c.clone();
        for j in 0..m {
            k.set_column(j, &col);
            if j + 1 < m {
                col = &self.a * col;
            }
        }
        k
    }

    pub fn to_document(&self) -> SystemDocument {
        SystemDocument {
            n: self.n(),
            rho: self.spectral_radius(),
            kind: self.meta.kind,
            seed: self.meta.seed,
            a: self.a.transpose().iter().copied().collect(),
            c: self.c.iter().copied().collect(),
            zeta: self.zeta.iter().copied().collect(),
        }
    }

    pub fn from_document(doc: &SystemDocument) -> Result<Self> {
        let n = doc.n;
        if doc.a.len() != n * n || doc.c.len() != n || (!doc.zeta.is_empty() && doc.zeta.len() != n) {
            return Err(McError::InvalidArgument("system document has inconsistent dimensions".into()));
        }
        let a = DMatrix::from_row_slice(n, n, &doc.a);
        let mut sys = LinearESN::new(a, DVector::from_column_slice(&doc.c))?;
        if !doc.zeta.is_empty() {
            sys.zeta = DVector::from_column_slice(&doc.zeta);
        }
        sys.meta = SystemMeta { kind: doc.kind, seed: doc.seed, rho_target: None };
        Ok(sys)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

/// JSON form of a system. `A` is stored row-major; floats are written in
/// shortest round-trip decimal, so matrices survive a round trip bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDocument {
    #[serde(rename = "N")]
    pub n: usize,
    pub rho: f64,
    pub kind: Option<GeneratorKind>,
    pub seed: Option<u64>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(default)]
    pub zeta: Vec<f64>,
}

/// How a [`GramSpec`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMethod {
    Lyapunov,
    Eigenbasis,
    TruncatedSeries,
    Sample,
    ClosedForm,
}

/// Stationary state covariance Γ_x and its normalized form G_x = Γ_x / γ(0).
#[derive(Clone, Debug)]
pub struct GramSpec {
    pub gamma_x: DMatrix<f64>,
    pub g_x: DMatrix<f64>,
    pub gamma0: f64,
    pub condition_estimate: f64,
    pub method: GramMethod,
}

impl GramSpec {
    pub fn from_normalized(g_x: DMatrix<f64>, gamma0: f64, method: GramMethod) -> Self {
        let g_x = (&g_x + g_x.transpose()) * 0.5;
        let gamma_x = &g_x * gamma0;
        let condition_estimate = symmetric_condition(&g_x);
        Self { gamma_x, g_x, gamma0, condition_estimate, method }
    }

    /// Eigenvalues of G_x sorted by descending absolute value.
    pub fn eigenvalue_magnitudes(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.g_x.clone().symmetric_eigenvalues().iter().map(|x| x.abs()).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

fn symmetric_condition(g: &DMatrix<f64>) -> f64 {
    let ev = g.clone().symmetric_eigenvalues();
    let max = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn draw_entries(n: usize, rng: &mut ChaCha8Rng, f: impl Fn(&mut ChaCha8Rng) -> f64) -> DMatrix<f64> {
    // row-major fill so the draw order is independent of storage layout
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = f(rng);
        }
    }
    m
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sparse_gaussian(rng: &mut ChaCha8Rng, sparsity: f64) -> f64 {
    let keep = rng.random::<f64>() < sparsity;
    let v = gaussian(rng);
    if keep {
        v
    } else {
        0.0
    }
}

/// Draws a unit-norm input mask of length `n`. Sparse draws that come out
/// all-zero are redrawn from the same stream.
pub fn draw_mask(spec: &MaskSpec, n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let c = DVector::from_fn(n, |i, _| match spec.kind {
            MaskKind::Gaussian => gaussian(rng),
            MaskKind::Uniform => rng.random_range(-1.0..1.0),
            MaskKind::SparseGaussian => sparse_gaussian(rng, spec.sparsity),
            MaskKind::SparseUniform => {
                let keep = rng.random::<f64>() < spec.sparsity;
                let v: f64 = rng.random::<f64>();
                if keep {
                    v
                } else {
                    0.0
                }
            }
            MaskKind::Ones => 1.0,
            MaskKind::FirstBasis => {
                if i == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        });
        let nrm = c.norm();
        if nrm > 0.0 {
            return c / nrm;
        }
    }
}

/// Shift matrix with ones on the subdiagonal.
pub fn shift_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j + 1 { 1.0 } else { 0.0 })
}

/// Cyclic permutation matrix: subdiagonal ones plus the top-right corner.
pub fn cyclic_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j + 1 || (i == 0 && j == n - 1) { 1.0 } else { 0.0 })
}

fn orthogonal_factor(g: DMatrix<f64>) -> DMatrix<f64> {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    // sign fix makes the factor Haar distributed
    for k in 0..q.ncols() {
        if r[(k, k)] < 0.0 {
            let col = -q.column(k);
            q.set_column(k, &col);
        }
    }
    q
}

fn condition_remap(a: DMatrix<f64>, target: f64) -> DMatrix<f64> {
    let (u, s, vt) = linalg::sorted_svd(&a);
    let smax = s[0];
    let smin = *s.last().unwrap();
    let remapped: Vec<f64> = s
        .iter()
        .map(|&x| {
            if smax == smin {
                smax
            } else {
                smax * (target + (1.0 - target) * (x - smin) / (smax - smin))
            }
        })
        .collect();
    u * DMatrix::from_diagonal(&DVector::from_vec(remapped)) * vt
}

/// Returns `(rho_target / ρ(A)) · A`.
pub fn spectral_rescale(a: &DMatrix<f64>, rho_target: f64) -> Result<DMatrix<f64>> {
    if !(rho_target > 0.0 && rho_target < 1.0) {
        return Err(McError::InvalidArgument(format!("rho_target {rho_target} outside (0, 1)")));
    }
    if linalg::structurally_nilpotent(a) {
        return Err(McError::NotRescalable("matrix is nilpotent (acyclic sparsity pattern)".into()));
    }
    let rho = linalg::spectral_radius(a);
    let floor = a.nrows() as f64 * EPS * a.norm();
    if !(rho > floor) || !rho.is_finite() {
        return Err(McError::NotRescalable(format!(
            "spectral radius {rho:e} is numerically zero (nilpotent or zero matrix)"
        )));
    }
    Ok(a * (rho_target / rho))
}

/// Builds a system from a generator spec. Deterministic in `spec.seed`:
/// the reservoir matrix is drawn first (row-major), then the mask.
pub fn generate(spec: &GeneratorSpec) -> Result<LinearESN> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = rng_from_seed(spec.seed);
    let nf = n as f64;
    let raw = match spec.kind {
        GeneratorKind::Gaussian => draw_entries(n, &mut rng, gaussian) / nf.sqrt(),
        GeneratorKind::Uniform => draw_entries(n, &mut rng, |r| r.random_range(-1.0..1.0)) / (nf / 3.0).sqrt(),
        GeneratorKind::SparseGaussian => {
            let s = spec.sparsity;
            draw_entries(n, &mut rng, |r| sparse_gaussian(r, s)) / (s * nf).sqrt()
        }
        GeneratorKind::OrthogonalGaussian => orthogonal_factor(draw_entries(n, &mut rng, gaussian)),
        GeneratorKind::Cyclic => cyclic_matrix(n),
        GeneratorKind::DelayShift => shift_matrix(n),
        GeneratorKind::ConditionedSparseGaussian => {
            let s = spec.sparsity;
            let sparse = draw_entries(n, &mut rng, |r| sparse_gaussian(r, s)) / (s * nf).sqrt();
            condition_remap(sparse, spec.condition_target)
        }
    };
    let a = match (spec.kind, spec.rho_target) {
        (GeneratorKind::Cyclic, Some(r)) | (GeneratorKind::OrthogonalGaussian, Some(r)) => raw * r,
        (_, Some(r)) => spectral_rescale(&raw, r)?,
        (_, None) => raw,
    };
    let c = draw_mask(&spec.effective_mask(), n, &mut rng);
    let mut sys = LinearESN::new(a, c)?;
    sys.meta = SystemMeta { kind: Some(spec.kind), seed: Some(spec.seed), rho_target: spec.rho_target };
    Ok(sys)
}

/// Numerical rank of the Kalman controllability matrix `K_N`, with
/// singular values below `N · eps · σ_max` treated as zero.
pub fn kalman_rank(sys: &LinearESN) -> usize {
    let n = sys.n();
    let k = sys.krylov_matrix(n);
    let sv: Vec<f64> = k.singular_values().iter().copied().collect();
    linalg::numerical_rank(&sv, n, n)
}

/// Stationary state covariance `Γ = A Γ Aᵀ + γ(0) C Cᵀ` by a direct
/// Schur-based Stein solver.
pub fn gram_exact(sys: &LinearESN, gamma0: f64) -> Result<GramSpec> {
    if !(gamma0 > 0.0) {
        return Err(McError::InvalidArgument(format!("input variance {gamma0} must be positive")));
    }
    sys.check_esp()?;
    let q = &sys.c * sys.c.transpose();
    let g = linalg::solve_discrete_lyapunov(&sys.a, &q);
    Ok(GramSpec::from_normalized(g, gamma0, GramMethod::Lyapunov))
}

/// `G_x ≈ Σ_{j<terms} A^j C Cᵀ (A^j)ᵀ`, the truncated-series route.
pub fn gram_series(sys: &LinearESN, gamma0: f64, terms: usize) -> Result<GramSpec> {
    sys.check_esp()?;
    let n = sys.n();
    let mut g = DMatrix::zeros(n, n);
    let mut v = sys.c.clone();
    for _ in 0..terms {
        g.ger(1.0, &v, &v, 1.0);
        v = &sys.a * v;
    }
    Ok(GramSpec::from_normalized(g, gamma0, GramMethod::TruncatedSeries))
}

/// Change of coordinates `x ↦ Γ^{-1/2} x` making the stationary covariance
/// the identity: `A' = Γ^{-1/2} A Γ^{1/2}`, `C' = Γ^{-1/2} C`.
pub fn standardize(sys: &LinearESN, gram: &GramSpec) -> Result<LinearESN> {
    let n = sys.n();
    if gram.gamma_x.nrows() != n {
        return Err(McError::InvalidArgument("Gram dimension does not match system".into()));
    }
    let (half, inv_half, ev) = linalg::sym_sqrt_pair(&gram.gamma_x);
    let max = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let min = ev[0];
    if !(min > n as f64 * EPS * max) {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(McError::StandardizationInfeasible { condition });
    }
    let a = &inv_half * &sys.a * &half;
    let c = &inv_half * &sys.c;
    let mut out = LinearESN::new(a, c)?;
    out.zeta = &inv_half * &sys.zeta;
    out.meta = sys.meta.clone();
    Ok(out)
}
