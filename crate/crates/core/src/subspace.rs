//! Orthogonalized subspace method: `MC_τ` read off the diagonal of the
//! projection `W Wᵀ` built from the right singular vectors of `K_m`, and
//! its mask-averaged variant OSM+.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{McError, Result};
use crate::exact::{CurveMeta, MemoryCurve, Method};
use crate::krylov::{self, KrylovSize};
use crate::linalg;
use crate::reservoir::{draw_mask, LinearESN, MaskSpec};
use crate::rng::{derive_seed, rng_from_seed};

/// How many singular directions of `K_m` enter the projection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    /// Dimension of the Krylov space found by Arnoldi breakdown.
    #[default]
    KrylovDimension,
    /// Directions with `σ > max(N, m) · eps · σ_max`.
    Threshold,
    /// Every nonzero singular direction.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OsmResult {
    pub curve: MemoryCurve,
    /// For OSM+, the smallest retained rank over all masks.
    pub retained_rank: usize,
    pub m: usize,
    pub l: usize,
    /// Per-lag 5% and 95% quantiles across masks (OSM+ only, empty otherwise).
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
}

impl OsmResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,mc_mean,mc_p05,mc_p95\n");
        for (t, v) in self.curve.values.iter().enumerate() {
            let lo = self.band_lo.get(t).unwrap_or(v);
            let hi = self.band_hi.get(t).unwrap_or(v);
            s.push_str(&format!("{t},{v},{lo},{hi}\n"));
        }
        s
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.curve.method,
            "total": self.curve.total,
            "retained_rank": self.retained_rank,
            "m": self.m,
            "L": self.l,
            "seeds": self.curve.meta.seeds,
            "meta": self.curve.meta,
        })
    }

    /// Writes the CSV to `path` and the sidecar next to it with a `.json` extension.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&self.sidecar())?)?;
        Ok(())
    }
}

/// `m` for the subspace methods: explicit, or the automatic truncation
/// point but never fewer than `⌈1.5 N⌉` columns.
pub fn osm_columns(sys: &LinearESN, size: KrylovSize) -> Result<usize> {
    let m = match size {
        KrylovSize::Fixed(m) => m,
        KrylovSize::Auto => krylov::auto_truncation(sys)?.max((3 * sys.n()).div_ceil(2)),
    };
    if m == 0 {
        return Err(McError::InvalidArgument("Krylov matrix needs at least one column".into()));
    }
    Ok(m)
}

/// Right singular vectors of `k` as columns, ordered by descending σ.
fn right_factor(k: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let svd = k.clone().svd(false, true);
    let vt = svd.v_t.expect("requested Vᵀ");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let w = DMatrix::from_fn(vt.ncols(), order.len(), |t, i| vt[(order[i], t)]);
    (order.iter().map(|&i| sv[i]).collect(), w)
}

fn osm_values(sys: &LinearESN, m: usize, retention: Retention) -> (Vec<f64>, usize) {
    let n = sys.n();
    let k = sys.krylov_matrix(m);
    let (sigma, w) = right_factor(&k);
    let r = match retention {
        Retention::KrylovDimension => krylov::krylov_dimension(sys, m),
        Retention::Threshold => linalg::numerical_rank(&sigma, n, m),
        Retention::Full => sigma.iter().filter(|&&s| s > 0.0).count(),
    }
    .min(sigma.len());
    let values = (0..m)
        .map(|t| (0..r).map(|i| w[(t, i)] * w[(t, i)]).sum())
        .collect();
    (values, r)
}

/// Plain OSM: `MC_τ = Σ_{i<r} W[τ, i]²`, where row `τ` of `W` belongs to
/// Krylov column `A^τ C`. The total equals the retained rank `r`.
pub fn mc_osm(sys: &LinearESN, size: KrylovSize, retention: Retention) -> Result<OsmResult> {
    let rho = sys.check_esp()?;
    if sys.c.iter().all(|&x| x == 0.0) {
        return Err(McError::InvalidArgument("input mask is zero".into()));
    }
    let m = osm_columns(sys, size)?;
    let (values, r) = osm_values(sys, m, retention);
    let meta = CurveMeta { n: sys.n(), rho, tau_max: m, seeds: sys.meta.seed.into_iter().collect(), ..Default::default() };
    Ok(OsmResult {
        curve: MemoryCurve::new(values, Method::Osm, meta),
        retained_rank: r,
        m,
        l: 1,
        band_lo: Vec::new(),
        band_hi: Vec::new(),
    })
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// OSM+: averages OSM over `l` unit-norm masks drawn from `mask`. Mask `ℓ`
/// is drawn from the stream `derive_seed(seed, "osm_plus_mask", ℓ)`. With
/// `KrylovSize::Auto`, `m` is resolved once from the first mask so every
/// curve has the same length.
pub fn mc_osm_plus(
    a: &DMatrix<f64>,
    mask: &MaskSpec,
    size: KrylovSize,
    l: usize,
    seed: u64,
    retention: Retention,
) -> Result<OsmResult> {
    if l == 0 {
        return Err(McError::InvalidArgument("OSM+ needs at least one mask (L ≥ 1)".into()));
    }
    let n = a.nrows();
    let draw = |idx: usize| {
        let mut rng = rng_from_seed(derive_seed(seed, "osm_plus_mask", idx as u64));
        draw_mask(mask, n, &mut rng)
    };
    let first = LinearESN::new(a.clone(), draw(0))?;
    let rho = first.check_esp()?;
    let m = osm_columns(&first, size)?;

    let runs: Vec<(Vec<f64>, usize)> = (0..l)
        .into_par_iter()
        .map(|idx| {
            let sys = LinearESN::new(a.clone(), draw(idx))?;
            Ok(osm_values(&sys, m, retention))
        })
        .collect::<Result<_>>()?;

    let mut mean = vec![0.0; m];
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];
    let mut column = vec![0.0; l];
    for t in 0..m {
        for (idx, (vals, _)) in runs.iter().enumerate() {
            column[idx] = vals[t];
        }
        mean[t] = column.iter().sum::<f64>() / l as f64;
        column.sort_by(f64::total_cmp);
        lo[t] = quantile_sorted(&column, 0.05);
        hi[t] = quantile_sorted(&column, 0.95);
    }
    let retained_rank = runs.iter().map(|(_, r)| *r).min().unwrap_or(0);
    let meta = CurveMeta { n, rho, tau_max: m, seeds: vec![seed], ..Default::default() };
    Ok(OsmResult {
        curve: MemoryCurve::new(mean, Method::OsmPlus, meta),
        retained_rank,
        m,
        l,
        band_lo: lo,
        band_hi: hi,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub max_uptick: f64,
    /// Lags `τ + 1` at which the curve rose by more than 1e-6.
    pub uptick_lags: Vec<usize>,
}

pub fn monotonicity_report(curve: &MemoryCurve) -> MonotonicityReport {
    let mut max_uptick = 0.0f64;
    let mut uptick_lags = Vec::new();
    for (t, w) in curve.values.windows(2).enumerate() {
        let up = w[1] - w[0];
        max_uptick = max_uptick.max(up);
        if up > 1e-6 {
            uptick_lags.push(t + 1);
        }
    }
    MonotonicityReport { max_uptick, uptick_lags }
}
