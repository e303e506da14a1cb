//! Simulation of white-noise driven trajectories and the plug-in sample
//! estimator of the memory capacity, with its exact finite-sample bias.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{McError, Result};
use crate::reservoir::{gram_exact, standardize, LinearESN};
use crate::rng::{derive_seed, rng_from_seed};

/// Input draw and states; row `t` of `x` is the state after input `z[t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub z: Vec<f64>,
    pub x: DMatrix<f64>,
    pub washout: usize,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Runs `T` steps from `x_0 = 0` on i.i.d. N(0, 1) inputs drawn from `seed`
/// and drops the first `washout` steps from both `z` and `X`.
pub fn simulate(sys: &LinearESN, t: usize, seed: u64, washout: usize) -> Result<Trajectory> {
    let mut rng = rng_from_seed(seed);
    let z: Vec<f64> = (0..t).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut traj = simulate_with_input(sys, &z, washout)?;
    traj.seed = seed;
    Ok(traj)
}

/// Same recursion driven by a caller-supplied input sequence.
pub fn simulate_with_input(sys: &LinearESN, z: &[f64], washout: usize) -> Result<Trajectory> {
    sys.check_esp()?;
    let t = z.len();
    if washout >= t {
        return Err(McError::InvalidArgument(format!("washout {washout} must be below T = {t}")));
    }
    let n = sys.n();
    let kept = t - washout;
    let mut x = DMatrix::zeros(kept, n);
    let mut state = DVector::zeros(n);
    for (step, &zt) in z.iter().enumerate() {
        let mut next = &sys.a * &state;
        next.axpy(zt, &sys.c, 1.0);
        next += &sys.zeta;
        state = next;
        if step >= washout {
            x.set_row(step - washout, &state.transpose());
        }
    }
    Ok(Trajectory { z: z[washout..].to_vec(), x, washout, seed: 0 })
}

/// `γ̂(τ) = (1/(T − τ)) Σ_{t ≥ τ} x_t z_{t−τ}`.
pub fn sample_cov(traj: &Trajectory, tau: usize) -> Result<DVector<f64>> {
    let t = traj.len();
    if tau >= t {
        return Err(McError::InvalidArgument(format!("lag {tau} must be below T = {t}")));
    }
    let zs = &traj.z[..t - tau];
    let denom = (t - tau) as f64;
    Ok(DVector::from_fn(traj.x.ncols(), |i, _| {
        let col = &traj.x.column(i);
        let xs = &col.as_slice()[tau..];
        xs.iter().zip(zs).map(|(a, b)| a * b).sum::<f64>() / denom
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMC {
    pub per_lag: Vec<f64>,
    /// Unnormalized sum over lags, comparable with N.
    pub total: f64,
    /// `total / τ_max`.
    pub mean_per_lag: f64,
    pub t: usize,
    pub tau_max: usize,
}

/// `MĈ_τ = ‖γ̂(τ)‖²` for `τ < τ_max`.
pub fn mc_sample(traj: &Trajectory, tau_max: usize) -> Result<SampleMC> {
    if tau_max >= traj.len() {
        return Err(McError::InvalidArgument(format!(
            "tau_max {tau_max} must be below T = {}",
            traj.len()
        )));
    }
    let per_lag = (0..tau_max)
        .map(|tau| sample_cov(traj, tau).map(|g| g.norm_squared()))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = per_lag.iter().sum();
    Ok(SampleMC {
        mean_per_lag: if tau_max > 0 { total / tau_max as f64 } else { 0.0 },
        per_lag,
        total,
        t: traj.len(),
        tau_max,
    })
}

fn regular_cross_covariances(sys: &LinearESN, count: usize) -> Result<Vec<DVector<f64>>> {
    let g = gram_exact(sys, 1.0)?;
    let deviation = (&g.g_x - DMatrix::identity(sys.n(), sys.n())).amax();
    if deviation > 1e-6 {
        return Err(McError::NotRegular { deviation });
    }
    let mut out = Vec::with_capacity(count);
    let mut v = sys.c.clone();
    for _ in 0..count {
        out.push(v.clone());
        v = &sys.a * v;
    }
    Ok(out)
}

/// Bias of `MĈ_τ(T)` for a regular system under i.i.d. N(0, 1) input, in the
/// published form `N/(T−τ) + (2/(T−τ)) Σ_{j=0}^{τ} γ(j)ᵀγ(2τ−j)` with
/// `γ(j) = A^j C`.
pub fn theoretical_bias(sys: &LinearESN, t: usize, tau: usize) -> Result<f64> {
    if tau >= t {
        return Err(McError::InvalidArgument("lag must be below T".into()));
    }
    let g = regular_cross_covariances(sys, 2 * tau + 1)?;
    let n = (t - tau) as f64;
    let cross: f64 = (0..=tau).map(|j| g[j].dot(&g[2 * tau - j])).sum();
    Ok(sys.n() as f64 / n + 2.0 * cross / n)
}

/// Same bias with the cross term summed over the full range
/// `(1/(T−τ)) Σ_{j=0}^{2τ} γ(j)ᵀγ(2τ−j)`, which is what a direct fourth-moment
/// expansion of `E‖γ̂(τ)‖²` gives. Differs from [`theoretical_bias`] by the
/// `j = τ` term.
pub fn theoretical_bias_full_sum(sys: &LinearESN, t: usize, tau: usize) -> Result<f64> {
    if tau >= t {
        return Err(McError::InvalidArgument("lag must be below T".into()));
    }
    let g = regular_cross_covariances(sys, 2 * tau + 1)?;
    let n = (t - tau) as f64;
    let cross: f64 = (0..=2 * tau).map(|j| g[j].dot(&g[2 * tau - j])).sum();
    Ok(sys.n() as f64 / n + cross / n)
}

/// `reps` independent estimates, replicate `r` seeded by
/// `derive_seed(root_seed, "mc_replication", r)`. Results are ordered by `r`.
pub fn replicate_samples(
    sys: &LinearESN,
    t: usize,
    tau_max: usize,
    reps: usize,
    root_seed: u64,
    washout: usize,
) -> Result<Vec<SampleMC>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let traj = simulate(sys, t + washout, derive_seed(root_seed, "mc_replication", r), washout)?;
            mc_sample(&traj, tau_max)
        })
        .collect()
}

/// Standardized copy of `sys`, the form the plug-in estimator assumes.
pub fn regularize(sys: &LinearESN) -> Result<LinearESN> {
    standardize(sys, &gram_exact(sys, 1.0)?)
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationCell {
    pub t: usize,
    pub tau: usize,
    pub mean_mc_hat: f64,
    pub se: f64,
    /// `None` when the system is not regular.
    pub theoretical_bias: Option<f64>,
    pub exact_mc: f64,
}

/// Replication mean and standard error of `MĈ_τ(T)` for each `τ` in `taus`,
/// alongside the exact capacity `exact[τ]` (zero past the end of `exact`).
pub fn replication_study(
    sys: &LinearESN,
    t: usize,
    taus: &[usize],
    reps: usize,
    root_seed: u64,
    exact: &[f64],
) -> Result<Vec<ReplicationCell>> {
    let tau_max = taus.iter().copied().max().map_or(0, |m| m + 1);
    let samples = replicate_samples(sys, t, tau_max, reps, root_seed, 0)?;
    taus.iter()
        .map(|&tau| {
            let xs: Vec<f64> = samples.iter().map(|s| s.per_lag[tau]).collect();
            let (mean, se) = mean_and_se(&xs);
            let bias = match theoretical_bias(sys, t, tau) {
                Ok(b) => Some(b),
                Err(McError::NotRegular { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(ReplicationCell {
                t,
                tau,
                mean_mc_hat: mean,
                se,
                theoretical_bias: bias,
                exact_mc: exact.get(tau).copied().unwrap_or(0.0),
            })
        })
        .collect()
}

pub fn cells_to_csv(cells: &[ReplicationCell]) -> String {
    let mut s = String::from("T,tau,mean_mc_hat,se,theoretical_bias,exact_mc\n");
    for c in cells {
        let bias = c.theoretical_bias.map_or_else(|| "NaN".to_string(), |b| b.to_string());
        s.push_str(&format!("{},{},{},{},{},{}\n", c.t, c.tau, c.mean_mc_hat, c.se, bias, c.exact_mc));
    }
    s
}
