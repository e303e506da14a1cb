//! Experiment runner behind the `mclab` binary: config loading with echoed
//! defaults, the figure pipelines, method comparison tables, and a run
//! manifest with content hashes of every emitted file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{McError, Result};
use crate::exact::{self, mc_naive, mc_neutral, mc_oracle_cyclic, mc_oracle_delay, MemoryCurve, Method};
use crate::krylov::{self, KrylovSize};
use crate::linalg;
use crate::montecarlo::{self, mc_sample, replicate_samples, simulate};
use crate::reservoir::{
    draw_mask, generate, gram_exact, GeneratorKind, GeneratorSpec, LinearESN, MaskKind, MaskSpec,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::subspace::{mc_osm, mc_osm_plus, osm_columns, OsmResult, Retention};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Fig1Inflation,
    Fig2GramEigs,
    Fig3Squeezing,
    Fig4MaskCompare,
    Fig5MatrixCompare,
    Eigplot,
    Custom,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::Fig1Inflation => "fig1_inflation",
            Experiment::Fig2GramEigs => "fig2_gram_eigs",
            Experiment::Fig3Squeezing => "fig3_squeezing",
            Experiment::Fig4MaskCompare => "fig4_mask_compare",
            Experiment::Fig5MatrixCompare => "fig5_matrix_compare",
            Experiment::Eigplot => "eigplot",
            Experiment::Custom => "custom",
        }
    }

    fn default_kind(self) -> GeneratorKind {
        match self {
            Experiment::Fig1Inflation => GeneratorKind::OrthogonalGaussian,
            Experiment::Fig4MaskCompare => GeneratorKind::SparseGaussian,
            _ => GeneratorKind::Gaussian,
        }
    }
}

/// Generator section of a config file; every field optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGenerator {
    pub kind: Option<GeneratorKind>,
    #[serde(alias = "N")]
    pub n: Option<usize>,
    pub sparsity: Option<f64>,
    pub condition_target: Option<f64>,
    #[serde(alias = "rho")]
    pub rho_target: Option<f64>,
    pub mask: Option<MaskSpec>,
    pub seed: Option<u64>,
}

/// Config file contents before defaults are applied.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub generator: RawGenerator,
    #[serde(rename = "T_grid", default)]
    pub t_grid: Option<Vec<usize>>,
    pub tau_max: Option<usize>,
    pub m: Option<KrylovSize>,
    #[serde(rename = "L", default)]
    pub l: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub washout: Option<usize>,
    pub masks: Option<Vec<MaskKind>>,
    pub kinds: Option<Vec<GeneratorKind>>,
    pub n_grid: Option<Vec<usize>>,
    pub circular_law: Option<bool>,
    pub svg: Option<bool>,
    pub desk: Option<bool>,
}

/// A fully resolved run description. Written back into the manifest so the
/// manifest alone reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub generator: GeneratorSpec,
    #[serde(rename = "T_grid")]
    pub t_grid: Vec<usize>,
    pub tau_max: usize,
    pub m: KrylovSize,
    #[serde(rename = "L")]
    pub l: usize,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub replications: usize,
    pub washout: usize,
    /// Mask distributions compared in `fig4_mask_compare`.
    pub masks: Vec<MaskKind>,
    /// Reservoir kinds swept in `fig2_gram_eigs` and `fig5_matrix_compare`.
    pub kinds: Vec<GeneratorKind>,
    /// State dimensions swept in `fig2_gram_eigs`.
    pub n_grid: Vec<usize>,
    /// `eigplot` only: keep the raw circular-law normalization instead of
    /// rescaling to `rho_target`.
    pub circular_law: bool,
    pub svg: bool,
    pub desk: bool,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub desk: bool,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

const DESK_N: usize = 30;
const DESK_MAX_T: usize = 3000;
const DESK_MAX_L: usize = 100;

fn config_err(msg: impl Into<String>) -> McError {
    McError::Config(msg.into())
}

impl RawConfig {
    pub fn from_str_auto(text: &str, path: &Path) -> Result<Self> {
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        if is_toml {
            toml::from_str(text).map_err(|e| config_err(e.to_string()))
        } else {
            serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_auto(&text, path)
    }
}

impl ExperimentConfig {
    pub fn resolve(raw: RawConfig, ov: &Overrides) -> Result<Self> {
        let exp = raw.experiment;
        let desk = ov.desk || raw.desk.unwrap_or(false);
        let seed = ov
            .seed
            .or(raw.seed)
            .ok_or_else(|| config_err("`seed` is mandatory (in the config or via --seed)"))?;

        let g = raw.generator;
        let kind = g.kind.unwrap_or(exp.default_kind());
        let mut n = g.n.unwrap_or(100);
        if desk {
            n = n.min(DESK_N);
        }
        let circular_law = raw.circular_law.unwrap_or(false);
        let rho_target = if circular_law && exp == Experiment::Eigplot {
            None
        } else if kind == GeneratorKind::DelayShift {
            g.rho_target
        } else {
            Some(g.rho_target.unwrap_or(0.9))
        };
        let default_mask = match exp {
            Experiment::Fig3Squeezing => MaskSpec::new(MaskKind::Ones),
            Experiment::Fig5MatrixCompare => MaskSpec::new(MaskKind::SparseGaussian),
            _ => match kind {
                GeneratorKind::Cyclic | GeneratorKind::DelayShift => MaskSpec::new(MaskKind::FirstBasis),
                _ => MaskSpec::new(MaskKind::Gaussian),
            },
        };
        let mut generator = GeneratorSpec::new(kind, n, rho_target, g.seed.unwrap_or(seed));
        generator.sparsity = g.sparsity.unwrap_or(generator.sparsity);
        generator.condition_target = g.condition_target.unwrap_or(generator.condition_target);
        generator.mask = Some(g.mask.unwrap_or(default_mask));

        let one_and_half = (3 * n).div_ceil(2);
        let tau_max = raw.tau_max.unwrap_or(match exp {
            Experiment::Fig1Inflation => 5 * n,
            Experiment::Fig3Squeezing => 5 * n,
            _ => one_and_half,
        });
        let m = raw.m.unwrap_or(match exp {
            Experiment::Fig3Squeezing => KrylovSize::Fixed(5 * n),
            Experiment::Fig4MaskCompare | Experiment::Fig5MatrixCompare => KrylovSize::Fixed(one_and_half),
            _ => KrylovSize::Auto,
        });
        let mut l = raw.l.unwrap_or(1000);
        let mut t_grid = raw.t_grid.unwrap_or_else(|| match exp {
            Experiment::Fig1Inflation => (1000..=10000).step_by(500).collect(),
            _ => vec![100_000],
        });
        let mut replications = raw.replications.unwrap_or(10);
        let mut n_grid = raw.n_grid.unwrap_or_else(|| vec![50, 150]);
        if desk {
            l = l.min(DESK_MAX_L);
            replications = replications.min(10);
            t_grid.retain(|&t| t <= DESK_MAX_T);
            if t_grid.is_empty() {
                t_grid = match exp {
                    Experiment::Fig1Inflation => vec![1000, 2000, 3000],
                    _ => vec![DESK_MAX_T],
                };
            }
            n_grid = n_grid.iter().map(|&x| x.min(50)).collect();
            n_grid.dedup();
            if n_grid.len() == 1 && n_grid[0] > DESK_N {
                n_grid.insert(0, DESK_N);
            }
        }
        let methods = raw.methods.unwrap_or_else(|| match exp {
            Experiment::Fig1Inflation => vec![Method::Montecarlo],
            Experiment::Fig4MaskCompare | Experiment::Fig5MatrixCompare => {
                vec![Method::Naive, Method::Osm, Method::OsmPlus]
            }
            Experiment::Custom => vec![Method::Naive, Method::EigenNeutral, Method::Osm, Method::OsmPlus, Method::Montecarlo],
            _ => vec![],
        });
        let masks = raw.masks.unwrap_or_else(|| {
            vec![MaskKind::Gaussian, MaskKind::Uniform, MaskKind::SparseGaussian, MaskKind::SparseUniform]
        });
        let kinds = raw.kinds.unwrap_or_else(|| match exp {
            Experiment::Fig2GramEigs => vec![
                GeneratorKind::Gaussian,
                GeneratorKind::Uniform,
                GeneratorKind::SparseGaussian,
                GeneratorKind::OrthogonalGaussian,
                GeneratorKind::Cyclic,
            ],
            _ => vec![
                GeneratorKind::Gaussian,
                GeneratorKind::Uniform,
                GeneratorKind::OrthogonalGaussian,
                GeneratorKind::ConditionedSparseGaussian,
            ],
        });
        let out_dir = ov
            .out_dir
            .clone()
            .or(raw.out_dir)
            .unwrap_or_else(|| PathBuf::from(format!("out/{}", exp.name())));

        let cfg = ExperimentConfig {
            experiment: exp,
            generator,
            t_grid,
            tau_max,
            m,
            l,
            methods,
            out_dir,
            seed,
            replications,
            washout: raw.washout.unwrap_or(0),
            masks,
            kinds,
            n_grid,
            circular_law,
            svg: raw.svg.unwrap_or(false),
            desk,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate().map_err(|e| config_err(e.to_string()))?;
        if self.tau_max == 0 {
            return Err(config_err("tau_max must be positive"));
        }
        if self.l == 0 {
            return Err(config_err("L must be at least 1"));
        }
        if let KrylovSize::Fixed(0) = self.m {
            return Err(config_err("m must be positive"));
        }
        if self.replications == 0 {
            return Err(config_err("replications must be positive"));
        }
        if self.n_grid.contains(&0) {
            return Err(config_err("n_grid entries must be positive"));
        }
        let needs_t = self.experiment == Experiment::Fig1Inflation
            || (self.experiment == Experiment::Custom && self.methods.contains(&Method::Montecarlo));
        if needs_t {
            if self.t_grid.is_empty() {
                return Err(config_err("T_grid must not be empty"));
            }
            if let Some(&t) = self.t_grid.iter().find(|&&t| t <= self.tau_max) {
                return Err(config_err(format!("T = {t} must exceed tau_max = {}", self.tau_max)));
            }
        }
        let needs_methods = matches!(
            self.experiment,
            Experiment::Fig4MaskCompare | Experiment::Fig5MatrixCompare | Experiment::Custom
        );
        if needs_methods && self.methods.is_empty() {
            return Err(config_err("methods must not be empty"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub method: Option<String>,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Partial,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub config: ExperimentConfig,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<OutputRecord>,
    pub failures: Vec<Failure>,
    pub status: RunStatus,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serialized writer for one run: every file goes through here and is hashed.
struct Sink {
    dir: PathBuf,
    outputs: Vec<OutputRecord>,
    stages: Vec<StageTiming>,
    failures: Vec<Failure>,
    svg: bool,
}

impl Sink {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.outputs.push(OutputRecord {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len(),
        });
        Ok(())
    }

    fn write_curve(&mut self, name: &str, curve: &MemoryCurve) -> Result<()> {
        self.write(&format!("{name}.csv"), &curve.to_csv())?;
        let side = serde_json::json!({ "method": curve.method, "total": curve.total, "meta": curve.meta });
        self.write(&format!("{name}.json"), &serde_json::to_string_pretty(&side)?)
    }

    fn write_osm(&mut self, name: &str, res: &OsmResult) -> Result<()> {
        self.write(&format!("{name}.csv"), &res.to_csv())?;
        self.write(&format!("{name}.json"), &serde_json::to_string_pretty(&res.sidecar())?)
    }

    fn fail(&mut self, stage: &str, method: Option<Method>, err: &McError) {
        self.failures.push(Failure {
            stage: stage.to_string(),
            method: method.map(|m| m.name().to_string()),
            message: err.to_string(),
        });
    }

    fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f(self);
        self.stages.push(StageTiming { name: name.to_string(), seconds: t0.elapsed().as_secs_f64() });
        out
    }
}

/// Runs one experiment and writes its data files and `manifest.json` into
/// `config.out_dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut sink = Sink {
        dir: config.out_dir.clone(),
        outputs: Vec::new(),
        stages: Vec::new(),
        failures: Vec::new(),
        svg: config.svg,
    };
    let name = config.experiment.name();
    let result = sink.timed(name, |s| match config.experiment {
        Experiment::Fig1Inflation => fig1(config, s),
        Experiment::Fig2GramEigs => fig2(config, s),
        Experiment::Fig3Squeezing => fig3(config, s),
        Experiment::Fig4MaskCompare => fig4(config, s),
        Experiment::Fig5MatrixCompare => fig5(config, s),
        Experiment::Eigplot => eigplot(config, s),
        Experiment::Custom => custom(config, s),
    });
    if let Err(e) = result {
        sink.fail(name, None, &e);
    }
    let status = if sink.failures.is_empty() {
        RunStatus::Ok
    } else if sink.outputs.is_empty() {
        RunStatus::Failed
    } else {
        RunStatus::Partial
    };
    let manifest = RunManifest {
        software: format!("mclab {VERSION}"),
        config: config.clone(),
        stages: sink.stages,
        outputs: sink.outputs,
        failures: sink.failures,
        status,
    };
    std::fs::write(config.out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn spec_for(config: &ExperimentConfig, kind: GeneratorKind, n: usize, index: u64) -> GeneratorSpec {
    let mut spec = config.generator.clone();
    spec.kind = kind;
    spec.n = n;
    spec.seed = derive_seed(config.seed, config.experiment.name(), index);
    if kind == GeneratorKind::DelayShift {
        spec.rho_target = None;
    } else if spec.rho_target.is_none() {
        spec.rho_target = Some(0.9);
    }
    spec
}

fn fig1(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let sys = montecarlo::regularize(&generate(&config.generator)?)?;
    let n = sys.n();
    let tau_max = config.tau_max;
    let plot_lags = (2 * n).min(tau_max);
    let exact_m = osm_columns(&sys, config.m)?.max(tau_max);
    let exact = mc_osm(&sys, KrylovSize::Fixed(exact_m), Retention::default())?;
    let exact_total: f64 = exact.curve.values[..tau_max].iter().sum();

    let mut curves = String::from("T,tau,mean_mc_hat,se,theoretical_bias,exact_mc\n");
    let mut totals = String::from("T,mean_total,se_total,mean_total_over_n,exact_total\n");
    let mut bars = Vec::new();
    for (i, &t) in config.t_grid.iter().enumerate() {
        let samples = replicate_samples(&sys, t, tau_max, config.replications, derive_seed(config.seed, "fig1", i as u64), config.washout)?;
        let mut cells = Vec::with_capacity(plot_lags);
        for tau in 0..plot_lags {
            let xs: Vec<f64> = samples.iter().map(|s| s.per_lag[tau]).collect();
            let (mean, se) = montecarlo::mean_and_se(&xs);
            cells.push(montecarlo::ReplicationCell {
                t,
                tau,
                mean_mc_hat: mean,
                se,
                theoretical_bias: montecarlo::theoretical_bias(&sys, t, tau).ok(),
                exact_mc: exact.curve.values[tau],
            });
        }
        let body = montecarlo::cells_to_csv(&cells);
        curves.push_str(body.split_once('\n').map_or("", |(_, rest)| rest));
        let tot: Vec<f64> = samples.iter().map(|s| s.total).collect();
        let (mean, se) = montecarlo::mean_and_se(&tot);
        totals.push_str(&format!("{t},{mean},{se},{},{exact_total}\n", mean / n as f64));
        bars.push((t as f64, mean / n as f64));
    }
    sink.write("fig1_curves.csv", &curves)?;
    sink.write("fig1_totals.csv", &totals)?;
    if sink.svg {
        let svg = svg_plot("normalized total MC estimate", "T", &[("MC_hat/N".into(), bars)], false);
        sink.write("fig1_totals.svg", &svg)?;
    }
    Ok(())
}

fn fig2(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let mut csv = String::from("kind,N,index,eigenvalue\n");
    let mut series = Vec::new();
    let mut idx = 0u64;
    for &n in &config.n_grid {
        for &kind in &config.kinds {
            let mut spec = spec_for(config, kind, n, idx);
            idx += 1;
            spec.mask = Some(MaskSpec::new(MaskKind::Gaussian));
            let outcome = generate(&spec).and_then(|sys| gram_exact(&sys, 1.0));
            match outcome {
                Ok(g) => {
                    let ev = g.eigenvalue_magnitudes();
                    for (i, e) in ev.iter().enumerate() {
                        csv.push_str(&format!("{},{n},{},{e}\n", kind.name(), i + 1));
                    }
                    series.push((
                        format!("{} N={n}", kind.name()),
                        ev.iter().enumerate().map(|(i, &e)| ((i + 1) as f64, e)).collect(),
                    ));
                }
                Err(e) => sink.fail(&format!("fig2 {} N={n}", kind.name()), None, &e),
            }
        }
    }
    sink.write("fig2_gram_eigs.csv", &csv)?;
    if sink.svg {
        sink.write("fig2_gram_eigs.svg", &svg_plot("|eigenvalues| of G_x", "index", &series, true))?;
    }
    Ok(())
}

fn fig3(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let sys = generate(&config.generator)?;
    let m = krylov::resolve_size(&sys, config.m)?;
    let rows = krylov::squeezing_table(&sys, m);
    sink.write("fig3_squeezing.csv", &krylov::squeezing_csv(&rows))?;
    if sink.svg {
        let col = |f: fn(&krylov::SqueezingRow) -> f64| rows.iter().map(|r| (r.j as f64, f(r))).collect();
        let series = vec![
            ("theta_svd".to_string(), col(|r| r.theta_svd)),
            ("theta_arnoldi".to_string(), col(|r| r.theta_arnoldi)),
            ("kappa".to_string(), col(|r| r.kappa)),
            ("rho^j".to_string(), col(|r| r.rho_pow_j)),
        ];
        sink.write("fig3_squeezing.svg", &svg_plot("Krylov squeezing", "j", &series, true))?;
    }
    Ok(())
}

/// naive / osm / osm_plus for one reservoir and one mask distribution.
fn panel(config: &ExperimentConfig, sink: &mut Sink, prefix: &str, sys: &LinearESN, mask: &MaskSpec, seed: u64) -> Result<()> {
    let mut series = Vec::new();
    for &method in &config.methods {
        let out = match method {
            Method::Naive => gram_exact(sys, 1.0)
                .and_then(|g| mc_naive(sys, config.tau_max, &g))
                .and_then(|c| sink.write_curve(&format!("{prefix}_naive"), &c).map(|_| c.values)),
            Method::EigenNeutral => mc_neutral(&sys.a, config.tau_max)
                .and_then(|c| sink.write_curve(&format!("{prefix}_eigen_neutral"), &c).map(|_| c.values)),
            Method::Osm => mc_osm(sys, config.m, Retention::default())
                .and_then(|r| sink.write_osm(&format!("{prefix}_osm"), &r).map(|_| r.curve.values)),
            Method::OsmPlus => mc_osm_plus(&sys.a, mask, config.m, config.l, seed, Retention::default())
                .and_then(|r| sink.write_osm(&format!("{prefix}_osm_plus"), &r).map(|_| r.curve.values)),
            other => Err(McError::InvalidArgument(format!("method {} is not part of this experiment", other.name()))),
        };
        match out {
            Ok(v) => series.push((method.name().to_string(), v.iter().enumerate().map(|(t, &x)| (t as f64, x)).collect())),
            Err(e) => sink.fail(prefix, Some(method), &e),
        }
    }
    if sink.svg && !series.is_empty() {
        sink.write(&format!("{prefix}.svg"), &svg_plot(prefix, "tau", &series, false))?;
    }
    Ok(())
}

fn mask_name(kind: MaskKind) -> &'static str {
    match kind {
        MaskKind::Gaussian => "gaussian",
        MaskKind::Uniform => "uniform",
        MaskKind::SparseGaussian => "sparse_gaussian",
        MaskKind::SparseUniform => "sparse_uniform",
        MaskKind::Ones => "ones",
        MaskKind::FirstBasis => "first_basis",
    }
}

fn fig4(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let base = generate(&config.generator)?;
    for (i, &mk) in config.masks.iter().enumerate() {
        let mask = MaskSpec { kind: mk, sparsity: config.generator.sparsity };
        let seed = derive_seed(config.seed, "fig4_mask", i as u64);
        let c = draw_mask(&mask, base.n(), &mut rng_from_seed(seed));
        let sys = base.with_mask(c)?;
        panel(config, sink, &format!("fig4_{}", mask_name(mk)), &sys, &mask, seed)?;
    }
    Ok(())
}

fn fig5(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let mask = config.generator.effective_mask();
    for (i, &kind) in config.kinds.iter().enumerate() {
        let spec = spec_for(config, kind, config.generator.n, i as u64);
        match generate(&spec) {
            Ok(sys) => panel(config, sink, &format!("fig5_{}", kind.name()), &sys, &mask, spec.seed)?,
            Err(e) => sink.fail(&format!("fig5 {}", kind.name()), None, &e),
        }
    }
    Ok(())
}

/// Eigenvalues of the generated reservoir as `re,im` rows.
pub fn eigen_csv(sys: &LinearESN) -> String {
    let mut s = String::from("re,im\n");
    for z in linalg::eigenvalues(&sys.a) {
        s.push_str(&format!("{},{}\n", z.re, z.im));
    }
    s
}

fn eigplot(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let mut spec = config.generator.clone();
    if config.circular_law {
        spec.rho_target = None;
    }
    let sys = generate(&spec)?;
    sink.write(&format!("eigplot_{}.csv", spec.kind.name()), &eigen_csv(&sys))?;
    if sink.svg {
        let pts: Vec<(f64, f64)> = linalg::eigenvalues(&sys.a).iter().map(|z| (z.re, z.im)).collect();
        sink.write(&format!("eigplot_{}.svg", spec.kind.name()), &svg_scatter(&pts))?;
    }
    Ok(())
}

fn custom(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    let sys = generate(&config.generator)?;
    let opts = CompareOptions {
        m: config.m,
        l: config.l,
        seed: config.seed,
        t: config.t_grid.first().copied().unwrap_or(100_000),
        mask: config.generator.effective_mask(),
    };
    let table = compare_methods(&sys, config.tau_max, &config.methods, &opts)?;
    for (method, col) in &table.columns {
        if let Err(msg) = col {
            sink.failures.push(Failure { stage: "custom".into(), method: Some(method.name().into()), message: msg.clone() });
        }
    }
    if table.columns.iter().all(|(_, c)| c.is_err()) {
        return Ok(());
    }
    sink.write("custom_compare.csv", &table.to_csv())
}

#[derive(Clone, Debug)]
pub struct CompareOptions {
    pub m: KrylovSize,
    pub l: usize,
    pub seed: u64,
    /// Sample length for the Monte Carlo column.
    pub t: usize,
    /// Mask distribution resampled by OSM+.
    pub mask: MaskSpec,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { m: KrylovSize::Auto, l: 1000, seed: 0, t: 100_000, mask: MaskSpec::default() }
    }
}

/// Per-lag capacities by several methods; failed methods keep their error.
#[derive(Clone, Debug)]
pub struct CompareTable {
    pub tau_max: usize,
    pub columns: Vec<(Method, std::result::Result<Vec<f64>, String>)>,
    pub oracle: Option<Vec<f64>>,
}

impl CompareTable {
    pub fn column(&self, m: Method) -> Option<&[f64]> {
        self.columns.iter().find(|(k, _)| *k == m).and_then(|(_, c)| c.as_deref().ok())
    }

    pub fn total(&self, m: Method) -> Option<f64> {
        self.column(m).map(|v| v.iter().sum())
    }

    /// One row per lag, then a `total` row; failed methods leave empty cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau");
        for (m, _) in &self.columns {
            s.push(',');
            s.push_str(m.name());
        }
        if self.oracle.is_some() {
            s.push_str(",oracle");
        }
        s.push('\n');
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for t in 0..self.tau_max {
            s.push_str(&t.to_string());
            for (_, c) in &self.columns {
                s.push(',');
                s.push_str(&cell(c.as_ref().ok().map(|v| v[t])));
            }
            if let Some(o) = &self.oracle {
                s.push(',');
                s.push_str(&o[t].to_string());
            }
            s.push('\n');
        }
        s.push_str("total");
        for (_, c) in &self.columns {
            s.push(',');
            s.push_str(&cell(c.as_ref().ok().map(|v| v.iter().sum())));
        }
        if let Some(o) = &self.oracle {
            s.push(',');
            s.push_str(&o.iter().sum::<f64>().to_string());
        }
        s.push('\n');
        s
    }
}

fn fit(mut v: Vec<f64>, len: usize) -> Vec<f64> {
    v.resize(len, 0.0);
    v
}

/// Closed-form curve when `sys` is a generated cyclic or delay reservoir
/// driven through `e₁`.
pub fn oracle_for(sys: &LinearESN, tau_max: usize) -> Option<Vec<f64>> {
    let e1 = sys.c[0] == 1.0 && sys.c.iter().skip(1).all(|&x| x == 0.0);
    if !e1 {
        return None;
    }
    let n = sys.n();
    match sys.meta.kind? {
        GeneratorKind::DelayShift => Some((0..tau_max).map(|t| mc_oracle_delay(n, t)).collect()),
        GeneratorKind::Cyclic => {
            let rho = sys.meta.rho_target.unwrap_or(1.0);
            (rho < 1.0).then(|| (0..tau_max).map(|t| mc_oracle_cyclic(n, rho, t)).collect())
        }
        _ => None,
    }
}

pub fn compare_methods(sys: &LinearESN, tau_max: usize, methods: &[Method], opts: &CompareOptions) -> Result<CompareTable> {
    if methods.is_empty() {
        return Err(McError::InvalidArgument("no methods requested".into()));
    }
    let columns = methods
        .iter()
        .map(|&method| {
            let out: Result<Vec<f64>> = match method {
                Method::Naive => gram_exact(sys, 1.0).and_then(|g| mc_naive(sys, tau_max, &g)).map(|c| c.values),
                Method::EigenNeutral => mc_neutral(&sys.a, tau_max).map(|c| c.values),
                Method::Osm => mc_osm(sys, opts.m, Retention::default()).map(|r| fit(r.curve.values, tau_max)),
                Method::OsmPlus => mc_osm_plus(&sys.a, &opts.mask, opts.m, opts.l, opts.seed, Retention::default())
                    .map(|r| fit(r.curve.values, tau_max)),
                Method::Montecarlo => {
                    if opts.t <= tau_max {
                        Err(McError::InvalidArgument(format!("T = {} must exceed tau_max = {tau_max}", opts.t)))
                    } else {
                        montecarlo::regularize(sys)
                            .and_then(|reg| simulate(&reg, opts.t, derive_seed(opts.seed, "montecarlo", 0), 0))
                            .and_then(|tr| mc_sample(&tr, tau_max))
                            .map(|s| s.per_lag)
                    }
                }
                Method::Stationary => exact::EigenData::of_system(sys)
                    .and_then(|eig| exact::mc_stationary(sys, &eig, &exact::WhiteNoise { var: 1.0 }, tau_max, 1e-12))
                    .map(|c| c.values),
                Method::Oracle => oracle_for(sys, tau_max)
                    .ok_or_else(|| McError::InvalidArgument("no closed form for this system".into())),
            };
            (method, out.map_err(|e| e.to_string()))
        })
        .collect();
    Ok(CompareTable { tau_max, columns, oracle: oracle_for(sys, tau_max) })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Self-contained line chart; non-positive values are skipped on a log axis.
pub fn svg_plot(title: &str, xlabel: &str, series: &[(String, Vec<(f64, f64)>)], log_y: bool) -> String {
    let (w, h, pad) = (720.0, 440.0, 60.0);
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, s)| s.iter().filter(|(_, y)| y.is_finite() && (!log_y || *y > 0.0)).map(|&(x, y)| (x, ty(y))).collect())
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"30\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{xlabel}</text>\n",
        w - 2.0 * pad,
        h - 2.0 * pad,
        w / 2.0,
        w / 2.0,
        h - 20.0
    );
    let fmt_y = |y: f64| if log_y { format!("1e{y:.0}") } else { format!("{y:.3}") };
    s.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", pad - 4.0, h - pad, fmt_y(y0)));
    s.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", pad - 4.0, pad + 10.0, fmt_y(y1)));
    s.push_str(&format!("<text x=\"{pad}\" y=\"{}\">{x0}</text>\n", h - pad + 16.0));
    s.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{x1}</text>\n", w - pad, h - pad + 16.0));
    for (i, ((name, _), p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let line: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        s.push_str(&format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", line.join(" ")));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>\n",
            w - pad - 150.0,
            pad + 16.0 * (i as f64 + 1.0)
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Eigenvalue scatter with the unit circle.
pub fn svg_scatter(points: &[(f64, f64)]) -> String {
    let (size, r) = (440.0, 180.0);
    let c = size / 2.0;
    let scale = points.iter().fold(1.0f64, |m, &(x, y)| m.max(x.abs()).max(y.abs()));
    let k = r / scale;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <circle cx=\"{c}\" cy=\"{c}\" r=\"{}\" fill=\"none\" stroke=\"gray\"/>\n",
        k
    );
    for &(x, y) in points {
        s.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#1f77b4\"/>\n", c + k * x, c - k * y));
    }
    s.push_str("</svg>\n");
    s
}
