//! TOML experiment configuration.
//!
//! ```toml
//! task = "descend"
//! seed = 7
//!
//! [plant]
//! source = "mass-spring"
//! masses = 10
//! q = { identity_plus = [[1, 100.0]] }
//! r = { identity_plus = [[4, 1000.0]] }
//!
//! [descend]
//! max_iters = 50000
//! target_rel_err = 1e-6
//! ```
//!
//! Matrices are `"identity"`, `{ identity_plus = [[i, w], …] }` (1-based),
//! `{ rows = [[…], …] }` or `{ csv = "path" }` relative to the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plants::{make_mass_spring, MassSpringSpec};
use crate::lqr_core::{initial_stabilizing_gain, solve_riccati_kleinman, Plant};
use crate::lyap_kernel::Mat;
use crate::optimizers::{Preconditioner, StepRule};
use crate::sim_engine::{InitialDist, Integrator, Quadrature, RolloutConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Task {
    Solve,
    GradCheck,
    Flow,
    Descend,
    DescendY,
    RandomSearch,
    BiasSweep,
    Correlation,
    Certify,
    NonconvexDemo,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Solve => "solve",
            Task::GradCheck => "grad-check",
            Task::Flow => "flow",
            Task::Descend => "descend",
            Task::DescendY => "descend-y",
            Task::RandomSearch => "random-search",
            Task::BiasSweep => "bias-sweep",
            Task::Correlation => "correlation",
            Task::Certify => "certify",
            Task::NonconvexDemo => "nonconvex-demo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    IdentityPlus { identity_plus: Vec<(usize, f64)> },
    Rows { rows: Vec<Vec<f64>> },
    Csv { csv: PathBuf },
}

impl MatrixSpec {
    pub fn identity() -> Self {
        MatrixSpec::Named("identity".into())
    }

    /// Resolves to a matrix; `dim` sizes the identity forms.
    pub fn resolve(&self, base: &Path, dim: Option<usize>, what: &str) -> Result<Mat, String> {
        let need_dim = || dim.ok_or_else(|| format!("{what}: identity needs a known dimension"));
        match self {
            MatrixSpec::Named(name) if name == "identity" => {
                let n = need_dim()?;
                Ok(Mat::identity(n, n))
            }
            MatrixSpec::Named(name) if name == "zero" => {
                Err(format!("{what}: \"zero\" is only valid for gains"))
            }
            MatrixSpec::Named(other) => Err(format!("{what}: unknown matrix name {other:?}")),
            MatrixSpec::IdentityPlus { identity_plus } => {
                let n = need_dim()?;
                let mut m = Mat::identity(n, n);
                for &(i, w) in identity_plus {
                    if i == 0 || i > n {
                        return Err(format!("{what}: index {i} outside 1..={n}"));
                    }
                    m[(i - 1, i - 1)] += w;
                }
                Ok(m)
            }
            MatrixSpec::Rows { rows } => rows_to_mat(rows, what),
            MatrixSpec::Csv { csv } => {
                let path = if csv.is_absolute() { csv.clone() } else { base.join(csv) };
                let mut reader = csv::ReaderBuilder::new()
                    .has_headers(false)
                    .trim(csv::Trim::All)
                    .from_path(&path)
                    .map_err(|e| format!("{what}: cannot read {}: {e}", path.display()))?;
                let mut rows = Vec::new();
                for rec in reader.records() {
                    let rec = rec.map_err(|e| format!("{what}: {e}"))?;
                    let row = rec
                        .iter()
                        .map(|v| v.parse::<f64>().map_err(|e| format!("{what}: entry {v:?}: {e}")))
                        .collect::<Result<Vec<_>, _>>()?;
                    rows.push(row);
                }
                rows_to_mat(&rows, what)
            }
        }
    }
}

fn rows_to_mat(rows: &[Vec<f64>], what: &str) -> Result<Mat, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(format!("{what}: matrix rows must be nonempty and of equal length"));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn identity_spec() -> MatrixSpec {
    MatrixSpec::identity()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantSource {
    MassSpring {
        masses: usize,
        #[serde(default = "identity_spec")]
        q: MatrixSpec,
        #[serde(default = "identity_spec")]
        r: MatrixSpec,
        #[serde(default = "identity_spec")]
        omega: MatrixSpec,
    },
    Scalar {
        a: f64,
        b: f64,
        q: f64,
        r: f64,
        omega: f64,
    },
    Explicit {
        a: MatrixSpec,
        b: MatrixSpec,
        #[serde(default = "identity_spec")]
        q: MatrixSpec,
        #[serde(default = "identity_spec")]
        r: MatrixSpec,
        #[serde(default = "identity_spec")]
        omega: MatrixSpec,
    },
    /// The two-state plant with a nonconvex cost segment.
    Nonconvex,
}

impl PlantSource {
    pub fn build(&self, base: &Path) -> Result<Plant, String> {
        let plant = match self {
            PlantSource::MassSpring { masses, q, r, omega } => {
                let n = 2 * masses;
                let spec = MassSpringSpec {
                    masses: *masses,
                    q: q.resolve(base, Some(n), "plant.q")?,
                    r: r.resolve(base, Some(*masses), "plant.r")?,
                    omega: omega.resolve(base, Some(n), "plant.omega")?,
                };
                make_mass_spring(&spec)
            }
            PlantSource::Scalar { a, b, q, r, omega } => Plant::scalar(*a, *b, *q, *r, *omega),
            PlantSource::Explicit { a, b, q, r, omega } => {
                let a = a.resolve(base, None, "plant.a")?;
                let b = b.resolve(base, None, "plant.b")?;
                let (n, m) = (a.nrows(), b.ncols());
                Plant::new(
                    a,
                    b,
                    q.resolve(base, Some(n), "plant.q")?,
                    r.resolve(base, Some(m), "plant.r")?,
                    omega.resolve(base, Some(n), "plant.omega")?,
                )
            }
            PlantSource::Nonconvex => Ok(super::plants::nonconvex_plant()),
        };
        plant.map_err(|e| format!("plant: {e}"))
    }

    /// The same plant with every matrix inlined.
    pub fn inlined(plant: &Plant) -> Self {
        let rows = |m: &Mat| MatrixSpec::Rows { rows: mat_to_rows(m) };
        PlantSource::Explicit { a: rows(&plant.a), b: rows(&plant.b), q: rows(&plant.q), r: rows(&plant.r), omega: rows(&plant.omega) }
    }
}

/// Initial gain: `"bootstrap"` (0 when `A` is Hurwitz), `"zero"`, `"optimal"`, or a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GainSpec(pub MatrixSpec);

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec(MatrixSpec::Named("bootstrap".into()))
    }
}

impl GainSpec {
    pub fn resolve(&self, plant: &Plant, base: &Path) -> Result<Mat, String> {
        match &self.0 {
            MatrixSpec::Named(n) if n == "zero" => Ok(Mat::zeros(plant.m(), plant.n())),
            MatrixSpec::Named(n) if n == "bootstrap" => initial_stabilizing_gain(plant).map_err(|e| format!("k0: {e}")),
            MatrixSpec::Named(n) if n == "optimal" => {
                solve_riccati_kleinman(plant, None).map(|s| s.k_star).map_err(|e| format!("k0: {e}"))
            }
            spec => {
                let k = spec.resolve(base, None, "k0")?;
                if k.shape() != (plant.m(), plant.n()) {
                    return Err(format!("k0: expected {}x{}, got {}x{}", plant.m(), plant.n(), k.nrows(), k.ncols()));
                }
                Ok(k)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorKind {
    Rk45,
    Rk4,
    Exact,
}

/// Rollout settings shared by the model-free tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSpec {
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorKind,
    #[serde(default = "default_tol")]
    pub atol: f64,
    #[serde(default = "default_tol")]
    pub rtol: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub trapezoid: bool,
}

fn default_integrator() -> IntegratorKind {
    IntegratorKind::Exact
}
fn default_tol() -> f64 {
    1e-9
}
fn default_dt() -> f64 {
    1e-2
}

impl Default for RolloutSpec {
    fn default() -> Self {
        Self { integrator: default_integrator(), atol: default_tol(), rtol: default_tol(), dt: default_dt(), trapezoid: false }
    }
}

impl RolloutSpec {
    pub fn config(&self, tau: f64) -> RolloutConfig {
        let integrator = match self.integrator {
            IntegratorKind::Rk45 => Integrator::Rk45 { atol: self.atol, rtol: self.rtol },
            IntegratorKind::Rk4 => Integrator::Rk4 { dt: self.dt },
            IntegratorKind::Exact => Integrator::Exact,
        };
        let quadrature = if self.trapezoid { Quadrature::Trapezoid } else { Quadrature::Embedded };
        RolloutConfig { tau, integrator, quadrature }
    }
}

macro_rules! defaults {
    ($($f:ident: $t:ty = $v:expr;)*) => {
        $(fn $f() -> $t { $v })*
    };
}

defaults! {
    d_points: usize = 50;
    d_fd_step: f64 = 1e-5;
    d_hessian_step: f64 = 1e-4;
    d_a_factor: f64 = 2.0;
    d_t_final: f64 = 10.0;
    d_ode_tol: f64 = 1e-9;
    d_max_iters: usize = 1000;
    d_tol: f64 = 1e-10;
    d_rule: StepRule = StepRule::backtracking();
    d_identity: Preconditioner = Preconditioner::Identity;
    d_alpha: f64 = 1e-4;
    d_r: f64 = 1e-5;
    d_tau: f64 = 200.0;
    d_samples: usize = 20;
    d_seeds: usize = 1;
    d_window: usize = 10;
    d_retries: usize = 3;
    d_taus: Vec<f64> = vec![10.0, 20.0, 40.0, 80.0, 160.0, 320.0];
    d_radii: Vec<f64> = vec![1e-4, 1e-5];
    d_counts: Vec<usize> = vec![5, 10, 20, 40];
    d_trials: usize = 500;
    d_cert_samples: usize = 100;
    d_eps: f64 = 0.1;
    d_grid: usize = 101;
    d_out: PathBuf = PathBuf::from("lqrlab-out");
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckParams {
    #[serde(default = "d_points")]
    pub points: usize,
    /// Per-entry central-difference step for `∇f` and `∇h`.
    #[serde(default = "d_fd_step")]
    pub step: f64,
    /// Directional second-difference step for the Hessian form.
    #[serde(default = "d_hessian_step")]
    pub hessian_step: f64,
    /// Points are drawn in `S_K(a_factor · f⋆)`.
    #[serde(default = "d_a_factor")]
    pub a_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    #[serde(default = "d_t_final")]
    pub t_final: f64,
    #[serde(default = "d_ode_tol")]
    pub rtol: f64,
    #[serde(default = "d_ode_tol")]
    pub atol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescendParams {
    #[serde(default = "d_rule")]
    pub rule: StepRule,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default)]
    pub target_rel_err: Option<f64>,
    #[serde(default = "d_identity")]
    pub left: Preconditioner,
    #[serde(default = "d_identity")]
    pub right: Preconditioner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSearchParams {
    /// Fixed stepsize; ignored when `theory` is set.
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub theory: bool,
    #[serde(default = "d_r")]
    pub r: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default)]
    pub dist: InitialDist,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    /// Number of seeds `seed, seed + 1, …`.
    #[serde(default = "d_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub target_eps: Option<f64>,
    /// Without an oracle: stop on the windowed mean estimated-gradient norm.
    #[serde(default)]
    pub model_free: bool,
    #[serde(default)]
    pub grad_tol: Option<f64>,
    #[serde(default = "d_window")]
    pub window: usize,
    #[serde(default = "d_retries")]
    pub retries: usize,
    #[serde(default)]
    pub rollout: RolloutSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSweepParams {
    #[serde(default = "d_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "d_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default)]
    pub dist: InitialDist,
    #[serde(default)]
    pub rollout: RolloutSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationParams {
    #[serde(default = "d_counts")]
    pub samples: Vec<usize>,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default)]
    pub mu2: Option<f64>,
    #[serde(default)]
    pub dist: InitialDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    /// Sublevel value; `a_factor · f⋆` when absent.
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default = "d_a_factor")]
    pub a_factor: f64,
    #[serde(default = "d_cert_samples")]
    pub samples: usize,
    /// Run the Monte-Carlo checkers; any violation exits with code 4.
    #[serde(default)]
    pub checks: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonconvexParams {
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_grid")]
    pub grid: usize,
    /// Require the Hessian at the midpoint to lie within `tolerance` of `expected`.
    #[serde(default)]
    pub expected: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

macro_rules! impl_default_via_toml {
    ($($t:ty),*) => {
        $(impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("all fields defaulted")
            }
        })*
    };
}

impl_default_via_toml!(GradCheckParams, FlowParams, DescendParams, RandomSearchParams, BiasSweepParams, CorrelationParams, CertifyParams, NonconvexParams);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "d_out")]
    pub dir: PathBuf,
    /// Record wall-clock milliseconds in traces (breaks byte-identical reruns).
    #[serde(default)]
    pub record_wall_time: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: d_out(), record_wall_time: false }
    }
}

/// Artifact digests written alongside a resolved config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub tool: String,
    pub version: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub plant: Option<PlantSource>,
    #[serde(default)]
    pub k0: GainSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub solve: Option<toml::Table>,
    #[serde(default)]
    pub grad_check: GradCheckParams,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub descend: DescendParams,
    #[serde(default)]
    pub descend_y: DescendParams,
    #[serde(default)]
    pub random_search: RandomSearchParams,
    #[serde(default)]
    pub bias_sweep: BiasSweepParams,
    #[serde(default)]
    pub correlation: CorrelationParams,
    #[serde(default)]
    pub certify: CertifyParams,
    #[serde(default)]
    pub nonconvex_demo: NonconvexParams,
    /// Present in manifests; ignored on input.
    #[serde(default)]
    pub manifest: Option<ManifestInfo>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let pos = |v: f64, what: &str| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(format!("{what} must be positive, got {v}")) };
        pos(self.grad_check.step, "grad_check.step")?;
        pos(self.grad_check.hessian_step, "grad_check.hessian_step")?;
        pos(self.flow.t_final, "flow.t_final")?;
        pos(self.random_search.alpha, "random_search.alpha")?;
        pos(self.random_search.r, "random_search.r")?;
        pos(self.random_search.tau, "random_search.tau")?;
        if self.random_search.samples == 0 || self.bias_sweep.samples == 0 {
            return Err("sample counts must be at least 1".into());
        }
        if self.random_search.seeds == 0 {
            return Err("random_search.seeds must be at least 1".into());
        }
        for &t in &self.bias_sweep.taus {
            pos(t, "bias_sweep.taus")?;
        }
        for &r in &self.bias_sweep.radii {
            pos(r, "bias_sweep.radii")?;
        }
        if self.correlation.samples.contains(&0) || self.correlation.trials == 0 {
            return Err("correlation sample counts and trials must be at least 1".into());
        }
        self.descend.rule.validate().map_err(|e| format!("descend.rule: {e}"))?;
        self.descend_y.rule.validate().map_err(|e| format!("descend_y.rule: {e}"))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            task = "descend"
            seed = 7

            [plant]
            source = "mass-spring"
            masses = 10
            q = { identity_plus = [[1, 100.0]] }
            r = { identity_plus = [[4, 1000.0]] }

            [descend]
            max_iters = 50000
            target_rel_err = 1e-6
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.task, Some(Task::Descend));
        let plant = cfg.plant.unwrap().build(Path::new(".")).unwrap();
        assert_eq!(plant.q[(0, 0)], 101.0);
        assert_eq!(plant.r[(3, 3)], 1001.0);
        assert_eq!(cfg.descend.max_iters, 50000);
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[descend]\nmax_iter = 3").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("[random_search]\nr = -1.0").is_err());
    }

    #[test]
    fn inline_and_csv_matrices() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "0, 1\n-2, -3\n").unwrap();
        let text = r#"
            [plant]
            source = "explicit"
            a = { csv = "a.csv" }
            b = { rows = [[0.0], [1.0]] }
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let plant = cfg.plant.unwrap().build(dir.path()).unwrap();
        assert_eq!(plant.a, Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]));
        assert_eq!(plant.r, Mat::identity(1, 1));
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }
}
