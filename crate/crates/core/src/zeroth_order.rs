//! Two-point zeroth-order gradient estimates.
//!
//! Three estimates share one draw `(Uᵢ, xᵢ)`, `i = 1..N`:
//! - truncated: `∇̄f = (1/2rN) Σ (f_{xᵢ,τ}(K + rUᵢ) − f_{xᵢ,τ}(K − rUᵢ)) Uᵢ` from rollouts;
//! - infinite: the same with `f_x(K) = xᵀP(K)x`;
//! - unbiased: `∇̂f = (1/N) Σ ⟨∇f_{xᵢ}(K), Uᵢ⟩ Uᵢ`.

use serde::{Deserialize, Serialize};

use crate::certificates::{certificate, fit_ell};
use crate::error::{LqrError, Result};
use crate::lqr_core::{gradient, Gain, OperatorKind, Plant};
use crate::lyap_kernel::dense::{inner, min_eig};
use crate::lyap_kernel::{
    operator_spectral_induced_norm_estimate, operator_two_norm, LyapunovSolver, Mat, Vector,
};
use crate::parallel::map_indexed;
use crate::sim_engine::{
    rollout_cost, sample_plant_initial_condition, sample_sphere_direction, InitialDist, RngStream,
    RolloutConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Smoothing radius `r`.
    pub r: f64,
    /// Sample count `N`.
    pub samples: usize,
    pub dist: InitialDist,
    pub seed: u64,
    /// Sample `i` uses stream `stream_base + i`.
    #[serde(default)]
    pub stream_base: u64,
    /// Horizon and integrator of the truncated estimate.
    pub rollout: RolloutConfig,
    #[serde(default)]
    pub keep_samples: bool,
}

impl EstimatorConfig {
    pub fn new(r: f64, samples: usize, tau: f64, seed: u64) -> Self {
        Self {
            r,
            samples,
            dist: InitialDist::StandardNormal,
            seed,
            stream_base: 0,
            rollout: RolloutConfig::rk45(tau),
            keep_samples: false,
        }
    }

    pub fn tau(&self) -> f64 {
        self.rollout.tau
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(LqrError::InvalidArgument(format!("smoothing radius must be positive, got {}", self.r)));
        }
        if self.samples == 0 {
            return Err(LqrError::InvalidArgument("sample count must be at least 1".into()));
        }
        self.rollout.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    TruncatedBar,
    InfiniteTilde,
    UnbiasedHat,
}

/// One direction and initial condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleDraw {
    pub u: Mat,
    pub x: Vector,
}

/// Per-sample record retained when `keep_samples` is set.
#[derive(Debug, Clone, Serialize)]
pub struct SampleRecord {
    pub u: Mat,
    pub x: Vector,
    /// `(f(K + rU), f(K − rU))` for the two-point kinds, `(⟨∇f_x, U⟩, 0)` for the unbiased one.
    pub values: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientEstimate {
    pub value: Mat,
    pub kind: EstimateKind,
    pub config: EstimatorConfig,
    pub samples: Option<Vec<SampleRecord>>,
}

/// The draw of `config`: sample `i` from stream `stream_base + i`.
pub fn draw_samples(plant: &Plant, config: &EstimatorConfig) -> Vec<SampleDraw> {
    let (m, n) = (plant.m(), plant.n());
    map_indexed(config.samples, |i| {
        let mut rng = RngStream::new(config.seed, config.stream_base + i as u64).rng();
        let u = sample_sphere_direction(m, n, &mut rng);
        let x = sample_plant_initial_condition(plant, config.dist, &mut rng);
        SampleDraw { u, x }
    })
}

fn assemble(
    kind: EstimateKind,
    config: &EstimatorConfig,
    draws: &[SampleDraw],
    values: Vec<(f64, f64)>,
    weight: impl Fn((f64, f64)) -> f64,
) -> GradientEstimate {
    let (m, n) = draws[0].u.shape();
    let mut value = Mat::zeros(m, n);
    for (d, v) in draws.iter().zip(&values) {
        value += &d.u * weight(*v);
    }
    value /= draws.len() as f64;
    let samples = config.keep_samples.then(|| {
        draws
            .iter()
            .zip(&values)
            .map(|(d, v)| SampleRecord { u: d.u.clone(), x: d.x.clone(), values: *v })
            .collect()
    });
    GradientEstimate { value, kind, config: config.clone(), samples }
}

fn check_draws(plant: &Plant, k: &Mat, draws: &[SampleDraw]) -> Result<()> {
    crate::lyap_kernel::dense::check_shape("K", k, plant.m(), plant.n())?;
    crate::lyap_kernel::dense::check_finite("K", k)?;
    if draws.is_empty() {
        return Err(LqrError::InvalidArgument("no samples".into()));
    }
    Ok(())
}

/// Truncated two-point estimate on the draw of `config`.
pub fn estimate_gradient_twopoint(plant: &Plant, k: &Mat, config: &EstimatorConfig) -> Result<GradientEstimate> {
    config.validate()?;
    let draws = draw_samples(plant, config);
    twopoint_with_draws(plant, k, config, &draws)
}

/// Truncated two-point estimate on an explicit draw.
///
/// Overflowing rollouts fail the whole estimate and name every offending sample.
pub fn twopoint_with_draws(plant: &Plant, k: &Mat, config: &EstimatorConfig, draws: &[SampleDraw]) -> Result<GradientEstimate> {
    check_draws(plant, k, draws)?;
    let r = config.r;
    let results = map_indexed(draws.len(), |i| -> Result<(f64, f64)> {
        let d = &draws[i];
        let up = rollout_cost(plant, &(k + &d.u * r), &d.x, &config.rollout)?;
        let down = rollout_cost(plant, &(k - &d.u * r), &d.x, &config.rollout)?;
        Ok((up, down))
    });
    let mut values = Vec::with_capacity(draws.len());
    let mut failed = Vec::new();
    let mut reason = String::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => values.push(v),
            Err(e @ (LqrError::RolloutOverflow { .. } | LqrError::Overflow(_) | LqrError::Integrator(_))) => {
                if reason.is_empty() {
                    reason = e.to_string();
                }
                failed.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    if !failed.is_empty() {
        return Err(LqrError::EstimateFailure { samples: failed, reason });
    }
    Ok(assemble(EstimateKind::TruncatedBar, config, draws, values, |(a, b)| (a - b) / (2.0 * r)))
}

/// Infinite-horizon two-point estimate on the draw of `config`.
pub fn estimate_gradient_infinite(plant: &Plant, k: &Mat, config: &EstimatorConfig) -> Result<GradientEstimate> {
    config.validate()?;
    let draws = draw_samples(plant, config);
    infinite_with_draws(plant, k, config, &draws)
}

pub fn infinite_with_draws(plant: &Plant, k: &Mat, config: &EstimatorConfig, draws: &[SampleDraw]) -> Result<GradientEstimate> {
    check_draws(plant, k, draws)?;
    let r = config.r;
    let results = map_indexed(draws.len(), |i| -> Result<(f64, f64)> {
        let d = &draws[i];
        let cost = |sign: char| -> Result<f64> {
            let kp = if sign == '+' { k + &d.u * r } else { k - &d.u * r };
            let g = Gain::new(plant, kp)?;
            let p = &g
                .certificate()
                .map_err(|_| LqrError::InfeasiblePerturbation { sample: i, sign })?
                .p;
            Ok(d.x.dot(&(p * &d.x)))
        };
        Ok((cost('+')?, cost('-')?))
    });
    let values = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(EstimateKind::InfiniteTilde, config, draws, values, |(a, b)| (a - b) / (2.0 * r)))
}

/// Unbiased estimate from exact per-sample gradients on the draw of `config`.
pub fn estimate_gradient_unbiased(plant: &Plant, k: &Mat, config: &EstimatorConfig) -> Result<GradientEstimate> {
    config.validate()?;
    let draws = draw_samples(plant, config);
    unbiased_with_draws(plant, k, config, &draws)
}

/// `∇f_x(K) = 2 (RK − BᵀP(K)) X_x(K)` with `X_x` solving the closed-loop
/// Lyapunov equation driven by `xxᵀ`.
pub fn unbiased_with_draws(plant: &Plant, k: &Mat, config: &EstimatorConfig, draws: &[SampleDraw]) -> Result<GradientEstimate> {
    check_draws(plant, k, draws)?;
    let g = Gain::new(plant, k.clone())?;
    let cert = g.certificate()?;
    let e = (&plant.r * k - plant.b.transpose() * &cert.p) * 2.0;
    let solver = LyapunovSolver::new(&plant.closed_loop(k))?;
    let results = map_indexed(draws.len(), |i| -> Result<(f64, f64)> {
        let d = &draws[i];
        let xx = &d.x * d.x.transpose();
        let gx = &e * solver.solve(&xx)?;
        Ok((inner(&gx, &d.u), 0.0))
    });
    let values = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(EstimateKind::UnbiasedHat, config, draws, values, |(a, _)| a))
}

/// Pairwise distances of the three estimates on one shared draw, with the
/// certified finite-time and third-order bounds.
#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub a: f64,
    pub r: f64,
    pub tau: f64,
    pub samples: usize,
    /// `‖∇̃f − ∇̄f‖_F`.
    pub tilde_bar: f64,
    /// `‖∇̂f − ∇̃f‖_F`.
    pub hat_tilde: f64,
    /// `‖∇̂f − ∇̄f‖_F`.
    pub hat_bar: f64,
    /// `(√(mn) maxᵢ‖xᵢ‖² / r) κ₁(2a) e^{−κ₂(2a)τ}`.
    pub finite_time_bound: f64,
    /// `((rmn)²/2) ℓ(2a) maxᵢ‖xᵢ‖²` with the empirical `ℓ`.
    pub third_order_bound: f64,
    pub ell: f64,
    pub r_budget: f64,
    pub within_budget: bool,
    pub finite_time_ok: bool,
    pub third_order_ok: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BiasOptions {
    /// Sublevel value with `K ∈ S_K(a)`.
    pub a: f64,
    /// `ℓ(2a)`; fitted when absent.
    pub ell: Option<f64>,
    pub ell_samples: usize,
}

pub fn bias_decomposition(plant: &Plant, k: &Mat, config: &EstimatorConfig, opts: BiasOptions) -> Result<BiasReport> {
    config.validate()?;
    let draws = draw_samples(plant, config);
    let bar = twopoint_with_draws(plant, k, config, &draws)?.value;
    let tilde = infinite_with_draws(plant, k, config, &draws)?.value;
    let hat = unbiased_with_draws(plant, k, config, &draws)?.value;
    let a2 = 2.0 * opts.a;
    let cert2 = certificate(plant, a2, None)?;
    let r_budget = certificate(plant, opts.a, None)?.r_a;
    let ell = match opts.ell {
        Some(l) => l,
        None => fit_ell(plant, a2, opts.ell_samples, config.seed ^ 0xe11, std::slice::from_ref(k))?.ell,
    };
    let (m, n) = (plant.m() as f64, plant.n() as f64);
    let max_x2 = draws.iter().map(|d| d.x.norm_squared()).fold(0.0, f64::max);
    let r = config.r;
    let tau = config.tau();
    let finite_time_bound = (m * n).sqrt() * max_x2 / r * cert2.kappa1 * (-cert2.kappa2 * tau).exp();
    let third_order_bound = (r * m * n).powi(2) / 2.0 * ell * max_x2;
    let tilde_bar = (&tilde - &bar).norm();
    let hat_tilde = (&hat - &tilde).norm();
    Ok(BiasReport {
        a: opts.a,
        r,
        tau,
        samples: draws.len(),
        tilde_bar,
        hat_tilde,
        hat_bar: (&hat - &bar).norm(),
        finite_time_bound,
        third_order_bound,
        ell,
        r_budget,
        within_budget: r <= r_budget,
        finite_time_ok: tilde_bar <= finite_time_bound,
        third_order_ok: hat_tilde <= third_order_bound,
    })
}

/// Frequencies of the events `M₁: ⟨∇̂f, ∇f⟩ ≥ μ₁‖∇f‖²` and
/// `M₂: ‖∇̂f‖² ≤ μ₂‖∇f‖²` over independent unbiased estimates.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub samples: usize,
    pub trials: usize,
    pub mu1: f64,
    pub mu2: f64,
    /// Whether `mu2` was the empirical 99th percentile.
    pub mu2_empirical: bool,
    pub p_m1: f64,
    pub p_m2: f64,
    /// `μ₂ / (θ_K √(mn) log n + √m)²` with `θ_K = (‖(𝒜_K*)⁻¹‖₂ + ‖(𝒜_K*)⁻¹‖_S)/λ_min(X)`.
    pub implied_constant: f64,
    /// `⟨∇̂f, ∇f⟩ / ‖∇f‖²` per trial.
    pub inner_products: Vec<f64>,
    /// `‖∇̂f‖² / ‖∇f‖²` per trial.
    pub norm_ratios: Vec<f64>,
}

pub const MU1: f64 = 0.25;

pub fn correlation_events(
    plant: &Plant,
    k: &Mat,
    samples: usize,
    trials: usize,
    seed: u64,
    dist: InitialDist,
    mu2: Option<f64>,
) -> Result<CorrelationReport> {
    if samples == 0 || trials == 0 {
        return Err(LqrError::InvalidArgument("samples and trials must be positive".into()));
    }
    let g = gradient(plant, k)?;
    let g2 = g.norm_squared();
    if g2 == 0.0 {
        return Err(LqrError::InvalidArgument("gradient vanishes at K".into()));
    }
    let mut config = EstimatorConfig::new(1.0, samples, 1.0, seed);
    config.dist = dist;
    let estimates = (0..trials)
        .map(|t| {
            let mut c = config.clone();
            c.stream_base = (t * samples) as u64;
            unbiased_with_draws(plant, k, &c, &draw_samples(plant, &c)).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let inner_products: Vec<f64> = estimates.iter().map(|e| inner(e, &g) / g2).collect();
    let norm_ratios: Vec<f64> = estimates.iter().map(|e| e.norm_squared() / g2).collect();
    let (mu2, mu2_empirical) = match mu2 {
        Some(v) => (v, false),
        None => (percentile(&norm_ratios, 0.99), true),
    };
    let p_m1 = inner_products.iter().filter(|&&v| v >= MU1).count() as f64 / trials as f64;
    let p_m2 = norm_ratios.iter().filter(|&&v| v <= mu2).count() as f64 / trials as f64;
    let shape = m2_shape(plant, k, seed)?;
    Ok(CorrelationReport {
        samples,
        trials,
        mu1: MU1,
        mu2,
        mu2_empirical,
        p_m1,
        p_m2,
        implied_constant: mu2 / (shape * shape),
        inner_products,
        norm_ratios,
    })
}

fn m2_shape(plant: &Plant, k: &Mat, seed: u64) -> Result<f64> {
    let x = Gain::new(plant, k.clone())?.certificate()?.x.clone();
    let op = plant.operator(OperatorKind::AdjointClosedLoop(k))?.inverse()?;
    let theta = (operator_two_norm(&op) + operator_spectral_induced_norm_estimate(&op, 8, seed)) / min_eig(&x);
    let (m, n) = (plant.m() as f64, plant.n() as f64);
    Ok(theta * (m * n).sqrt() * n.ln() + m.sqrt())
}

/// Nearest-rank percentile.
fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}
