//! Shared method runners. Each takes data plus settings and returns a
//! `MethodOutcome` — a uniform bundle of posterior moments, the loss
//! weight that produced them, and sampler diagnostics — so the reporting
//! layer can tabulate every method the same way.

use nalgebra::{DMatrix, DVector};

use lrm_core::baselines::{BaselineLoss, DfdLossTable, LossTarget, TruncatedLikTable};
use lrm_core::calibrate::{
    calibrate_beta, BaseChoice, CalibrationConfig, CalibrationProblem, CalibrationResult,
    DfdMcmcSettings, QhatRecipe,
};
use lrm_core::domain::{
    build_lattice_flip_matching_set, build_offset_matching_set, MatchingSet, StatePoint,
};
use lrm_core::lrm::{
    build_quadratic, conjugate_update, GaussianPosterior, GaussianPrior, WeightFunction,
};
use lrm_core::models::{
    posterior_on_theta, sample_covariance, CmpUnivariate, ExpFamily, TransformKind,
};
use lrm_core::pmf::{fit_empirical, smooth, BasePmf, SmoothedPmf};
use lrm_core::samplers::{gelman_rubin, rwmh, ChainSet, RngSpec, RwmhConfig};

use crate::config::{BetaMode, ChainConfig, MatchingSpec, MethodId};
use crate::{mix_seed, Result};

/// A parameter reported outside the main block (e.g. an AR weight that
/// rides along with θ).
pub struct ExtraParam {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// What one method produced on one dataset.
pub struct MethodOutcome {
    pub method: MethodId,
    /// Dataset tag, e.g. `cmp(4,1.25)` or `grid150-rep3`.
    pub label: String,
    /// Names and space ("eta" or "theta") of the primary moment block.
    pub param_names: Vec<String>,
    pub space: String,
    pub eta_mean: DVector<f64>,
    pub eta_sd: DVector<f64>,
    pub eta_cov: Option<DMatrix<f64>>,
    pub theta_mean: Option<DVector<f64>>,
    pub theta_sd: Option<DVector<f64>>,
    pub extra: Vec<ExtraParam>,
    pub beta: f64,
    pub calibration: Option<CalibrationResult>,
    pub r_hat: Vec<Option<f64>>,
    pub acceptance: Vec<f64>,
    pub chains: Option<ChainSet>,
}

pub fn eta_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("eta{j}")).collect()
}

/// Smoothed PMF estimate for count data: pure frequencies at α = 0, a
/// heavy-tailed mixture base otherwise.
pub fn make_count_qhat(samples: &[StatePoint], alpha: f64, eps: f64) -> Result<SmoothedPmf> {
    let base = if alpha > 0.0 {
        Some(BasePmf::mixture_for_counts(samples, eps)?)
    } else {
        None
    };
    Ok(smooth(fit_empirical(samples)?, alpha, base)?)
}

/// The recipe equivalent of [`make_count_qhat`], for calibration refits.
pub fn count_recipe(alpha: f64, eps: f64) -> QhatRecipe {
    QhatRecipe {
        alpha,
        base: if alpha > 0.0 {
            BaseChoice::MixtureForCounts { eps }
        } else {
            BaseChoice::None
        },
    }
}

pub fn build_matching(
    spec: &MatchingSpec,
    model: &(impl ExpFamily + ?Sized),
) -> Result<MatchingSet> {
    match spec {
        MatchingSpec::Offsets(offsets) => {
            Ok(build_offset_matching_set(offsets, &model.domain())?)
        }
        MatchingSpec::LatticeFlips => Ok(build_lattice_flip_matching_set(&model.domain())?),
    }
}

pub fn calibration_settings(
    bootstrap: usize,
    delta: f64,
    grid_lo: f64,
    grid_hi: f64,
    grid_points: usize,
    seed: u64,
) -> CalibrationConfig {
    CalibrationConfig {
        bootstrap,
        delta,
        grid_lo,
        grid_hi,
        grid_points,
        refit_pmf: true,
        rng: RngSpec::new(seed),
    }
}

/// Per-coordinate random-walk proposal scales: a flat override from the
/// config, or a tenth of the prior standard deviation.
pub fn proposal_scales(prior: &GaussianPrior, flat: Option<f64>) -> DVector<f64> {
    match flat {
        Some(s) => DVector::from_element(prior.p(), s),
        None => DVector::from_fn(prior.p(), |j, _| 0.1 * prior.sigma()[(j, j)].sqrt()),
    }
}

pub fn sqrt_diag(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |j, _| m[(j, j)].max(0.0).sqrt())
}

/// Moments of θ under a Gaussian on η for the univariate count model:
/// θ₁ = e^{η₁} is exactly lognormal, θ₂ is η₂ itself.
pub fn cmp_theta_closed_form(post: &GaussianPosterior) -> (DVector<f64>, DVector<f64>) {
    let (mu, sig) = (post.mu(), post.sigma());
    let (m1, s11) = (mu[0], sig[(0, 0)]);
    let mean1 = (m1 + 0.5 * s11).exp();
    let var1 = (s11.exp() - 1.0) * (2.0 * m1 + s11).exp();
    (
        DVector::from_vec(vec![mean1, mu[1]]),
        DVector::from_vec(vec![var1.max(0.0).sqrt(), sig[(1, 1)].max(0.0).sqrt()]),
    )
}

/// Pooled moments and split-chain diagnostics.
pub fn summarize_chains(chains: &ChainSet) -> (DVector<f64>, DVector<f64>, Vec<Option<f64>>) {
    let r_hat = match gelman_rubin(chains) {
        Ok(report) => report.r_hat,
        Err(_) => vec![None; chains.p()],
    };
    (chains.mean(), chains.sd(), r_hat)
}

fn mcmc_outcome(
    method: MethodId,
    label: &str,
    beta: f64,
    calibration: Option<CalibrationResult>,
    chains: ChainSet,
    transform: Option<TransformKind>,
    keep_chains: bool,
) -> MethodOutcome {
    let (eta_mean, eta_sd, r_hat) = summarize_chains(&chains);
    let pooled = chains.pooled_draws();
    let eta_cov = sample_covariance(&pooled).map(|(_, c)| c);
    let (theta_mean, theta_sd) = match transform {
        Some(kind) => {
            let thetas: Vec<DVector<f64>> =
                pooled.iter().map(|eta| kind.theta_of_eta(eta)).collect();
            match sample_covariance(&thetas) {
                Some((m, c)) => (Some(m), Some(sqrt_diag(&c))),
                None => (None, None),
            }
        }
        None => (None, None),
    };
    MethodOutcome {
        method,
        label: label.to_string(),
        param_names: eta_names(eta_mean.len()),
        space: "eta".to_string(),
        eta_mean,
        eta_sd,
        eta_cov,
        theta_mean,
        theta_sd,
        extra: Vec::new(),
        beta,
        calibration,
        r_hat,
        acceptance: chains.acceptance_rates().to_vec(),
        chains: if keep_chains { Some(chains) } else { None },
    }
}

/// Resolve β for a matched-ratio fit on i.i.d. samples: fixed value, or
/// bootstrap coverage calibration.
#[allow(clippy::too_many_arguments)]
fn resolve_beta_samples(
    model: &(impl ExpFamily + ?Sized),
    samples: &[StatePoint],
    m: &MatchingSet,
    alpha: f64,
    eps: f64,
    weights: &WeightFunction,
    beta_mode: &BetaMode,
    prior: &GaussianPrior,
    seed: u64,
) -> Result<(f64, Option<CalibrationResult>)> {
    match beta_mode {
        BetaMode::Fixed { value } => Ok((*value, None)),
        BetaMode::Calibrate {
            bootstrap,
            delta,
            grid_lo,
            grid_hi,
            grid_points,
        } => {
            let cfg = calibration_settings(
                *bootstrap,
                *delta,
                *grid_lo,
                *grid_hi,
                *grid_points,
                mix_seed(seed, 1),
            );
            let problem = CalibrationProblem::from_samples(
                model,
                samples,
                m,
                &count_recipe(alpha, eps),
                weights,
                prior.clone(),
                cfg,
            )?;
            let res = calibrate_beta(&problem)?;
            Ok((res.beta_star, Some(res)))
        }
    }
}

/// Matched-ratio conjugate fit for any count exponential family. Returns
/// the outcome plus the η-space posterior for downstream use (posterior
/// predictive, custom summaries). θ moments are computed in closed form
/// when the transform admits one, otherwise from `theta_draws` posterior
/// samples.
#[allow(clippy::too_many_arguments)]
pub fn run_lrm_generic(
    label: &str,
    model: &(impl ExpFamily + ?Sized),
    samples: &[StatePoint],
    matching: &MatchingSpec,
    alpha: f64,
    eps: f64,
    weights: &WeightFunction,
    beta_mode: &BetaMode,
    prior: &GaussianPrior,
    transform: TransformKind,
    theta_draws: usize,
    seed: u64,
) -> Result<(MethodOutcome, GaussianPosterior)> {
    let m = build_matching(matching, model)?;
    let (beta, calibration) = resolve_beta_samples(
        model, samples, &m, alpha, eps, weights, beta_mode, prior, seed,
    )?;
    let qhat = make_count_qhat(samples, alpha, eps)?;
    let loss = build_quadratic(model, samples, &m, &qhat, weights)?;
    let post = conjugate_update(prior, &loss, beta)?;
    let (theta_mean, theta_sd) = match transform {
        TransformKind::CmpUnivariate => {
            let (tm, ts) = cmp_theta_closed_form(&post);
            (Some(tm), Some(ts))
        }
        _ => {
            let tp = posterior_on_theta(post.clone(), transform)?;
            let mut rng = RngSpec::new(mix_seed(seed, 2)).rng()?;
            let draws = tp.sample_many(&mut rng, theta_draws);
            match sample_covariance(&draws) {
                Some((mean, cov)) => (Some(mean), Some(sqrt_diag(&cov))),
                None => (None, None),
            }
        }
    };
    let outcome = MethodOutcome {
        method: MethodId::Lrm,
        label: label.to_string(),
        param_names: eta_names(post.mu().len()),
        space: "eta".to_string(),
        eta_mean: post.mu().clone(),
        eta_sd: sqrt_diag(post.sigma()),
        eta_cov: Some(post.sigma().clone()),
        theta_mean,
        theta_sd,
        extra: Vec::new(),
        beta,
        calibration,
        r_hat: Vec::new(),
        acceptance: Vec::new(),
        chains: None,
    };
    Ok((outcome, post))
}

/// Matched-ratio conjugate fit on univariate counts.
#[allow(clippy::too_many_arguments)]
pub fn run_lrm_cmp(
    label: &str,
    model: &CmpUnivariate,
    samples: &[StatePoint],
    matching: &MatchingSpec,
    alpha: f64,
    eps: f64,
    weights: &WeightFunction,
    beta_mode: &BetaMode,
    prior: &GaussianPrior,
    seed: u64,
) -> Result<MethodOutcome> {
    run_lrm_generic(
        label,
        model,
        samples,
        matching,
        alpha,
        eps,
        weights,
        beta_mode,
        prior,
        TransformKind::CmpUnivariate,
        0,
        seed,
    )
    .map(|(outcome, _)| outcome)
}

/// Which machinery calibrates the discrete-Fisher loss weight: a cheap
/// Laplace approximation per resample, or a short MCMC run per resample
/// (slower, but it is the honest cost of the sampling-based pipeline).
#[derive(Clone, Copy, Debug)]
pub enum DfdCalibration {
    Laplace,
    Mcmc(DfdMcmcSettings),
}

#[allow(clippy::too_many_arguments)]
pub fn run_dfd_cmp(
    label: &str,
    model: &CmpUnivariate,
    samples: &[StatePoint],
    beta_mode: &BetaMode,
    prior: &GaussianPrior,
    chain_cfg: &ChainConfig,
    backend: DfdCalibration,
    seed: u64,
) -> Result<MethodOutcome> {
    let (beta, calibration) = match beta_mode {
        BetaMode::Fixed { value } => (*value, None),
        BetaMode::Calibrate {
            bootstrap,
            delta,
            grid_lo,
            grid_hi,
            grid_points,
        } => {
            let cfg = calibration_settings(
                *bootstrap,
                *delta,
                *grid_lo,
                *grid_hi,
                *grid_points,
                mix_seed(seed, 1),
            );
            let problem = match backend {
                DfdCalibration::Laplace => {
                    CalibrationProblem::from_samples_dfd(model, samples, prior.clone(), cfg)?
                }
                DfdCalibration::Mcmc(settings) => CalibrationProblem::from_samples_dfd_mcmc(
                    model,
                    samples,
                    prior.clone(),
                    cfg,
                    settings,
                )?,
            };
            let res = calibrate_beta(&problem)?;
            (res.beta_star, Some(res))
        }
    };
    let table = DfdLossTable::new(model, samples)?;
    let check_rng = RngSpec::new(mix_seed(seed, 2));
    let target = LossTarget::new(BaselineLoss::Dfd(table), beta, prior.clone(), &check_rng)?;
    let cfg = RwmhConfig {
        iters: chain_cfg.iters,
        burn_in: chain_cfg.burn_in,
        chains: chain_cfg.count,
        scales: proposal_scales(prior, chain_cfg.proposal_scale),
    };
    let chains = rwmh(
        |eta| target.log_density(eta),
        prior.mu(),
        &cfg,
        &RngSpec::new(mix_seed(seed, 3)),
    )?;
    Ok(mcmc_outcome(
        MethodId::Dfd,
        label,
        beta,
        calibration,
        chains,
        Some(TransformKind::CmpUnivariate),
        chain_cfg.emit_draws,
    ))
}

/// Truncated-normaliser Bayes on univariate counts. This is an honest
/// (approximate) likelihood, so the loss weight stays at 1.
pub fn run_trunc_cmp(
    label: &str,
    model: &CmpUnivariate,
    samples: &[StatePoint],
    truncation: Option<u64>,
    prior: &GaussianPrior,
    chain_cfg: &ChainConfig,
    seed: u64,
) -> Result<MethodOutcome> {
    let ints: Vec<i64> = samples.iter().map(|x| x.get(0)).collect();
    let cap = truncation.unwrap_or_else(|| default_truncation(&ints));
    let table = TruncatedLikTable::new(model, &ints, cap)?;
    let check_rng = RngSpec::new(mix_seed(seed, 2));
    let target = LossTarget::new(
        BaselineLoss::TruncatedLikelihood(table),
        1.0,
        prior.clone(),
        &check_rng,
    )?;
    let cfg = RwmhConfig {
        iters: chain_cfg.iters,
        burn_in: chain_cfg.burn_in,
        chains: chain_cfg.count,
        scales: proposal_scales(prior, chain_cfg.proposal_scale),
    };
    let chains = rwmh(
        |eta| target.log_density(eta),
        prior.mu(),
        &cfg,
        &RngSpec::new(mix_seed(seed, 3)),
    )?;
    Ok(mcmc_outcome(
        MethodId::TruncBayes,
        label,
        1.0,
        None,
        chains,
        Some(TransformKind::CmpUnivariate),
        chain_cfg.emit_draws,
    ))
}

/// Support cap for the truncated normaliser: twice the largest
/// observation, at least 100.
pub fn default_truncation(values: &[i64]) -> u64 {
    let max_obs = values.iter().copied().max().unwrap_or(0).max(0) as u64;
    (2 * max_obs).max(100)
}
