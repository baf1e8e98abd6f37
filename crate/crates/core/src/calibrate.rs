//! Bootstrap coverage calibration of the learning rate β.
//!
//! The procedure: fix B bootstrap resamples of the data, fit a posterior
//! to each resample at a trial β, and measure how often the resample
//! posteriors' 1−δ Mahalanobis ellipsoids contain the full-data point
//! estimate. β is tuned until that empirical coverage matches 1−δ.
//!
//! The resample index sets are drawn once and reused for every β
//! (common random numbers), which turns the coverage curve into a
//! deterministic step function of β — plain grid search plus bisection
//! replaces any stochastic optimiser.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::baselines::{dfd_min_estimate, DfdLossTable};
use crate::domain::{Lattice, MatchingSet, StatePoint};
use crate::exec;
use crate::linalg::{cholesky_spd, spd_inverse};
use crate::lrm::{
    build_quadratic_seq, conjugate_update, min_lrm_estimate, GaussianPosterior, GaussianPrior,
    QuadraticLoss, WeightFunction,
};
use crate::models::{sample_covariance, ExpFamily, MrfModel};
use crate::numeric::{ln_gamma, reg_lower_gamma};
use crate::pmf::{fit_empirical, fit_local_conditionals, smooth, BasePmf, SmoothedPmf};
use crate::samplers::{rwmh, RngSpec, RwmhConfig};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Chi-squared quantiles
// ---------------------------------------------------------------------------

/// χ² CDF with `dof` degrees of freedom.
pub fn chi2_cdf(dof: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    reg_lower_gamma(dof as f64 / 2.0, x / 2.0)
}

/// χ² quantile by bracketed Newton iteration on the CDF; the result
/// satisfies |CDF(result) − level| ≤ 1e−10.
pub fn chi2_quantile(dof: usize, level: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::InvalidSpec("zero degrees of freedom".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "quantile level must lie in (0,1), got {level}"
        )));
    }
    let k = dof as f64;
    let ln_pdf = |x: f64| (k / 2.0 - 1.0) * x.ln() - x / 2.0 - (k / 2.0) * 2.0f64.ln() - ln_gamma(k / 2.0);
    let mut lo = 0.0;
    let mut hi = k.max(1.0);
    let mut grow = 0;
    while chi2_cdf(dof, hi) < level {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Numerical("χ² quantile bracket did not close".into()));
        }
    }
    let mut x = k.clamp(lo + 1e-8, hi);
    for _ in 0..200 {
        let f = chi2_cdf(dof, x) - level;
        if f.abs() <= 1e-10 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = f / ln_pdf(x).exp();
        let newton = x - step;
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Numerical(format!(
        "χ² quantile iteration did not reach 1e-10 at dof={dof}, level={level}"
    )))
}

// ---------------------------------------------------------------------------
// Configuration and results
// ---------------------------------------------------------------------------

/// Base-PMF choice inside a smoothing recipe.
#[derive(Clone, Debug)]
pub enum BaseChoice {
    /// No smoothing target: α must be 0 and unseen ratios are omitted.
    None,
    /// Uniform over a finite domain.
    Uniform,
    /// Mixture base for unbounded count data.
    MixtureForCounts { eps: f64 },
}

/// How the PMF estimate q̂ is fit: smoothing weight plus base choice.
#[derive(Clone, Debug)]
pub struct QhatRecipe {
    pub alpha: f64,
    pub base: BaseChoice,
}

impl QhatRecipe {
    /// Pure empirical frequencies, omitted ratios for unseen states.
    pub fn empirical() -> Self {
        QhatRecipe {
            alpha: 0.0,
            base: BaseChoice::None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationConfig {
    /// Bootstrap resample count B.
    pub bootstrap: usize,
    /// Target miscoverage δ (the ellipsoids are 1−δ regions).
    pub delta: f64,
    /// Log-spaced β search grid.
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    /// Refit q̂ on each bootstrap resample (the alternative reuses the
    /// full-data q̂, which is cheaper but ignores PMF uncertainty).
    pub refit_pmf: bool,
    pub rng: RngSpec,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            bootstrap: 50,
            delta: 0.05,
            grid_lo: 1e-3,
            grid_hi: 1e3,
            grid_points: 25,
            refit_pmf: true,
            rng: RngSpec::new(0),
        }
    }
}

impl CalibrationConfig {
    fn validate(&self) -> Result<()> {
        if self.bootstrap < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 bootstrap resamples, got {}",
                self.bootstrap
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "miscoverage must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.grid_lo > 0.0) || !(self.grid_hi > self.grid_lo) || self.grid_points < 2 {
            return Err(Error::InvalidSpec(format!(
                "bad β grid: [{}, {}] with {} points",
                self.grid_lo, self.grid_hi, self.grid_points
            )));
        }
        Ok(())
    }
}

/// Calibration outcome: the chosen β, the evaluated coverage curve, and
/// the full-data estimate the ellipsoids were tested against.
#[derive(Clone, Debug)]
pub struct CalibrationResult {
    pub beta_star: f64,
    /// All evaluated (β, coverage) pairs, sorted by β.
    pub curve: Vec<(f64, f64)>,
    /// Coverage target in η-space; absent when the full-data loss was
    /// too degenerate to minimise.
    pub theta_hat: Option<DVector<f64>>,
    /// False when coverage never crossed 1−δ on the grid; β* is then a
    /// grid endpoint.
    pub bracket_found: bool,
    /// Resamples unusable at β* (singular loss or failed fit).
    pub skipped: u64,
}

// ---------------------------------------------------------------------------
// The compiled calibration problem
// ---------------------------------------------------------------------------

/// One bootstrap resample, reduced to the piece a β-sweep needs.
enum ResampleFit {
    /// Matched-ratio loss: the posterior at any β is a closed-form update.
    Conjugate(QuadraticLoss),
    /// DFD loss: the posterior at a given β is a Gaussian (Laplace)
    /// approximation around the penalised minimiser.
    DfdLaplace(DfdLossTable),
    /// DFD loss with the posterior estimated by an actual random-walk
    /// chain per (resample, β) — what calibration costs without
    /// conjugacy. The RngSpec is fixed per resample so the coverage
    /// curve stays a deterministic function of β.
    DfdMcmc { table: DfdLossTable, rng: RngSpec },
}

/// Chain length for MCMC-backed coverage evaluation.
#[derive(Clone, Copy, Debug)]
pub struct DfdMcmcSettings {
    pub iters: usize,
    pub burn_in: usize,
}

impl Default for DfdMcmcSettings {
    fn default() -> Self {
        DfdMcmcSettings {
            iters: 1200,
            burn_in: 400,
        }
    }
}

/// One splitmix64 round: decorrelates per-resample chain seeds from the
/// base seed without consuming the index-drawing RNG.
fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Data, prior, and B fixed bootstrap resamples, compiled so that
/// coverage can be evaluated at any β without touching the raw data
/// again. Resamples whose loss could not be built (degenerate resample)
/// are dropped at construction and counted.
pub struct CalibrationProblem {
    fits: Vec<ResampleFit>,
    theta_hat: Option<DVector<f64>>,
    prior: GaussianPrior,
    prior_precision: DMatrix<f64>,
    cfg: CalibrationConfig,
    build_skipped: u64,
    /// Full-data DFD curvature at θ̂, used to scale MCMC proposals.
    dfd_curvature: Option<DMatrix<f64>>,
    mcmc: DfdMcmcSettings,
}

fn make_qhat(
    samples: &[StatePoint],
    recipe: &QhatRecipe,
    model: &(impl ExpFamily + ?Sized),
) -> Result<SmoothedPmf> {
    let base = match &recipe.base {
        BaseChoice::None => None,
        BaseChoice::Uniform => Some(BasePmf::uniform(model.domain())?),
        BaseChoice::MixtureForCounts { eps } => Some(BasePmf::mixture_for_counts(samples, *eps)?),
    };
    smooth(fit_empirical(samples)?, recipe.alpha, base)
}

fn resample_indices(n: usize, b: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    (0..b)
        .map(|_| (0..n).map(|_| rng.random_range(0..n)).collect())
        .collect()
}

impl CalibrationProblem {
    /// Compile a matched-ratio calibration problem from i.i.d. samples:
    /// the full-data loss gives the coverage target θ̂_n = Λ_n⁻¹ν_n, and
    /// each resample keeps its own quadratic loss (with q̂ refit on the
    /// resample when the config says so).
    pub fn from_samples<Mo: ExpFamily + ?Sized>(
        model: &Mo,
        samples: &[StatePoint],
        m: &MatchingSet,
        recipe: &QhatRecipe,
        weights: &WeightFunction,
        prior: GaussianPrior,
        cfg: CalibrationConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if samples.is_empty() {
            return Err(Error::BadData("no observations".into()));
        }
        let full_qhat = make_qhat(samples, recipe, model)?;
        // Degenerate data (e.g. a single repeated value) can fail the
        // full-data build outright; calibration then proceeds with no
        // coverage target and reports a bracket failure instead of dying.
        let theta_hat = build_quadratic_seq(model, samples, m, &full_qhat, weights)
            .ok()
            .and_then(|full| min_lrm_estimate(&full).ok());
        let refit = cfg.refit_pmf;
        let indices = {
            let mut rng = cfg.rng.rng()?;
            resample_indices(samples.len(), cfg.bootstrap, &mut rng)
        };
        let built = exec::map_ordered(&indices, |idx| {
            let resampled: Vec<StatePoint> = idx.iter().map(|&i| samples[i].clone()).collect();
            let local_qhat;
            let qhat = if refit {
                local_qhat = make_qhat(&resampled, recipe, model)?;
                &local_qhat
            } else {
                &full_qhat
            };
            build_quadratic_seq(model, &resampled, m, qhat, weights)
        });
        Self::assemble_conjugate(built, theta_hat, prior, cfg)
    }

    /// Compile from an arbitrary resample-loss builder. `n_items` is the
    /// number of exchangeable units resampled with replacement; `build`
    /// maps a resample index multiset to its quadratic loss. This is the
    /// entry point for lattice data, where the unit is a whole lattice.
    pub fn from_loss_builder(
        n_items: usize,
        full: &QuadraticLoss,
        build: impl Fn(&[usize]) -> Result<QuadraticLoss> + Sync,
        prior: GaussianPrior,
        cfg: CalibrationConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if n_items == 0 {
            return Err(Error::BadData("nothing to resample".into()));
        }
        let theta_hat = min_lrm_estimate(full).ok();
        let indices = {
            let mut rng = cfg.rng.rng()?;
            resample_indices(n_items, cfg.bootstrap, &mut rng)
        };
        let built = exec::map_ordered(&indices, |idx| build(idx));
        Self::assemble_conjugate(built, theta_hat, prior, cfg)
    }

    /// Lattice-model problem: resamples whole lattices, refitting the
    /// local conditional table on each resample.
    pub fn from_lattices(
        model: &MrfModel,
        lattices: &[Lattice],
        alpha: f64,
        truncation_quantile: f64,
        prior: GaussianPrior,
        cfg: CalibrationConfig,
    ) -> Result<Self> {
        let table = fit_local_conditionals(lattices, alpha)?;
        let full = crate::models::mrf_local_loss(model, &table, lattices, truncation_quantile)?;
        CalibrationProblem::from_loss_builder(
            lattices.len(),
            &full,
            |idx| {
                let resampled: Vec<Lattice> = idx.iter().map(|&i| lattices[i].clone()).collect();
                let t = fit_local_conditionals(&resampled, alpha)?;
                crate::models::mrf_local_loss(model, &t, &resampled, truncation_quantile)
            },
            prior,
            cfg,
        )
    }

    /// DFD calibration problem. Same resampling scheme; the per-resample
    /// posterior is a Laplace approximation, recomputed at each β.
    pub fn from_samples_dfd<Mo: ExpFamily + ?Sized>(
        model: &Mo,
        samples: &[StatePoint],
        prior: GaussianPrior,
        cfg: CalibrationConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let full = DfdLossTable::new(model, samples)?;
        let theta_hat = dfd_min_estimate(&full, prior.mu()).ok();
        let indices = {
            let mut rng = cfg.rng.rng()?;
            resample_indices(samples.len(), cfg.bootstrap, &mut rng)
        };
        let built = exec::map_ordered(&indices, |idx| {
            let resampled: Vec<StatePoint> = idx.iter().map(|&i| samples[i].clone()).collect();
            DfdLossTable::new(model, &resampled)
        });
        let mut fits = Vec::with_capacity(built.len());
        let mut skipped = 0u64;
        for r in built {
            match r {
                Ok(t) => fits.push(ResampleFit::DfdLaplace(t)),
                Err(_) => skipped += 1,
            }
        }
        let prior_precision = spd_inverse(prior.sigma(), "prior covariance")?;
        Ok(CalibrationProblem {
            fits,
            theta_hat,
            prior,
            prior_precision,
            cfg,
            build_skipped: skipped,
            dfd_curvature: None,
            mcmc: DfdMcmcSettings::default(),
        })
    }

    /// DFD calibration with honest per-resample MCMC: every coverage
    /// evaluation runs one random-walk chain per resample, which is what
    /// the procedure costs for a posterior with no conjugate update.
    /// This is the variant the timing comparisons use; the Laplace
    /// variant above is the cheap approximation.
    pub fn from_samples_dfd_mcmc<Mo: ExpFamily + ?Sized>(
        model: &Mo,
        samples: &[StatePoint],
        prior: GaussianPrior,
        cfg: CalibrationConfig,
        mcmc: DfdMcmcSettings,
    ) -> Result<Self> {
        cfg.validate()?;
        let full = DfdLossTable::new(model, samples)?;
        let theta_hat = dfd_min_estimate(&full, prior.mu()).ok();
        let dfd_curvature = theta_hat.as_ref().and_then(|th| full.hessian(th));
        let indices = {
            let mut rng = cfg.rng.rng()?;
            resample_indices(samples.len(), cfg.bootstrap, &mut rng)
        };
        let built = exec::map_ordered(&indices, |idx| {
            let resampled: Vec<StatePoint> = idx.iter().map(|&i| samples[i].clone()).collect();
            DfdLossTable::new(model, &resampled)
        });
        let mut fits = Vec::with_capacity(built.len());
        let mut skipped = 0u64;
        for (b, r) in built.into_iter().enumerate() {
            match r {
                Ok(table) => fits.push(ResampleFit::DfdMcmc {
                    table,
                    rng: RngSpec::new(mix_seed(cfg.rng.seed, b as u64)),
                }),
                Err(_) => skipped += 1,
            }
        }
        let prior_precision = spd_inverse(prior.sigma(), "prior covariance")?;
        Ok(CalibrationProblem {
            fits,
            theta_hat,
            prior,
            prior_precision,
            cfg,
            build_skipped: skipped,
            dfd_curvature,
            mcmc,
        })
    }

    fn assemble_conjugate(
        built: Vec<Result<QuadraticLoss>>,
        theta_hat: Option<DVector<f64>>,
        prior: GaussianPrior,
        cfg: CalibrationConfig,
    ) -> Result<Self> {
        let mut fits = Vec::with_capacity(built.len());
        let mut skipped = 0u64;
        for r in built {
            match r {
                // A resample with a singular loss matrix pins down no
                // point estimate of its own; it is skipped, not patched.
                Ok(loss) if min_lrm_estimate(&loss).is_ok() => {
                    fits.push(ResampleFit::Conjugate(loss));
                }
                _ => skipped += 1,
            }
        }
        let prior_precision = spd_inverse(prior.sigma(), "prior covariance")?;
        Ok(CalibrationProblem {
            fits,
            theta_hat,
            prior,
            prior_precision,
            cfg,
            build_skipped: skipped,
            dfd_curvature: None,
            mcmc: DfdMcmcSettings::default(),
        })
    }

    pub fn theta_hat(&self) -> Option<&DVector<f64>> {
        self.theta_hat.as_ref()
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn config(&self) -> &CalibrationConfig {
        &self.cfg
    }

    /// Resamples dropped while building the problem.
    pub fn build_skipped(&self) -> u64 {
        self.build_skipped
    }

    fn posterior_at(&self, fit: &ResampleFit, beta: f64) -> Result<GaussianPosterior> {
        match fit {
            ResampleFit::Conjugate(loss) => conjugate_update(&self.prior, loss, beta),
            ResampleFit::DfdLaplace(table) => {
                let init = self.theta_hat.as_ref().unwrap_or_else(|| self.prior.mu());
                laplace_gaussian(table, beta, &self.prior, &self.prior_precision, init)
            }
            ResampleFit::DfdMcmc { table, rng } => {
                let bn = beta * table.n() as f64;
                let p = table.p();
                // Proposal widths track the β-dependent posterior scale
                // via the full-data curvature; fall back to the prior.
                let shape = match &self.dfd_curvature {
                    Some(h) => {
                        spd_inverse(&(h * bn + &self.prior_precision), "proposal curvature")?
                    }
                    None => self.prior.sigma().clone(),
                };
                let scales = DVector::from_fn(p, |j, _| {
                    shape[(j, j)].sqrt() * 2.4 / (p as f64).sqrt()
                });
                let init = self.theta_hat.as_ref().unwrap_or_else(|| self.prior.mu());
                let chain_cfg = RwmhConfig {
                    iters: self.mcmc.iters,
                    burn_in: self.mcmc.burn_in,
                    chains: 1,
                    scales,
                };
                let chains = rwmh(
                    |eta| {
                        let l = table.eval(eta);
                        if !l.is_finite() {
                            return f64::NEG_INFINITY;
                        }
                        -bn * l + self.prior.log_density_unnorm(eta)
                    },
                    init,
                    &chain_cfg,
                    rng,
                )?;
                let (mean, cov) = sample_covariance(&chains.pooled_draws()).ok_or_else(|| {
                    Error::Numerical("chain too short for a covariance estimate".into())
                })?;
                GaussianPosterior::new(mean, cov, None)
            }
        }
    }

    /// Coverage plus the number of resamples skipped at this β.
    fn coverage_detail(&self, beta: f64) -> Result<(f64, u64)> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "coverage needs β > 0, got {beta}"
            )));
        }
        let Some(theta_hat) = &self.theta_hat else {
            // No coverage target: every resample is unusable.
            return Ok((0.0, self.build_skipped + self.fits.len() as u64));
        };
        let p = theta_hat.len();
        let threshold = chi2_quantile(p, 1.0 - self.cfg.delta)?;
        let verdicts = exec::map_ordered(&self.fits, |fit| {
            let post = self.posterior_at(fit, beta).ok()?;
            let d2 = post.mahalanobis_sq(theta_hat).ok()?;
            Some(d2 <= threshold)
        });
        let mut covered = 0u64;
        let mut usable = 0u64;
        let mut skipped = self.build_skipped;
        for v in verdicts {
            match v {
                Some(true) => {
                    covered += 1;
                    usable += 1;
                }
                Some(false) => usable += 1,
                None => skipped += 1,
            }
        }
        if usable == 0 {
            return Ok((0.0, skipped));
        }
        Ok((covered as f64 / usable as f64, skipped))
    }
}

/// Fraction of bootstrap resamples whose 1−δ posterior ellipsoid at this
/// β contains the full-data estimate. Deterministic in (problem, β): the
/// resamples were fixed when the problem was built.
pub fn coverage_at_beta(problem: &CalibrationProblem, beta: f64) -> Result<f64> {
    problem.coverage_detail(beta).map(|(c, _)| c)
}

/// Gaussian (Laplace) posterior for a DFD loss at one β: Newton descent
/// on the penalised objective `β·n·loss + ½(η−μ)ᵀΣ⁻¹(η−μ)`, covariance
/// from the curvature at the optimum.
fn laplace_gaussian(
    table: &DfdLossTable,
    beta: f64,
    prior: &GaussianPrior,
    prior_precision: &DMatrix<f64>,
    init: &DVector<f64>,
) -> Result<GaussianPosterior> {
    let bn = beta * table.n() as f64;
    let p = table.p();
    let objective = |eta: &DVector<f64>| -> f64 {
        let l = table.eval(eta);
        if !l.is_finite() {
            return f64::INFINITY;
        }
        let d = eta - prior.mu();
        bn * l + 0.5 * d.dot(&(prior_precision * &d))
    };
    let mut eta = init.clone();
    let mut obj = objective(&eta);
    if !obj.is_finite() {
        eta = prior.mu().clone();
        obj = objective(&eta);
        if !obj.is_finite() {
            return Err(Error::Numerical(
                "DFD objective overflows at the prior mean".into(),
            ));
        }
    }
    let mut converged = false;
    for _ in 0..100 {
        let g_loss = table
            .gradient(&eta)
            .ok_or_else(|| Error::Numerical("DFD gradient overflowed".into()))?;
        let grad = &g_loss * bn + prior_precision * (&eta - prior.mu());
        if grad.amax() < 1e-8 {
            converged = true;
            break;
        }
        let h_loss = table
            .hessian(&eta)
            .ok_or_else(|| Error::Numerical("DFD Hessian overflowed".into()))?;
        let h = &h_loss * bn + prior_precision;
        let mut stepped = false;
        for damping in [0.0, 1e-8, 1e-4, 1e-2, 1.0, 1e2, 1e4] {
            let mut hd = h.clone();
            for i in 0..p {
                hd[(i, i)] += damping;
            }
            let Ok((ch, _)) = cholesky_spd(&hd, "penalised DFD Newton system") else {
                continue;
            };
            let cand = &eta + ch.solve(&(-&grad));
            let cand_obj = objective(&cand);
            if cand_obj.is_finite() && cand_obj < obj {
                eta = cand;
                obj = cand_obj;
                stepped = true;
                break;
            }
        }
        if !stepped {
            return Err(Error::Numerical(
                "penalised DFD fit stalled before reaching the optimum".into(),
            ));
        }
    }
    if !converged {
        let grad = table
            .gradient(&eta)
            .map(|g| &g * bn + prior_precision * (&eta - prior.mu()));
        if grad.map(|g| g.amax() >= 1e-6).unwrap_or(true) {
            return Err(Error::Numerical(
                "penalised DFD fit did not converge in 100 iterations".into(),
            ));
        }
    }
    let h_loss = table
        .hessian(&eta)
        .ok_or_else(|| Error::Numerical("DFD Hessian overflowed at the optimum".into()))?;
    let sigma = spd_inverse(&(&h_loss * bn + prior_precision), "DFD posterior curvature")?;
    GaussianPosterior::new(eta, sigma, None)
}

/// Calibrate β: scan the log grid for the pair bracketing 1−δ, bisect
/// geometrically inside the bracket, and return the evaluated β whose
/// coverage lands closest to the target. When the grid never crosses the
/// target, the nearest endpoint is returned with `bracket_found: false`.
pub fn calibrate_beta(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    let cfg = problem.config();
    let target = 1.0 - cfg.delta;
    let ln_lo = cfg.grid_lo.ln();
    let ln_hi = cfg.grid_hi.ln();
    let pts = cfg.grid_points;
    let mut evals: Vec<(f64, f64, u64)> = Vec::new();
    for i in 0..pts {
        let beta = (ln_lo + (ln_hi - ln_lo) * i as f64 / (pts - 1) as f64).exp();
        let (c, s) = problem.coverage_detail(beta)?;
        evals.push((beta, c, s));
    }
    let crossing = (0..pts - 1).find(|&i| evals[i].1 >= target && evals[i + 1].1 < target);
    let bracket_found = crossing.is_some();
    if let Some(i) = crossing {
        let mut b_left = evals[i].0;
        let mut b_right = evals[i + 1].0;
        for _ in 0..40 {
            let mid = ((b_left.ln() + b_right.ln()) / 2.0).exp();
            if mid <= b_left || mid >= b_right {
                break;
            }
            let (c, s) = problem.coverage_detail(mid)?;
            evals.push((mid, c, s));
            if c >= target {
                b_left = mid;
            } else {
                b_right = mid;
            }
        }
    }
    // β* = evaluated point with coverage closest to the target; ties go
    // to the smaller β (the wider, more conservative posterior).
    let best = evals
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (a.1 - target).abs();
            let db = (b.1 - target).abs();
            da.partial_cmp(&db)
                .unwrap()
                .then(a.0.partial_cmp(&b.0).unwrap())
        })
        .map(|(i, _)| i)
        .expect("grid is nonempty");
    let beta_star = if bracket_found {
        evals[best].0
    } else if evals.iter().all(|e| e.1 < target) {
        evals[0].0
    } else {
        evals[pts - 1].0
    };
    let star_eval = evals
        .iter()
        .find(|e| e.0 == beta_star)
        .copied()
        .expect("β* was evaluated");
    let mut curve: Vec<(f64, f64)> = evals.iter().map(|&(b, c, _)| (b, c)).collect();
    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    curve.dedup_by(|a, b| a.0 == b.0);
    Ok(CalibrationResult {
        beta_star,
        curve,
        theta_hat: problem.theta_hat.clone(),
        bracket_found,
        skipped: star_eval.2,
    })
}
